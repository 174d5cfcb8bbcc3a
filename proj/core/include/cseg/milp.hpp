#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cseg {

enum class VarType { Binary, Continuous };
enum class Relation { LessEqual, Equal, GreaterEqual };

struct LinearTerm {
  std::int32_t var = 0;
  double coef = 0.0;
};

struct LinearConstraint {
  std::vector<LinearTerm> terms;
  Relation relation = Relation::LessEqual;
  double rhs = 0.0;
  std::string name;

  /// Signed violation at x: positive when the constraint does not hold.
  double violation(std::span<const double> x) const;
};

/// Returns constraints violated by a candidate integer point, or nothing when the
/// point is acceptable. Must only return constraints that are valid for every
/// acceptable point.
using LazyGenerator = std::function<std::vector<LinearConstraint>(std::span<const double> x)>;

/// Minimization model over binary and bounded continuous variables.
class MilpModel {
 public:
  std::int32_t add_var(VarType type, double objective, std::string name = {});
  std::int32_t add_continuous(double objective, double lower, double upper, std::string name = {});
  void add_constraint(LinearConstraint c);
  void add_constraint(std::vector<LinearTerm> terms, Relation rel, double rhs, std::string name = {});
  void fix(std::int32_t var, int value);
  void set_objective_offset(double offset) { offset_ = offset; }
  void set_lazy_generator(LazyGenerator gen) { lazy_ = std::move(gen); }

  std::int32_t var_count() const { return static_cast<std::int32_t>(types_.size()); }
  VarType type(std::int32_t v) const { return types_[v]; }
  double objective(std::int32_t v) const { return obj_[v]; }
  std::span<const double> objective() const { return obj_; }
  double lower(std::int32_t v) const { return lower_[v]; }
  double upper(std::int32_t v) const { return upper_[v]; }
  const std::string& name(std::int32_t v) const { return names_[v]; }
  double objective_offset() const { return offset_; }
  const std::vector<LinearConstraint>& constraints() const { return rows_; }
  const std::vector<std::optional<int>>& fixed() const { return fixed_; }
  const LazyGenerator& lazy_generator() const { return lazy_; }

  /// offset + sum_j c_j x_j, summed in variable order.
  double evaluate(std::span<const double> x) const;
  /// Static constraints, bounds, integrality and fixings hold within `tol`.
  bool satisfies_static(std::span<const double> x, double tol = 1e-9) const;

 private:
  std::vector<VarType> types_;
  std::vector<double> obj_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<std::string> names_;
  std::vector<std::optional<int>> fixed_;
  std::vector<LinearConstraint> rows_;
  double offset_ = 0.0;
  LazyGenerator lazy_;
};

struct SolveBudget {
  std::optional<double> time_limit_seconds;
  std::optional<std::int64_t> node_limit;
  double gap_tolerance = 1e-9;
};

enum class SolveStatus { Optimal, FeasibleBudgetHit, Infeasible, NoSolutionBudgetHit };
std::string_view to_string(SolveStatus s);

struct SolveStats {
  std::int64_t nodes = 0;
  std::int64_t cuts_added = 0;
  std::int64_t lp_iterations = 0;
  std::int64_t lazy_calls = 0;
  bool warm_start_accepted = false;
  std::optional<double> warm_start_objective;
  double wall_seconds = 0.0;
};

struct MilpSolution {
  std::vector<double> values;  // binaries exactly 0 or 1
  double objective = std::numeric_limits<double>::infinity();
  SolveStatus status = SolveStatus::Infeasible;
  SolveStats stats;
  std::vector<LinearConstraint> cuts;  // every lazy constraint collected during the search

  bool has_solution() const { return status == SolveStatus::Optimal || status == SolveStatus::FeasibleBudgetHit; }
  int binary(std::int32_t v) const { return values[v] > 0.5 ? 1 : 0; }
};

struct BranchFixing {
  std::int32_t var;
  int value;
};

/// Instrumentation: called for every search node whose relaxation was solved.
struct SolveHooks {
  std::function<void(double bound, std::span<const BranchFixing> fixings)> on_node;
};

/// Best-first branch and bound over the linear relaxation. Integer candidates are
/// passed to the lazy generator; returned constraints join a global pool and the
/// node is solved again. A warm start becomes the first incumbent when its
/// binaries, completed optimally in the continuous variables, are feasible.
MilpSolution solve(const MilpModel& m, std::optional<std::vector<double>> warm_start = std::nullopt,
                   const SolveBudget& budget = {}, const SolveHooks& hooks = {});

/// Exhaustive enumeration of an all-binary model (at most 24 variables). Ties go
/// to the lexicographically smallest assignment with variable 0 most significant.
MilpSolution brute_force(const MilpModel& m);

/// CPLEX LP text of the static part of the model.
std::string to_lp_string(const MilpModel& m);
void export_lp(const MilpModel& m, const std::filesystem::path& path);

namespace lp {

struct Row {
  std::vector<LinearTerm> terms;
  Relation relation = Relation::LessEqual;
  double rhs = 0.0;
};

struct Problem {
  std::vector<double> cost;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<Row> rows;
};

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

struct Result {
  Status status = Status::Infeasible;
  double objective = 0.0;
  std::vector<double> x;
  std::int64_t iterations = 0;
};

/// Bounded-variable primal simplex on a dense tableau.
Result solve(const Problem& p);

}  // namespace lp

}  // namespace cseg
