#include "cseg/milp.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include "cseg/error.hpp"

namespace cseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kIntTol = 1e-6;

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

double LinearConstraint::violation(std::span<const double> x) const {
  double lhs = 0.0;
  for (const auto& t : terms) lhs += t.coef * x[t.var];
  switch (relation) {
    case Relation::LessEqual: return lhs - rhs;
    case Relation::GreaterEqual: return rhs - lhs;
    case Relation::Equal: return std::abs(lhs - rhs);
  }
  return 0.0;
}

// ---------------------------------------------------------------- model

std::int32_t MilpModel::add_var(VarType type, double objective, std::string name) {
  if (!std::isfinite(objective)) throw Error(ErrorCode::InvalidArgument, "objective coefficient not finite");
  const auto id = static_cast<std::int32_t>(types_.size());
  types_.push_back(type);
  obj_.push_back(objective);
  lower_.push_back(0.0);
  upper_.push_back(1.0);
  names_.push_back(name.empty() ? "x" + std::to_string(id) : std::move(name));
  fixed_.emplace_back();
  return id;
}

std::int32_t MilpModel::add_continuous(double objective, double lower, double upper, std::string name) {
  if (!std::isfinite(lower)) throw Error(ErrorCode::InvalidArgument, "continuous variables need a finite lower bound");
  if (upper < lower) throw Error(ErrorCode::InvalidArgument, "empty variable range");
  const auto id = add_var(VarType::Continuous, objective, std::move(name));
  lower_[id] = lower;
  upper_[id] = upper;
  return id;
}

void MilpModel::add_constraint(LinearConstraint c) {
  if (!std::isfinite(c.rhs)) throw Error(ErrorCode::InvalidArgument, "constraint rhs not finite");
  for (const auto& t : c.terms) {
    if (t.var < 0 || t.var >= var_count()) throw Error(ErrorCode::InvalidArgument, "constraint uses unknown variable");
    if (!std::isfinite(t.coef)) throw Error(ErrorCode::InvalidArgument, "constraint coefficient not finite");
  }
  rows_.push_back(std::move(c));
}

void MilpModel::add_constraint(std::vector<LinearTerm> terms, Relation rel, double rhs, std::string name) {
  add_constraint(LinearConstraint{std::move(terms), rel, rhs, std::move(name)});
}

void MilpModel::fix(std::int32_t var, int value) {
  if (types_.at(var) != VarType::Binary) throw Error(ErrorCode::InvalidArgument, "only binaries can be fixed");
  if (value != 0 && value != 1) throw Error(ErrorCode::InvalidArgument, "binary fixing must be 0 or 1");
  fixed_[var] = value;
}

double MilpModel::evaluate(std::span<const double> x) const {
  double v = offset_;
  for (std::int32_t j = 0; j < var_count(); ++j) v += obj_[j] * x[j];
  return v;
}

bool MilpModel::satisfies_static(std::span<const double> x, double tol) const {
  if (static_cast<std::int32_t>(x.size()) != var_count()) return false;
  for (std::int32_t j = 0; j < var_count(); ++j) {
    if (x[j] < lower_[j] - tol || x[j] > upper_[j] + tol) return false;
    if (types_[j] == VarType::Binary) {
      if (std::abs(x[j]) > tol && std::abs(x[j] - 1.0) > tol) return false;
      if (fixed_[j] && std::abs(x[j] - *fixed_[j]) > tol) return false;
    }
  }
  for (const auto& r : rows_)
    if (r.violation(x) > tol) return false;
  return true;
}

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::FeasibleBudgetHit: return "FeasibleBudgetHit";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::NoSolutionBudgetHit: return "NoSolutionBudgetHit";
  }
  return "?";
}

// ---------------------------------------------------------------- simplex

namespace lp {
namespace {

constexpr double kPrimalTol = 1e-9;
constexpr double kDualTol = 1e-9;
constexpr double kPivotTol = 1e-9;
constexpr double kMaxTableauBytes = 1.0 * 1024 * 1024 * 1024;
constexpr int kDegenerateRun = 50;

class Tableau {
 public:
  explicit Tableau(const Problem& p) : n_(static_cast<int>(p.cost.size())), m_(static_cast<int>(p.rows.size())) {
    // columns: structural, one slack per row, then artificials as needed
    std::vector<double> row_values(m_, 0.0);
    x_.assign(n_ + m_, 0.0);
    lb_.assign(n_ + m_, 0.0);
    ub_.assign(n_ + m_, 0.0);
    for (int j = 0; j < n_; ++j) {
      lb_[j] = p.lower[j];
      ub_[j] = p.upper[j];
      x_[j] = std::isfinite(lb_[j]) ? lb_[j] : (std::isfinite(ub_[j]) ? ub_[j] : 0.0);
    }
    for (int i = 0; i < m_; ++i) {
      const Row& r = p.rows[i];
      const int s = n_ + i;
      lb_[s] = r.relation == Relation::GreaterEqual ? -kInf : 0.0;
      ub_[s] = r.relation == Relation::LessEqual ? kInf : 0.0;
      double lhs = 0.0;
      for (const auto& t : r.terms) lhs += t.coef * x_[t.var];
      row_values[i] = r.rhs - lhs;
    }
    std::vector<int> art_row;
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i;
      if (row_values[i] < lb_[s] - kPrimalTol || row_values[i] > ub_[s] + kPrimalTol) art_row.push_back(i);
    }
    cols_ = n_ + m_ + static_cast<int>(art_row.size());
    x_.resize(cols_, 0.0);
    lb_.resize(cols_, 0.0);
    ub_.resize(cols_, kInf);
    t_.assign(static_cast<std::size_t>(m_) * cols_, 0.0);
    basis_.assign(m_, -1);
    row_of_.assign(cols_, -1);

    std::vector<int> art_of_row(m_, -1);
    for (std::size_t a = 0; a < art_row.size(); ++a) art_of_row[art_row[a]] = n_ + m_ + static_cast<int>(a);

    for (int i = 0; i < m_; ++i) {
      const Row& r = p.rows[i];
      const int s = n_ + i;
      double* row = &t_[static_cast<std::size_t>(i) * cols_];
      double sign = 1.0;
      if (art_of_row[i] >= 0) {
        const int a = art_of_row[i];
        const double bound = row_values[i] < lb_[s] ? lb_[s] : ub_[s];
        x_[s] = bound;
        const double resid = row_values[i] - bound;
        sign = resid >= 0 ? 1.0 : -1.0;
        x_[a] = std::abs(resid);
        row[a] = 1.0;
        basis_[i] = a;
        row_of_[a] = i;
      } else {
        x_[s] = row_values[i];
        basis_[i] = s;
        row_of_[s] = i;
      }
      for (const auto& t : r.terms) row[t.var] += sign * t.coef;
      row[s] = sign;
      if (art_of_row[i] >= 0) row[art_of_row[i]] = 1.0;
    }
    artificials_ = static_cast<int>(art_row.size());
  }

  int artificial_count() const { return artificials_; }

  /// Runs primal simplex for the given column costs. Returns false on unboundedness.
  Status optimize(const std::vector<double>& cost, std::int64_t& iterations, std::int64_t max_iterations) {
    cost_ = cost;
    d_.assign(cols_, 0.0);
    for (int j = 0; j < cols_; ++j) d_[j] = cost_[j];
    for (int i = 0; i < m_; ++i) {
      const double cb = cost_[basis_[i]];
      if (cb == 0.0) continue;
      const double* row = &t_[static_cast<std::size_t>(i) * cols_];
      for (int j = 0; j < cols_; ++j) d_[j] -= cb * row[j];
    }
    int degenerate = 0;
    std::vector<int> nz;
    while (true) {
      if (iterations >= max_iterations) return Status::IterationLimit;
      const bool bland = degenerate >= kDegenerateRun;
      int q = -1;
      double dir = 0.0, best = 0.0;
      for (int j = 0; j < cols_; ++j) {
        if (row_of_[j] >= 0) continue;
        double cand_dir = 0.0;
        if (d_[j] < -kDualTol && x_[j] < ub_[j] - kPrimalTol)
          cand_dir = 1.0;
        else if (d_[j] > kDualTol && x_[j] > lb_[j] + kPrimalTol)
          cand_dir = -1.0;
        if (cand_dir == 0.0) continue;
        if (bland) {
          q = j;
          dir = cand_dir;
          break;
        }
        if (std::abs(d_[j]) > best) {
          best = std::abs(d_[j]);
          q = j;
          dir = cand_dir;
        }
      }
      if (q < 0) return Status::Optimal;

      // ratio test
      double step = ub_[q] - lb_[q];
      int leave = -1;
      double leave_bound = 0.0, leave_pivot = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double alpha = t_[static_cast<std::size_t>(i) * cols_ + q] * dir;
        if (std::abs(alpha) <= kPivotTol) continue;
        const int b = basis_[i];
        double ratio, bound;
        if (alpha > 0) {
          if (!std::isfinite(lb_[b])) continue;
          bound = lb_[b];
          ratio = (x_[b] - lb_[b]) / alpha;
        } else {
          if (!std::isfinite(ub_[b])) continue;
          bound = ub_[b];
          ratio = (ub_[b] - x_[b]) / -alpha;
        }
        ratio = std::max(ratio, 0.0);
        bool take = false;
        if (ratio < step - 1e-12) {
          take = true;
        } else if (ratio <= step + 1e-12 && leave >= 0) {
          take = bland ? b < basis_[leave] : std::abs(alpha) > std::abs(leave_pivot);
        }
        if (take) {
          step = ratio;
          leave = i;
          leave_bound = bound;
          leave_pivot = alpha;
        }
      }
      if (!std::isfinite(step)) return Status::Unbounded;
      ++iterations;
      degenerate = step < 1e-12 ? degenerate + 1 : 0;

      const double delta = dir * step;
      x_[q] += delta;
      for (int i = 0; i < m_; ++i) {
        const double a = t_[static_cast<std::size_t>(i) * cols_ + q];
        if (a != 0.0) x_[basis_[i]] -= a * delta;
      }
      if (leave < 0) {
        x_[q] = dir > 0 ? ub_[q] : lb_[q];
        continue;
      }
      const int out = basis_[leave];
      x_[out] = leave_bound;
      pivot(leave, q, nz);
      basis_[leave] = q;
      row_of_[q] = leave;
      row_of_[out] = -1;
    }
  }

  void pivot(int r, int q, std::vector<int>& nz) {
    double* prow = &t_[static_cast<std::size_t>(r) * cols_];
    const double inv = 1.0 / prow[q];
    nz.clear();
    for (int j = 0; j < cols_; ++j) {
      if (prow[j] == 0.0) continue;
      prow[j] *= inv;
      if (std::abs(prow[j]) < 1e-14) {
        prow[j] = 0.0;
        continue;
      }
      nz.push_back(j);
    }
    prow[q] = 1.0;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* row = &t_[static_cast<std::size_t>(i) * cols_];
      const double f = row[q];
      if (f == 0.0) continue;
      for (int j : nz) row[j] -= f * prow[j];
      row[q] = 0.0;
    }
    const double f = d_[q];
    if (f != 0.0) {
      for (int j : nz) d_[j] -= f * prow[j];
      d_[q] = 0.0;
    }
  }

  void close_artificials() {
    for (int a = n_ + m_; a < cols_; ++a) ub_[a] = 0.0;
  }

  double artificial_sum() const {
    double s = 0.0;
    for (int a = n_ + m_; a < cols_; ++a) s += x_[a];
    return s;
  }

  int cols() const { return cols_; }
  double value(int j) const { return x_[j]; }

 private:
  int n_;
  int m_;
  int cols_ = 0;
  int artificials_ = 0;
  std::vector<double> t_;
  std::vector<double> d_;
  std::vector<double> cost_;
  std::vector<double> x_;
  std::vector<double> lb_;
  std::vector<double> ub_;
  std::vector<int> basis_;
  std::vector<int> row_of_;
};

}  // namespace

Result solve(const Problem& p) {
  const int n = static_cast<int>(p.cost.size());
  Result res;
  for (int j = 0; j < n; ++j)
    if (p.lower[j] > p.upper[j] + kPrimalTol) return res;

  const auto cells = static_cast<double>(p.rows.size()) * static_cast<double>(n + 2 * p.rows.size());
  if (cells * sizeof(double) > kMaxTableauBytes)
    throw Error(ErrorCode::TooLarge, "relaxation with " + std::to_string(p.rows.size()) + " rows and " +
                                         std::to_string(n) + " columns exceeds the dense tableau cap");
  Tableau tab(p);
  const std::int64_t max_iter = 1000000;
  if (tab.artificial_count() > 0) {
    std::vector<double> phase1(tab.cols(), 0.0);
    for (int j = tab.cols() - tab.artificial_count(); j < tab.cols(); ++j) phase1[j] = 1.0;
    const Status s = tab.optimize(phase1, res.iterations, max_iter);
    if (s == Status::IterationLimit) {
      res.status = s;
      return res;
    }
    if (tab.artificial_sum() > 1e-7) {
      res.status = Status::Infeasible;
      return res;
    }
    tab.close_artificials();
  }
  std::vector<double> phase2(tab.cols(), 0.0);
  std::copy(p.cost.begin(), p.cost.end(), phase2.begin());
  res.status = tab.optimize(phase2, res.iterations, max_iter);
  if (res.status != Status::Optimal) return res;
  res.x.resize(n);
  res.objective = 0.0;
  for (int j = 0; j < n; ++j) {
    res.x[j] = std::clamp(tab.value(j), p.lower[j], p.upper[j]);
    res.objective += p.cost[j] * res.x[j];
  }
  return res;
}

}  // namespace lp

// ---------------------------------------------------------------- branch and bound

namespace {

struct SearchNode {
  double bound;
  std::int64_t id;
  std::vector<BranchFixing> fixings;
};

struct NodeOrder {
  bool operator()(const SearchNode& a, const SearchNode& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

lp::Problem relaxation(const MilpModel& m, const std::vector<LinearConstraint>& pool,
                       std::span<const BranchFixing> fixings) {
  lp::Problem p;
  const auto n = m.var_count();
  p.cost.assign(m.objective().begin(), m.objective().end());
  p.lower.resize(n);
  p.upper.resize(n);
  for (std::int32_t j = 0; j < n; ++j) {
    p.lower[j] = m.lower(j);
    p.upper[j] = m.upper(j);
    if (m.fixed()[j]) p.lower[j] = p.upper[j] = *m.fixed()[j];
  }
  for (const auto& f : fixings) p.lower[f.var] = p.upper[f.var] = f.value;
  p.rows.reserve(m.constraints().size() + pool.size());
  for (const auto& c : m.constraints()) p.rows.push_back({c.terms, c.relation, c.rhs});
  for (const auto& c : pool) p.rows.push_back({c.terms, c.relation, c.rhs});
  return p;
}

class Clock {
 public:
  Clock() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

MilpSolution solve(const MilpModel& m, std::optional<std::vector<double>> warm_start, const SolveBudget& budget,
                   const SolveHooks& hooks) {
  Clock clock;
  MilpSolution out;
  const auto n = m.var_count();
  std::vector<LinearConstraint> pool;
  std::optional<std::vector<double>> incumbent;
  double inc_value = kInf;

  auto cutoff = [&] {
    return incumbent ? inc_value - budget.gap_tolerance * std::max(1.0, std::abs(inc_value)) : kInf;
  };
  auto add_cuts = [&](std::vector<LinearConstraint> cuts, std::span<const double> x) {
    bool violated = false;
    for (auto& c : cuts) {
      violated = violated || c.violation(x) > 1e-9;
      out.cuts.push_back(c);
      pool.push_back(std::move(c));
      ++out.stats.cuts_added;
    }
    if (!violated) throw Error(ErrorCode::InvalidArgument, "lazy generator returned no violated constraint");
  };
  auto has_continuous = [&] {
    for (std::int32_t j = 0; j < n; ++j)
      if (m.type(j) == VarType::Continuous) return true;
    return false;
  };

  if (warm_start && static_cast<std::int32_t>(warm_start->size()) == n) {
    std::vector<double> cand = *warm_start;
    bool ok = true;
    std::vector<BranchFixing> pins;
    for (std::int32_t j = 0; j < n && ok; ++j) {
      if (m.type(j) != VarType::Binary) continue;
      if (std::abs(cand[j]) > kIntTol && std::abs(cand[j] - 1.0) > kIntTol) ok = false;
      cand[j] = cand[j] > 0.5 ? 1.0 : 0.0;
      pins.push_back({j, static_cast<int>(cand[j])});
    }
    if (ok && has_continuous()) {
      const auto r = lp::solve(relaxation(m, {}, pins));
      out.stats.lp_iterations += r.iterations;
      ok = r.status == lp::Status::Optimal;
      if (ok)
        for (std::int32_t j = 0; j < n; ++j)
          if (m.type(j) == VarType::Continuous) cand[j] = r.x[j];
    }
    ok = ok && m.satisfies_static(cand, 1e-7);
    if (ok && m.lazy_generator()) {
      ++out.stats.lazy_calls;
      auto cuts = m.lazy_generator()(cand);
      if (!cuts.empty()) {
        ok = false;
        add_cuts(std::move(cuts), cand);
      }
    }
    if (ok) {
      inc_value = m.evaluate(cand);
      incumbent = std::move(cand);
      out.stats.warm_start_accepted = true;
      out.stats.warm_start_objective = inc_value;
    }
  }

  std::priority_queue<SearchNode, std::vector<SearchNode>, NodeOrder> open;
  std::int64_t next_id = 0;
  open.push({-kInf, next_id++, {}});
  bool budget_hit = false;

  while (!open.empty()) {
    if ((budget.node_limit && out.stats.nodes >= *budget.node_limit) ||
        (budget.time_limit_seconds && clock.seconds() >= *budget.time_limit_seconds)) {
      budget_hit = true;
      break;
    }
    SearchNode node = open.top();
    open.pop();
    if (node.bound >= cutoff()) continue;
    ++out.stats.nodes;

    while (true) {
      const auto r = lp::solve(relaxation(m, pool, node.fixings));
      out.stats.lp_iterations += r.iterations;
      if (r.status == lp::Status::Infeasible) break;
      if (r.status != lp::Status::Optimal)
        throw Error(ErrorCode::NonConvergence, "linear relaxation did not reach an optimum");
      const double bound = r.objective + m.objective_offset();
      if (hooks.on_node) hooks.on_node(bound, node.fixings);
      if (bound >= cutoff()) break;

      std::int32_t branch_var = -1;
      double best_frac = 0.0;
      for (std::int32_t j = 0; j < n; ++j) {
        if (m.type(j) != VarType::Binary) continue;
        const double frac = std::abs(r.x[j] - std::round(r.x[j]));
        if (frac > kIntTol && frac > best_frac + 1e-12) {
          best_frac = frac;
          branch_var = j;
        }
      }
      if (branch_var >= 0) {
        for (int v = 0; v <= 1; ++v) {
          SearchNode child{bound, next_id++, node.fixings};
          child.fixings.push_back({branch_var, v});
          open.push(std::move(child));
        }
        break;
      }

      std::vector<double> cand = r.x;
      for (std::int32_t j = 0; j < n; ++j)
        if (m.type(j) == VarType::Binary) cand[j] = cand[j] > 0.5 ? 1.0 : 0.0;
      if (m.lazy_generator()) {
        ++out.stats.lazy_calls;
        auto cuts = m.lazy_generator()(cand);
        if (!cuts.empty()) {
          add_cuts(std::move(cuts), cand);
          continue;
        }
      }
      const double value = m.evaluate(cand);
      if (value < inc_value) {
        inc_value = value;
        incumbent = std::move(cand);
      }
      break;
    }
  }

  if (incumbent) {
    out.values = std::move(*incumbent);
    out.objective = inc_value;
    out.status = budget_hit ? SolveStatus::FeasibleBudgetHit : SolveStatus::Optimal;
  } else {
    out.status = budget_hit ? SolveStatus::NoSolutionBudgetHit : SolveStatus::Infeasible;
  }
  out.stats.wall_seconds = clock.seconds();
  return out;
}

MilpSolution brute_force(const MilpModel& m) {
  const auto n = m.var_count();
  for (std::int32_t j = 0; j < n; ++j)
    if (m.type(j) != VarType::Binary)
      throw Error(ErrorCode::InvalidArgument, "exhaustive search needs an all-binary model");
  if (n > 24) throw Error(ErrorCode::TooLarge, "exhaustive search is limited to 24 variables");

  MilpSolution out;
  std::vector<double> x(n, 0.0);
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t code = 0; code < total; ++code) {
    for (std::int32_t j = 0; j < n; ++j) x[j] = static_cast<double>((code >> (n - 1 - j)) & 1u);
    if (!m.satisfies_static(x)) continue;
    if (m.lazy_generator()) {
      ++out.stats.lazy_calls;
      if (!m.lazy_generator()(x).empty()) continue;
    }
    const double value = m.evaluate(x);
    if (value < out.objective) {
      out.objective = value;
      out.values = x;
      out.status = SolveStatus::Optimal;
    }
    ++out.stats.nodes;
  }
  return out;
}

std::string to_lp_string(const MilpModel& m) {
  std::ostringstream os;
  const auto term = [&](double coef, const std::string& var, bool first) {
    if (coef < 0)
      os << (first ? " - " : " - ") << num(-coef) << ' ' << var;
    else
      os << (first ? " " : " + ") << num(coef) << ' ' << var;
  };
  os << "\\ cseg model export\n";
  os << "\\ lazy constraints are generated during the search and are not exportable\n";
  if (m.objective_offset() != 0.0) os << "\\ objective offset " << num(m.objective_offset()) << '\n';
  os << "Minimize\n obj:";
  bool first = true;
  for (std::int32_t j = 0; j < m.var_count(); ++j) {
    if (m.objective(j) == 0.0) continue;
    term(m.objective(j), m.name(j), first);
    first = false;
  }
  if (first) os << " 0 " << (m.var_count() > 0 ? m.name(0) : "x0");
  os << "\nSubject To\n";
  int idx = 0;
  for (const auto& c : m.constraints()) {
    os << ' ' << (c.name.empty() ? "c" + std::to_string(idx) : c.name) << ':';
    bool f = true;
    for (const auto& t : c.terms) {
      term(t.coef, m.name(t.var), f);
      f = false;
    }
    if (f) os << " 0 " << (m.var_count() > 0 ? m.name(0) : "x0");
    const char* rel = c.relation == Relation::LessEqual ? "<=" : (c.relation == Relation::Equal ? "=" : ">=");
    os << ' ' << rel << ' ' << num(c.rhs) << '\n';
    ++idx;
  }
  os << "Bounds\n";
  for (std::int32_t j = 0; j < m.var_count(); ++j) {
    if (m.fixed()[j]) {
      os << ' ' << m.name(j) << " = " << *m.fixed()[j] << '\n';
    } else if (m.type(j) == VarType::Continuous) {
      os << ' ' << num(m.lower(j)) << " <= " << m.name(j) << " <= "
         << (std::isfinite(m.upper(j)) ? num(m.upper(j)) : "+inf") << '\n';
    }
  }
  os << "Binaries\n";
  for (std::int32_t j = 0; j < m.var_count(); ++j)
    if (m.type(j) == VarType::Binary) os << ' ' << m.name(j) << '\n';
  os << "End\n";
  return os.str();
}

void export_lp(const MilpModel& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  f << to_lp_string(m);
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace cseg
