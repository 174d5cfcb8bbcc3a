#include "cli.hpp"

#include <CLI11.hpp>
#include <csignal>
#include <pthread.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cseg/metrics.hpp"
#include "cseg/session.hpp"
#include "cseg/synth.hpp"
#include "json_config.hpp"
#include "service.hpp"

namespace cseg::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Args {
  std::string image, superpixels, features, probmap, truth, scribbles, out, fixtures;
  std::string pred, pred_instance;
  std::string algo = "l0h";
  double lambda = 100.0;
  std::optional<double> eta;
  std::optional<double> time_limit;
  std::optional<std::int64_t> node_limit;
  int cut_k = 3;
  int superpixel_target = 700;
  int rounds = 3;
  int jobs = 1;
  std::uint64_t seed = 1;
  bool no_timings = false;

  int count = 1;
  int size = 48;
  bool island = false;

  std::string bind = "127.0.0.1";
  int port = 8080;
  int idle_timeout = 1800;
  double max_upload_mb = 32.0;
  bool async = false;

  std::string config;
};

// Thrown from command bodies for usage problems the parser cannot express.
struct UsageError {
  std::string message;
};

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::Infeasible:
    case ErrorCode::NonConvergence:
    case ErrorCode::TooLarge:
      return kSolverFailure;
    case ErrorCode::InvalidArgument:
      return kBadFlags;
    default:
      return kInputError;
  }
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  f << text;
}

struct InputPaths {
  fs::path image, superpixels, features, probmap, truth, scribbles;
};

SessionInputs load_inputs(const InputPaths& p) {
  SessionInputs in;
  in.image = load_image(p.image);
  if (!p.superpixels.empty()) in.superpixels = load_superpixels(p.superpixels);
  if (!p.features.empty()) in.features = load_field(p.features, false);
  if (!p.probmap.empty()) in.probabilities = load_field(p.probmap, true);
  if (!p.truth.empty()) in.truth = load_truth(p.truth);
  return in;
}

fs::path first_existing(const fs::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (fs::exists(dir / n)) return dir / n;
  return {};
}

struct Job {
  std::string name;
  InputPaths paths;
  fs::path out;
};

// One job per subdirectory of --fixtures (sorted by name), or a single job built from the file flags.
std::vector<Job> collect_jobs(const Args& a) {
  std::vector<Job> jobs;
  if (!a.fixtures.empty()) {
    if (!fs::is_directory(a.fixtures)) throw Error(ErrorCode::IoError, a.fixtures + " is not a directory");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(a.fixtures))
      if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      Job j;
      j.name = d.filename().string();
      j.paths.image = first_existing(d, {"image.png", "image.ppm"});
      j.paths.superpixels = first_existing(d, {"superpixels.png", "superpixels.cseg"});
      j.paths.features = first_existing(d, {"features.cseg"});
      j.paths.probmap = first_existing(d, {"probmap.cseg"});
      j.paths.truth = first_existing(d, {"truth.png", "truth.cseg"});
      j.paths.scribbles = first_existing(d, {"scribbles.json"});
      if (j.paths.image.empty() || j.paths.scribbles.empty()) continue;
      j.out = fs::path(a.out) / j.name;
      jobs.push_back(std::move(j));
    }
    if (jobs.empty()) throw Error(ErrorCode::IoError, "no fixture with image and scribbles.json under " + a.fixtures);
    return jobs;
  }
  if (a.image.empty()) throw UsageError{"--image is required (or --fixtures)"};
  if (a.scribbles.empty()) throw UsageError{"--scribbles is required (or --fixtures)"};
  Job j;
  j.name = fs::path(a.image).stem().string();
  j.paths = {a.image, a.superpixels, a.features, a.probmap, a.truth, a.scribbles};
  j.out = a.out;
  jobs.push_back(std::move(j));
  return jobs;
}

SessionConfig session_config(const Args& a) {
  SessionConfig c;
  c.algorithm = parse_algorithm(a.algo);
  c.lambda = a.lambda;
  c.eta = a.eta;
  c.budget.time_limit_seconds = a.time_limit;
  c.budget.node_limit = a.node_limit;
  c.cut_k = a.cut_k;
  c.superpixel_target = a.superpixel_target;
  return c;
}

struct JobResult {
  int code = kOk;
  std::string message;
  std::vector<std::vector<std::string>> rows;  // interactive-sim CSV rows
};

// Runs `fn(i)` for every job on up to `workers` threads; results keep job order.
template <class Fn>
std::vector<JobResult> run_jobs(std::size_t n, int workers, Fn fn) {
  std::vector<JobResult> results(n);
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        results[i] = fn(i);
      } catch (const Error& e) {
        results[i] = {exit_code_for(e.code()), e.what(), {}};
      } catch (const std::exception& e) {
        results[i] = {kFailure, e.what(), {}};
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::clamp<int>(workers, 1, static_cast<int>(std::max<std::size_t>(n, 1))));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(loop);
  loop();
  for (auto& t : pool) t.join();
  return results;
}

int finish(const std::vector<Job>& jobs, const std::vector<JobResult>& results, std::ostream& err) {
  int code = kOk;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].code == kOk) continue;
    err << jobs[i].name << ": " << results[i].message << "\n";
    if (code == kOk) code = results[i].code;
  }
  return code;
}

JobResult segment_job(const Job& job, const SessionConfig& cfg, bool timings) {
  const ScribbleSet scribbles = load_scribbles(job.paths.scribbles);
  Session session(load_inputs(job.paths), cfg);
  fs::create_directories(job.out);
  try {
    const RoundRecord& rec = session.run_round(scribbles);
    write_maps(job.out, session.inputs().image, rec.maps);
    write_text(job.out / "report.json", session.round_report(rec, timings).dump(2) + "\n");
    return {};
  } catch (const Error& e) {
    if (exit_code_for(e.code()) != kSolverFailure) throw;
    json report{{"algo", to_string(cfg.algorithm)}, {"params", cfg}, {"status", to_string(e.code())},
                {"error", e.what()}};
    write_text(job.out / "report.json", report.dump(2) + "\n");
    throw;
  }
}

std::vector<std::string> metric_row(int round, const RoundRecord& rec, std::string_view status) {
  std::vector<std::string> row{std::to_string(round), "", "", "", "", std::string(status)};
  if (rec.metrics) {
    row[1] = num(rec.metrics->semantic.mean);
    if (rec.metrics->panoptic) {
      const auto& t = rec.metrics->panoptic->total;
      row[2] = num(t.pq());
      row[3] = num(t.sq());
      row[4] = num(t.rq());
    }
  }
  return row;
}

std::string csv(const std::vector<std::vector<std::string>>& rows) {
  std::string s = "round,miou,pq,sq,rq,status\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) s += ',';
      s += r[i];
    }
    s += '\n';
  }
  return s;
}

JobResult interactive_job(const Job& job, const SessionConfig& cfg, int rounds, bool timings) {
  if (job.paths.truth.empty()) throw Error(ErrorCode::IoError, "interactive simulation needs ground truth");
  const ScribbleSet initial = load_scribbles(job.paths.scribbles);
  Session session(load_inputs(job.paths), cfg);
  const PanopticTruth& truth = *session.inputs().truth;

  JobResult result;
  const RoundRecord* last = &session.run_round(initial);
  result.rows.push_back(metric_row(0, *last, last->status));
  bool perfect = false;
  for (int r = 1; r <= rounds; ++r) {
    if (!perfect) {
      try {
        ScribbleSet add;
        add.scribbles.push_back(simulate_correction(last->maps.classes, truth, session.scribbles()));
        last = &session.run_round(add);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoError) throw;
        perfect = true;
      }
    }
    result.rows.push_back(metric_row(r, *last, perfect ? "NoError" : last->status));
  }
  fs::create_directories(job.out);
  write_text(job.out / "rounds.csv", csv(result.rows));
  session.save_snapshot(job.out / "session", timings);
  return result;
}

void add_session_flags(CLI::App* sub, Args& a) {
  sub->add_option("--image", a.image, "Input image (PNG or PPM)");
  sub->add_option("--superpixels", a.superpixels, "Superpixel label map (PNG or CSEG1 tensor); grid when omitted");
  sub->add_option("--features", a.features, "Per-pixel feature map (CSEG1 tensor)");
  sub->add_option("--probmap", a.probmap, "Per-pixel class probabilities (CSEG1 tensor)");
  sub->add_option("--scribbles", a.scribbles, "Scribble JSON file");
  sub->add_option("--fixtures", a.fixtures, "Directory of fixture subdirectories to process instead of single files");
  sub->add_option("--algo", a.algo, "Labeling algorithm")
      ->check(CLI::IsMember({"l0h", "ilp-u", "ilp-p"}))
      ->capture_default_str();
  sub->add_option("--lambda", a.lambda, "Boundary weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  sub->add_option("--eta", a.eta, "Final merge threshold of the fusion heuristic (default per feature source)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--time-limit", a.time_limit, "ILP wall-clock budget in seconds")->check(CLI::PositiveNumber);
  sub->add_option("--node-limit", a.node_limit, "ILP branch-and-bound node budget")->check(CLI::NonNegativeNumber);
  sub->add_option("--cut-k", a.cut_k, "Connectivity cuts added per violated pair")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--superpixel-target", a.superpixel_target, "Grid superpixel count when no map is given")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--jobs", a.jobs, "Images processed in parallel")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--seed", a.seed, "Random seed, recorded for reproducibility")->capture_default_str();
  sub->add_flag("--no-timings", a.no_timings, "Leave wall-clock timings out of report.json");
}

void add_config(CLI::App* sub, Args& a) {
  sub->add_option("--config", a.config, "JSON file with flag values; command-line flags take precedence")
      ->check(CLI::ExistingFile);
}

int cmd_segment(const Args& a, std::ostream& out, std::ostream& err) {
  if (a.out.empty()) throw UsageError{"--out is required"};
  const auto jobs = collect_jobs(a);
  const SessionConfig cfg = session_config(a);
  const auto results = run_jobs(jobs.size(), a.jobs, [&](std::size_t i) { return segment_job(jobs[i], cfg, !a.no_timings); });
  const int code = finish(jobs, results, err);
  for (std::size_t i = 0; i < jobs.size(); ++i)
    if (results[i].code == kOk) out << jobs[i].name << ": " << (jobs[i].out / "report.json").string() << "\n";
  return code;
}

int cmd_interactive(const Args& a, std::ostream& out, std::ostream& err) {
  if (a.out.empty()) throw UsageError{"--out is required"};
  if (a.fixtures.empty() && a.truth.empty()) throw UsageError{"--truth is required"};
  const auto jobs = collect_jobs(a);
  const SessionConfig cfg = session_config(a);
  const auto results = run_jobs(jobs.size(), a.jobs,
                                [&](std::size_t i) { return interactive_job(jobs[i], cfg, a.rounds, !a.no_timings); });
  const int code = finish(jobs, results, err);
  if (jobs.size() == 1) {
    if (results[0].code == kOk) out << csv(results[0].rows);
    return code;
  }
  // Mean over the fixtures that completed.
  std::string summary = "round,mean_miou,mean_pq,fixtures\n";
  for (int r = 0; r <= a.rounds; ++r) {
    double miou = 0.0, pq = 0.0;
    int n = 0, npq = 0;
    for (const auto& res : results) {
      if (res.code != kOk) continue;
      const auto& row = res.rows[r];
      if (!row[1].empty()) miou += std::stod(row[1]), ++n;
      if (!row[2].empty()) pq += std::stod(row[2]), ++npq;
    }
    summary += std::to_string(r) + "," + (n ? num(miou / n) : "") + "," + (npq ? num(pq / npq) : "") + "," +
               std::to_string(n) + "\n";
  }
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "summary.csv", summary);
  out << summary;
  return code;
}

int cmd_eval(const Args& a, std::ostream& out) {
  if (a.pred.empty()) throw UsageError{"--pred is required"};
  if (a.truth.empty()) throw UsageError{"--truth is required"};
  const PanopticTruth truth = load_truth(a.truth);
  PanopticTruth pred = load_truth(a.pred);
  // 16-bit PNGs and tensors carry instances; an 8-bit PNG is a class map only.
  bool panoptic = true;
  const auto bytes = read_bytes(a.pred);
  if (bytes.size() > 8 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G')
    panoptic = read_gray_png(a.pred).bit_depth == 16;
  if (!a.pred_instance.empty()) {
    const GrayPng inst = read_gray_png(a.pred_instance);
    if (inst.width != pred.width || inst.height != pred.height)
      throw Error(ErrorCode::DimensionMismatch, "instance map does not match the class map");
    pred.instance_ids.assign(inst.values.begin(), inst.values.end());
    panoptic = true;
  }
  if (pred.width != truth.width || pred.height != truth.height)
    throw Error(ErrorCode::DimensionMismatch, "prediction is " + std::to_string(pred.width) + "x" +
                                                  std::to_string(pred.height) + ", truth is " +
                                                  std::to_string(truth.width) + "x" + std::to_string(truth.height));
  const auto report =
      panoptic ? evaluate(pred.class_ids, std::span<const std::uint32_t>(pred.instance_ids), truth)
               : evaluate(pred.class_ids, std::nullopt, truth);
  const std::string text = report.to_json() + "\n";
  out << text;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "report.json", text);
    write_text(fs::path(a.out) / "metrics.csv", report.to_csv());
  }
  return kOk;
}

int cmd_synth(const Args& a, std::ostream& out) {
  if (a.out.empty()) throw UsageError{"--out is required"};
  if (a.island) {
    save_fixture(fs::path(a.out) / "island", make_island_fixture());
    out << (fs::path(a.out) / "island").string() << "\n";
    return kOk;
  }
  for (int i = 0; i < a.count; ++i) {
    SynthConfig cfg;
    cfg.width = cfg.height = a.size;
    cfg.seed = a.seed + static_cast<std::uint64_t>(i);
    char name[32];
    std::snprintf(name, sizeof name, "seed_%04llu", static_cast<unsigned long long>(cfg.seed));
    save_fixture(fs::path(a.out) / name, make_fixture(cfg));
    out << (fs::path(a.out) / name).string() << "\n";
  }
  return kOk;
}

int cmd_serve(const Args& a) {
  service::configure_logging_from_env();
  service::ServiceConfig cfg;
  cfg.bind = a.bind;
  cfg.port = a.port;
  cfg.async = a.async;
  cfg.idle_timeout = std::chrono::seconds(a.idle_timeout);
  cfg.max_upload_bytes = static_cast<std::size_t>(a.max_upload_mb * 1024.0 * 1024.0);
  cfg.session = session_config(a);

  // Block SIGINT/SIGTERM in every thread and wait for them on a dedicated one.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  service::Service svc(cfg);
  svc.bind();
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    svc.stop();
  });
  svc.run();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Args a;
  CLI::App app{"Scribble-driven superpixel segmentation", "cseg"};
  app.require_subcommand(1);

  auto* segment = app.add_subcommand("segment", "Label one image (or a fixture set) from scribbles");
  add_session_flags(segment, a);
  segment->add_option("--truth", a.truth, "Ground truth for scoring the result");
  segment->add_option("--out", a.out, "Output directory");
  add_config(segment, a);

  auto* sim = app.add_subcommand("interactive-sim", "Simulate correction rounds against ground truth");
  add_session_flags(sim, a);
  sim->add_option("--truth", a.truth, "Ground truth panoptic map");
  sim->add_option("--rounds", a.rounds, "Correction rounds after the initial one")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sim->add_option("--out", a.out, "Output directory");
  add_config(sim, a);

  auto* eval = app.add_subcommand("eval", "Score a predicted map against ground truth");
  eval->add_option("--pred", a.pred, "Predicted class map, or panoptic map (class*1000+instance)");
  eval->add_option("--pred-instance", a.pred_instance, "Predicted instance map to pair with a class map");
  eval->add_option("--truth", a.truth, "Ground truth panoptic map");
  eval->add_option("--out", a.out, "Directory for report.json and metrics.csv");
  add_config(eval, a);

  auto* synth = app.add_subcommand("synth", "Write procedural fixtures");
  synth->add_option("--out", a.out, "Output directory");
  synth->add_option("--seed", a.seed, "First seed")->capture_default_str();
  synth->add_option("--count", a.count, "Number of fixtures")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--size", a.size, "Image side in pixels")->check(CLI::Range(16, 4096))->capture_default_str();
  synth->add_flag("--island", a.island, "Write the two-class island fixture instead");
  add_config(synth, a);

  auto* serve = app.add_subcommand("serve", "Run the HTTP annotation service");
  serve->add_option("--bind", a.bind, "Listen address")->capture_default_str();
  serve->add_option("--port", a.port, "Listen port")->check(CLI::Range(0, 65535))->capture_default_str();
  serve->add_flag("--async", a.async, "Run rounds in the background and let clients poll");
  serve->add_option("--idle-timeout", a.idle_timeout, "Seconds before an idle session expires")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  serve->add_option("--max-upload-mb", a.max_upload_mb, "Request size cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  serve->add_option("--algo", a.algo, "Default algorithm for new sessions")
      ->check(CLI::IsMember({"l0h", "ilp-u", "ilp-p"}))
      ->capture_default_str();
  serve->add_option("--lambda", a.lambda, "Default boundary weight")->check(CLI::NonNegativeNumber);
  serve->add_option("--eta", a.eta, "Default final merge threshold")->check(CLI::PositiveNumber);
  serve->add_option("--time-limit", a.time_limit, "Default ILP budget in seconds")->check(CLI::PositiveNumber);
  serve->add_option("--node-limit", a.node_limit, "Default ILP node budget")->check(CLI::NonNegativeNumber);
  serve->add_option("--cut-k", a.cut_k, "Default cuts per violated pair")->check(CLI::PositiveNumber);
  add_config(serve, a);

  auto usage = [&](const std::string& message) {
    const CLI::App* active = &app;
    for (const CLI::App* s : app.get_subcommands()) active = s;
    err << "error: " << message << "\n\n" << active->help();
    return kBadFlags;
  };

  try {
    app.parse(argc, argv);
    for (CLI::App* s : app.get_subcommands())
      if (!a.config.empty()) apply_config_file(s, a.config);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* active = &app;
    for (const CLI::App* s : app.get_subcommands()) active = s;
    out << active->help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    return usage(e.what());
  }

  try {
    if (segment->parsed()) return cmd_segment(a, out, err);
    if (sim->parsed()) return cmd_interactive(a, out, err);
    if (eval->parsed()) return cmd_eval(a, out);
    if (synth->parsed()) return cmd_synth(a, out);
    if (serve->parsed()) return cmd_serve(a);
  } catch (const UsageError& e) {
    return usage(e.message);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kBadFlags;
}

}  // namespace cseg::cli
