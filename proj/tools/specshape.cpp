// specshape command-line front end.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 divergence.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "specshape/config.hpp"
#include "specshape/error.hpp"
#include "specshape/harness.hpp"
#include "specshape/matrix.hpp"
#include "specshape/spectral.hpp"

namespace {

using namespace specshape;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitDiverged = 2;

// Writes to `path`, or stdout when it is empty or "-".
template <typename F>
void emit(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ostringstream ss;
  write(ss);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path);
  os << ss.str();
}

std::filesystem::path output_dir(const RunConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!cfg.out.empty()) return cfg.out;
  throw Error(ErrorKind::ValidationError, "no output directory: pass --out or set run.out");
}

int report(const RunResult& r, const std::filesystem::path& out) {
  if (r.status == RunStatus::Diverged) {
    std::cerr << "specshape: " << r.message << '\n';
    return kExitDiverged;
  }
  const MetricsRow& last = r.metrics.back();
  std::cout << "step " << last.step << " eval_loss " << format_double(last.eval_loss) << " -> " << out.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral shaping optimizers, mode-model simulator and probes"};
  app.require_subcommand(1);

  std::string in_path, out_path, config_path, mode = "exact", axis, values, metrics_path;
  double exponent = 0.0, target = 0.0;
  std::size_t stride = 100, threads = 0;

  auto* shape = app.add_subcommand("shape", "Apply U diag(s^p) V^T to a matrix file");
  shape->add_option("--in", in_path, "Input matrix (text format)")->required();
  shape->add_option("--p", exponent, "Spectral exponent")->required();
  shape->add_option("--mode", mode, "exact or fast")->check(CLI::IsMember({"exact", "fast"}));
  shape->add_option("--out", out_path, "Output matrix (stdout if omitted)");

  auto* schedule = app.add_subcommand("schedule", "Write the exponent and lr schedule as CSV");
  schedule->add_option("--config", config_path)->required();
  schedule->add_option("--out", out_path, "CSV path (stdout if omitted)");

  auto* train = app.add_subcommand("train", "Run one training job");
  train->add_option("--config", config_path)->required();
  train->add_option("--out", out_path, "Run directory (default: run.out)");

  auto* simulate = app.add_subcommand("simulate", "Simulate the mode model");
  simulate->add_option("--config", config_path)->required();
  simulate->add_option("--out", out_path, "CSV path (stdout if omitted)");

  auto* probe = app.add_subcommand("probe", "Train with curvature/noise probes");
  probe->add_option("--config", config_path)->required();
  probe->add_option("--stride", stride, "Probe every N steps")->check(CLI::PositiveNumber);
  probe->add_option("--out", out_path, "Run directory (default: run.out)");

  auto* sweep = app.add_subcommand("sweep", "Run one job per value of an axis");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--axis", axis, "p_min, lr, tau, w or schedule_shape")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--out", out_path, "Sweep directory (default: run.out)");
  sweep->add_option("--threads", threads, "Parallel runs (default: hardware threads)");

  auto* compare = app.add_subcommand("compare-exact", "Fast vs exact shaping errors");
  compare->add_option("--config", config_path)->required();
  compare->add_option("--out", out_path, "CSV path (stdout if omitted)");

  auto* stt = app.add_subcommand("steps-to-target", "First step reaching a target eval loss");
  stt->add_option("--metrics", metrics_path)->required();
  stt->add_option("--target", target)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*shape) {
      const Matrix m = load_text(in_path);
      const Matrix d = mode == "exact" ? exact_spectral_shape(m, exponent) : fast_spectral(m, exponent);
      emit(out_path, [&](std::ostream& os) { write_text(os, d); });
      return kExitOk;
    }
    if (*stt) {
      const auto step = steps_to_target(std::filesystem::path(metrics_path), target);
      std::cout << (step ? std::to_string(*step) : std::string("NotReached")) << '\n';
      return kExitOk;
    }

    const RunConfig cfg = parse_config(config_path);
    if (*schedule) {
      emit(out_path, [&](std::ostream& os) { write_schedule_csv(os, cfg); });
    } else if (*simulate) {
      emit(out_path, [&](std::ostream& os) { write_simulation_csv(os, cfg); });
    } else if (*compare) {
      emit(out_path, [&](std::ostream& os) { write_compare_csv(os, cfg); });
    } else if (*train) {
      const auto out = output_dir(cfg, out_path);
      return report(run_train(cfg, {out, std::nullopt}), out);
    } else if (*probe) {
      const auto out = output_dir(cfg, out_path);
      return report(run_train(cfg, {out, stride}), out);
    } else if (*sweep) {
      const auto out = output_dir(cfg, out_path);
      std::vector<std::string> list;
      std::stringstream ss(values);
      for (std::string v; std::getline(ss, v, ',');) list.push_back(v);
      const auto rows = run_sweep(cfg, parse_sweep_axis(axis), list, out, threads);
      write_sweep_csv(std::cout, rows);
    }
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "specshape: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return e.kind() == ErrorKind::Diverged ? kExitDiverged : kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "specshape: " << e.what() << '\n';
    return kExitInvalid;
  }
}
