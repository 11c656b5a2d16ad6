#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "specshape/config.hpp"
#include "specshape/error.hpp"
#include "test_util.hpp"

using namespace specshape;
using test::kind_of;

namespace {

std::size_t error_line(std::string_view text) {
  try {
    parse_config_text(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    return e.line();
  }
  ADD_FAILURE() << "expected ParseError";
  return 0;
}

}  // namespace

TEST(Config, MinimalFileGetsDefaults) {
  const RunConfig c = parse_config_text("task.kind = quadratic\noptimizer.kind = dynmuon\n");
  EXPECT_TRUE(c.has_task);
  EXPECT_TRUE(c.has_optimizer);
  EXPECT_EQ(c.task.kind, TaskKind::Quadratic);
  EXPECT_EQ(c.optimizer, OptimizerKind::DynMuon);
  EXPECT_EQ(c.hyper.base_lr, 0.01);
  EXPECT_EQ(c.hyper.weight_decay, 0.01);
  EXPECT_EQ(c.hyper.momentum_beta, 0.95);
  EXPECT_EQ(c.hyper.scalar_lr, 0.001);
  EXPECT_EQ(c.hyper.schedule.p_max, 1.0);
  EXPECT_EQ(c.hyper.schedule.p_min, -0.25);
  EXPECT_EQ(c.hyper.schedule.tau, 0.02);
  EXPECT_EQ(c.hyper.schedule.w, 0.01);
  EXPECT_EQ(c.lr.warmup_frac, 0.01);
  EXPECT_EQ(c.lr.warmdown_ratio, 0.2);
  EXPECT_EQ(c.eval_stride, 50u);
  EXPECT_EQ(c.task.eval_samples, 4096u);
  EXPECT_EQ(c.probe.batches, 32u);
  EXPECT_EQ(c.probe.probe_set, 8u);
  ASSERT_TRUE(c.hyper.lr_schedule.has_value());
  EXPECT_EQ(c.hyper.lr_schedule->total_steps, c.total_steps);
  EXPECT_EQ(c.hyper.schedule.total_steps, c.total_steps);
}

TEST(Config, AdamWDefaultLearningRate) {
  const RunConfig c = parse_config_text("task.kind = mlp\noptimizer.kind = adamw\n");
  EXPECT_EQ(c.hyper.base_lr, 0.002);
  const RunConfig d = parse_config_text("optimizer.lr = 0.05\noptimizer.kind = adamw\n");
  EXPECT_EQ(d.hyper.base_lr, 0.05);
}

TEST(Config, ExplicitScheduleValues) {
  const RunConfig c = parse_config_text(
      "task.kind = quadratic\noptimizer.kind = dynmuon\nschedule.p_min = -0.25\nschedule.p_max = 1.0\n");
  EXPECT_EQ(c.hyper.schedule.p_min, -0.25);
  EXPECT_EQ(c.hyper.schedule.p_max, 1.0);
}

TEST(Config, CommentsBlankLinesAndWhitespace) {
  const RunConfig c = parse_config_text(
      "# header\n\n   task.kind=quadratic   # trailing\n\toptimizer.kind =  muon\nrun.seed = 7\n");
  EXPECT_EQ(c.optimizer, OptimizerKind::Muon);
  EXPECT_EQ(c.seed, 7u);
}

TEST(Config, UnknownKeyNamesLine) {
  EXPECT_EQ(error_line("task.kind = quadratic\nlearningrate = 0.1\n"), 2u);
  try {
    parse_config_text("task.kind = quadratic\n\nlearningrate = 0.1\n");
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("learningrate"), std::string::npos);
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Config, MalformedLinesAreParseErrors) {
  EXPECT_EQ(error_line("task.kind quadratic\n"), 1u);
  EXPECT_EQ(error_line("run.seed = 1\nrun.seed = 2\n"), 2u);
  EXPECT_EQ(error_line("run.seed = -1\n"), 1u);
  EXPECT_EQ(error_line("run.seed = 1.5\n"), 1u);
  EXPECT_EQ(error_line("optimizer.lr = fast\n"), 1u);
  EXPECT_EQ(error_line("optimizer.nesterov = maybe\n"), 1u);
  EXPECT_EQ(error_line("task.kind = transformer\n"), 1u);
  EXPECT_EQ(error_line("optimizer.lr = nan\n"), 1u);
  EXPECT_EQ(error_line("= 3\n"), 1u);
}

TEST(Config, OutOfRangeValuesAreValidationErrors) {
  auto kind = [](std::string_view text) { return kind_of([&] { parse_config_text(text); }); };
  EXPECT_EQ(kind("schedule.p_min = 2\n"), ErrorKind::ValidationError);
  EXPECT_EQ(kind("schedule.tau = 1.5\n"), ErrorKind::ValidationError);
  EXPECT_EQ(kind("optimizer.momentum = 1\n"), ErrorKind::ValidationError);
  EXPECT_EQ(kind("lr.warmdown_ratio = 0\n"), ErrorKind::ValidationError);
  EXPECT_EQ(kind("task.h_min = 0\n"), ErrorKind::ValidationError);
  EXPECT_EQ(kind("task.kind = mlp\ntask.loss_lambda = 2\n"), ErrorKind::ValidationError);
  EXPECT_EQ(kind("run.total_steps = 0\n"), ErrorKind::ValidationError);
  EXPECT_EQ(kind("optimizer.ns_steps = 0\n"), ErrorKind::ValidationError);
}

TEST(Config, TrainingKeysRequiredOnlyForTraining) {
  const RunConfig c = parse_config_text("simulate.curvatures = 1, 0.1\nsimulate.noise_levels = 0, 0\n"
                                        "simulate.initial_residuals = 1, 1\n");
  EXPECT_TRUE(c.has_simulate);
  EXPECT_EQ(c.simulate.model.curvatures, (std::vector<double>{1.0, 0.1}));
  EXPECT_EQ(kind_of([&] { require_training_keys(c); }), ErrorKind::ValidationError);
}

TEST(Config, ResolvedTextRoundTrips) {
  const RunConfig c = parse_config_text(
      "task.kind = mlp\noptimizer.kind = sgd\noptimizer.lr = 0.0123456789\nrun.seed = 99\n"
      "schedule.shape = abrupt-switch\nrun.target_loss = 0.25\nprobe.stride = 10\nlr.schedule = constant\n"
      "simulate.curvatures = 1, 0.5, 0.25\nsimulate.noise_levels = 0.1, 0.1, 0.1\n"
      "simulate.initial_residuals = 1, 1, 1\ncompare.exponents = -0.1, -0.3\n");
  const std::string text = resolved_text(c);
  const RunConfig r = parse_config_text(text);
  EXPECT_EQ(resolved_text(r), text);
  EXPECT_EQ(r.hyper.base_lr, 0.0123456789);
  EXPECT_EQ(r.hyper.schedule.shape, ScheduleShape::AbruptSwitch);
  EXPECT_FALSE(r.hyper.lr_schedule.has_value());
  EXPECT_EQ(r.target_loss, 0.25);
  EXPECT_EQ(r.compare.exponents, (std::vector<double>{-0.1, -0.3}));
}

TEST(Config, ResolvedTextListsEveryKeyOnce) {
  // Lists, probe.param and the simulate section are emitted only when set.
  const RunConfig c = parse_config_text(
      "task.kind = quadratic\noptimizer.kind = dynmuon\ntask.spectrum = 1, 0.5\nprobe.param = w\n"
      "simulate.curvatures = 1\nsimulate.noise_levels = 0\nsimulate.initial_residuals = 1\n");
  const std::string text = "\n" + resolved_text(c);
  for (std::string_view key : config_keys()) {
    if (key == "run.target_loss" || key == "run.out") continue;  // optional keys without a default
    const std::string needle = "\n" + std::string(key) + " = ";
    const auto first = text.find(needle);
    EXPECT_NE(first, std::string::npos) << key;
    EXPECT_EQ(text.find(needle, first + 1), std::string::npos) << key;
  }
}

TEST(Config, ParseFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "specshape_config_test.cfg";
  {
    std::ofstream os(path);
    os << "task.kind = quadratic\noptimizer.kind = muon\nrun.total_steps = 200\n";
  }
  const RunConfig c = parse_config(path);
  EXPECT_EQ(c.total_steps, 200u);
  EXPECT_EQ(c.hyper.schedule.total_steps, 200u);
  std::filesystem::remove(path);
  EXPECT_EQ(kind_of([&] { parse_config(path); }), ErrorKind::Io);
}

TEST(Config, FormatDoubleRoundTrips) {
  for (double v : {0.1, -0.25, 1e-300, 3.0, 0.0123456789, 1.0 / 3.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}
