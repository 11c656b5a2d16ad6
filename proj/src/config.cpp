#include "specshape/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "specshape/error.hpp"

namespace specshape {
namespace {

struct BadValue {
  std::string reason;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view v) {
  v = trim(v);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) throw BadValue{"expected a number"};
  if (!std::isfinite(out)) throw BadValue{"value must be finite"};
  return out;
}

std::uint64_t parse_unsigned(std::string_view v) {
  v = trim(v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw BadValue{"expected a non-negative integer"};
  }
  return out;
}

bool parse_bool(std::string_view v) {
  v = trim(v);
  if (v == "true") return true;
  if (v == "false") return false;
  throw BadValue{"expected true or false"};
}

std::vector<double> parse_list(std::string_view v) {
  std::vector<double> out;
  v = trim(v);
  if (v.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(parse_double(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename F>
auto parse_enum(F parse, std::string_view v) {
  try {
    return parse(trim(v));
  } catch (const Error& e) {
    throw BadValue{e.what()};
  }
}

std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

using Setter = std::function<void(RunConfig&, std::string_view)>;
// Empty optional: key omitted from the resolved output.
using Getter = std::function<std::optional<std::string>(const RunConfig&)>;

struct KeySpec {
  std::string_view name;
  Setter set;
  Getter get;
};

template <typename T>
KeySpec double_key(std::string_view name, T member) {
  return {name, [member](RunConfig& c, std::string_view v) { member(c) = parse_double(v); },
          [member](const RunConfig& c) -> std::optional<std::string> {
            return format_double(member(const_cast<RunConfig&>(c)));
          }};
}

template <typename T>
KeySpec size_key(std::string_view name, T member) {
  return {name, [member](RunConfig& c, std::string_view v) { member(c) = static_cast<std::size_t>(parse_unsigned(v)); },
          [member](const RunConfig& c) -> std::optional<std::string> {
            return std::to_string(member(const_cast<RunConfig&>(c)));
          }};
}

template <typename T>
KeySpec bool_key(std::string_view name, T member) {
  return {name, [member](RunConfig& c, std::string_view v) { member(c) = parse_bool(v); },
          [member](const RunConfig& c) -> std::optional<std::string> {
            return format_bool(member(const_cast<RunConfig&>(c)));
          }};
}

template <typename T>
KeySpec list_key(std::string_view name, T member) {
  return {name, [member](RunConfig& c, std::string_view v) { member(c) = parse_list(v); },
          [member](const RunConfig& c) -> std::optional<std::string> {
            const auto& v = member(const_cast<RunConfig&>(c));
            if (v.empty()) return std::nullopt;
            return format_list(v);
          }};
}

// Keys that mark the simulate section as present.
void mark_simulate(RunConfig& c) { c.has_simulate = true; }

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = [] {
    std::vector<KeySpec> t;
    t.push_back({"task.kind",
                 [](RunConfig& c, std::string_view v) {
                   c.task.kind = parse_enum(parse_task_kind, v);
                   c.has_task = true;
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (!c.has_task) return std::nullopt;
                   return std::string(to_string(c.task.kind));
                 }});
    t.push_back(size_key("task.rows", [](RunConfig& c) -> auto& { return c.task.quadratic.rows; }));
    t.push_back(size_key("task.cols", [](RunConfig& c) -> auto& { return c.task.quadratic.cols; }));
    t.push_back(double_key("task.h_min", [](RunConfig& c) -> auto& { return c.task.quadratic.h_min; }));
    t.push_back(list_key("task.spectrum", [](RunConfig& c) -> auto& { return c.task.quadratic.spectrum; }));
    t.push_back(double_key("task.kappa", [](RunConfig& c) -> auto& { return c.task.quadratic.kappa; }));
    t.push_back(double_key("task.noise_std", [](RunConfig& c) -> auto& { return c.task.quadratic.noise_std; }));
    t.push_back(double_key("task.signal_tilt", [](RunConfig& c) -> auto& { return c.task.quadratic.signal_tilt; }));
    t.push_back(double_key("task.signal_scale", [](RunConfig& c) -> auto& { return c.task.quadratic.signal_scale; }));
    t.push_back(size_key("task.dim", [](RunConfig& c) -> auto& { return c.task.clusters.dim; }));
    t.push_back(size_key("task.hidden", [](RunConfig& c) -> auto& { return c.task.hidden; }));
    t.push_back(size_key("task.classes", [](RunConfig& c) -> auto& { return c.task.clusters.classes; }));
    t.push_back(double_key("task.margin", [](RunConfig& c) -> auto& { return c.task.clusters.margin; }));
    t.push_back(double_key("task.cluster_std", [](RunConfig& c) -> auto& { return c.task.clusters.noise_std; }));
    t.push_back(size_key("task.eval_samples", [](RunConfig& c) -> auto& { return c.task.eval_samples; }));
    t.push_back(double_key("task.loss_lambda", [](RunConfig& c) -> auto& { return c.task.loss.lambda; }));

    t.push_back({"optimizer.kind",
                 [](RunConfig& c, std::string_view v) {
                   c.optimizer = parse_enum(parse_optimizer_kind, v);
                   c.has_optimizer = true;
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (!c.has_optimizer) return std::nullopt;
                   return std::string(to_string(c.optimizer));
                 }});
    t.push_back(double_key("optimizer.lr", [](RunConfig& c) -> auto& { return c.hyper.base_lr; }));
    t.push_back(double_key("optimizer.momentum", [](RunConfig& c) -> auto& { return c.hyper.momentum_beta; }));
    t.push_back(bool_key("optimizer.nesterov", [](RunConfig& c) -> auto& { return c.hyper.nesterov; }));
    t.push_back(double_key("optimizer.weight_decay", [](RunConfig& c) -> auto& { return c.hyper.weight_decay; }));
    t.push_back(double_key("optimizer.adam_beta1", [](RunConfig& c) -> auto& { return c.hyper.adam_beta1; }));
    t.push_back(double_key("optimizer.adam_beta2", [](RunConfig& c) -> auto& { return c.hyper.adam_beta2; }));
    t.push_back(double_key("optimizer.adam_eps", [](RunConfig& c) -> auto& { return c.hyper.adam_eps; }));
    t.push_back(double_key("optimizer.scalar_lr", [](RunConfig& c) -> auto& { return c.hyper.scalar_lr; }));
    t.push_back(bool_key("optimizer.shape_scale", [](RunConfig& c) -> auto& { return c.hyper.shape_scale; }));
    t.push_back(double_key("optimizer.ns_a", [](RunConfig& c) -> auto& { return c.hyper.ns.a; }));
    t.push_back(double_key("optimizer.ns_b", [](RunConfig& c) -> auto& { return c.hyper.ns.b; }));
    t.push_back(double_key("optimizer.ns_c", [](RunConfig& c) -> auto& { return c.hyper.ns.c; }));
    t.push_back({"optimizer.ns_steps",
                 [](RunConfig& c, std::string_view v) {
                   const auto steps = parse_unsigned(v);
                   if (steps > 1000) throw BadValue{"ns_steps too large"};
                   c.hyper.ns.steps = static_cast<int>(steps);
                 },
                 [](const RunConfig& c) -> std::optional<std::string> { return std::to_string(c.hyper.ns.steps); }});

    t.push_back({"lr.schedule",
                 [](RunConfig& c, std::string_view v) {
                   v = trim(v);
                   if (v == "cosine") {
                     c.lr_decay = true;
                   } else if (v == "constant") {
                     c.lr_decay = false;
                   } else {
                     throw BadValue{"expected cosine or constant"};
                   }
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   return std::string(c.lr_decay ? "cosine" : "constant");
                 }});
    t.push_back(double_key("lr.warmup_frac", [](RunConfig& c) -> auto& { return c.lr.warmup_frac; }));
    t.push_back(double_key("lr.warmdown_ratio", [](RunConfig& c) -> auto& { return c.lr.warmdown_ratio; }));

    t.push_back({"schedule.shape",
                 [](RunConfig& c, std::string_view v) { c.hyper.schedule.shape = parse_enum(parse_schedule_shape, v); },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   return std::string(to_string(c.hyper.schedule.shape));
                 }});
    t.push_back(double_key("schedule.p_max", [](RunConfig& c) -> auto& { return c.hyper.schedule.p_max; }));
    t.push_back(double_key("schedule.p_min", [](RunConfig& c) -> auto& { return c.hyper.schedule.p_min; }));
    t.push_back(double_key("schedule.tau", [](RunConfig& c) -> auto& { return c.hyper.schedule.tau; }));
    t.push_back(double_key("schedule.w", [](RunConfig& c) -> auto& { return c.hyper.schedule.w; }));

    t.push_back({"run.seed", [](RunConfig& c, std::string_view v) { c.seed = parse_unsigned(v); },
                 [](const RunConfig& c) -> std::optional<std::string> { return std::to_string(c.seed); }});
    t.push_back(size_key("run.total_steps", [](RunConfig& c) -> auto& { return c.total_steps; }));
    t.push_back(size_key("run.batch_size", [](RunConfig& c) -> auto& { return c.batch_size; }));
    t.push_back(size_key("run.eval_stride", [](RunConfig& c) -> auto& { return c.eval_stride; }));
    t.push_back(bool_key("run.wall_clock", [](RunConfig& c) -> auto& { return c.wall_clock; }));
    t.push_back({"run.target_loss", [](RunConfig& c, std::string_view v) { c.target_loss = parse_double(v); },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (!c.target_loss) return std::nullopt;
                   return format_double(*c.target_loss);
                 }});
    t.push_back({"run.out", [](RunConfig& c, std::string_view v) { c.out = std::string(trim(v)); },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (c.out.empty()) return std::nullopt;
                   return c.out.string();
                 }});

    t.push_back(size_key("probe.stride", [](RunConfig& c) -> auto& { return c.probe.stride; }));
    t.push_back(size_key("probe.k", [](RunConfig& c) -> auto& { return c.probe.k; }));
    t.push_back(size_key("probe.batches", [](RunConfig& c) -> auto& { return c.probe.batches; }));
    t.push_back(size_key("probe.probe_set", [](RunConfig& c) -> auto& { return c.probe.probe_set; }));
    t.push_back(size_key("probe.bucket_size", [](RunConfig& c) -> auto& { return c.probe.bucket_size; }));
    t.push_back({"probe.param", [](RunConfig& c, std::string_view v) { c.probe.param = std::string(trim(v)); },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (c.probe.param.empty()) return std::nullopt;
                   return c.probe.param;
                 }});

    auto sim_list = [](std::string_view name, std::vector<double> ModeModelConfig::*field) {
      return KeySpec{name,
                     [field](RunConfig& c, std::string_view v) {
                       c.simulate.model.*field = parse_list(v);
                       mark_simulate(c);
                     },
                     [field](const RunConfig& c) -> std::optional<std::string> {
                       if (!c.has_simulate) return std::nullopt;
                       return format_list(c.simulate.model.*field);
                     }};
    };
    auto sim_double = [](std::string_view name, double ModeModelConfig::*field) {
      return KeySpec{name,
                     [field](RunConfig& c, std::string_view v) {
                       c.simulate.model.*field = parse_double(v);
                       mark_simulate(c);
                     },
                     [field](const RunConfig& c) -> std::optional<std::string> {
                       if (!c.has_simulate) return std::nullopt;
                       return format_double(c.simulate.model.*field);
                     }};
    };
    t.push_back(sim_list("simulate.curvatures", &ModeModelConfig::curvatures));
    t.push_back(sim_list("simulate.noise_levels", &ModeModelConfig::noise_levels));
    t.push_back(sim_list("simulate.initial_residuals", &ModeModelConfig::initial_residuals));
    t.push_back(sim_double("simulate.kappa", &ModeModelConfig::kappa));
    t.push_back(sim_double("simulate.eta", &ModeModelConfig::eta));
    t.push_back(sim_double("simulate.exponent", &ModeModelConfig::exponent));
    t.push_back({"simulate.steps",
                 [](RunConfig& c, std::string_view v) {
                   c.simulate.model.steps = static_cast<std::size_t>(parse_unsigned(v));
                   mark_simulate(c);
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (!c.has_simulate) return std::nullopt;
                   return std::to_string(c.simulate.model.steps);
                 }});
    t.push_back({"simulate.mode",
                 [](RunConfig& c, std::string_view v) {
                   c.simulate.mode = parse_enum(parse_simulation_mode, v);
                   mark_simulate(c);
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (!c.has_simulate) return std::nullopt;
                   return std::string(to_string(c.simulate.mode));
                 }});
    t.push_back({"simulate.noise",
                 [](RunConfig& c, std::string_view v) {
                   c.simulate.noise = parse_enum(parse_noise_kind, v);
                   mark_simulate(c);
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (!c.has_simulate) return std::nullopt;
                   return std::string(to_string(c.simulate.noise));
                 }});
    t.push_back({"simulate.metrics",
                 [](RunConfig& c, std::string_view v) {
                   c.simulate.metrics = parse_bool(v);
                   mark_simulate(c);
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (!c.has_simulate) return std::nullopt;
                   return format_bool(c.simulate.metrics);
                 }});
    t.push_back({"simulate.bucket_size",
                 [](RunConfig& c, std::string_view v) {
                   c.simulate.bucket_size = static_cast<std::size_t>(parse_unsigned(v));
                   mark_simulate(c);
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (!c.has_simulate) return std::nullopt;
                   return std::to_string(c.simulate.bucket_size);
                 }});

    t.push_back(size_key("compare.rows", [](RunConfig& c) -> auto& { return c.compare.rows; }));
    t.push_back(size_key("compare.cols", [](RunConfig& c) -> auto& { return c.compare.cols; }));
    t.push_back(list_key("compare.exponents", [](RunConfig& c) -> auto& { return c.compare.exponents; }));
    t.push_back(size_key("compare.instances", [](RunConfig& c) -> auto& { return c.compare.instances; }));
    t.push_back(double_key("compare.condition", [](RunConfig& c) -> auto& { return c.compare.condition; }));
    return t;
  }();
  return table;
}

template <typename F>
void revalidate(F check) {
  try {
    check();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidConfig || e.kind() == ErrorKind::InvalidParams) {
      throw Error(ErrorKind::ValidationError, e.what());
    }
    throw;
  }
}

void fail(const std::string& what) { throw Error(ErrorKind::ValidationError, what); }

}  // namespace

std::string_view to_string(TaskKind k) noexcept { return k == TaskKind::Quadratic ? "quadratic" : "mlp"; }

TaskKind parse_task_kind(std::string_view name) {
  if (name == "quadratic") return TaskKind::Quadratic;
  if (name == "mlp") return TaskKind::Mlp;
  throw Error(ErrorKind::InvalidConfig, "unknown task kind '" + std::string(name) + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void synchronize(RunConfig& cfg) {
  cfg.lr.total_steps = cfg.total_steps;
  cfg.hyper.schedule.total_steps = cfg.total_steps;
  if (cfg.lr_decay) {
    cfg.hyper.lr_schedule = cfg.lr;
  } else {
    cfg.hyper.lr_schedule.reset();
  }
}

void validate(const RunConfig& cfg) {
  if (cfg.total_steps == 0) fail("run.total_steps must be positive");
  if (cfg.batch_size == 0) fail("run.batch_size must be positive");
  if (cfg.eval_stride == 0) fail("run.eval_stride must be positive");
  if (cfg.target_loss && !std::isfinite(*cfg.target_loss)) fail("run.target_loss must be finite");
  if (cfg.hyper.schedule.total_steps != cfg.total_steps || cfg.lr.total_steps != cfg.total_steps) {
    fail("schedule lengths differ from run.total_steps");
  }
  revalidate([&] { validate(cfg.hyper); });
  revalidate([&] { validate(cfg.lr); });
  if (cfg.task.kind == TaskKind::Quadratic) {
    revalidate([&] { validate(cfg.task.quadratic); });
  } else {
    revalidate([&] { validate(cfg.task.clusters); });
    revalidate([&] { validate(cfg.task.loss); });
    if (cfg.task.hidden == 0) fail("task.hidden must be positive");
    if (cfg.task.eval_samples == 0) fail("task.eval_samples must be positive");
  }
  if (cfg.probe.batches < 2) fail("probe.batches must be at least 2");
  if (cfg.probe.probe_set == 0) fail("probe.probe_set must be positive");
  if (cfg.probe.bucket_size == 0) fail("probe.bucket_size must be positive");
  if (cfg.has_simulate) {
    revalidate([&] { validate(cfg.simulate.model); });
    if (cfg.simulate.bucket_size == 0) fail("simulate.bucket_size must be positive");
  }
  if (cfg.compare.rows == 0 || cfg.compare.cols == 0) fail("compare shape must be positive");
  if (cfg.compare.instances == 0) fail("compare.instances must be positive");
  if (cfg.compare.exponents.empty()) fail("compare.exponents must not be empty");
  if (!(cfg.compare.condition >= 1.0)) fail("compare.condition must be >= 1");
}

void require_training_keys(const RunConfig& cfg) {
  if (!cfg.has_task) fail("task.kind is required");
  if (!cfg.has_optimizer) fail("optimizer.kind is required");
}

RunConfig parse_config_text(std::string_view text) {
  RunConfig cfg;
  const auto& table = key_table();
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorKind::ParseError, line_no, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(ErrorKind::ParseError, line_no, "missing key");
    const auto it = std::find_if(table.begin(), table.end(), [&](const KeySpec& k) { return k.name == key; });
    if (it == table.end()) throw Error(ErrorKind::ParseError, line_no, "unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      throw Error(ErrorKind::ParseError, line_no, "repeated key '" + std::string(key) + "'");
    }
    try {
      it->set(cfg, value);
    } catch (const BadValue& bad) {
      throw Error(ErrorKind::ParseError, line_no, std::string(key) + ": " + bad.reason);
    }
  }
  if (!seen.contains("optimizer.lr")) cfg.hyper.base_lr = OptimizerHyper::defaults(cfg.optimizer).base_lr;
  synchronize(cfg);
  validate(cfg);
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

std::string resolved_text(const RunConfig& cfg) {
  std::string out;
  for (const KeySpec& k : key_table()) {
    if (auto v = k.get(cfg)) {
      out += k.name;
      out += " = ";
      out += *v;
      out += '\n';
    }
  }
  return out;
}

std::vector<std::string_view> config_keys() {
  std::vector<std::string_view> out;
  for (const KeySpec& k : key_table()) out.push_back(k.name);
  return out;
}

}  // namespace specshape
