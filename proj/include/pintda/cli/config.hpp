#pragma once

#include <cstdint>
#include <fstream>
#include <array>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pintda/errors.hpp"
#include "pintda/harness.hpp"
#include "pintda/models.hpp"

namespace pintda::cli {

using Json = nlohmann::ordered_json;

/// Invalid or unreadable run configuration (exit code 1).
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

enum class ModelKind { lorenz96, linear };

struct ModelConfig {
  ModelKind kind = ModelKind::lorenz96;
  Lorenz96Params lorenz96{};
  Matrix linear_matrix; ///< dx/dt = A x
};

struct GradientCheckConfig {
  int directions = 20;
  double epsilon = 1e-6;
  double tolerance = 1e-5;
  double denominator_floor = 1e-10;
  double mu = 1.0;
  double control_perturbation = 0.1; ///< std. dev. added to each entry of the consistent control
  double multiplier_scale = 1.0;     ///< std. dev. of the random multipliers
  bool corrupt_gradient = false;     ///< negative control: scales the adjoint gradient by 1.01

  void validate() const {
    if (directions < 1) throw InvalidArgument("gradient_check: directions >= 1 required");
    if (!(epsilon > 0.0)) throw InvalidArgument("gradient_check: epsilon > 0 required");
    if (!(tolerance > 0.0)) throw InvalidArgument("gradient_check: tolerance > 0 required");
    if (!(denominator_floor > 0.0)) throw InvalidArgument("gradient_check: denominator_floor > 0 required");
    if (!(mu >= 0.0)) throw InvalidArgument("gradient_check: mu >= 0 required");
    if (!(control_perturbation >= 0.0)) throw InvalidArgument("gradient_check: control_perturbation >= 0 required");
    if (!(multiplier_scale >= 0.0)) throw InvalidArgument("gradient_check: multiplier_scale >= 0 required");
  }
};

struct RunConfig {
  ModelConfig model{};
  TwinExperimentSpec twin{};
  GradientCheckConfig gradient_check{};
  ScalingOptions bench{};
  std::string out_dir = "results";

  [[nodiscard]] Eigen::Index state_dim() const {
    return model.kind == ModelKind::lorenz96 ? model.lorenz96.n : model.linear_matrix.rows();
  }

  void validate() const {
    if (model.kind == ModelKind::lorenz96) {
      if (model.lorenz96.n < 4) throw InvalidArgument("model: lorenz96 n >= 4 required");
      if (!std::isfinite(model.lorenz96.forcing)) throw InvalidArgument("model: forcing must be finite");
    } else {
      if (model.linear_matrix.size() == 0 || model.linear_matrix.rows() != model.linear_matrix.cols()) {
        throw InvalidArgument("model: linear matrix must be square and non-empty");
      }
      if (!model.linear_matrix.allFinite()) throw InvalidArgument("model: linear matrix must be finite");
    }
    twin.validate();
    if (twin.initial_state) detail::require_dim(twin.initial_state->size(), state_dim(), "reference.initial_state");
    if (twin.observed_indices) {
      (void)ObservationOperator::selection(state_dim(), *twin.observed_indices);
    }
    gradient_check.validate();
    bench.validate();
    if (out_dir.empty()) throw InvalidArgument("out_dir must not be empty");
  }
};

namespace detail {

template <class E>
struct EnumName {
  E value;
  std::string_view name;
};

template <class E, std::size_t Count>
E parse_enum(const Json& j, const std::string& path, const std::array<EnumName<E>, Count>& names) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  const auto s = j.get<std::string>();
  std::string allowed;
  for (const auto& n : names) {
    if (n.name == s) return n.value;
    allowed += (allowed.empty() ? "" : ", ") + std::string(n.name);
  }
  throw ConfigError(path + ": unknown value \"" + s + "\" (allowed: " + allowed + ")");
}

inline double as_double(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  return j.get<double>();
}

inline long long as_integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
  return j.get<long long>();
}

inline Vector as_vector(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = as_double(j[i], path);
  return v;
}

inline Matrix as_matrix(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = as_vector(j[r], path);
    if (static_cast<std::size_t>(row.size()) != cols) throw ConfigError(path + ": rows differ in length");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

/// Reads the members of one JSON object, tracking which keys were consumed
/// so unknown keys can be rejected.
class Fields {
public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError((path_.empty() ? "config" : path_) + ": expected an object");
  }

  const Json* find(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  [[nodiscard]] std::string path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void read(const char* key, double& out) {
    if (const Json* v = find(key)) out = as_double(*v, path(key));
  }
  void read(const char* key, int& out) {
    if (const Json* v = find(key)) out = static_cast<int>(as_integer(*v, path(key)));
  }
  void read(const char* key, long& out) {
    if (const Json* v = find(key)) out = static_cast<long>(as_integer(*v, path(key)));
  }
  void read(const char* key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(path(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const char* key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(path(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  void read(const char* key, std::uint64_t& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(path(key) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void read(const char* key, std::optional<double>& out) {
    if (const Json* v = find(key)) out = v->is_null() ? std::nullopt : std::optional(as_double(*v, path(key)));
  }
  void read(const char* key, std::optional<Vector>& out) {
    if (const Json* v = find(key)) out = v->is_null() ? std::nullopt : std::optional(as_vector(*v, path(key)));
  }
  void read(const char* key, std::optional<std::vector<Eigen::Index>>& out) {
    const Json* v = find(key);
    if (!v) return;
    if (v->is_null()) {
      out.reset();
      return;
    }
    if (!v->is_array()) throw ConfigError(path(key) + ": expected an array of integers");
    std::vector<Eigen::Index> idx;
    for (const auto& e : *v) idx.push_back(static_cast<Eigen::Index>(as_integer(e, path(key))));
    out = std::move(idx);
  }
  void read(const char* key, std::vector<int>& out) {
    const Json* v = find(key);
    if (!v) return;
    if (!v->is_array()) throw ConfigError(path(key) + ": expected an array of integers");
    out.clear();
    for (const auto& e : *v) out.push_back(static_cast<int>(as_integer(e, path(key))));
  }

  template <class E, std::size_t Count>
  void read_enum(const char* key, E& out, const std::array<EnumName<E>, Count>& names) {
    if (const Json* v = find(key)) out = parse_enum(*v, path(key), names);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(path(key.c_str()) + ": unknown key");
    }
  }

private:
  const Json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

inline constexpr std::array<EnumName<ModelKind>, 2> model_kinds{{{ModelKind::lorenz96, "lorenz96"},
                                                                 {ModelKind::linear, "linear"}}};
inline constexpr std::array<EnumName<Method>, 3> methods{{
    {Method::serial, "serial"}, {Method::parallel, "parallel"}, {Method::hybrid, "hybrid"}}};
inline constexpr std::array<EnumName<UpdateScheme>, 2> update_schemes{{{UpdateScheme::classical, "classical"},
                                                                       {UpdateScheme::accelerated, "accelerated"}}};
inline constexpr std::array<EnumName<PenaltyScaling>, 2> penalty_scalings{{
    {PenaltyScaling::background, "background"}, {PenaltyScaling::identity, "identity"}}};
inline constexpr std::array<EnumName<WorkersPolicy>, 2> workers_policies{{
    {WorkersPolicy::equal_to_k, "equal-to-k"}, {WorkersPolicy::fixed, "fixed"}}};

inline void read_optimizer(Fields& f, const char* key, OptimizerConfig& o) {
  const Json* j = f.find(key);
  if (!j) return;
  Fields g(*j, f.path(key));
  g.read("memory", o.memory);
  g.read("grad_tol", o.grad_tol);
  g.read("grad_tol_rel", o.grad_tol_rel);
  g.read("max_iters", o.max_iters);
  g.read("max_evals", o.max_evals);
  g.read("c1", o.c1);
  g.read("c2", o.c2);
  g.read("max_line_search", o.max_line_search);
  g.finish();
}

inline Json optimizer_json(const OptimizerConfig& o) {
  return Json{{"memory", o.memory},       {"grad_tol", o.grad_tol}, {"grad_tol_rel", o.grad_tol_rel},
              {"max_iters", o.max_iters}, {"max_evals", o.max_evals}, {"c1", o.c1},
              {"c2", o.c2},               {"max_line_search", o.max_line_search}};
}

template <class T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

inline Json vector_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

template <class E, std::size_t Count>
std::string enum_name(E value, const std::array<EnumName<E>, Count>& names) {
  for (const auto& n : names) {
    if (n.value == value) return std::string(n.name);
  }
  return "unknown";
}

} // namespace detail

/// Parses a config document over the built-in defaults. Every key is
/// optional; unknown keys and ill-typed values raise ConfigError.
inline RunConfig parse_config(const Json& doc) {
  using detail::Fields;
  RunConfig cfg;
  Fields top(doc, "");

  if (const Json* j = top.find("model")) {
    Fields f(*j, "model");
    f.read_enum("kind", cfg.model.kind, detail::model_kinds);
    f.read("n", cfg.model.lorenz96.n);
    f.read("forcing", cfg.model.lorenz96.forcing);
    if (const Json* m = f.find("matrix")) {
      if (!m->is_null()) cfg.model.linear_matrix = detail::as_matrix(*m, "model.matrix");
    }
    f.finish();
    if (cfg.model.kind == ModelKind::linear && cfg.model.linear_matrix.size() == 0) {
      throw ConfigError("model.matrix: required for the linear model");
    }
  }
  auto& t = cfg.twin;
  if (const Json* j = top.find("window")) {
    Fields f(*j, "window");
    f.read("sub_intervals", t.window.sub_intervals);
    f.read("steps_per_sub_interval", t.window.steps_per_sub_interval);
    f.read("step_size", t.window.step_size);
    f.finish();
  }
  if (const Json* j = top.find("reference")) {
    Fields f(*j, "reference");
    f.read("spinup_steps", t.spinup_steps);
    f.read("initial_state", t.initial_state);
    f.finish();
  }
  if (const Json* j = top.find("observations")) {
    Fields f(*j, "observations");
    f.read("noise_pct", t.obs_noise_pct);
    f.read("weight_pct", t.obs_weight_pct);
    f.read("indices", t.observed_indices);
    f.finish();
  }
  if (const Json* j = top.find("background")) {
    Fields f(*j, "background");
    f.read("noise_pct", t.background_noise_pct);
    f.read("weight_pct", t.background_weight_pct);
    f.finish();
  }
  top.read("seed", t.seed);
  top.read_enum("method", t.method, detail::methods);
  top.read("compare_with_serial", t.compare_with_serial);
  top.read("workers", t.workers);
  detail::read_optimizer(top, "optimizer", t.serial_optimizer);
  if (const Json* j = top.find("outer")) {
    auto& o = t.outer;
    Fields f(*j, "outer");
    f.read("mu0", o.mu0);
    f.read("rho", o.rho);
    f.read("max_outer", o.max_outer);
    f.read("constraint_tol", o.constraint_tol);
    f.read_enum("update_scheme", o.update_scheme, detail::update_schemes);
    f.read("scale_update_by_p", o.scale_update_by_p);
    f.read_enum("penalty_scaling", o.penalty_scaling, detail::penalty_scalings);
    f.read("inner_rel_tol0", o.inner_rel_tol0);
    f.read("inner_tol_decay", o.inner_tol_decay);
    f.read("inner_rel_tol_floor", o.inner_rel_tol_floor);
    f.read("accelerated_restart", o.accelerated_restart);
    detail::read_optimizer(f, "inner", o.inner);
    f.finish();
  }
  if (const Json* j = top.find("hybrid")) {
    Fields f(*j, "hybrid");
    f.read("parallel_outer", t.hybrid_parallel_outer);
    f.finish();
  }
  if (const Json* j = top.find("gradient_check")) {
    auto& g = cfg.gradient_check;
    Fields f(*j, "gradient_check");
    f.read("directions", g.directions);
    f.read("epsilon", g.epsilon);
    f.read("tolerance", g.tolerance);
    f.read("denominator_floor", g.denominator_floor);
    f.read("mu", g.mu);
    f.read("control_perturbation", g.control_perturbation);
    f.read("multiplier_scale", g.multiplier_scale);
    f.read("corrupt_gradient", g.corrupt_gradient);
    f.finish();
  }
  if (const Json* j = top.find("bench")) {
    auto& b = cfg.bench;
    Fields f(*j, "bench");
    f.read("k_list", b.k_list);
    f.read_enum("workers_policy", b.policy, detail::workers_policies);
    f.read("fixed_workers", b.fixed_workers);
    f.read("repetitions", b.repetitions);
    f.read("solve_max_outer", b.solve_max_outer);
    f.read("min_sample_ms", b.min_sample_ms);
    if (const Json* v = f.find("steps_per_sub_interval")) {
      b.steps_per_sub_interval = v->is_null() ? std::nullopt
                                              : std::optional(static_cast<int>(detail::as_integer(
                                                    *v, "bench.steps_per_sub_interval")));
    }
    f.finish();
  }
  top.read("out_dir", cfg.out_dir);
  top.finish();

  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

/// Normalized echo with every field spelled out; parse_config(to_json(c))
/// reproduces c.
inline Json to_json(const RunConfig& cfg) {
  using detail::enum_name;
  const auto& t = cfg.twin;
  const auto& o = t.outer;
  Json model{{"kind", enum_name(cfg.model.kind, detail::model_kinds)}};
  if (cfg.model.kind == ModelKind::lorenz96) {
    model["n"] = cfg.model.lorenz96.n;
    model["forcing"] = cfg.model.lorenz96.forcing;
  } else {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < cfg.model.linear_matrix.rows(); ++r) {
      rows.push_back(detail::vector_json(cfg.model.linear_matrix.row(r).transpose()));
    }
    model["matrix"] = std::move(rows);
  }
  Json indices = nullptr;
  if (t.observed_indices) indices = Json(*t.observed_indices);
  return Json{
      {"model", std::move(model)},
      {"window",
       {{"sub_intervals", t.window.sub_intervals},
        {"steps_per_sub_interval", t.window.steps_per_sub_interval},
        {"step_size", t.window.step_size}}},
      {"reference",
       {{"spinup_steps", t.spinup_steps},
        {"initial_state", t.initial_state ? detail::vector_json(*t.initial_state) : Json(nullptr)}}},
      {"observations",
       {{"noise_pct", t.obs_noise_pct}, {"weight_pct", detail::optional_json(t.obs_weight_pct)}, {"indices", indices}}},
      {"background",
       {{"noise_pct", t.background_noise_pct}, {"weight_pct", detail::optional_json(t.background_weight_pct)}}},
      {"seed", t.seed},
      {"method", enum_name(t.method, detail::methods)},
      {"compare_with_serial", t.compare_with_serial},
      {"workers", t.workers},
      {"optimizer", detail::optimizer_json(t.serial_optimizer)},
      {"outer",
       {{"mu0", o.mu0},
        {"rho", o.rho},
        {"max_outer", o.max_outer},
        {"constraint_tol", detail::optional_json(o.constraint_tol)},
        {"update_scheme", enum_name(o.update_scheme, detail::update_schemes)},
        {"scale_update_by_p", o.scale_update_by_p},
        {"penalty_scaling", enum_name(o.penalty_scaling, detail::penalty_scalings)},
        {"inner_rel_tol0", o.inner_rel_tol0},
        {"inner_tol_decay", o.inner_tol_decay},
        {"inner_rel_tol_floor", o.inner_rel_tol_floor},
        {"accelerated_restart", o.accelerated_restart},
        {"inner", detail::optimizer_json(o.inner)}}},
      {"hybrid", {{"parallel_outer", t.hybrid_parallel_outer}}},
      {"gradient_check",
       {{"directions", cfg.gradient_check.directions},
        {"epsilon", cfg.gradient_check.epsilon},
        {"tolerance", cfg.gradient_check.tolerance},
        {"denominator_floor", cfg.gradient_check.denominator_floor},
        {"mu", cfg.gradient_check.mu},
        {"control_perturbation", cfg.gradient_check.control_perturbation},
        {"multiplier_scale", cfg.gradient_check.multiplier_scale},
        {"corrupt_gradient", cfg.gradient_check.corrupt_gradient}}},
      {"bench",
       {{"k_list", cfg.bench.k_list},
        {"workers_policy", enum_name(cfg.bench.policy, detail::workers_policies)},
        {"fixed_workers", cfg.bench.fixed_workers},
        {"repetitions", cfg.bench.repetitions},
        {"solve_max_outer", cfg.bench.solve_max_outer},
        {"min_sample_ms", cfg.bench.min_sample_ms},
        {"steps_per_sub_interval", detail::optional_json(cfg.bench.steps_per_sub_interval)}}},
      {"out_dir", cfg.out_dir},
  };
}

/// Sets doc[a][b]... = value for a dotted key, creating objects on the way.
/// The value is parsed as JSON when possible and kept as a string otherwise,
/// so `method=hybrid` and `outer.rho=2` both work.
inline void apply_override(Json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("--set: expected key=value, got \"" + std::string(assignment) + "\"");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set: malformed key \"" + key + "\"");
    if (!node->is_object()) throw ConfigError("--set: \"" + key + "\" descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  Json doc = Json::parse(buf.str(), nullptr, false);
  if (doc.is_discarded()) throw ConfigError(path + ": not valid JSON");
  return doc;
}

} // namespace pintda::cli
