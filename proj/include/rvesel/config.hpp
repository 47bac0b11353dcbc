#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rvesel/experiment.hpp"

namespace rvesel {

/// Anything wrong with a config file (parse, unknown keys, semantic checks).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutputOptions {
  std::string dir = "out";
  bool plots = true;
  bool csv = true;
};

struct ScalingOptions {
  std::vector<int> cells_list{4, 8, 16};
  int n_per_size = 300;
  int pixels_per_cell = 4;
  ScalingQuantity quantity = ScalingQuantity::EffectiveA11;
};

struct CounterexampleSearchOptions {
  double tol_cov = 0.0;  // stop when |cov| <= tol_cov + CI halfwidth
  int n_per_probe = 600;
  int n_confirm = 1000;
  int n_vrf = 1200;  // plain and accepted samples for the vrf check at kappa*
};

struct DiagnosticsOptions {
  bool gaussianity = false;
  std::vector<double> tail_s;
};

struct RunConfig {
  ExperimentPlan plan;
  OutputOptions output;
  ScalingOptions scaling;
  CounterexampleSearchOptions search;
  DiagnosticsOptions diagnostics;
  bool assert_checks = true;
  std::string preset;
};

/// Parameter validation without generating a field; forwards the generators'
/// own error messages (e.g. the sigma window bounds).
inline void validate_generator(const GeneratorSpec& spec, const GridGeometry& geom) {
  generate(spec, geom, SampleSeed{0, 0});
}

namespace detail {

using json = nlohmann::json;

inline void require_keys(const json& j, const std::string& context,
                         const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config: expected an object for " + context);
  for (const auto& item : j.items())
    if (!allowed.contains(item.key()))
      throw ConfigError("config: unknown key '" + item.key() + "' in " + context);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline FLabel label_from_string(const std::string& s) {
  if (s == "avg") return FLabel::Avg;
  if (s == "two_point_11") return FLabel::TwoPoint11;
  if (s == "two_point_12") return FLabel::TwoPoint12;
  if (s == "two_point_21") return FLabel::TwoPoint21;
  if (s == "two_point_22") return FLabel::TwoPoint22;
  throw ConfigError("config: unknown statistical quantity '" + s + "'");
}

inline Axis axis_from_string(const std::string& s) {
  if (s == "x") return Axis::X;
  if (s == "y") return Axis::Y;
  throw ConfigError("config: axis must be 'x' or 'y', got '" + s + "'");
}

inline GeneratorSpec parse_generator(const json& j, GeneratorSpec base) {
  require_keys(j, "generator",
               {"type", "value_lo", "value_hi", "p_hi", "intensity", "radius", "value_in",
                "value_out", "lambda", "sigma", "tau", "kappa", "randomize_orientation", "axis",
                "analytic_mean_f_avg"});
  GeneratorSpec spec = base;
  // Changing any generator parameter invalidates an inherited analytic mean.
  for (const auto& item : j.items())
    if (item.key() != "analytic_mean_f_avg") {
      spec.analytic_mean_f_avg.reset();
      break;
    }
  if (j.contains("type")) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "checkerboard")
      spec.variant = CheckerboardSpec{};
    else if (type == "poisson")
      spec.variant = PoissonInclusionSpec{};
    else if (type == "counterexample")
      spec.variant = CounterexampleSpec{};
    else if (type == "layered")
      spec.variant = LayeredSpec{};
    else
      throw ConfigError("config: unknown generator type '" + type + "'");
  }
  if (auto* cb = std::get_if<CheckerboardSpec>(&spec.variant)) {
    maybe(j, "value_lo", cb->value_lo);
    maybe(j, "value_hi", cb->value_hi);
    maybe(j, "p_hi", cb->p_hi);
  } else if (auto* po = std::get_if<PoissonInclusionSpec>(&spec.variant)) {
    maybe(j, "intensity", po->intensity);
    maybe(j, "radius", po->radius);
    maybe(j, "value_in", po->value_in);
    maybe(j, "value_out", po->value_out);
  } else if (auto* ce = std::get_if<CounterexampleSpec>(&spec.variant)) {
    maybe(j, "lambda", ce->lambda);
    maybe(j, "sigma", ce->sigma);
    maybe(j, "tau", ce->tau);
    maybe(j, "kappa", ce->kappa);
    maybe(j, "randomize_orientation", ce->randomize_orientation);
  } else if (auto* la = std::get_if<LayeredSpec>(&spec.variant)) {
    if (j.contains("axis")) la->axis = axis_from_string(j.at("axis").get<std::string>());
    maybe(j, "value_lo", la->value_lo);
    maybe(j, "value_hi", la->value_hi);
  }
  if (j.contains("analytic_mean_f_avg"))
    spec.analytic_mean_f_avg = j.at("analytic_mean_f_avg").get<double>();
  return spec;
}

}  // namespace detail

inline RunConfig preset_config(const std::string& name) {
  RunConfig cfg;
  cfg.preset = name;
  cfg.plan.geometry = {8, 8};
  cfg.plan.selection = SelectionPlan{{FLabel::Avg}, 0.5};
  cfg.plan.n_calibration = 2000;
  cfg.plan.n_plain = 400;
  cfg.plan.n_selected = 400;
  cfg.plan.master_seed = 20260810;
  if (name == "checkerboard-c2") {
    cfg.plan.generator = {CheckerboardSpec{0.5, 1.0, 0.5}, 0.75};
  } else if (name == "checkerboard-c5") {
    cfg.plan.generator = {CheckerboardSpec{0.2, 1.0, 0.5}, 0.6};
  } else if (name == "poisson") {
    cfg.plan.generator = {PoissonInclusionSpec{2.0, 0.3, 0.2, 1.0}, {}};
  } else if (name == "counterexample") {
    CounterexampleSpec ce;
    cfg.plan.generator = {ce, {}};
    cfg.plan.geometry = {8, 32};
  } else {
    throw ConfigError("config: unknown preset '" + name +
                      "' (expected checkerboard-c2, checkerboard-c5, poisson, counterexample)");
  }
  return cfg;
}

inline RunConfig parse_config_json(const nlohmann::json& j) {
  using detail::maybe;
  using detail::require_keys;
  require_keys(j, "the top level",
               {"preset", "master_seed", "workers", "geometry", "generator", "selection",
                "counts", "solver", "output", "scaling", "counterexample_search",
                "diagnostics", "assert_checks"});

  RunConfig cfg =
      j.contains("preset") ? preset_config(j.at("preset").get<std::string>()) : RunConfig{};

  maybe(j, "master_seed", cfg.plan.master_seed);
  maybe(j, "workers", cfg.plan.workers);
  maybe(j, "assert_checks", cfg.assert_checks);

  if (j.contains("geometry")) {
    const auto& g = j.at("geometry");
    require_keys(g, "geometry", {"L", "m", "epsilon"});
    maybe(g, "L", cfg.plan.geometry.cells);
    maybe(g, "m", cfg.plan.geometry.pixels_per_cell);
    maybe(g, "epsilon", cfg.plan.geometry.epsilon);
  }
  if (j.contains("generator"))
    cfg.plan.generator = detail::parse_generator(j.at("generator"), cfg.plan.generator);
  if (j.contains("selection")) {
    const auto& s = j.at("selection");
    if (s.is_null()) {
      cfg.plan.selection.reset();
    } else {
      require_keys(s, "selection", {"quantities", "delta"});
      SelectionPlan sel = cfg.plan.selection.value_or(SelectionPlan{});
      if (s.contains("quantities")) {
        sel.labels.clear();
        for (const auto& q : s.at("quantities"))
          sel.labels.push_back(detail::label_from_string(q.get<std::string>()));
      }
      maybe(s, "delta", sel.delta);
      cfg.plan.selection = sel;
    }
  }
  if (j.contains("counts")) {
    const auto& c = j.at("counts");
    require_keys(c, "counts", {"calibration", "plain", "selected"});
    maybe(c, "calibration", cfg.plan.n_calibration);
    maybe(c, "plain", cfg.plan.n_plain);
    maybe(c, "selected", cfg.plan.n_selected);
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    require_keys(s, "solver", {"tol", "max_iter_per_n"});
    maybe(s, "tol", cfg.plan.solve.tol);
    maybe(s, "max_iter_per_n", cfg.plan.solve.max_iter_per_n);
  }
  if (j.contains("output")) {
    const auto& o = j.at("output");
    require_keys(o, "output", {"dir", "plots", "csv"});
    maybe(o, "dir", cfg.output.dir);
    maybe(o, "plots", cfg.output.plots);
    maybe(o, "csv", cfg.output.csv);
  }
  if (j.contains("scaling")) {
    const auto& s = j.at("scaling");
    require_keys(s, "scaling", {"L_list", "n_per_L", "m", "quantity"});
    maybe(s, "L_list", cfg.scaling.cells_list);
    maybe(s, "n_per_L", cfg.scaling.n_per_size);
    maybe(s, "m", cfg.scaling.pixels_per_cell);
    if (s.contains("quantity")) {
      const std::string q = s.at("quantity").get<std::string>();
      if (q == "a11")
        cfg.scaling.quantity = ScalingQuantity::EffectiveA11;
      else if (q == "f_avg")
        cfg.scaling.quantity = ScalingQuantity::FAvg;
      else
        throw ConfigError("config: scaling quantity must be 'a11' or 'f_avg'");
    }
  }
  if (j.contains("counterexample_search")) {
    const auto& s = j.at("counterexample_search");
    require_keys(s, "counterexample_search", {"tol_cov", "n_per_probe", "n_confirm", "n_vrf"});
    maybe(s, "tol_cov", cfg.search.tol_cov);
    maybe(s, "n_per_probe", cfg.search.n_per_probe);
    maybe(s, "n_confirm", cfg.search.n_confirm);
    maybe(s, "n_vrf", cfg.search.n_vrf);
  }
  if (j.contains("diagnostics")) {
    const auto& d = j.at("diagnostics");
    require_keys(d, "diagnostics", {"gaussianity", "tail_s"});
    maybe(d, "gaussianity", cfg.diagnostics.gaussianity);
    maybe(d, "tail_s", cfg.diagnostics.tail_s);
  }

  try {
    cfg.plan.validate();
    validate_generator(cfg.plan.generator, cfg.plan.geometry);
  } catch (const std::invalid_argument& err) {
    throw ConfigError(std::string("config: ") + err.what());
  } catch (const std::runtime_error& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  return cfg;
}

inline RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& err) {
    throw ConfigError("config: parse error in '" + path.string() + "': " + err.what());
  }
  return parse_config_json(j);
}

/// Exact echo of the experiment parameters for summary.json. Deliberately
/// omits the worker count: results are independent of it by contract.
inline nlohmann::ordered_json plan_to_json(const ExperimentPlan& plan) {
  nlohmann::ordered_json j;
  j["master_seed"] = plan.master_seed;
  j["geometry"] = {{"L", plan.geometry.cells},
                   {"m", plan.geometry.pixels_per_cell},
                   {"epsilon", plan.geometry.epsilon}};
  nlohmann::ordered_json gen;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CheckerboardSpec>) {
          gen["type"] = "checkerboard";
          gen["value_lo"] = s.value_lo;
          gen["value_hi"] = s.value_hi;
          gen["p_hi"] = s.p_hi;
        } else if constexpr (std::is_same_v<T, PoissonInclusionSpec>) {
          gen["type"] = "poisson";
          gen["intensity"] = s.intensity;
          gen["radius"] = s.radius;
          gen["value_in"] = s.value_in;
          gen["value_out"] = s.value_out;
        } else if constexpr (std::is_same_v<T, CounterexampleSpec>) {
          gen["type"] = "counterexample";
          gen["lambda"] = s.lambda;
          gen["sigma"] = s.sigma;
          gen["tau"] = s.tau;
          gen["kappa"] = s.kappa;
          gen["randomize_orientation"] = s.randomize_orientation;
        } else {
          gen["type"] = "layered";
          gen["axis"] = s.axis == Axis::X ? "x" : "y";
          gen["value_lo"] = s.value_lo;
          gen["value_hi"] = s.value_hi;
        }
      },
      plan.generator.variant);
  if (plan.generator.analytic_mean_f_avg)
    gen["analytic_mean_f_avg"] = *plan.generator.analytic_mean_f_avg;
  j["generator"] = gen;
  if (plan.selection) {
    nlohmann::ordered_json sel;
    std::vector<std::string> quantities;
    for (FLabel l : plan.selection->labels) quantities.push_back(to_string(l));
    sel["quantities"] = quantities;
    sel["delta"] = plan.selection->delta;
    j["selection"] = sel;
  } else {
    j["selection"] = nullptr;
  }
  j["counts"] = {{"calibration", plan.n_calibration},
                 {"plain", plan.n_plain},
                 {"selected", plan.n_selected}};
  j["solver"] = {{"tol", plan.solve.tol}, {"max_iter_per_n", plan.solve.max_iter_per_n}};
  return j;
}

}  // namespace rvesel
