#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rrt_eta/arm.hpp"
#include "rrt_eta/parser.hpp"
#include "rrt_eta/planner.hpp"
#include "rrt_eta/system.hpp"

namespace rrt_eta {

class scenario_error : public std::runtime_error {
 public:
  scenario_error(const std::string& path, const std::string& msg)
      : std::runtime_error(path + ": " + msg) {}
};

/// A fully instantiated planning problem: system, predicates, formula,
/// initial state, and planner settings.
struct Scenario {
  std::string name;
  std::shared_ptr<SystemModel> system;
  std::shared_ptr<PlanarArm> arm;  // non-null when system is the planar arm
  std::map<std::string, Predicate> predicates;
  std::string formula_text;
  Formula formula;
  Vec q_init;
  PlannerConfig planner;
  std::vector<std::uint64_t> seeds;
};

namespace detail {

using nlohmann::json;

inline const json& field(const json& j, const std::string& key,
                         const std::string& path) {
  if (!j.contains(key)) throw scenario_error(path, "missing field '" + key + "'");
  return j.at(key);
}

inline Vec to_vec(const json& j, const std::string& path) {
  if (!j.is_array()) throw scenario_error(path, "expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw scenario_error(path + "[" + std::to_string(i) + "]", "expected a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline std::vector<int> to_axes(const json& j, const std::string& path) {
  if (!j.is_array()) throw scenario_error(path, "expected an array");
  std::vector<int> axes;
  for (const auto& e : j) axes.push_back(e.get<int>());
  return axes;
}

inline AxisBox bounds_from_pairs(const json& j, const std::string& path) {
  if (!j.is_array()) throw scenario_error(path, "expected [[lo,hi],...]");
  Vec lo(static_cast<Eigen::Index>(j.size())), hi(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != 2)
      throw scenario_error(path + "[" + std::to_string(i) + "]", "expected [lo,hi]");
    lo[static_cast<Eigen::Index>(i)] = j[i][0].get<double>();
    hi[static_cast<Eigen::Index>(i)] = j[i][1].get<double>();
  }
  return AxisBox(lo, hi);
}

inline Predicate parse_predicate(const json& j, const std::string& path) {
  const std::string id = field(j, "id", path).get<std::string>();
  const std::string kind = field(j, "kind", path).get<std::string>();
  const double threshold = j.value("threshold", 0.0);
  const double scale = j.value("scale", 1.0);
  const bool inside = j.value("inside", true);

  Predicate p;
  if (kind == "affine") {
    p = Predicate::affine(id, to_vec(field(j, "coeffs", path), path + ".coeffs"),
                          j.value("offset", 0.0), threshold, scale);
  } else if (kind == "ball") {
    p = Predicate::ball(id, to_vec(field(j, "center", path), path + ".center"),
                        field(j, "radius", path).get<double>(),
                        to_axes(field(j, "axes", path), path + ".axes"), inside,
                        threshold, scale);
  } else if (kind == "box") {
    p = Predicate::box(id, to_vec(field(j, "lo", path), path + ".lo"),
                       to_vec(field(j, "hi", path), path + ".hi"),
                       to_axes(field(j, "axes", path), path + ".axes"), inside,
                       threshold, scale);
  } else {
    throw scenario_error(path + ".kind", "unknown predicate kind '" + kind + "'");
  }

  if (j.contains("region_hint")) {
    const json& h = j.at("region_hint");
    const std::string hpath = path + ".region_hint";
    if (h.is_boolean()) {
      if (h.get<bool>()) {
        // Reuse the predicate's own shape as the sampling region.
        if (kind == "ball" && inside) {
          p.set_region_hint(RegionHint::ball(
              to_axes(field(j, "axes", path), path), to_vec(j.at("center"), hpath),
              j.at("radius").get<double>()));
        } else if (kind == "box" && inside) {
          p.set_region_hint(RegionHint::box(to_axes(field(j, "axes", path), path),
                                            to_vec(j.at("lo"), hpath),
                                            to_vec(j.at("hi"), hpath)));
        } else {
          throw scenario_error(hpath, "region_hint:true needs an inside box/ball");
        }
      }
    } else if (h.is_object()) {
      const std::string htype = field(h, "type", hpath).get<std::string>();
      if (htype == "box") {
        p.set_region_hint(RegionHint::box(to_axes(field(h, "axes", hpath), hpath),
                                          to_vec(field(h, "lo", hpath), hpath),
                                          to_vec(field(h, "hi", hpath), hpath)));
      } else if (htype == "ball") {
        p.set_region_hint(RegionHint::ball(
            to_axes(field(h, "axes", hpath), hpath),
            to_vec(field(h, "center", hpath), hpath),
            field(h, "radius", hpath).get<double>()));
      } else {
        throw scenario_error(hpath + ".type", "unknown hint type");
      }
    } else {
      throw scenario_error(hpath, "expected bool or object");
    }
  }
  return p;
}

inline void parse_system(const json& j, Scenario& sc, const std::string& path) {
  const std::string type = field(j, "type", path).get<std::string>();
  const double dt = j.value("dt", 1.0);
  if (type == "unicycle") {
    const AxisBox ws = bounds_from_pairs(field(j, "workspace", path), path + ".workspace");
    if (ws.dim() != 2) throw scenario_error(path + ".workspace", "expected 2 axes");
    const double v_max = j.value("v_max", 0.3);
    const double w_max = j.value("omega_max", 1.0);
    Vec lo(5), hi(5), ulo(2), uhi(2);
    lo << ws.lo[0], ws.lo[1], -kPi, -v_max, -w_max;
    hi << ws.hi[0], ws.hi[1], kPi, v_max, w_max;
    ulo << -v_max, -w_max;
    uhi << v_max, w_max;
    sc.system = std::make_shared<Unicycle>(AxisBox(lo, hi), AxisBox(ulo, uhi), dt);
  } else if (type == "double_integrator") {
    const AxisBox pos =
        bounds_from_pairs(field(j, "position_bounds", path), path + ".position_bounds");
    const int d = static_cast<int>(pos.dim());
    const double vmax = j.value("velocity_max", 1.5);
    const double amax = j.value("acceleration_max", 1.0);
    Vec lo(2 * d), hi(2 * d);
    lo.head(d) = pos.lo;
    hi.head(d) = pos.hi;
    lo.tail(d).setConstant(-vmax);
    hi.tail(d).setConstant(vmax);
    sc.system = std::make_shared<DoubleIntegrator>(
        d, AxisBox(lo, hi),
        AxisBox(Vec::Constant(d, -amax), Vec::Constant(d, amax)), dt);
  } else if (type == "planar_arm") {
    std::vector<double> links;
    for (const auto& l : field(j, "links", path)) links.push_back(l.get<double>());
    const double jl = j.value("joint_limit", kPi);
    const double vl = j.value("velocity_limit", 0.5);
    const auto n = static_cast<Eigen::Index>(links.size());
    sc.arm = std::make_shared<PlanarArm>(
        links, AxisBox(Vec::Constant(n, -jl), Vec::Constant(n, jl)), vl, dt);
    sc.system = sc.arm;
  } else {
    throw scenario_error(path + ".type", "unknown system type '" + type + "'");
  }
}

inline void parse_planner(const json& j, PlannerConfig& cfg, const std::string& path) {
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.k_near = j.value("k_near", cfg.k_near);
  cfg.p_bias = j.value("p_bias", cfg.p_bias);
  cfg.rng_seed = j.value("seed", cfg.rng_seed);
  if (j.contains("steering")) {
    const json& s = j.at("steering");
    cfg.steering.shots = s.value("shots", cfg.steering.shots);
    cfg.steering.refine_iters = s.value("refine_iters", cfg.steering.refine_iters);
    cfg.steering.t_max = s.value("t_max", cfg.steering.t_max);
    cfg.steering.eps_connect = s.value("eps_connect", cfg.steering.eps_connect);
  }
  // Either nested {"composition": {"mode": ..., "p_and": ...}} or the flat
  // {"composition": "fpl", "p_and": ..., "beta": ...} layout.
  auto set_mode = [&](const std::string& mode) {
    if (mode == "fpl") {
      cfg.composition.mode = CompositionMode::fpl;
    } else if (mode == "stochastic") {
      cfg.composition.mode = CompositionMode::stochastic;
    } else {
      throw scenario_error(path + ".composition", "unknown mode '" + mode + "'");
    }
  };
  if (j.contains("composition")) {
    const json& c = j.at("composition");
    if (c.is_string()) {
      set_mode(c.get<std::string>());
    } else {
      set_mode(c.value("mode", std::string("fpl")));
      cfg.composition.p_and = c.value("p_and", cfg.composition.p_and);
      cfg.composition.p_or = c.value("p_or", cfg.composition.p_or);
      cfg.composition.beta = c.value("beta", cfg.composition.beta);
    }
  }
  cfg.composition.p_and = j.value("p_and", cfg.composition.p_and);
  cfg.composition.p_or = j.value("p_or", cfg.composition.p_or);
  cfg.composition.beta = j.value("beta", cfg.composition.beta);
  if (j.contains("heuristic")) {
    const auto h = parse_heuristic(j.at("heuristic").get<std::string>());
    if (!h) throw scenario_error(path + ".heuristic", "unknown heuristic");
    cfg.heuristic = *h;
  }
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j,
                               const std::string& path = "scenario") {
  using detail::field;
  Scenario sc;
  sc.name = field(j, "name", path).get<std::string>();
  detail::parse_system(field(j, "system", path), sc, path + ".system");

  for (std::size_t i = 0; i < field(j, "predicates", path).size(); ++i) {
    const std::string ppath = path + ".predicates[" + std::to_string(i) + "]";
    Predicate p = detail::parse_predicate(j.at("predicates")[i], ppath);
    if (sc.predicates.count(p.id()))
      throw scenario_error(ppath, "duplicate predicate id '" + p.id() + "'");
    sc.predicates.emplace(p.id(), p);
  }

  sc.formula_text = field(j, "formula", path).get<std::string>();
  try {
    sc.formula = parse_formula(sc.formula_text, sc.predicates, sc.system->dt());
  } catch (const syntax_error& e) {
    throw scenario_error(path + ".formula", e.what());
  }

  Vec q0 = detail::to_vec(field(j, "q_init", path), path + ".q_init");
  if (sc.arm && q0.size() == sc.arm->joint_count()) q0 = sc.arm->augmented_state(q0);
  if (q0.size() != sc.system->state_bounds().dim())
    throw scenario_error(path + ".q_init", "state dimension mismatch");
  if (!sc.system->state_bounds().contains(q0, 1e-9))
    throw scenario_error(path + ".q_init", "initial state outside bounds");
  sc.q_init = q0;

  if (j.contains("planner"))
    detail::parse_planner(j.at("planner"), sc.planner, path + ".planner");
  if (j.contains("heuristic")) {
    const auto h = parse_heuristic(j.at("heuristic").get<std::string>());
    if (!h) throw scenario_error(path + ".heuristic", "unknown heuristic");
    sc.planner.heuristic = *h;
  }
  if (j.contains("seeds"))
    for (const auto& s : j.at("seeds"))
      sc.seeds.push_back(s.get<std::uint64_t>());
  if (sc.seeds.empty()) sc.seeds.push_back(sc.planner.rng_seed);

  if (j.contains("duration")) {
    const double duration = j.at("duration").get<double>();
    if (static_cast<double>(sc.formula.horizon()) * sc.system->dt() > duration)
      throw scenario_error(path + ".duration",
                           "formula horizon exceeds the scenario duration");
  }
  return sc;
}

inline Scenario load_scenario(const std::string& file_path) {
  std::ifstream in(file_path);
  if (!in) throw scenario_error(file_path, "cannot open file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw scenario_error(file_path, std::string("invalid JSON: ") + e.what());
  }
  return parse_scenario(j, file_path);
}

}  // namespace rrt_eta
