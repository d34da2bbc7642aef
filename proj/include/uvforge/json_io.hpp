#pragma once

#include <fstream>

#include <json.hpp>

#include "uvforge/fit.hpp"
#include "uvforge/latent.hpp"
#include "uvforge/morphable.hpp"

// JSON file schemas shared by the command-line tools:
//   ParamSet      {p_i: [...], p_e: [...], p_c: [6], p_l: [6], p_t: [...]?}
//   Landmarks     {points: [[x, y] x 68], visible: [bool x 68]}
//   Hyperplane    {normal: [...], bias: x}
//   MetricReport  {metric, value, n_samples, extractor, seed}
namespace uvforge::json_io {

using nlohmann::json;

inline json load_file(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "json_io: cannot open " + path);
  json j;
  is >> j;
  return j;
}

inline void save_file(const std::string& path, const json& j) {
  std::ofstream os(path);
  require(os.good(), "json_io: cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
  require(os.good(), "json_io: write failed for " + path);
}

inline std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<long>(v.size()));
}

// ---------------------------------------------------------------------------
// ParamSet.
// ---------------------------------------------------------------------------

inline json param_set_to_json(const morphable::ParamSet& p) {
  json j;
  j["p_i"] = to_std(p.p_i);
  j["p_e"] = to_std(p.p_e);
  j["p_c"] = to_std(p.p_c);
  j["p_l"] = to_std(p.p_l);
  if (p.has_texture_coeffs()) j["p_t"] = to_std(p.p_t);
  return j;
}

inline morphable::ParamSet param_set_from_json(const json& j) {
  for (const char* key : {"p_i", "p_e", "p_c", "p_l"})
    require(j.contains(key), std::string("param set: missing field '") + key + "'");
  morphable::ParamSet p;
  p.p_i = from_std(j["p_i"].get<std::vector<double>>());
  p.p_e = from_std(j["p_e"].get<std::vector<double>>());
  const auto p_c = j["p_c"].get<std::vector<double>>();
  const auto p_l = j["p_l"].get<std::vector<double>>();
  require(p_c.size() == 6, "param set: field 'p_c' must have length 6");
  require(p_l.size() == 6, "param set: field 'p_l' must have length 6");
  for (int k = 0; k < 6; ++k) {
    p.p_c[k] = p_c[k];
    p.p_l[k] = p_l[k];
  }
  if (j.contains("p_t")) p.p_t = from_std(j["p_t"].get<std::vector<double>>());
  return p;
}

inline void validate_param_dims(const morphable::ParamSet& p, const morphable::MorphableModel& model,
                                const std::string& origin) {
  require(p.p_i.size() == model.k_i(), origin + ": field 'p_i' length does not match model k_i");
  require(p.p_e.size() == model.k_e(), origin + ": field 'p_e' length does not match model k_e");
  if (p.has_texture_coeffs())
    require(p.p_t.size() == model.k_t(), origin + ": field 'p_t' length does not match model k_t");
}

// ---------------------------------------------------------------------------
// Landmarks.
// ---------------------------------------------------------------------------

inline json landmarks_to_json(const fit::Landmarks& lm) {
  json points = json::array();
  for (int i = 0; i < lm.points.rows(); ++i) points.push_back({lm.points(i, 0), lm.points(i, 1)});
  json visible = json::array();
  for (char v : lm.visible) visible.push_back(static_cast<bool>(v));
  return json{{"points", points}, {"visible", visible}};
}

inline fit::Landmarks landmarks_from_json(const json& j) {
  require(j.contains("points"), "landmarks: missing field 'points'");
  require(j.contains("visible"), "landmarks: missing field 'visible'");
  const auto& points = j["points"];
  const auto& visible = j["visible"];
  require(points.size() == visible.size(), "landmarks: 'points' and 'visible' lengths differ");
  fit::Landmarks lm;
  lm.points.resize(static_cast<int>(points.size()), 2);
  lm.visible.resize(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    require(points[i].size() == 2, "landmarks: point " + std::to_string(i) + " is not an [x, y] pair");
    lm.points(static_cast<int>(i), 0) = points[i][0].get<double>();
    lm.points(static_cast<int>(i), 1) = points[i][1].get<double>();
    lm.visible[i] = visible[i].get<bool>() ? 1 : 0;
  }
  return lm;
}

// ---------------------------------------------------------------------------
// Hyperplane and metric reports.
// ---------------------------------------------------------------------------

inline json hyperplane_to_json(const latent::Hyperplane& h) {
  return json{{"normal", to_std(h.normal)}, {"bias", h.bias}};
}

inline latent::Hyperplane hyperplane_from_json(const json& j) {
  require(j.contains("normal") && j.contains("bias"), "hyperplane: missing 'normal' or 'bias'");
  latent::Hyperplane h;
  h.normal = from_std(j["normal"].get<std::vector<double>>());
  h.bias = j["bias"].get<double>();
  require(h.normal.norm() > 0.0, "hyperplane: zero normal");
  return h;
}

inline json metric_report(const std::string& metric, double value, int n_samples,
                          const std::string& extractor, uint64_t seed) {
  return json{{"metric", metric}, {"value", value}, {"n_samples", n_samples}, {"extractor", extractor},
              {"seed", seed}};
}

}  // namespace uvforge::json_io
