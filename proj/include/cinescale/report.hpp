#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cinescale/analysis.hpp"
#include "cinescale/config.hpp"
#include "cinescale/ppm.hpp"

namespace cinescale {

inline constexpr const char* kReportVersion = "cinescale-report/1";

/// {"hf_energy_ratio", "repetition_score", "spectrum"} of one image.
inline nlohmann::json image_metrics(const Image2D& img, const MetricsConfig& m) {
  nlohmann::json out;
  out["hf_energy_ratio"] = hf_energy_ratio(img, m.hf_sigma);
  const std::size_t lag = m.repetition_min_lag;
  if (img.height >= 2 * lag && img.width >= 2 * lag)
    out["repetition_score"] = repetition_score(img, lag);
  else
    out["repetition_score"] = nullptr;
  out["spectrum"] = spectrum_profile(img, m.spectrum_bins).bins;
  return out;
}

inline nlohmann::json rgb_mapping_json(const RgbMapping& m) {
  return {{"offset", m.offset}, {"scale", m.scale}, {"clamp", {0, 255}}, {"formula", "round((v + offset) * scale)"}};
}

namespace detail {
inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("report schema: " + what);
}

inline void check_metrics(const nlohmann::json& m, const std::string& where) {
  require(m.is_object(), where + " must be an object");
  require(m.contains("hf_energy_ratio") && m["hf_energy_ratio"].is_number(), where + ".hf_energy_ratio must be a number");
  require(m.contains("repetition_score") && (m["repetition_score"].is_number() || m["repetition_score"].is_null()),
          where + ".repetition_score must be a number or null");
  require(m.contains("spectrum") && m["spectrum"].is_array(), where + ".spectrum must be an array");
  for (const auto& v : m["spectrum"]) require(v.is_number(), where + ".spectrum entries must be numbers");
}
}  // namespace detail

/// Throws std::invalid_argument describing the first schema violation.
inline void validate_report(const nlohmann::json& r) {
  using detail::require;
  require(r.is_object(), "top level must be an object");
  for (const auto& [k, v] : r.items())
    require(k == "version" || k == "config_echo" || k == "stages" || k == "timing_ms", "unexpected key '" + k + "'");
  require(r.contains("version") && r["version"] == kReportVersion, "version must be \"cinescale-report/1\"");
  require(r.contains("config_echo") && r["config_echo"].is_object(), "config_echo must be an object");
  require(r.contains("timing_ms") && (r["timing_ms"].is_null() || r["timing_ms"].is_object()),
          "timing_ms must be null or an object");
  require(r.contains("stages") && r["stages"].is_array() && !r["stages"].empty(), "stages must be a non-empty array");
  std::size_t i = 0;
  for (const auto& s : r["stages"]) {
    const std::string w = "stages[" + std::to_string(i++) + "]";
    require(s.is_object(), w + " must be an object");
    for (const char* k : {"level", "height", "width", "frames", "K", "steps"})
      require(s.contains(k) && s[k].is_number_integer(), w + "." + k + " must be an integer");
    require(s.contains("temperature") && s["temperature"].is_number(), w + ".temperature must be a number");
    require(s.contains("lambda") && s["lambda"].is_array() && s["lambda"].size() == 3, w + ".lambda must have 3 entries");
    require(s.contains("rgb_mapping") && s["rgb_mapping"].is_object(), w + ".rgb_mapping must be an object");
    require(s.contains("files") && s["files"].is_array(), w + ".files must be an array");
    require(s.contains("metrics") && s["metrics"].is_array() && !s["metrics"].empty(), w + ".metrics must be a non-empty array");
    for (const auto& m : s["metrics"]) detail::check_metrics(m, w + ".metrics[]");
  }
}

}  // namespace cinescale
