#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cinescale/cascade.hpp"
#include "cinescale/checkpoint.hpp"
#include "cinescale/synthetic.hpp"
#include "cinescale/trainer.hpp"

namespace cinescale {

/// Invalid or unreadable configuration (CLI exit code 1).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using nlohmann::json;

struct OutputConfig {
  std::string dir = "run";
  bool write_ppm = true;
  bool write_checkpoint = true;
  bool write_report = true;

  bool operator==(const OutputConfig&) const = default;
};

struct MetricsConfig {
  double hf_sigma = 2.0;
  std::size_t repetition_min_lag = 4;
  std::size_t spectrum_bins = 32;

  bool operator==(const MetricsConfig&) const = default;
};

/// Everything `generate` needs: the cascade plus model source, I2V
/// reference, output and metric settings.
struct RunConfig {
  CascadeConfig cascade;
  std::string checkpoint;       // empty: seeded model
  std::uint64_t model_seed = 0;
  std::string reference;        // i2v reference PPM; empty: synthetic scene
  OutputConfig output;
  MetricsConfig metrics;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

inline const char* name_of(Backbone b) { return b == Backbone::unet ? "unet" : "dit"; }
inline const char* name_of(Task t) { return t == Task::t2i ? "t2i" : t == Task::t2v ? "t2v" : "i2v"; }
inline const char* name_of(UpsampleMode m) { return m == UpsampleMode::latent ? "latent" : "rgb"; }
inline const char* name_of(BetaKind k) { return k == BetaKind::linear ? "linear" : "scaled_linear"; }

inline Mask parse_mask(const json& r, std::size_t h, std::size_t w, const std::string& where) {
  if (r.contains("rect") == r.contains("bitmap")) throw ConfigError(where + " needs exactly one of 'rect' or 'bitmap'");
  if (r.contains("rect")) {
    const auto v = get_or<std::vector<std::size_t>>(r, "rect", {}, where);
    if (v.size() != 4) throw ConfigError(where + ".rect must be [y0, x0, y1, x1]");
    try {
      return Mask::rect(h, w, v[0], v[1], v[2], v[3]);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  const auto rows = get_or<std::vector<std::string>>(r, "bitmap", {}, where);
  if (rows.size() != h) throw ConfigError(where + ".bitmap has " + std::to_string(rows.size()) + " rows, expected " + std::to_string(h));
  Mask m(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    if (rows[y].size() != w) throw ConfigError(where + ".bitmap row " + std::to_string(y) + " has wrong length");
    for (std::size_t x = 0; x < w; ++x) {
      if (rows[y][x] != '0' && rows[y][x] != '1') throw ConfigError(where + ".bitmap must contain only 0/1");
      m.cells[y * w + x] = rows[y][x] == '1';
    }
  }
  return m;
}

inline json mask_to_json(const Mask& m) {
  std::vector<std::string> rows(m.height, std::string(m.width, '0'));
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m.at(y, x)) rows[y][x] = '1';
  return rows;
}

inline StageConfig parse_stage(const json& j, const BaseConfig& base, std::size_t idx) {
  const std::string where = "stages[" + std::to_string(idx) + "]";
  check_keys(j, {"level", "k_fraction", "upsample_mode", "alpha_default", "regions", "dilation", "fusion", "rope",
                 "temperature", "shift"},
             where);
  StageConfig s;
  if (!j.contains("level")) throw ConfigError(where + " needs 'level'");
  s.level = get_or<int>(j, "level", 2, where);
  if (s.level < 2) throw ConfigError(where + ".level must be >= 2");
  s.k_fraction = get_or<double>(j, "k_fraction", s.k_fraction, where);
  if (j.contains("upsample_mode")) {
    const json& u = j.at("upsample_mode");
    std::string kind;
    if (u.is_string()) {
      kind = u.get<std::string>();
    } else {
      check_keys(u, {"kind", "blur_sigma"}, where + ".upsample_mode");
      kind = get_or<std::string>(u, "kind", "rgb", where + ".upsample_mode");
      s.blur_sigma = get_or<double>(u, "blur_sigma", s.blur_sigma, where + ".upsample_mode");
    }
    if (kind == "latent") s.upsample_mode = UpsampleMode::latent;
    else if (kind == "rgb") s.upsample_mode = UpsampleMode::rgb;
    else throw ConfigError(where + ".upsample_mode must be 'latent' or 'rgb'");
  }
  s.alpha_default = get_or<double>(j, "alpha_default", s.alpha_default, where);
  const std::size_t h = base.height * s.level, w = base.width * s.level;
  if (j.contains("regions")) {
    if (!j.at("regions").is_array()) throw ConfigError(where + ".regions must be an array");
    std::size_t ri = 0;
    for (const auto& r : j.at("regions")) {
      const std::string rw = where + ".regions[" + std::to_string(ri++) + "]";
      check_keys(r, {"rect", "bitmap", "alpha", "prompt"}, rw);
      RegionSpec spec;
      spec.mask = parse_mask(r, h, w, rw);
      if (r.contains("alpha")) spec.alpha = get_or<double>(r, "alpha", 1.0, rw);
      if (r.contains("prompt")) spec.prompt = get_or<std::string>(r, "prompt", "", rw);
      s.regions.push_back(std::move(spec));
    }
  }
  if (j.contains("dilation")) {
    const json& d = j.at("dilation");
    const std::string dw = where + ".dilation";
    check_keys(d, {"enabled", "factor", "blocks", "tail_fraction"}, dw);
    s.dilation_enabled = get_or<bool>(d, "enabled", s.dilation_enabled, dw);
    s.dilation_factor = get_or<int>(d, "factor", s.dilation_factor, dw);
    s.dilation_blocks = get_or<std::vector<std::string>>(d, "blocks", s.dilation_blocks, dw);
    s.dilation_tail_fraction = get_or<double>(d, "tail_fraction", s.dilation_tail_fraction, dw);
    if (s.dilation_factor < 0) throw ConfigError(dw + ".factor must be >= 0");
  }
  if (j.contains("fusion")) {
    const json& f = j.at("fusion");
    const std::string fw = where + ".fusion";
    check_keys(f, {"mode", "sigma", "stride_fraction"}, fw);
    const auto mode = get_or<std::string>(f, "mode", "fused", fw);
    if (mode == "global") s.fusion.mode = AttentionMode::global;
    else if (mode == "local") s.fusion.mode = AttentionMode::local;
    else if (mode == "fused") s.fusion.mode = AttentionMode::fused;
    else throw ConfigError(fw + ".mode must be 'global', 'local' or 'fused'");
    s.fusion.sigma = get_or<double>(f, "sigma", s.fusion.sigma, fw);
    s.fusion.stride_fraction = get_or<double>(f, "stride_fraction", s.fusion.stride_fraction, fw);
  }
  if (j.contains("rope")) {
    check_keys(j.at("rope"), {"ntk"}, where + ".rope");
    s.rope_ntk = get_or<bool>(j.at("rope"), "ntk", s.rope_ntk, where + ".rope");
  }
  if (j.contains("temperature")) {
    const json& t = j.at("temperature");
    check_keys(t, {"auto", "value"}, where + ".temperature");
    s.temperature_auto = get_or<bool>(t, "auto", s.temperature_auto, where + ".temperature");
    s.temperature_value = get_or<double>(t, "value", s.temperature_value, where + ".temperature");
  }
  s.shift = get_or<double>(j, "shift", s.shift, where);
  return s;
}

inline json stage_to_json(const StageConfig& s) {
  json regions = json::array();
  for (const auto& r : s.regions) {
    json e = {{"bitmap", mask_to_json(r.mask)}};
    if (r.alpha) e["alpha"] = *r.alpha;
    if (r.prompt) e["prompt"] = *r.prompt;
    regions.push_back(e);
  }
  return {{"level", s.level},
          {"k_fraction", s.k_fraction},
          {"upsample_mode", {{"kind", name_of(s.upsample_mode)}, {"blur_sigma", s.blur_sigma}}},
          {"alpha_default", s.alpha_default},
          {"regions", regions},
          {"dilation",
           {{"enabled", s.dilation_enabled},
            {"factor", s.dilation_factor},
            {"blocks", s.dilation_blocks},
            {"tail_fraction", s.dilation_tail_fraction}}},
          {"fusion", {{"mode", to_string(s.fusion.mode)}, {"sigma", s.fusion.sigma}, {"stride_fraction", s.fusion.stride_fraction}}},
          {"rope", {{"ntk", s.rope_ntk}}},
          {"temperature", {{"auto", s.temperature_auto}, {"value", s.temperature_value}}},
          {"shift", s.shift}};
}

/// Region-level semantic checks that need the assembled stage.
inline void validate_regions(const CascadeConfig& c) {
  for (std::size_t i = 0; i < c.stages.size(); ++i) {
    const auto& s = c.stages[i];
    const std::size_t h = c.base.height * s.level, w = c.base.width * s.level;
    std::vector<Mask> masks;
    std::vector<double> values;
    for (const auto& r : s.regions) {
      masks.push_back(r.mask);
      values.push_back(r.alpha.value_or(s.alpha_default));
    }
    try {
      build_region_alpha(masks, values, s.alpha_default, h, w);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("stages[" + std::to_string(i) + "]: " + e.what());
    }
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j) {
  using namespace detail;
  check_keys(j, {"backbone", "task", "seed", "guidance", "stages", "output", "metrics", "base"}, "config");
  RunConfig rc;
  CascadeConfig& c = rc.cascade;
  const auto backbone = get_or<std::string>(j, "backbone", "dit", "config");
  if (backbone == "dit") c.backbone = Backbone::dit;
  else if (backbone == "unet") c.backbone = Backbone::unet;
  else throw ConfigError("backbone must be 'unet' or 'dit'");
  const auto task = get_or<std::string>(j, "task", "t2i", "config");
  if (task == "t2i") c.task = Task::t2i;
  else if (task == "t2v") c.task = Task::t2v;
  else if (task == "i2v") c.task = Task::i2v;
  else throw ConfigError("task must be 't2i', 't2v' or 'i2v'");
  c.seed = get_or<std::uint64_t>(j, "seed", 0, "config");
  c.guidance = get_or<double>(j, "guidance", 1.0, "config");

  if (j.contains("base")) {
    const json& b = j.at("base");
    check_keys(b, {"height", "width", "frames", "steps", "timesteps", "beta_kind", "beta_start", "beta_end", "prompt",
                   "checkpoint", "model_seed", "reference"},
               "base");
    c.base.height = get_or<std::size_t>(b, "height", c.base.height, "base");
    c.base.width = get_or<std::size_t>(b, "width", c.base.width, "base");
    c.base.frames = get_or<std::size_t>(b, "frames", c.video() ? 4 : 1, "base");
    c.base.steps = get_or<int>(b, "steps", c.base.steps, "base");
    c.base.timesteps = get_or<int>(b, "timesteps", c.base.timesteps, "base");
    const auto kind = get_or<std::string>(b, "beta_kind", name_of(c.base.beta_kind), "base");
    if (kind == "linear") c.base.beta_kind = BetaKind::linear;
    else if (kind == "scaled_linear") c.base.beta_kind = BetaKind::scaled_linear;
    else throw ConfigError("base.beta_kind must be 'linear' or 'scaled_linear'");
    c.base.beta_start = get_or<double>(b, "beta_start", c.base.beta_start, "base");
    c.base.beta_end = get_or<double>(b, "beta_end", c.base.beta_end, "base");
    c.base.prompt = get_or<std::string>(b, "prompt", c.base.prompt, "base");
    rc.checkpoint = get_or<std::string>(b, "checkpoint", "", "base");
    rc.model_seed = get_or<std::uint64_t>(b, "model_seed", 0, "base");
    rc.reference = get_or<std::string>(b, "reference", "", "base");
  } else if (c.video()) {
    c.base.frames = 4;
  }

  if (j.contains("stages")) {
    if (!j.at("stages").is_array()) throw ConfigError("stages must be an array");
    std::size_t i = 0;
    for (const auto& s : j.at("stages")) c.stages.push_back(parse_stage(s, c.base, i++));
  }

  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, {"dir", "ppm", "checkpoint", "report"}, "output");
    rc.output.dir = get_or<std::string>(o, "dir", rc.output.dir, "output");
    rc.output.write_ppm = get_or<bool>(o, "ppm", rc.output.write_ppm, "output");
    rc.output.write_checkpoint = get_or<bool>(o, "checkpoint", rc.output.write_checkpoint, "output");
    rc.output.write_report = get_or<bool>(o, "report", rc.output.write_report, "output");
  }
  if (j.contains("metrics")) {
    const json& m = j.at("metrics");
    check_keys(m, {"hf_sigma", "repetition_min_lag", "spectrum_bins"}, "metrics");
    rc.metrics.hf_sigma = get_or<double>(m, "hf_sigma", rc.metrics.hf_sigma, "metrics");
    rc.metrics.repetition_min_lag = get_or<std::size_t>(m, "repetition_min_lag", rc.metrics.repetition_min_lag, "metrics");
    rc.metrics.spectrum_bins = get_or<std::size_t>(m, "spectrum_bins", rc.metrics.spectrum_bins, "metrics");
    if (!(rc.metrics.hf_sigma > 0.0)) throw ConfigError("metrics.hf_sigma must be > 0");
    if (rc.metrics.repetition_min_lag < 1) throw ConfigError("metrics.repetition_min_lag must be >= 1");
    if (rc.metrics.spectrum_bins < 2) throw ConfigError("metrics.spectrum_bins must be >= 2");
  }

  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  validate_regions(c);
  return rc;
}

inline json run_config_to_json(const RunConfig& rc) {
  using namespace detail;
  const CascadeConfig& c = rc.cascade;
  json stages = json::array();
  for (const auto& s : c.stages) stages.push_back(stage_to_json(s));
  return {{"backbone", name_of(c.backbone)},
          {"task", name_of(c.task)},
          {"seed", c.seed},
          {"guidance", c.guidance},
          {"base",
           {{"height", c.base.height},
            {"width", c.base.width},
            {"frames", c.base.frames},
            {"steps", c.base.steps},
            {"timesteps", c.base.timesteps},
            {"beta_kind", name_of(c.base.beta_kind)},
            {"beta_start", c.base.beta_start},
            {"beta_end", c.base.beta_end},
            {"prompt", c.base.prompt},
            {"checkpoint", rc.checkpoint},
            {"model_seed", rc.model_seed},
            {"reference", rc.reference}}},
          {"stages", stages},
          {"output",
           {{"dir", rc.output.dir},
            {"ppm", rc.output.write_ppm},
            {"checkpoint", rc.output.write_checkpoint},
            {"report", rc.output.write_report}}},
          {"metrics",
           {{"hf_sigma", rc.metrics.hf_sigma},
            {"repetition_min_lag", rc.metrics.repetition_min_lag},
            {"spectrum_bins", rc.metrics.spectrum_bins}}}};
}

inline json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + " is not valid JSON: " + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception&) {
    throw ConfigError("cannot read config '" + path + "'");
  }
  return parse_run_config(parse_json_text(text, "config '" + path + "'"));
}

// ---------------------------------------------------------------------------
// LoRA fine-tune and pretraining configs

struct LoraTrainConfig {
  std::string checkpoint;  // base DiT
  std::uint64_t seed = 0;
  int steps = 200;
  double lr = 1e-2;
  std::size_t rank = 4;
  double scale = 1.0;
  std::size_t batch = 2;
  SceneConfig scene{64, 64, 1, false, 2, 4};
  bool ntk = true;
  std::string prompt = "a scene";
  std::string out_dir = "lora";

  bool operator==(const LoraTrainConfig&) const = default;
};

namespace detail {
inline SceneConfig parse_scene(const json& j, SceneConfig s, const std::string& where) {
  check_keys(j, {"height", "width", "frames", "min_blobs", "max_blobs"}, where);
  s.height = get_or<std::size_t>(j, "height", s.height, where);
  s.width = get_or<std::size_t>(j, "width", s.width, where);
  s.frames = get_or<std::size_t>(j, "frames", s.frames, where);
  s.video = s.frames > 1;
  s.min_blobs = get_or<int>(j, "min_blobs", s.min_blobs, where);
  s.max_blobs = get_or<int>(j, "max_blobs", s.max_blobs, where);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return s;
}

inline json scene_to_json(const SceneConfig& s) {
  return {{"height", s.height}, {"width", s.width}, {"frames", s.frames}, {"min_blobs", s.min_blobs},
          {"max_blobs", s.max_blobs}};
}
}  // namespace detail

inline LoraTrainConfig parse_lora_config(const json& j) {
  using namespace detail;
  check_keys(j, {"checkpoint", "seed", "steps", "lr", "rank", "scale", "batch", "scene", "ntk", "prompt", "output"},
             "config");
  LoraTrainConfig c;
  c.checkpoint = get_or<std::string>(j, "checkpoint", "", "config");
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, "config");
  c.steps = get_or<int>(j, "steps", c.steps, "config");
  c.lr = get_or<double>(j, "lr", c.lr, "config");
  c.rank = get_or<std::size_t>(j, "rank", c.rank, "config");
  c.scale = get_or<double>(j, "scale", c.scale, "config");
  c.batch = get_or<std::size_t>(j, "batch", c.batch, "config");
  if (j.contains("scene")) c.scene = parse_scene(j.at("scene"), c.scene, "scene");
  c.ntk = get_or<bool>(j, "ntk", c.ntk, "config");
  c.prompt = get_or<std::string>(j, "prompt", c.prompt, "config");
  if (j.contains("output")) {
    check_keys(j.at("output"), {"dir"}, "output");
    c.out_dir = get_or<std::string>(j.at("output"), "dir", c.out_dir, "output");
  }
  if (c.checkpoint.empty()) throw ConfigError("lora-train needs 'checkpoint' (base DiT)");
  if (c.steps < 0) throw ConfigError("steps must be >= 0");
  if (c.rank < 1) throw ConfigError("rank must be >= 1");
  if (c.batch < 1) throw ConfigError("batch must be >= 1");
  return c;
}

inline json lora_config_to_json(const LoraTrainConfig& c) {
  return {{"checkpoint", c.checkpoint}, {"seed", c.seed},   {"steps", c.steps},
          {"lr", c.lr},                 {"rank", c.rank},   {"scale", c.scale},
          {"batch", c.batch},           {"scene", detail::scene_to_json(c.scene)},
          {"ntk", c.ntk},               {"prompt", c.prompt}, {"output", {{"dir", c.out_dir}}}};
}

struct PretrainRunConfig {
  PretrainConfig train;
  DitConfig model;
  BaseConfig schedule;  // only the schedule fields are used
  std::string out_dir = "model";
};

inline PretrainRunConfig parse_pretrain_config(const json& j) {
  using namespace detail;
  check_keys(j,
             {"seed", "steps", "batch", "lr", "scene", "prompt", "timesteps", "beta_kind", "beta_start", "beta_end",
              "output"},
             "config");
  PretrainRunConfig c;
  c.train.seed = get_or<std::uint64_t>(j, "seed", c.train.seed, "config");
  c.train.steps = get_or<int>(j, "steps", c.train.steps, "config");
  c.train.batch = get_or<std::size_t>(j, "batch", c.train.batch, "config");
  c.train.lr = get_or<double>(j, "lr", c.train.lr, "config");
  c.train.prompt = get_or<std::string>(j, "prompt", c.train.prompt, "config");
  if (j.contains("scene")) c.train.scene = parse_scene(j.at("scene"), c.train.scene, "scene");
  c.schedule.timesteps = get_or<int>(j, "timesteps", c.schedule.timesteps, "config");
  const auto kind = get_or<std::string>(j, "beta_kind", name_of(c.schedule.beta_kind), "config");
  if (kind == "linear") c.schedule.beta_kind = BetaKind::linear;
  else if (kind == "scaled_linear") c.schedule.beta_kind = BetaKind::scaled_linear;
  else throw ConfigError("beta_kind must be 'linear' or 'scaled_linear'");
  c.schedule.beta_start = get_or<double>(j, "beta_start", c.schedule.beta_start, "config");
  c.schedule.beta_end = get_or<double>(j, "beta_end", c.schedule.beta_end, "config");
  if (j.contains("output")) {
    check_keys(j.at("output"), {"dir"}, "output");
    c.out_dir = get_or<std::string>(j.at("output"), "dir", c.out_dir, "output");
  }
  if (c.train.steps < 0 || c.train.batch < 1) throw ConfigError("steps must be >= 0 and batch >= 1");
  const std::size_t p = c.model.patch;
  c.model.train_extent = {c.train.scene.frames, c.train.scene.height / 2 / p, c.train.scene.width / 2 / p};
  return c;
}

}  // namespace cinescale
