#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cinescale/analysis.hpp"
#include "cinescale/cascade.hpp"
#include "cinescale/checkpoint.hpp"
#include "cinescale/config.hpp"
#include "cinescale/dit.hpp"
#include "cinescale/parallel.hpp"
#include "cinescale/ppm.hpp"
#include "cinescale/report.hpp"
#include "cinescale/synthetic.hpp"
#include "cinescale/trainer.hpp"
#include "cinescale/unet.hpp"

namespace cinescale {

struct CliOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool no_timestamp = false;
  int threads = 1;
};

namespace detail {

inline std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

/// Maps exceptions to the CLI exit codes: 1 for configuration / input
/// problems, 2 for numerical failures.
inline int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const NumericalError& e) {
    err << "error: numerical failure: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: config: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
}

inline json load_json_file(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception&) {
    throw ConfigError("cannot read config '" + path + "'");
  }
  return parse_json_text(text, "config '" + path + "'");
}

inline Checkpoint load_checkpoint_or_fail(const std::string& path) {
  try {
    return read_checkpoint(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot load checkpoint '" + path + "': " + e.what());
  }
}

inline NoiseSchedule schedule_from_meta(const json& meta) {
  BaseConfig b;
  if (meta.contains("schedule")) {
    const json& s = meta.at("schedule");
    b.timesteps = s.value("timesteps", b.timesteps);
    b.beta_start = s.value("beta_start", b.beta_start);
    b.beta_end = s.value("beta_end", b.beta_end);
    if (s.contains("beta_kind")) b.beta_kind = s.at("beta_kind") == "linear" ? BetaKind::linear : BetaKind::scaled_linear;
  }
  return b.schedule();
}

inline std::unique_ptr<Denoiser> load_model(const RunConfig& rc) {
  const CascadeConfig& c = rc.cascade;
  if (!rc.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint_or_fail(rc.checkpoint);
    const std::string kind = ck.meta.value("kind", "");
    if (kind == "dit") return std::make_unique<TinyDit>(dit_from_checkpoint(ck));
    if (kind == "unet") return std::make_unique<TinyUnet>(unet_from_checkpoint(ck));
    throw ConfigError("checkpoint '" + rc.checkpoint + "' holds no model");
  }
  if (c.backbone == Backbone::unet) return std::make_unique<TinyUnet>(TinyUnet::seeded(UnetConfig{}, rc.model_seed));
  DitConfig d;
  d.train_extent = {c.base.frames, c.base.height / d.patch, c.base.width / d.patch};
  return std::make_unique<TinyDit>(TinyDit::seeded(d, rc.model_seed));
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
}

}  // namespace detail

/// Runs the cascade and writes frames, the final latent and report.json.
inline int cmd_generate(const CliOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    set_num_threads(opt.threads);
    RunConfig rc = load_run_config(opt.config);
    if (opt.seed) rc.cascade.seed = *opt.seed;
    const json echo = run_config_to_json(rc);
    const std::string dir = opt.out.empty() ? rc.output.dir : opt.out;
    const auto model = detail::load_model(rc);

    std::optional<LatentTensor> reference;
    if (rc.cascade.task == Task::i2v) {
      if (!rc.reference.empty()) {
        reference = read_ppm(rc.reference);
      } else {
        const int fl = rc.cascade.final_level();
        SceneConfig sc;
        sc.height = 2 * rc.cascade.base.height * fl;
        sc.width = 2 * rc.cascade.base.width * fl;
        reference = render_scene(sc, stream_seed(rc.cascade.seed, "reference"));
      }
    }

    const CascadeResult res = run_cascade(rc.cascade, *model, reference ? &*reference : nullptr);
    detail::ensure_dir(dir);
    const RgbMapping mapping;
    json stages = json::array();
    for (const auto& st : res.stages) {
      const LatentTensor rgb = codec_decode(st.z0);
      json files = json::array();
      json metrics = json::array();
      for (std::size_t f = 0; f < rgb.frames(); ++f) {
        const std::string name = "stage" + std::to_string(st.level) + "_frame" + std::to_string(f) + ".ppm";
        if (rc.output.write_ppm) {
          write_ppm((std::filesystem::path(dir) / name).string(), rgb, f, mapping);
          files.push_back(name);
        }
        metrics.push_back(image_metrics(channel_mean(rgb, f), rc.metrics));
      }
      stages.push_back({{"level", st.level},
                        {"height", st.z0.height()},
                        {"width", st.z0.width()},
                        {"frames", st.z0.frames()},
                        {"K", st.K},
                        {"steps", st.steps},
                        {"temperature", st.temperature},
                        {"lambda", st.lambda},
                        {"rgb_mapping", rgb_mapping_json(mapping)},
                        {"files", files},
                        {"metrics", metrics}});
    }
    if (rc.output.write_checkpoint)
      write_checkpoint((std::filesystem::path(dir) / "final_latent.cskt").string(), latent_checkpoint(res.final_latent()));
    json report = {{"version", kReportVersion}, {"config_echo", echo}, {"stages", stages}, {"timing_ms", nullptr}};
    if (!opt.no_timestamp) {
      const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      report["timing_ms"] = {{"total", ms}};
    }
    validate_report(report);
    if (rc.output.write_report) write_file((std::filesystem::path(dir) / "report.json").string(), report.dump(2) + "\n");
    out << "wrote " << res.stages.size() << " stage(s) to " << dir << "\n";
    return 0;
  });
}

/// One metrics JSON object per input image, one per line.
inline int cmd_analyze(const std::vector<std::string>& paths, const MetricsConfig& m, std::ostream& out,
                       std::ostream& err) {
  return detail::guarded(err, [&] {
    if (paths.empty()) throw ConfigError("analyze needs at least one image path");
    std::vector<json> results;
    for (const auto& p : paths) {
      LatentTensor rgb;
      try {
        rgb = read_ppm(p);
      } catch (const std::exception& e) {
        throw ConfigError("cannot read image '" + p + "': " + e.what());
      }
      json r = image_metrics(channel_mean(rgb), m);
      r["path"] = p;
      results.push_back(std::move(r));
    }
    for (const auto& r : results) out << r.dump() << "\n";
    return 0;
  });
}

inline int cmd_print_config(const CliOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    RunConfig rc = opt.config.empty() ? parse_run_config(json::object()) : load_run_config(opt.config);
    if (opt.seed) rc.cascade.seed = *opt.seed;
    if (!opt.out.empty()) rc.output.dir = opt.out;
    out << run_config_to_json(rc).dump(2) << "\n";
    return 0;
  });
}

/// Rotary / temperature adaptation for training at a scene's token extent.
inline DitAdaptation training_adaptation(const DitConfig& cfg, const SceneConfig& scene, bool ntk) {
  DitAdaptation ad;
  RopeConfig r = cfg.default_rope();
  r.target_extent = {scene.frames, scene.height / 2 / cfg.patch, scene.width / 2 / cfg.patch};
  if (ntk) r = r.with_ntk();
  ad.rope = r;
  const double n_train = static_cast<double>(r.train_extent[0] * r.train_extent[1] * r.train_extent[2]);
  const double n_target = static_cast<double>(r.target_extent[0] * r.target_extent[1] * r.target_extent[2]);
  ad.temperature = ntk ? attention_temperature(std::max(2.0, n_train), std::max(2.0, n_target)) : 1.0;
  return ad;
}

/// LoRA fine-tune on synthetic scenes at an extended token extent.
inline int cmd_lora_train(const CliOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    set_num_threads(opt.threads);
    LoraTrainConfig c = parse_lora_config(detail::load_json_file(opt.config));
    if (opt.seed) c.seed = *opt.seed;
    const std::string dir = opt.out.empty() ? c.out_dir : opt.out;
    const Checkpoint ck = detail::load_checkpoint_or_fail(c.checkpoint);
    const DitWeights base = dit_from_checkpoint(ck);
    const NoiseSchedule s = detail::schedule_from_meta(ck.meta);
    const DitAdaptation ad = training_adaptation(base.config, c.scene, c.ntk);
    LoraSet adapters = attention_adapters(base.config, c.rank, c.scale, stream_seed(c.seed, "lora.init"));
    const Mat tokens = base.prompts.tokens(c.prompt);
    const TrainBatch eval = synthetic_batch(c.scene, c.batch, s, tokens, stream_seed(c.seed, "lora.eval"));

    const double eval_initial = dit_loss(base.merged(adapters), eval, s, ad, nullptr);
    std::vector<double> losses;
    for (int step = 0; step < c.steps; ++step) {
      const TrainBatch batch =
          synthetic_batch(c.scene, c.batch, s, tokens, stream_seed(c.seed, "lora.step." + std::to_string(step)));
      losses.push_back(lora_train_step(base, adapters, batch, c.lr, s, ad));
    }
    const double eval_final = dit_loss(base.merged(adapters), eval, s, ad, nullptr);
    if (!std::isfinite(eval_final)) throw NumericalError("lora-train: non-finite evaluation loss");

    detail::ensure_dir(dir);
    write_checkpoint((std::filesystem::path(dir) / "adapters.cskt").string(), lora_checkpoint(adapters));
    const json curve = {{"losses", losses}, {"eval_initial", eval_initial}, {"eval_final", eval_final},
                        {"steps", c.steps}};
    write_file((std::filesystem::path(dir) / "loss_curve.json").string(), curve.dump(2) + "\n");
    out << "eval loss " << eval_initial << " -> " << eval_final << "\n";
    return 0;
  });
}

/// Pretrains a toy DiT on synthetic scenes and writes its checkpoint.
inline int cmd_pretrain(const CliOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    set_num_threads(opt.threads);
    PretrainRunConfig c = parse_pretrain_config(detail::load_json_file(opt.config));
    if (opt.seed) c.train.seed = *opt.seed;
    const std::string dir = opt.out.empty() ? c.out_dir : opt.out;
    DitWeights w = DitWeights::seeded(c.model, stream_seed(c.train.seed, "model.init"));
    const NoiseSchedule s = c.schedule.schedule();
    const auto losses = pretrain_dit(w, c.train, s);
    detail::ensure_dir(dir);
    Checkpoint ck = dit_checkpoint(w);
    ck.meta["schedule"] = {{"timesteps", c.schedule.timesteps},
                           {"beta_kind", detail::name_of(c.schedule.beta_kind)},
                           {"beta_start", c.schedule.beta_start},
                           {"beta_end", c.schedule.beta_end}};
    write_checkpoint((std::filesystem::path(dir) / "model.cskt").string(), ck);
    write_file((std::filesystem::path(dir) / "loss_curve.json").string(), json({{"losses", losses}}).dump(2) + "\n");
    out << "trained " << losses.size() << " steps\n";
    return 0;
  });
}

}  // namespace cinescale
