#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cinescale/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cinescale: coarse-to-fine higher-resolution sampling with toy diffusion models"};
  app.require_subcommand(1);

  cinescale::CliOptions opt;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opt.config, "JSON configuration file");
    if (needs_config) c->required();
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--out", opt.out, "output directory (overrides the configured one)");
    sub->add_flag("--no-timestamp", opt.no_timestamp, "write timing_ms as null");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("generate", "run the cascade and write frames + report.json");
  add_common(gen, true);
  auto* lora = app.add_subcommand("lora-train", "fine-tune LoRA adapters at an extended token extent");
  add_common(lora, true);
  auto* pre = app.add_subcommand("pretrain", "train a toy DiT on synthetic scenes");
  add_common(pre, true);
  auto* show = app.add_subcommand("print-config", "print the fully defaulted configuration");
  add_common(show, false);

  auto* analyze = app.add_subcommand("analyze", "print metrics JSON for PPM images");
  std::vector<std::string> paths;
  cinescale::MetricsConfig metrics;
  analyze->add_option("images", paths, "PPM files")->required();
  analyze->add_option("--hf-sigma", metrics.hf_sigma, "low-pass sigma for hf_energy_ratio");
  analyze->add_option("--min-lag", metrics.repetition_min_lag, "minimum lag for repetition_score");
  analyze->add_option("--bins", metrics.spectrum_bins, "radial spectrum bins");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 1;
  }

  for (auto* sub : {gen, lora, pre, show})
    if (sub->count("--seed")) opt.seed = seed;

  if (*gen) return cinescale::cmd_generate(opt, std::cout, std::cerr);
  if (*lora) return cinescale::cmd_lora_train(opt, std::cout, std::cerr);
  if (*pre) return cinescale::cmd_pretrain(opt, std::cout, std::cerr);
  if (*show) return cinescale::cmd_print_config(opt, std::cout, std::cerr);
  return cinescale::cmd_analyze(paths, metrics, std::cout, std::cerr);
}
