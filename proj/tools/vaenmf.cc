// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// vaenmf: train, adapt and run the VAE-NMF speech enhancer.
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vaenmf/experiment.h"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech enhancement with a VAE speech prior and NMF noise model"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> jobs;
  bool diagnostics = false;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON experiment config")->required();
    cmd->add_option("--seed", seed, "Override the config seed");
    cmd->add_option("--out", out_dir, "Override the output directory");
    cmd->add_option("--jobs", jobs, "Parallel evaluation workers");
    cmd->add_flag("--diagnostics", diagnostics, "Verbose progress and diagnostics");
  };

  auto* train = app.add_subcommand("train", "Train a VAE on a manifest");
  auto* finetune = app.add_subcommand("finetune", "Train starting from a checkpoint");
  std::string init_ckpt;
  finetune->add_option("--init", init_ckpt, "Checkpoint to start from (overrides model_init)");
  auto* personalize = app.add_subcommand(
      "personalize", "Adapt a checkpoint to each speaker, two splits per speaker");
  auto* mix = app.add_subcommand("mix", "Write noisy mixtures and a mixture list");
  auto* enhance = app.add_subcommand("enhance", "Enhance one noisy recording");
  std::string checkpoint, input, output, reference;
  enhance->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  enhance->add_option("--input", input, "Noisy wav")->required();
  enhance->add_option("--output", output, "Enhanced wav, relative to the output directory")
      ->required();
  enhance->add_option("--reference", reference, "Clean wav for diagnostics");
  auto* evaluate = app.add_subcommand("evaluate", "Enhance and score mixtures");
  evaluate->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  auto* experiment = app.add_subcommand(
      "experiment", "Run the cross-database, cv-fold or personal protocol");
  for (auto* cmd : {train, finetune, personalize, mix, enhance, evaluate, experiment})
    add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  vaenmf::SetVerbose(diagnostics);
  try {
    vaenmf::ConfigOverrides overrides;
    overrides.seed = seed;
    if (out_dir) overrides.output_dir = *out_dir;
    overrides.jobs = jobs;
    vaenmf::ExperimentConfig config = vaenmf::LoadExperimentConfig(config_path, overrides);

    if (*train) {
      vaenmf::RunTrain(config);
    } else if (*finetune) {
      if (!init_ckpt.empty())
        config.model_init = vaenmf::ModelInit::Parse("finetune:" + init_ckpt, ".");
      if (config.model_init.kind == vaenmf::ModelInit::Kind::kScratch)
        throw vaenmf::ValidationError("finetune needs --init or model_init finetune:<ckpt>");
      config.Validate();
      vaenmf::RunTrain(config);
    } else if (*personalize) {
      vaenmf::RunPersonalize(config);
    } else if (*mix) {
      vaenmf::RunMix(config);
    } else if (*enhance) {
      std::optional<std::filesystem::path> ref;
      if (!reference.empty()) ref = reference;
      vaenmf::RunEnhance(config, checkpoint, input, output, ref, diagnostics);
    } else if (*evaluate) {
      vaenmf::RunEvaluate(config, checkpoint);
    } else if (*experiment) {
      vaenmf::RunExperiment(config);
    }
  } catch (const vaenmf::ValidationError& e) {
    std::cerr << "vaenmf: error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "vaenmf: failure: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
