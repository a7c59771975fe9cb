#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "audiodiff/harness.hpp"

int main(int argc, char** argv) {
  using namespace audiodiff;

  CLI::App app{"audiodiff: audio difference learning on a synthetic scene corpus"};
  app.require_subcommand(1);

  std::string config_path;
  std::string ckpt_path;
  std::string mode_override;

  auto* gen = app.add_subcommand("gen", "synthesize the corpus (WAVs + manifest)");
  gen->add_option("--config", config_path, "run config file")->required();

  auto* train = app.add_subcommand("train", "train one mode and write checkpoints");
  train->add_option("--config", config_path, "run config file")->required();
  train->add_option("--mode", mode_override, "baseline | mixgen | difference");

  auto* eval = app.add_subcommand("eval", "decode the test split and score captions");
  eval->add_option("--config", config_path, "run config file")->required();
  eval->add_option("--ckpt", ckpt_path, "checkpoint to evaluate")->required();

  auto* probe = app.add_subcommand("probe", "four-way difference probe on the test split");
  probe->add_option("--config", config_path, "run config file")->required();
  probe->add_option("--ckpt", ckpt_path, "checkpoint to probe")->required();

  app.add_subcommand("gradcheck", "finite-difference check of every tape primitive");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  return harness::run_guarded(
      [&]() -> int {
        if (app.got_subcommand("gradcheck")) return harness::cmd_gradcheck(std::cout);
        const harness::RunConfig cfg = harness::load_config(config_path);
        if (app.got_subcommand(gen)) return harness::cmd_gen(cfg, std::cout);
        if (app.got_subcommand(train)) return harness::cmd_train(cfg, mode_override, std::cout);
        if (app.got_subcommand(eval)) return harness::cmd_eval(cfg, ckpt_path, std::cout);
        if (app.got_subcommand(probe)) return harness::cmd_probe(cfg, ckpt_path, std::cout);
        return 2;
      },
      std::cerr);
}
