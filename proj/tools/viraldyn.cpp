#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vdyn/pipeline.hpp"
#include "vdyn/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"sub-population sequence dynamics: simulate, train, evaluate, generate, analyze"};
  app.set_version_flag("--version", std::string(vdyn::build_id()));
  app.require_subcommand(1);

  vdyn::RunOptions opt;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "run the metapopulation simulation and write a synthetic corpus"},
      {"train", "fit a model on a corpus and write a checkpoint"},
      {"eval", "score a checkpoint on held-out data (NLL, reverse NLL, coverage)"},
      {"generate", "sample or beam-search sequences from a checkpoint"},
      {"analyze", "average rate matrix and spanning tree from a checkpoint"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config_path, "flat key = value config file");
    sub->add_option("--seed", opt.seed, "seed for every stochastic choice")
        ->default_val(1);
    sub->add_option("--out", opt.out_dir, "output directory")->default_val(".");
    sub->add_flag("--strict", opt.strict, "treat degraded results as errors");
    sub->add_option("--set", opt.overrides,
                    "config override key=value, wins over the file, repeatable");
    std::string cmd = name;
    sub->callback([&opt, cmd] { opt.command = cmd; });
  }

  CLI11_PARSE(app, argc, argv);
  return vdyn::run_command(opt);
}
