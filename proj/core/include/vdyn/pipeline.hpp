#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vdyn/config.hpp"
#include "vdyn/corpus.hpp"
#include "vdyn/model.hpp"

namespace vdyn {

struct RunOptions {
  std::string command;  // simulate | train | eval | generate | analyze
  std::string config_path;
  std::vector<std::string> overrides;  // key=value, applied after the file
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  bool strict = false;
};

// A model plus the construction record needed to rebuild it from a
// checkpoint (model.* hyperparameters, derived.* corpus facts, init seed).
struct ModelBundle {
  std::unique_ptr<TransmissionModel> transmission;
  std::unique_ptr<GlobalModel> global;
  Config echo;

  SequenceModel& seq();
  TrainableModel& trainable();
};

Config effective_config(const RunOptions& opt);
ModelConfig parse_model_config(const Config& cfg);

// Loads the corpus named by data.samples/data.locations (or data.cache when
// the cache file exists), then applies data.shuffle_locations if set.
Corpus corpus_from_config(const Config& cfg, std::uint64_t seed);

// Resolves model.groups ("labels" or "cluster:<k>") into a group assignment
// on the registry. Only meaningful for hierarchical models.
void resolve_groups(const Config& cfg, LocationRegistry& registry);

ModelBundle build_model(const Config& cfg, const Vocabulary& vocab,
                        const LocationRegistry& registry, std::uint64_t seed);
ModelBundle load_model_checkpoint(const std::string& path);
void save_model_checkpoint(ModelBundle& bundle, const std::string& rng_state,
                           const std::string& path);

void cmd_simulate(const Config& cfg, const std::string& out_dir, std::uint64_t seed);
void cmd_train(const Config& cfg, const std::string& out_dir, std::uint64_t seed);
void cmd_eval(const Config& cfg, const std::string& out_dir, std::uint64_t seed,
              bool strict);
void cmd_generate(const Config& cfg, const std::string& out_dir, std::uint64_t seed);
void cmd_analyze(const Config& cfg, const std::string& out_dir, std::uint64_t seed);

// Full driver: builds the effective config, dispatches, maps exceptions to
// the exit-code taxonomy (2 config, 3 data, 4 numeric, 1 anything else).
int run_command(const RunOptions& opt);

}  // namespace vdyn
