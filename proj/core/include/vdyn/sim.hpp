#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vdyn/corpus.hpp"

namespace vdyn {

// Wright-Fisher style metapopulation simulation: per generation each
// individual leaves Poisson(growth * fitness) offspring, offspring mutate per
// site, migrate between locations according to a column-normalized kernel,
// locations are downsampled to capacity, and survivors are emitted into the
// sampled corpus with probability sampling_rate.
struct SimConfig {
  int num_locations = 6;
  std::vector<int> group_of;       // empty = one implicit group, no labels emitted
  std::vector<double> migration;   // m*m, entry (i,j) = weight of moving j -> i;
                                   // empty = built from the three weights below
  double migration_self = 1.0;
  double migration_intra = 0.05;   // same group
  double migration_inter = 0.005;  // different group
  double growth = 1.2;
  double mutation_rate = 0.01;     // per site per replication
  double fitness_sd = 0.0;         // >0: each mutation multiplies fitness by a lognormal
  int seq_len = 10;
  int generations = 40;
  int capacity = 200;              // per location
  double sampling_rate = 0.3;
  std::string residues = "ACDE";
  std::string founder = "shared";  // shared | per_group | per_location
  int init_population = 50;        // per location
  bool track_lineage = false;
  std::uint64_t seed = 1;
  std::string epoch = "2024-01-05";
  double unit_days = 7.0;
};

struct TraceRow {
  int generation;
  int from;
  int to;
  long long count;
};

struct LineageRow {
  int generation;
  std::string id;
  std::string parent_id;
};

struct SimResult {
  Corpus corpus;
  std::vector<double> migration_counts;     // m*m, (i,j) = realized j -> i moves
  std::vector<double> ground_truth_rates;   // (C + C^T) / generations
  std::vector<TraceRow> trace;              // aggregated per (generation, from, to)
  std::vector<LineageRow> lineage;          // only when track_lineage
  std::vector<long long> final_population;  // per location
  bool extinct = false;
  int last_generation = 0;
};

SimResult run_simulation(const SimConfig& cfg);

}  // namespace vdyn
