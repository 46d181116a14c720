#include "vdyn/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vdyn/dates.hpp"
#include "vdyn/errors.hpp"
#include "vdyn/rng.hpp"

namespace vdyn {

namespace {

struct Indiv {
  std::string seq;
  double fitness = 1.0;
  std::string id;  // only filled when lineage tracking is on
};

void validate(const SimConfig& cfg) {
  if (cfg.num_locations < 1) throw config_error("sim: need at least one location");
  if (!cfg.group_of.empty()) {
    if (cfg.group_of.size() != static_cast<std::size_t>(cfg.num_locations))
      throw config_error("sim: group assignment size does not match locations");
    int mx = -1;
    for (int g : cfg.group_of) {
      if (g < 0) throw config_error("sim: negative group id");
      mx = std::max(mx, g);
    }
    std::vector<bool> seen(static_cast<std::size_t>(mx + 1), false);
    for (int g : cfg.group_of) seen[static_cast<std::size_t>(g)] = true;
    for (bool s : seen)
      if (!s) throw config_error("sim: group ids must be contiguous from 0");
  }
  if (!cfg.migration.empty() &&
      cfg.migration.size() !=
          static_cast<std::size_t>(cfg.num_locations) * cfg.num_locations)
    throw config_error("sim: migration matrix size does not match locations");
  for (double v : cfg.migration)
    if (v < 0.0) throw config_error("sim: migration weights must be >= 0");
  if (cfg.growth <= 0.0) throw config_error("sim: growth must be positive");
  if (cfg.mutation_rate < 0.0 || cfg.mutation_rate > 1.0)
    throw config_error("sim: mutation_rate must be in [0,1]");
  if (cfg.fitness_sd < 0.0) throw config_error("sim: fitness_sd must be >= 0");
  if (cfg.seq_len < 1) throw config_error("sim: seq_len must be positive");
  if (cfg.generations < 1) throw config_error("sim: generations must be positive");
  if (cfg.capacity < 1) throw config_error("sim: capacity must be positive");
  if (cfg.sampling_rate < 0.0 || cfg.sampling_rate > 1.0)
    throw config_error("sim: sampling_rate must be in [0,1]");
  if (cfg.residues.size() < 2) throw config_error("sim: need at least two residues");
  if (cfg.founder != "shared" && cfg.founder != "per_group" && cfg.founder != "per_location")
    throw config_error("sim: founder must be shared, per_group or per_location");
  if (cfg.init_population < 1) throw config_error("sim: init_population must be positive");
  if (cfg.unit_days <= 0.0) throw config_error("sim: unit_days must be positive");
}

LocationRegistry build_registry(const SimConfig& cfg) {
  LocationRegistry reg;
  const bool grouped = !cfg.group_of.empty();
  std::vector<int> rank_in_group;
  std::map<int, int> next_rank;
  for (int i = 0; i < cfg.num_locations; ++i) {
    const int g = grouped ? cfg.group_of[static_cast<std::size_t>(i)] : 0;
    rank_in_group.push_back(next_rank[g]++);
  }
  for (int i = 0; i < cfg.num_locations; ++i) {
    const int g = grouped ? cfg.group_of[static_cast<std::size_t>(i)] : 0;
    LocationInfo info;
    info.name = "L" + std::to_string(i);
    if (grouped) {
      info.group_label = "G" + std::to_string(g);
      info.group = g;
    }
    info.lat = 15.0 * g + 0.8 * rank_in_group[static_cast<std::size_t>(i)];
    info.lon = 25.0 * g + 0.5 * rank_in_group[static_cast<std::size_t>(i)];
    reg.add(std::move(info));
  }
  return reg;
}

std::vector<double> build_kernel(const SimConfig& cfg) {
  const std::size_t m = static_cast<std::size_t>(cfg.num_locations);
  std::vector<double> w = cfg.migration;
  if (w.empty()) {
    w.assign(m * m, 0.0);
    auto group = [&](std::size_t i) {
      return cfg.group_of.empty() ? 0 : cfg.group_of[i];
    };
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j)
          w[i * m + j] = cfg.migration_self;
        else if (group(i) == group(j))
          w[i * m + j] = cfg.migration_intra;
        else
          w[i * m + j] = cfg.migration_inter;
      }
  }
  // column-normalize: column j is the destination distribution of a source-j
  // offspring
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += w[i * m + j];
    if (s <= 0.0)
      throw config_error("sim: migration column " + std::to_string(j) + " sums to zero");
    for (std::size_t i = 0; i < m; ++i) w[i * m + j] /= s;
  }
  return w;
}

std::string random_seq(const SimConfig& cfg, Rng& rng) {
  std::string s(static_cast<std::size_t>(cfg.seq_len), cfg.residues[0]);
  for (char& c : s)
    c = cfg.residues[static_cast<std::size_t>(rng.uniform_int(
        static_cast<int>(cfg.residues.size())))];
  return s;
}

}  // namespace

SimResult run_simulation(const SimConfig& cfg) {
  validate(cfg);
  const std::size_t m = static_cast<std::size_t>(cfg.num_locations);
  const std::size_t n_res = cfg.residues.size();
  Rng rng(cfg.seed);

  SimResult result;
  result.corpus.vocab = Vocabulary::from_residues(cfg.residues);
  result.corpus.locations = build_registry(cfg);
  result.corpus.epoch_days = parse_iso_date(cfg.epoch);
  result.corpus.unit_days = cfg.unit_days;
  result.migration_counts.assign(m * m, 0.0);

  const std::vector<double> kernel = build_kernel(cfg);

  // founders
  std::vector<std::string> founder_of(m);
  if (cfg.founder == "shared") {
    const std::string f = random_seq(cfg, rng);
    for (auto& s : founder_of) s = f;
  } else if (cfg.founder == "per_group") {
    std::map<int, std::string> per_group;
    for (std::size_t i = 0; i < m; ++i) {
      const int g = cfg.group_of.empty() ? 0 : cfg.group_of[i];
      auto it = per_group.find(g);
      if (it == per_group.end()) it = per_group.emplace(g, random_seq(cfg, rng)).first;
      founder_of[i] = it->second;
    }
  } else {
    for (auto& s : founder_of) s = random_seq(cfg, rng);
  }

  std::vector<std::vector<Indiv>> pop(m);
  for (std::size_t i = 0; i < m; ++i)
    for (int k = 0; k < cfg.init_population; ++k) {
      Indiv ind;
      ind.seq = founder_of[i];
      if (cfg.track_lineage)
        ind.id = "f_L" + std::to_string(i) + "_" + std::to_string(k);
      pop[i].push_back(std::move(ind));
    }

  std::map<std::tuple<int, int, int>, long long> trace_agg;
  result.last_generation = 0;

  for (int gen = 1; gen <= cfg.generations; ++gen) {
    std::vector<std::vector<Indiv>> next(m);
    long long born = 0;
    for (std::size_t j = 0; j < m; ++j) {
      for (const Indiv& parent : pop[j]) {
        const int n_off = rng.poisson(cfg.growth * parent.fitness);
        for (int o = 0; o < n_off; ++o) {
          Indiv child;
          child.seq = parent.seq;
          child.fitness = parent.fitness;
          for (std::size_t site = 0; site < child.seq.size(); ++site) {
            if (rng.uniform() >= cfg.mutation_rate) continue;
            const std::size_t cur = cfg.residues.find(child.seq[site]);
            std::size_t pick = static_cast<std::size_t>(
                rng.uniform_int(static_cast<int>(n_res) - 1));
            if (pick >= cur) ++pick;
            child.seq[site] = cfg.residues[pick];
            if (cfg.fitness_sd > 0.0)
              child.fitness *= std::exp(rng.normal(0.0, cfg.fitness_sd));
          }
          // destination by inverse CDF over the kernel column of the source
          const double u = rng.uniform();
          std::size_t dest = m - 1;
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            acc += kernel[i * m + j];
            if (u < acc) {
              dest = i;
              break;
            }
          }
          if (dest != j) {
            result.migration_counts[dest * m + j] += 1.0;
            ++trace_agg[{gen, static_cast<int>(j), static_cast<int>(dest)}];
          }
          if (cfg.track_lineage) {
            child.id = "g" + std::to_string(gen) + "_L" + std::to_string(dest) + "_" +
                       std::to_string(born);
            result.lineage.push_back({gen, child.id, parent.id});
          }
          ++born;
          next[dest].push_back(std::move(child));
        }
      }
    }

    for (std::size_t i = 0; i < m; ++i) {
      auto& loc_pop = next[i];
      if (static_cast<int>(loc_pop.size()) > cfg.capacity) {
        std::vector<std::size_t> idx(loc_pop.size());
        for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
        for (int k = 0; k < cfg.capacity; ++k) {
          const int j = k + rng.uniform_int(static_cast<int>(idx.size()) - k);
          std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(j)]);
        }
        idx.resize(static_cast<std::size_t>(cfg.capacity));
        std::sort(idx.begin(), idx.end());
        std::vector<Indiv> kept;
        kept.reserve(idx.size());
        for (std::size_t k : idx) kept.push_back(std::move(loc_pop[k]));
        loc_pop = std::move(kept);
      }
    }

    std::map<std::size_t, int> emitted_at;
    for (std::size_t i = 0; i < m; ++i)
      for (const Indiv& ind : next[i]) {
        if (rng.uniform() >= cfg.sampling_rate) continue;
        Sample s;
        s.id = "g" + std::to_string(gen) + "_L" + std::to_string(i) + "_" +
               std::to_string(emitted_at[i]++);
        s.tokens = result.corpus.vocab.encode(ind.seq);
        s.location = static_cast<int>(i);
        s.time = static_cast<double>(gen);
        result.corpus.samples.push_back(std::move(s));
      }

    pop = std::move(next);
    result.last_generation = gen;
    long long total = 0;
    for (const auto& lp : pop) total += static_cast<long long>(lp.size());
    if (total == 0) {
      result.extinct = true;
      break;
    }
  }

  for (const auto& [key, count] : trace_agg)
    result.trace.push_back(
        {std::get<0>(key), std::get<1>(key), std::get<2>(key), count});

  result.ground_truth_rates.assign(m * m, 0.0);
  const double denom = static_cast<double>(result.last_generation);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      result.ground_truth_rates[i * m + j] =
          (result.migration_counts[i * m + j] + result.migration_counts[j * m + i]) / denom;

  result.final_population.clear();
  for (const auto& lp : pop)
    result.final_population.push_back(static_cast<long long>(lp.size()));
  return result;
}

}  // namespace vdyn
