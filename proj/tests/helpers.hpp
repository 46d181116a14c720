#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "vdyn/corpus.hpp"
#include "vdyn/model.hpp"
#include "vdyn/rng.hpp"

namespace vdyn::testing {

inline std::string tmp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("vdyn_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string write_file(const std::string& dir, const std::string& name,
                              const std::string& content) {
  auto p = std::filesystem::path(dir) / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p.string();
}

inline LocationRegistry make_registry(int m, const std::vector<int>& group_of = {}) {
  LocationRegistry reg;
  for (int i = 0; i < m; i++) {
    LocationInfo info;
    info.name = "L" + std::to_string(i);
    info.lat = 10.0 * i;
    info.lon = 5.0 * i;
    if (!group_of.empty()) {
      info.group = group_of[i];
      info.group_label = "G" + std::to_string(group_of[i]);
    }
    reg.add(std::move(info));
  }
  if (!group_of.empty()) {
    int n_groups = 0;
    for (int g : group_of) n_groups = std::max(n_groups, g + 1);
    std::vector<std::string> labels;
    for (int g = 0; g < n_groups; g++) labels.push_back("G" + std::to_string(g));
    reg.assign_groups(group_of, labels);
  }
  return reg;
}

inline std::vector<Sample> random_samples(const Vocabulary& vocab, int m, int count,
                                          int len, std::uint64_t seed,
                                          double max_time = 4.0) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < count; i++) {
    Sample s;
    s.id = "s" + std::to_string(i);
    const int l = 1 + static_cast<int>(rng.uniform_int(static_cast<std::size_t>(len)));
    for (int j = 0; j < l; j++) {
      s.tokens.push_back(vocab.first_residue() +
                         static_cast<int>(rng.uniform_int(vocab.residues().size())));
    }
    s.location = static_cast<int>(rng.uniform_int(static_cast<std::size_t>(m)));
    s.time = std::floor(rng.uniform() * max_time);
    out.push_back(std::move(s));
  }
  return out;
}

// Sequence model with externally supplied conditionals, for metric and
// generation fixtures.
class FixedModel : public SequenceModel {
 public:
  using Fn = std::function<std::vector<double>(const std::vector<int>&, int, double)>;

  FixedModel(Vocabulary vocab, int m, bool include_eos, Fn fn)
      : vocab_(std::move(vocab)), m_(m), fn_(std::move(fn)) {
    for (int id = 1; id < vocab_.size(); id++) {
      if (id == Vocabulary::eos() && !include_eos) continue;
      candidates_.push_back(id);
    }
  }

  const Vocabulary& vocab() const override { return vocab_; }
  const std::vector<int>& candidates() const override { return candidates_; }
  int num_locations() const override { return m_; }
  std::vector<double> next_token_log_probs(const std::vector<int>& prefix, int location,
                                           double t) override {
    return fn_(prefix, location, t);
  }

 private:
  Vocabulary vocab_;
  int m_;
  Fn fn_;
  std::vector<int> candidates_;
};

// Uniform over candidates regardless of prefix.
inline FixedModel uniform_model(const Vocabulary& vocab, int m, bool include_eos) {
  const int c = vocab.size() - 1 - (include_eos ? 0 : 1);
  return FixedModel(vocab, m, include_eos, [c](const std::vector<int>&, int, double) {
    return std::vector<double>(static_cast<std::size_t>(c),
                               -std::log(static_cast<double>(c)));
  });
}

}  // namespace vdyn::testing
