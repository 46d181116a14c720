#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vdyn/vocab.hpp"

namespace vdyn {

struct LocationInfo {
  std::string name;
  std::string group_label;  // empty if the locations file had none
  int group = -1;           // resolved index, -1 if ungrouped
  double lat = 0.0;
  double lon = 0.0;
};

class LocationRegistry {
 public:
  int add(LocationInfo info);  // rejects duplicate names
  int index_of(const std::string& name) const;  // -1 if absent
  int require(const std::string& name) const;   // data_error if absent
  const LocationInfo& info(int i) const { return items_.at(static_cast<std::size_t>(i)); }
  int size() const { return static_cast<int>(items_.size()); }
  const std::vector<LocationInfo>& all() const { return items_; }

  int num_groups() const;                  // 0 if any location is ungrouped
  std::vector<int> group_of() const;       // per-location group index
  std::vector<std::string> group_labels() const;  // per-group, first-appearance order
  void assign_groups(const std::vector<int>& group_of,
                     const std::vector<std::string>& labels);

 private:
  std::vector<LocationInfo> items_;
};

struct Sample {
  std::string id;
  std::vector<int> tokens;  // residue ids, no BOS/EOS
  int location = 0;
  double time = 0.0;
};

struct Corpus {
  Vocabulary vocab;
  LocationRegistry locations;
  std::vector<Sample> samples;
  std::int64_t epoch_days = 0;  // date mapped to t = 0
  double unit_days = 7.0;       // t = floor(days_since_epoch / unit_days)
};

struct CorpusOptions {
  double unit_days = 7.0;
  std::string epoch;            // ISO date; empty = earliest sample date
  int min_count = 0;            // drop (location, time) cells with fewer samples
  std::string residues;         // empty = canonical 20-letter alphabet
  std::string location_filter;  // keep only this location's samples if set
};

// samples TSV: header "id\tsequence\tlocation\tdate"; locations TSV: header
// "location\tgroup\tlat\tlon" (group may be blank). Lines starting with '#'
// are skipped. Malformed input raises data_error naming the file and line.
Corpus load_corpus(const std::string& samples_path, const std::string& locations_path,
                   const CorpusOptions& opt = {});

// Binary cache, magic "VDC1". Byte layout documented in the README; writing
// the same corpus twice produces identical bytes.
void save_corpus_cache(const Corpus& corpus, const std::string& path);
Corpus load_corpus_cache(const std::string& path);

// Train: time < cutoff; test: time >= cutoff. Warns on stderr if a side is empty.
std::pair<Corpus, Corpus> split_by_time(const Corpus& corpus, double cutoff);

// Permutes the location column across samples (seeded Fisher-Yates), keeping
// the marginal location counts; the sequence-location pairing is destroyed.
void shuffle_locations(Corpus& corpus, std::uint64_t seed);

}  // namespace vdyn
