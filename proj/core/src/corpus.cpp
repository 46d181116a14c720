#include "vdyn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "vdyn/dates.hpp"
#include "vdyn/detail/binio.hpp"
#include "vdyn/errors.hpp"
#include "vdyn/rng.hpp"

namespace vdyn {

int LocationRegistry::add(LocationInfo info) {
  if (index_of(info.name) >= 0)
    throw data_error("duplicate location '" + info.name + "'");
  items_.push_back(std::move(info));
  return static_cast<int>(items_.size()) - 1;
}

int LocationRegistry::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (items_[i].name == name) return static_cast<int>(i);
  return -1;
}

int LocationRegistry::require(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) throw data_error("unknown location '" + name + "'");
  return i;
}

int LocationRegistry::num_groups() const {
  int mx = -1;
  for (const auto& it : items_) {
    if (it.group < 0) return 0;
    mx = std::max(mx, it.group);
  }
  return mx + 1;
}

std::vector<int> LocationRegistry::group_of() const {
  std::vector<int> out;
  out.reserve(items_.size());
  for (const auto& it : items_) out.push_back(it.group);
  return out;
}

std::vector<std::string> LocationRegistry::group_labels() const {
  std::vector<std::string> out(static_cast<std::size_t>(num_groups()));
  for (const auto& it : items_)
    if (it.group >= 0) out[static_cast<std::size_t>(it.group)] = it.group_label;
  return out;
}

void LocationRegistry::assign_groups(const std::vector<int>& group_of,
                                     const std::vector<std::string>& labels) {
  if (group_of.size() != items_.size())
    throw std::invalid_argument("assign_groups: size mismatch");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    items_[i].group = group_of[i];
    items_[i].group_label = labels.at(static_cast<std::size_t>(group_of[i]));
  }
}

namespace {

std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r')
    out.back().pop_back();
  return out;
}

[[noreturn]] void line_fail(const std::string& path, std::size_t line_no,
                            const std::string& what) {
  throw data_error(path + ":" + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& s, const std::string& path, std::size_t line_no,
                    const char* field) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    line_fail(path, line_no, std::string("bad ") + field + " value '" + s + "'");
  }
}

LocationRegistry load_locations(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw data_error("cannot open locations file: " + path);
  LocationRegistry reg;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  std::vector<std::string> label_order;
  bool any_grouped = false, any_ungrouped = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_tsv(line);
    if (!saw_header) {
      if (f.size() != 4 || f[0] != "location" || f[1] != "group" || f[2] != "lat" ||
          f[3] != "lon")
        line_fail(path, line_no, "expected header 'location\\tgroup\\tlat\\tlon'");
      saw_header = true;
      continue;
    }
    if (f.size() != 4) line_fail(path, line_no, "expected 4 tab-separated fields");
    LocationInfo info;
    info.name = f[0];
    info.group_label = f[1];
    info.lat = parse_double(f[2], path, line_no, "lat");
    info.lon = parse_double(f[3], path, line_no, "lon");
    if (info.name.empty()) line_fail(path, line_no, "empty location name");
    if (info.group_label.empty()) {
      any_ungrouped = true;
    } else {
      any_grouped = true;
      auto it = std::find(label_order.begin(), label_order.end(), info.group_label);
      if (it == label_order.end()) {
        label_order.push_back(info.group_label);
        info.group = static_cast<int>(label_order.size()) - 1;
      } else {
        info.group = static_cast<int>(it - label_order.begin());
      }
    }
    try {
      reg.add(std::move(info));
    } catch (const data_error& e) {
      line_fail(path, line_no, e.what());
    }
  }
  if (!saw_header) throw data_error(path + ": missing header row");
  if (reg.size() == 0) throw data_error(path + ": no locations");
  if (any_grouped && any_ungrouped)
    throw data_error(path + ": group column must be set for all locations or none");
  return reg;
}

}  // namespace

Corpus load_corpus(const std::string& samples_path, const std::string& locations_path,
                   const CorpusOptions& opt) {
  if (opt.unit_days <= 0.0) throw config_error("time unit must be positive");

  Corpus corpus;
  corpus.vocab = opt.residues.empty() ? Vocabulary::amino_acid()
                                      : Vocabulary::from_residues(opt.residues);
  corpus.locations = load_locations(locations_path);
  corpus.unit_days = opt.unit_days;

  std::ifstream is(samples_path);
  if (!is) throw data_error("cannot open samples file: " + samples_path);

  struct RawSample {
    std::string id;
    std::vector<int> tokens;
    int location;
    std::int64_t days;
  };
  std::vector<RawSample> raws;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_tsv(line);
    if (!saw_header) {
      if (f.size() != 4 || f[0] != "id" || f[1] != "sequence" || f[2] != "location" ||
          f[3] != "date")
        line_fail(samples_path, line_no, "expected header 'id\\tsequence\\tlocation\\tdate'");
      saw_header = true;
      continue;
    }
    if (f.size() != 4) line_fail(samples_path, line_no, "expected 4 tab-separated fields");
    RawSample raw;
    raw.id = f[0];
    const int loc = corpus.locations.index_of(f[2]);
    if (loc < 0) line_fail(samples_path, line_no, "unknown location '" + f[2] + "'");
    if (!opt.location_filter.empty() && f[2] != opt.location_filter) continue;
    raw.location = loc;
    try {
      raw.tokens = corpus.vocab.encode(f[1]);
      raw.days = parse_iso_date(f[3]);
    } catch (const data_error& e) {
      line_fail(samples_path, line_no, e.what());
    }
    raws.push_back(std::move(raw));
  }
  if (!saw_header) throw data_error(samples_path + ": missing header row");
  if (raws.empty()) throw data_error(samples_path + ": no samples" +
                                     (opt.location_filter.empty()
                                          ? ""
                                          : " for location '" + opt.location_filter + "'"));

  if (opt.epoch.empty()) {
    corpus.epoch_days = raws[0].days;
    for (const auto& r : raws) corpus.epoch_days = std::min(corpus.epoch_days, r.days);
  } else {
    corpus.epoch_days = parse_iso_date(opt.epoch);
  }

  for (auto& r : raws) {
    if (r.days < corpus.epoch_days)
      throw data_error(samples_path + ": sample '" + r.id + "' dated " +
                       format_iso_date(r.days) + ", before the epoch " +
                       format_iso_date(corpus.epoch_days));
    Sample s;
    s.id = std::move(r.id);
    s.tokens = std::move(r.tokens);
    s.location = r.location;
    s.time = std::floor(static_cast<double>(r.days - corpus.epoch_days) / corpus.unit_days);
    corpus.samples.push_back(std::move(s));
  }

  if (opt.min_count > 0) {
    std::map<std::pair<int, std::int64_t>, int> counts;
    for (const auto& s : corpus.samples)
      ++counts[{s.location, static_cast<std::int64_t>(s.time)}];
    std::vector<Sample> kept;
    for (auto& s : corpus.samples)
      if (counts[{s.location, static_cast<std::int64_t>(s.time)}] >= opt.min_count)
        kept.push_back(std::move(s));
    corpus.samples = std::move(kept);
    if (corpus.samples.empty())
      throw data_error(samples_path + ": min_count filter removed every sample");
  }
  return corpus;
}

namespace {
constexpr char kCorpusMagic[4] = {'V', 'D', 'C', '1'};
}

void save_corpus_cache(const Corpus& corpus, const std::string& path) {
  namespace b = detail;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot open corpus cache for writing: " + path);
  os.write(kCorpusMagic, 4);
  b::write_str(os, corpus.vocab.residues());
  b::write_i64(os, corpus.epoch_days);
  b::write_f64(os, corpus.unit_days);
  b::write_u32(os, static_cast<std::uint32_t>(corpus.locations.size()));
  for (const auto& loc : corpus.locations.all()) {
    b::write_str(os, loc.name);
    b::write_str(os, loc.group_label);
    b::write_u32(os, static_cast<std::uint32_t>(loc.group));
    b::write_f64(os, loc.lat);
    b::write_f64(os, loc.lon);
  }
  b::write_u32(os, static_cast<std::uint32_t>(corpus.samples.size()));
  for (const auto& s : corpus.samples) {
    b::write_str(os, s.id);
    b::write_u32(os, static_cast<std::uint32_t>(s.location));
    b::write_f64(os, s.time);
    b::write_u32(os, static_cast<std::uint32_t>(s.tokens.size()));
    for (int t : s.tokens) b::write_u16(os, static_cast<std::uint16_t>(t));
  }
  if (!os) throw data_error("write failed for corpus cache: " + path);
}

Corpus load_corpus_cache(const std::string& path) {
  namespace b = detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open corpus cache: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCorpusMagic, 4) != 0)
    throw data_error("not a corpus cache (bad magic): " + path);

  Corpus corpus;
  corpus.vocab = Vocabulary::from_residues(b::read_str(is));
  corpus.epoch_days = b::read_i64(is);
  corpus.unit_days = b::read_f64(is);
  const std::uint32_t n_loc = b::read_u32(is);
  for (std::uint32_t i = 0; i < n_loc && is; ++i) {
    LocationInfo info;
    info.name = b::read_str(is);
    info.group_label = b::read_str(is);
    info.group = static_cast<int>(b::read_u32(is));
    info.lat = b::read_f64(is);
    info.lon = b::read_f64(is);
    corpus.locations.add(std::move(info));
  }
  const std::uint32_t n_samples = b::read_u32(is);
  corpus.samples.reserve(n_samples);
  for (std::uint32_t i = 0; i < n_samples && is; ++i) {
    Sample s;
    s.id = b::read_str(is);
    s.location = static_cast<int>(b::read_u32(is));
    s.time = b::read_f64(is);
    const std::uint32_t n_tok = b::read_u32(is);
    s.tokens.reserve(n_tok);
    for (std::uint32_t t = 0; t < n_tok; ++t)
      s.tokens.push_back(static_cast<int>(b::read_u16(is)));
    corpus.samples.push_back(std::move(s));
  }
  if (!is) throw data_error("truncated corpus cache: " + path);
  for (const auto& s : corpus.samples) {
    if (s.location < 0 || s.location >= corpus.locations.size())
      throw data_error("corpus cache: sample '" + s.id + "' has an out-of-range location");
    for (int t : s.tokens)
      if (!corpus.vocab.is_residue(t))
        throw data_error("corpus cache: sample '" + s.id + "' has an out-of-range token");
  }
  return corpus;
}

std::pair<Corpus, Corpus> split_by_time(const Corpus& corpus, double cutoff) {
  Corpus train, test;
  train.vocab = test.vocab = corpus.vocab;
  train.locations = test.locations = corpus.locations;
  train.epoch_days = test.epoch_days = corpus.epoch_days;
  train.unit_days = test.unit_days = corpus.unit_days;
  for (const auto& s : corpus.samples)
    (s.time < cutoff ? train : test).samples.push_back(s);
  if (train.samples.empty())
    std::cerr << "warning: time split at " << cutoff << " left the train side empty\n";
  if (test.samples.empty())
    std::cerr << "warning: time split at " << cutoff << " left the test side empty\n";
  return {std::move(train), std::move(test)};
}

void shuffle_locations(Corpus& corpus, std::uint64_t seed) {
  std::vector<int> locs;
  locs.reserve(corpus.samples.size());
  for (const auto& s : corpus.samples) locs.push_back(s.location);
  Rng rng(seed);
  rng.shuffle(locs);
  for (std::size_t i = 0; i < corpus.samples.size(); ++i)
    corpus.samples[i].location = locs[i];
}

}  // namespace vdyn
