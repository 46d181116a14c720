#include "vdyn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "vdyn/errors.hpp"

namespace vdyn {

double per_token_nll(SequenceModel& model, const std::vector<int>& residues, int location,
                     double t) {
  const double lp = model.sequence_log_prob(residues, location, t);
  const double factors =
      static_cast<double>(residues.size()) + (model.eos_enabled() ? 1.0 : 0.0);
  if (factors == 0.0) throw data_error("per_token_nll: empty sequence with EOS disabled");
  return -lp / factors;
}

NllReport corpus_nll(SequenceModel& model, const Corpus& corpus, int min_count) {
  std::map<std::pair<int, std::int64_t>, std::pair<double, int>> cells;
  for (const Sample& s : corpus.samples) {
    auto& cell = cells[{s.location, static_cast<std::int64_t>(std::llround(s.time))}];
    cell.first += per_token_nll(model, s.tokens, s.location, s.time);
    cell.second += 1;
  }
  NllReport report;
  double total = 0.0;
  for (const auto& [key, acc] : cells) {
    if (acc.second < min_count) continue;
    CellStat stat;
    stat.location = key.first;
    stat.time = key.second;
    stat.count = acc.second;
    stat.value = acc.first / acc.second;
    total += stat.value;
    report.cells.push_back(stat);
  }
  if (report.cells.empty())
    throw data_error("corpus_nll: no cells left after the min_count filter");
  report.aggregate = total / static_cast<double>(report.cells.size());
  return report;
}

double coverage(const std::vector<std::vector<int>>& generated,
                const std::vector<std::vector<int>>& held_out) {
  if (held_out.empty()) throw data_error("coverage: empty held-out set");
  const std::set<std::vector<int>> pool(generated.begin(), generated.end());
  std::size_t hit = 0;
  for (const auto& seq : held_out)
    if (pool.count(seq)) ++hit;
  return static_cast<double>(hit) / static_cast<double>(held_out.size());
}

RevNll reverse_nll(const std::vector<GeneratedSeq>& generated, int location, double t,
                   const std::vector<SequenceModel*>& oracles) {
  if (generated.empty()) throw data_error("reverse_nll: no generated sequences");
  if (oracles.empty()) throw data_error("reverse_nll: no oracle models");
  std::vector<double> per_oracle;
  per_oracle.reserve(oracles.size());
  for (SequenceModel* oracle : oracles) {
    double acc = 0.0;
    for (const GeneratedSeq& g : generated)
      acc += per_token_nll(*oracle, g.tokens, location, t);
    per_oracle.push_back(acc / static_cast<double>(generated.size()));
  }
  RevNll out;
  for (double v : per_oracle) out.mean += v;
  out.mean /= static_cast<double>(per_oracle.size());
  if (per_oracle.size() < 2) {
    out.lo = out.hi = out.mean;
    return out;
  }
  double var = 0.0;
  for (double v : per_oracle) var += (v - out.mean) * (v - out.mean);
  var /= static_cast<double>(per_oracle.size() - 1);
  const double half = 1.96 * std::sqrt(var / static_cast<double>(per_oracle.size()));
  out.lo = out.mean - half;
  out.hi = out.mean + half;
  return out;
}

double entropy(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

double median(std::vector<double> values) {
  if (values.empty()) throw data_error("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace vdyn
