#pragma once

#include <cstdint>
#include <vector>

#include "vdyn/corpus.hpp"
#include "vdyn/generate.hpp"
#include "vdyn/model.hpp"

namespace vdyn {

// Negative log probability per factor: sequence length plus the EOS factor
// when the model scores one.
double per_token_nll(SequenceModel& model, const std::vector<int>& residues, int location,
                     double t);

struct CellStat {
  int location = 0;
  std::int64_t time = 0;
  int count = 0;
  double value = 0.0;
};

struct NllReport {
  double aggregate = 0.0;        // unweighted mean over cells
  std::vector<CellStat> cells;   // per (location, time), location-major order
};

// Per-cell mean per-token NLL over the corpus; cells with fewer than
// min_count samples are excluded.
NllReport corpus_nll(SequenceModel& model, const Corpus& corpus, int min_count = 0);

// Fraction of held-out sequences present in the (deduplicated) generated set.
double coverage(const std::vector<std::vector<int>>& generated,
                const std::vector<std::vector<int>>& held_out);

struct RevNll {
  double mean = 0.0;
  double lo = 0.0;  // 95% normal interval over the oracle ensemble
  double hi = 0.0;
};

// Mean per-token NLL of generated sequences under each held-out-trained
// oracle; the interval is mean +/- 1.96 * sd / sqrt(K) across oracles.
RevNll reverse_nll(const std::vector<GeneratedSeq>& generated, int location, double t,
                   const std::vector<SequenceModel*>& oracles);

double entropy(const std::vector<double>& probs);
double median(std::vector<double> values);

}  // namespace vdyn
