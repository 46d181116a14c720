#pragma once

#include <vector>

#include "vdyn/model.hpp"
#include "vdyn/rng.hpp"

namespace vdyn {

struct GeneratedSeq {
  std::vector<int> tokens;  // residue ids, no BOS/EOS
  double logprob = 0.0;     // model log probability at temperature 1
};

// Temperature-scaled distribution p_i^(1/tau), computed in log space.
std::vector<double> tempered_probs(const std::vector<double>& log_probs, double tau);

// Ancestral sampling. The draw uses the tempered distribution; the recorded
// logprob is the untempered model log probability of the emitted sequence
// (terminal EOS factor included when EOS is enabled). Sequences that reach
// max_len without sampling EOS are closed with the EOS factor.
std::vector<GeneratedSeq> sample_sequences(SequenceModel& model, int location, double t,
                                           int count, double temperature, int max_len,
                                           Rng& rng);

// Length-synchronous beam search with a finished pool. EOS expansions move a
// hypothesis into the pool; hypotheses alive at max_len are force-completed
// with their EOS factor (or kept as-is when EOS is disabled). Ties break by
// higher logprob first, then lexicographically smaller token sequence, so
// with width >= |V|^max_len the result equals exhaustive enumeration.
std::vector<GeneratedSeq> beam_search(SequenceModel& model, int location, double t,
                                      int width, int max_len);

}  // namespace vdyn
