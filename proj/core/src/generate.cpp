#include "vdyn/generate.hpp"

#include <algorithm>
#include <cmath>

#include "vdyn/errors.hpp"

namespace vdyn {

std::vector<double> tempered_probs(const std::vector<double>& log_probs, double tau) {
  if (tau <= 0.0) throw config_error("temperature must be positive");
  std::vector<double> p(log_probs.size());
  double mx = -HUGE_VAL;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = log_probs[i] / tau;
    mx = std::max(mx, p[i]);
  }
  double s = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : p) v /= s;
  return p;
}

std::vector<GeneratedSeq> sample_sequences(SequenceModel& model, int location, double t,
                                           int count, double temperature, int max_len,
                                           Rng& rng) {
  if (count < 0) throw config_error("sample count must be >= 0");
  if (max_len < 1) throw config_error("max_len must be >= 1");
  const bool eos = model.eos_enabled();
  const int eos_ci = model.candidate_index(Vocabulary::eos());
  const auto& cands = model.candidates();

  std::vector<GeneratedSeq> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    GeneratedSeq seq;
    while (true) {
      const auto lps = model.next_token_log_probs(seq.tokens, location, t);
      const auto probs = tempered_probs(lps, temperature);
      const double u = rng.uniform();
      std::size_t pick = probs.size() - 1;
      double acc = 0.0;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
      if (eos && static_cast<int>(pick) == eos_ci) {
        seq.logprob += lps[pick];
        break;
      }
      seq.logprob += lps[pick];
      seq.tokens.push_back(cands[pick]);
      if (static_cast<int>(seq.tokens.size()) >= max_len) {
        if (eos)
          seq.logprob += model.next_token_log_probs(seq.tokens, location,
                                                    t)[static_cast<std::size_t>(eos_ci)];
        break;
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

namespace {

bool better(const GeneratedSeq& a, const GeneratedSeq& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                      b.tokens.end());
}

}  // namespace

std::vector<GeneratedSeq> beam_search(SequenceModel& model, int location, double t,
                                      int width, int max_len) {
  if (width < 1) throw config_error("beam width must be >= 1");
  if (max_len < 1) throw config_error("max_len must be >= 1");
  const bool eos = model.eos_enabled();
  const int eos_ci = model.candidate_index(Vocabulary::eos());
  const auto& cands = model.candidates();

  std::vector<GeneratedSeq> alive{GeneratedSeq{}};
  std::vector<GeneratedSeq> finished;

  for (int step = 0; step < max_len && !alive.empty(); ++step) {
    std::vector<GeneratedSeq> expanded;
    expanded.reserve(alive.size() * cands.size());
    for (const GeneratedSeq& hyp : alive) {
      const auto lps = model.next_token_log_probs(hyp.tokens, location, t);
      for (std::size_t ci = 0; ci < cands.size(); ++ci) {
        GeneratedSeq next = hyp;
        next.logprob += lps[ci];
        if (eos && static_cast<int>(ci) == eos_ci) {
          finished.push_back(std::move(next));
        } else {
          next.tokens.push_back(cands[ci]);
          expanded.push_back(std::move(next));
        }
      }
    }
    std::sort(expanded.begin(), expanded.end(), better);
    if (static_cast<int>(expanded.size()) > width)
      expanded.resize(static_cast<std::size_t>(width));
    alive = std::move(expanded);
  }

  for (GeneratedSeq& hyp : alive) {
    if (eos)
      hyp.logprob += model.next_token_log_probs(hyp.tokens, location,
                                                t)[static_cast<std::size_t>(eos_ci)];
    finished.push_back(std::move(hyp));
  }

  std::sort(finished.begin(), finished.end(), better);
  if (static_cast<int>(finished.size()) > width)
    finished.resize(static_cast<std::size_t>(width));
  return finished;
}

}  // namespace vdyn
