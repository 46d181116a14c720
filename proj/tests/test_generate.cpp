#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "vdyn/errors.hpp"
#include "vdyn/generate.hpp"
#include "vdyn/metrics.hpp"
#include "vdyn/rng.hpp"
#include "vdyn/vocab.hpp"

using namespace vdyn;
using vdyn::testing::FixedModel;
using vdyn::testing::uniform_model;

namespace {

// Deterministic prefix-dependent conditionals: hash the call context into
// normalized log probabilities so beam search can be checked against
// exhaustive enumeration.
std::vector<double> hashed_log_probs(const std::vector<int>& prefix, int location,
                                     double t, std::size_t n_cands) {
  std::uint64_t h = 1469598103934665603ull ^ static_cast<std::uint64_t>(location);
  h = (h ^ static_cast<std::uint64_t>(t * 16.0)) * 1099511628211ull;
  for (int tok : prefix) h = (h ^ static_cast<std::uint64_t>(tok + 1)) * 1099511628211ull;
  std::vector<double> logits(n_cands);
  for (std::size_t i = 0; i < n_cands; ++i) {
    h = (h ^ (i + 17)) * 1099511628211ull;
    h ^= h >> 29;
    logits[i] = 3.0 * static_cast<double>(h % 10007) / 10007.0;
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (double& v : logits) v -= lse;
  return logits;
}

FixedModel hashed_model(const Vocabulary& vocab, bool include_eos) {
  const std::size_t c =
      static_cast<std::size_t>(vocab.size() - 1 - (include_eos ? 0 : 1));
  return FixedModel(vocab, 2, include_eos,
                    [c](const std::vector<int>& prefix, int location, double t) {
                      return hashed_log_probs(prefix, location, t, c);
                    });
}

// All residue strings of length exactly `len` over the model's residue
// candidates, in lexicographic token order.
void enumerate_fixed_len(const std::vector<int>& residues, int len,
                         std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (len == 0) {
    out.push_back(cur);
    return;
  }
  for (int r : residues) {
    cur.push_back(r);
    enumerate_fixed_len(residues, len - 1, cur, out);
    cur.pop_back();
  }
}

bool ordered_before(const GeneratedSeq& a, const GeneratedSeq& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                      b.tokens.end());
}

}  // namespace

TEST_CASE("tempered_probs reproduces exact temperature scalings") {
  const std::vector<double> lp = {std::log(0.2), std::log(0.3), std::log(0.5)};

  const auto p1 = tempered_probs(lp, 1.0);
  CHECK(p1[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(p1[1] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(p1[2] == doctest::Approx(0.5).epsilon(1e-12));

  // tau = 0.5 squares the probabilities before renormalizing
  const auto p_half = tempered_probs(lp, 0.5);
  const double z = 0.04 + 0.09 + 0.25;
  CHECK(p_half[0] == doctest::Approx(0.04 / z).epsilon(1e-12));
  CHECK(p_half[2] == doctest::Approx(0.25 / z).epsilon(1e-12));

  // tiny tau concentrates on the argmax
  const auto p_cold = tempered_probs(lp, 0.01);
  CHECK(p_cold[2] > 0.999999);

  // huge inputs are handled in log space without overflow
  const auto p_far = tempered_probs({-1000.0, -1000.0 - std::log(2.0)}, 1.0);
  CHECK(p_far[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(p_far[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  double s = 0.0;
  for (double v : tempered_probs(lp, 3.7)) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS((void)tempered_probs(lp, 0.0), config_error);
  CHECK_THROWS_AS((void)tempered_probs(lp, -1.0), config_error);
}

TEST_CASE("temperature widens the tempered distribution monotonically") {
  const std::vector<double> lp = {std::log(0.7), std::log(0.2), std::log(0.1)};
  double prev = -1.0;
  for (double tau : {0.25, 0.5, 1.0, 2.0, 8.0}) {
    const double h = entropy(tempered_probs(lp, tau));
    CHECK(h > prev);
    prev = h;
  }
  CHECK(entropy(tempered_probs(lp, 50.0)) == doctest::Approx(std::log(3.0)).epsilon(1e-3));
}

TEST_CASE("sampling a uniform model fills max_len and scores exactly") {
  const Vocabulary vocab = Vocabulary::from_residues("ACD");
  FixedModel model = uniform_model(vocab, 2, false);
  Rng rng(11);
  const auto seqs = sample_sequences(model, 0, 1.0, 50, 1.0, 4, rng);
  REQUIRE(seqs.size() == 50);
  for (const auto& s : seqs) {
    CHECK(s.tokens.size() == 4);
    CHECK(s.logprob == doctest::Approx(-4.0 * std::log(3.0)).epsilon(1e-12));
    for (int tok : s.tokens) CHECK(vocab.is_residue(tok));
  }
}

TEST_CASE("sampling frequencies track the (tempered) conditionals") {
  const Vocabulary vocab = Vocabulary::from_residues("ACD");
  const std::vector<double> lp = {std::log(0.2), std::log(0.3), std::log(0.5)};
  FixedModel model(vocab, 1, false,
                   [&lp](const std::vector<int>&, int, double) { return lp; });

  const int n = 6000;
  Rng rng(21);
  std::map<int, int> counts;
  for (const auto& s : sample_sequences(model, 0, 0.5, n, 1.0, 1, rng))
    counts[s.tokens.at(0)]++;
  CHECK(static_cast<double>(counts[2]) / n == doctest::Approx(0.2).epsilon(0.15));
  CHECK(static_cast<double>(counts[3]) / n == doctest::Approx(0.3).epsilon(0.12));
  CHECK(static_cast<double>(counts[4]) / n == doctest::Approx(0.5).epsilon(0.08));

  // tau = 0.5: draw from squared-renormalized probs, but record untempered scores
  Rng rng2(22);
  const auto cold = sample_sequences(model, 0, 0.5, n, 0.5, 1, rng2);
  std::map<int, int> cold_counts;
  for (const auto& s : cold) {
    cold_counts[s.tokens.at(0)]++;
    const int ci = s.tokens.at(0) - 2;
    CHECK(s.logprob == doctest::Approx(lp[static_cast<std::size_t>(ci)]).epsilon(1e-12));
  }
  const double z = 0.04 + 0.09 + 0.25;
  CHECK(static_cast<double>(cold_counts[4]) / n == doctest::Approx(0.25 / z).epsilon(0.08));
  CHECK(static_cast<double>(cold_counts[2]) / n == doctest::Approx(0.04 / z).epsilon(0.3));
}

TEST_CASE("near-deterministic conditionals generate the one-hot sequence") {
  const Vocabulary vocab = Vocabulary::from_residues("ACD");
  // candidate 'C' carries almost all mass at every position
  FixedModel model(vocab, 1, false, [](const std::vector<int>&, int, double) {
    return std::vector<double>{-40.0, -3.0e-9, -40.0};
  });
  Rng rng(4);
  for (const auto& s : sample_sequences(model, 0, 0.0, 20, 1.0, 5, rng)) {
    CHECK(s.tokens == std::vector<int>{3, 3, 3, 3, 3});
    CHECK(s.logprob == doctest::Approx(-1.5e-8).epsilon(1.0));
  }
}

TEST_CASE("EOS-enabled sampling terminates early and scores the full factorization") {
  const Vocabulary vocab = Vocabulary::from_residues("AC");
  // candidates: EOS, A, C with constant probabilities 0.4 / 0.3 / 0.3
  FixedModel model(vocab, 1, true, [](const std::vector<int>&, int, double) {
    return std::vector<double>{std::log(0.4), std::log(0.3), std::log(0.3)};
  });
  REQUIRE(model.eos_enabled());

  Rng rng(9);
  const auto seqs = sample_sequences(model, 0, 1.0, 400, 1.0, 4, rng);
  int empties = 0;
  bool saw_max_len = false;
  for (const auto& s : seqs) {
    CHECK(s.tokens.size() <= 4);
    if (s.tokens.empty()) ++empties;
    if (s.tokens.size() == 4) saw_max_len = true;
    // recorded score equals the model's own factorization, EOS factor included
    CHECK(s.logprob ==
          doctest::Approx(model.sequence_log_prob(s.tokens, 0, 1.0)).epsilon(1e-12));
  }
  CHECK(static_cast<double>(empties) / 400.0 == doctest::Approx(0.4).epsilon(0.25));
  CHECK(saw_max_len);  // P(len = 4) = 0.6^4 = 0.13, 400 draws make a miss implausible
}

TEST_CASE("sampling is seed-deterministic") {
  const Vocabulary vocab = Vocabulary::from_residues("ACD");
  FixedModel model = hashed_model(vocab, true);
  Rng r1(33), r2(33), r3(34);
  const auto a = sample_sequences(model, 1, 2.0, 25, 0.8, 6, r1);
  const auto b = sample_sequences(model, 1, 2.0, 25, 0.8, 6, r2);
  const auto c = sample_sequences(model, 1, 2.0, 25, 0.8, 6, r3);
  REQUIRE(a.size() == b.size());
  bool all_equal = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].logprob == b[i].logprob);
    if (i < c.size() && a[i].tokens != c[i].tokens) all_equal = false;
  }
  CHECK_FALSE(all_equal);
}

TEST_CASE("beam search with full width equals exhaustive enumeration, EOS disabled") {
  const Vocabulary vocab = Vocabulary::from_residues("ACD");
  FixedModel model = hashed_model(vocab, false);
  const int max_len = 3;

  std::vector<std::vector<int>> all;
  std::vector<int> cur;
  enumerate_fixed_len(model.candidates(), max_len, cur, all);
  REQUIRE(all.size() == 27);

  std::vector<GeneratedSeq> expect;
  for (const auto& tokens : all)
    expect.push_back({tokens, model.sequence_log_prob(tokens, 0, 1.5)});
  std::sort(expect.begin(), expect.end(), ordered_before);

  const auto beam = beam_search(model, 0, 1.5, 27, max_len);
  REQUIRE(beam.size() == 27);
  for (std::size_t i = 0; i < beam.size(); ++i) {
    CHECK(beam[i].tokens == expect[i].tokens);
    CHECK(beam[i].logprob == doctest::Approx(expect[i].logprob).epsilon(1e-12));
  }
}

TEST_CASE("beam search with full width equals exhaustive enumeration, EOS enabled") {
  const Vocabulary vocab = Vocabulary::from_residues("ACD");
  FixedModel model = hashed_model(vocab, true);
  const int max_len = 3;
  std::vector<int> residues;
  for (int c : model.candidates())
    if (c != Vocabulary::eos()) residues.push_back(c);

  // every residue string of length 0..max_len, scored with its EOS closing factor
  std::vector<GeneratedSeq> expect;
  for (int len = 0; len <= max_len; ++len) {
    std::vector<std::vector<int>> all;
    std::vector<int> cur;
    enumerate_fixed_len(residues, len, cur, all);
    for (const auto& tokens : all)
      expect.push_back({tokens, model.sequence_log_prob(tokens, 1, 0.7)});
  }
  REQUIRE(expect.size() == 1 + 3 + 9 + 27);
  std::sort(expect.begin(), expect.end(), ordered_before);

  const auto beam = beam_search(model, 1, 0.7, 64, max_len);
  REQUIRE(beam.size() == expect.size());
  for (std::size_t i = 0; i < beam.size(); ++i) {
    CHECK(beam[i].tokens == expect[i].tokens);
    CHECK(beam[i].logprob == doctest::Approx(expect[i].logprob).epsilon(1e-12));
  }
}

TEST_CASE("width-1 beam is the greedy argmax chain") {
  const Vocabulary vocab = Vocabulary::from_residues("ACDE");
  FixedModel model = hashed_model(vocab, false);
  const int max_len = 5;

  std::vector<int> greedy;
  double greedy_lp = 0.0;
  for (int step = 0; step < max_len; ++step) {
    const auto lps = model.next_token_log_probs(greedy, 0, 2.0);
    const std::size_t best = static_cast<std::size_t>(
        std::max_element(lps.begin(), lps.end()) - lps.begin());
    greedy_lp += lps[best];
    greedy.push_back(model.candidates()[best]);
  }

  const auto beam = beam_search(model, 0, 2.0, 1, max_len);
  REQUIRE(beam.size() == 1);
  CHECK(beam[0].tokens == greedy);
  CHECK(beam[0].logprob == doctest::Approx(greedy_lp).epsilon(1e-12));
}

TEST_CASE("beam results are sorted by score with lexicographic tie break") {
  const Vocabulary vocab = Vocabulary::from_residues("AC");
  FixedModel model = uniform_model(vocab, 1, false);  // every sequence ties
  const auto beam = beam_search(model, 0, 1.0, 4, 2);
  REQUIRE(beam.size() == 4);
  CHECK(beam[0].tokens == std::vector<int>{2, 2});
  CHECK(beam[1].tokens == std::vector<int>{2, 3});
  CHECK(beam[2].tokens == std::vector<int>{3, 2});
  CHECK(beam[3].tokens == std::vector<int>{3, 3});
  for (std::size_t i = 1; i < beam.size(); ++i)
    CHECK_FALSE(ordered_before(beam[i], beam[i - 1]));
}

TEST_CASE("narrow beams keep the best-scoring hypotheses") {
  const Vocabulary vocab = Vocabulary::from_residues("ACD");
  FixedModel model = hashed_model(vocab, false);
  const auto wide = beam_search(model, 0, 1.0, 27, 3);
  const auto narrow = beam_search(model, 0, 1.0, 5, 3);
  REQUIRE(narrow.size() == 5);
  // a pruned beam cannot beat the exhaustive best, and stays sorted
  CHECK(narrow[0].logprob <= wide[0].logprob + 1e-12);
  for (std::size_t i = 1; i < narrow.size(); ++i)
    CHECK(narrow[i - 1].logprob >= narrow[i].logprob);
}

TEST_CASE("generation argument validation") {
  const Vocabulary vocab = Vocabulary::from_residues("AC");
  FixedModel model = uniform_model(vocab, 1, false);
  Rng rng(1);
  CHECK_THROWS_AS((void)sample_sequences(model, 0, 1.0, -1, 1.0, 4, rng), config_error);
  CHECK_THROWS_AS((void)sample_sequences(model, 0, 1.0, 5, 1.0, 0, rng), config_error);
  CHECK_THROWS_AS((void)beam_search(model, 0, 1.0, 0, 4), config_error);
  CHECK_THROWS_AS((void)beam_search(model, 0, 1.0, 4, 0), config_error);
  CHECK(sample_sequences(model, 0, 1.0, 0, 1.0, 4, rng).empty());
}
