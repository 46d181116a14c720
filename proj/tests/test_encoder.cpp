#include <vector>

#include "doctest.h"
#include "vdyn/encoder.hpp"
#include "vdyn/errors.hpp"
#include "vdyn/rng.hpp"

using namespace vdyn;

namespace {

EncoderConfig tiny() {
  EncoderConfig cfg;
  cfg.embed_dim = 6;
  cfg.hidden_dim = 10;
  cfg.num_layers = 2;
  cfg.window = 3;
  cfg.max_positions = 16;
  return cfg;
}

}  // namespace

TEST_CASE("encoder output is causal") {
  ParameterStore store;
  Rng rng(3);
  Encoder enc(store, "enc", 8, tiny(), rng);

  std::vector<int> ids = {0, 2, 3, 4, 5, 2};
  Graph g;
  Tensor base = g.value(enc.forward(g, ids));

  for (std::size_t flip = 1; flip < ids.size(); flip++) {
    std::vector<int> mutated = ids;
    mutated[flip] = (ids[flip] == 2) ? 3 : 2;
    Graph g2;
    Tensor out = g2.value(enc.forward(g2, mutated));
    const std::size_t h = base.shape[1];
    for (std::size_t s = 0; s < ids.size(); s++) {
      bool same = true;
      for (std::size_t j = 0; j < h; j++) {
        if (base.data[s * h + j] != out.data[s * h + j]) same = false;
      }
      if (s < flip) {
        CHECK(same);  // earlier rows cannot see the change
      } else if (s == flip) {
        CHECK(!same);  // the changed position must see itself
      }
    }
  }
}

TEST_CASE("positions beyond the window are forgotten") {
  ParameterStore store;
  Rng rng(4);
  Encoder enc(store, "enc", 8, tiny(), rng);  // window 3

  // Row s sees positions s-2..s. Editing index 2 must change rows 2..4 and
  // leave row 5 untouched.
  std::vector<int> a = {0, 2, 3, 4, 5, 6};
  std::vector<int> b = {0, 2, 7, 4, 5, 6};  // differs at index 2
  Graph ga, gb;
  Tensor ta = ga.value(enc.forward(ga, a));
  Tensor tb = gb.value(enc.forward(gb, b));
  const std::size_t h = ta.shape[1];
  for (std::size_t j = 0; j < h; j++) {
    CHECK(ta.data[5 * h + j] == tb.data[5 * h + j]);  // index 2 fell out of the window
  }
  for (std::size_t s = 2; s <= 4; s++) {
    bool same = true;
    for (std::size_t j = 0; j < h; j++) {
      if (ta.data[s * h + j] != tb.data[s * h + j]) same = false;
    }
    CHECK(!same);
  }
}

TEST_CASE("forward_last reproduces the last row of forward") {
  ParameterStore store;
  Rng rng(5);
  Encoder enc(store, "enc", 9, tiny(), rng);

  for (int len = 1; len <= 9; len++) {
    std::vector<int> ids;
    ids.push_back(0);
    for (int i = 1; i < len; i++) ids.push_back(2 + (i * 3) % 7);
    Graph g1, g2;
    Tensor full = g1.value(enc.forward(g1, ids));
    Tensor last = g2.value(enc.forward_last(g2, ids));
    REQUIRE(last.shape == std::vector<std::size_t>{1, full.shape[1]});
    const std::size_t h = full.shape[1];
    for (std::size_t j = 0; j < h; j++) {
      CHECK(last.data[j] == doctest::Approx(full.data[(ids.size() - 1) * h + j])
                                .epsilon(1e-14));
    }
  }
}

TEST_CASE("sequences beyond max_positions are rejected") {
  ParameterStore store;
  Rng rng(6);
  Encoder enc(store, "enc", 8, tiny(), rng);
  std::vector<int> ids(17, 2);
  ids[0] = 0;
  Graph g;
  CHECK_THROWS_AS(enc.forward(g, ids), data_error);
}

TEST_CASE("same seed gives identical parameters, different seeds differ") {
  ParameterStore s1, s2, s3;
  Rng r1(7), r2(7), r3(8);
  Encoder e1(s1, "enc", 8, tiny(), r1);
  Encoder e2(s2, "enc", 8, tiny(), r2);
  Encoder e3(s3, "enc", 8, tiny(), r3);
  CHECK(s1.at("enc.tok_emb").value.data == s2.at("enc.tok_emb").value.data);
  CHECK(s1.at("enc.tok_emb").value.data != s3.at("enc.tok_emb").value.data);
}
