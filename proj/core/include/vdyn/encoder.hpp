#pragma once

#include <string>
#include <vector>

#include "vdyn/params.hpp"
#include "vdyn/rng.hpp"
#include "vdyn/tape.hpp"

namespace vdyn {

struct EncoderConfig {
  int embed_dim = 32;
  int hidden_dim = 128;
  int num_layers = 2;
  int window = 16;
  int max_positions = 512;
};

// Causal sequence encoder: token+position embeddings, a sliding window of the
// last `window` positions concatenated per step (zero padded on the left),
// then an MLP with silu activations. Row s of the output depends only on
// tokens 0..s.
class Encoder {
 public:
  Encoder(ParameterStore& store, std::string prefix, int vocab_size, EncoderConfig cfg,
          Rng& rng);

  // [L, hidden_dim] for the whole input (ids include BOS at the front).
  NodeId forward(Graph& g, const std::vector<int>& ids) const;

  // [1, hidden_dim] for the final position only; same values as the last row
  // of forward(). Generation uses this to avoid re-encoding whole prefixes.
  NodeId forward_last(Graph& g, const std::vector<int>& ids) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  NodeId mlp(Graph& g, NodeId windowed) const;

  ParameterStore* store_;
  std::string prefix_;
  EncoderConfig cfg_;
};

}  // namespace vdyn
