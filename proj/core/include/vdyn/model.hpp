#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vdyn/corpus.hpp"
#include "vdyn/encoder.hpp"
#include "vdyn/groups.hpp"
#include "vdyn/params.hpp"
#include "vdyn/tape.hpp"

namespace vdyn {

// Inter-group coupling for the hierarchical model: G2L mixes auxiliary group
// occurrences into each location with per-location weights; G2G couples group
// to group first, then distributes to locations through a per-location gate.
enum class InterMode { G2L, G2G };

// Rate-matrix positivity map applied to the symmetrized head output.
enum class Positivity { Softplus, Sigmoid };

struct ModelConfig {
  EncoderConfig encoder;
  bool hierarchical = false;
  InterMode inter_mode = InterMode::G2L;
  Positivity positivity = Positivity::Softplus;
  bool share_encoders = true;  // false: the boundary head gets its own encoder
  int eig_top_k = 0;           // 0 = full spectrum, else keep top-k modes per block
  bool rescale = true;         // exp((lambda - lambda_max) t) instead of exp(lambda t)
  bool include_eos = true;     // EOS is a candidate and sequences carry an EOS factor
  double lambda_group = 0.1;   // weight of the group-consistency penalty
  // Bias added to the rate heads' pre-activations at init. Negative values
  // start the dynamics slow (softplus(-3) ~ 0.05), keeping exp(A t) in its
  // transient regime over typical horizons instead of saturating to the top
  // eigenvector, which would flatten the gradients that separate locations.
  double rate_bias_init = -3.0;
};

// Interface used by generation and evaluation. Prefixes are residue token
// ids without BOS; the model prepends BOS itself.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual const Vocabulary& vocab() const = 0;
  virtual const std::vector<int>& candidates() const = 0;  // vocab ids, ascending
  virtual int num_locations() const = 0;

  // log p(next token | prefix, location, t), aligned with candidates().
  virtual std::vector<double> next_token_log_probs(const std::vector<int>& prefix,
                                                   int location, double t) = 0;

  bool eos_enabled() const;
  int candidate_index(int vocab_id) const;  // -1 if not a candidate

  // Sum of per-position conditional log probs; includes the terminal EOS
  // factor when EOS is a candidate.
  double sequence_log_prob(const std::vector<int>& residues, int location, double t);
};

// Interface used by the trainer.
class TrainableModel {
 public:
  virtual ~TrainableModel() = default;
  virtual ParameterStore& params() = 0;
  virtual NodeId loss_node(Graph& g, const std::vector<const Sample*>& batch,
                           ForwardStats* stats) = 0;
};

// Numeric snapshot of the per-candidate dynamics at one position
// (non-hierarchical models only).
struct RateBundle {
  std::size_t m = 0;
  std::vector<std::vector<double>> A;   // per candidate, m*m row-major
  std::vector<std::vector<double>> n0;  // per candidate, m
};

// Autoregressive sub-population occurrence model. Each candidate token's
// occurrence vector over locations evolves as dN/dt = A N from a learned
// boundary condition; the next-token distribution at a location is the
// normalized occurrence there. The hierarchical variant splits locations
// into groups, evolves each group's block independently, and adds an
// inter-group term driven by an auxiliary group-level system.
class TransmissionModel : public SequenceModel, public TrainableModel {
 public:
  TransmissionModel(Vocabulary vocab, LocationRegistry locations, ModelConfig cfg,
                    std::uint64_t seed);

  const Vocabulary& vocab() const override { return vocab_; }
  const std::vector<int>& candidates() const override { return candidates_; }
  int num_locations() const override { return registry_.size(); }
  std::vector<double> next_token_log_probs(const std::vector<int>& prefix, int location,
                                           double t) override;

  ParameterStore& params() override { return store_; }
  NodeId loss_node(Graph& g, const std::vector<const Sample*>& batch,
                   ForwardStats* stats) override;

  // Scalar node for one sample's log probability (used by loss and tests).
  NodeId sequence_log_prob_node(Graph& g, const Sample& sample, ForwardStats* stats);

  const ModelConfig& config() const { return cfg_; }
  const LocationRegistry& locations() const { return registry_; }
  const GroupStructure& groups() const { return groups_; }

  RateBundle numeric_bundle(const std::vector<int>& prefix);

 private:
  struct HeadRows {
    NodeId rate = -1;
    NodeId boundary = -1;
    NodeId inter = -1;
    NodeId aux_rate = -1;
    NodeId aux_b = -1;
  };
  struct PosNodes {
    NodeId occ = -1;                        // [C, m]
    std::vector<std::vector<NodeId>> block; // [C][G] intra-block occurrences
    std::vector<NodeId> aux;                // [C] auxiliary group occurrences
  };

  HeadRows heads(Graph& g, const std::vector<int>& ids, bool last_only);
  NodeId head_linear(Graph& g, NodeId hidden, const std::string& name);
  PosNodes eval_position(Graph& g, const HeadRows& h, std::size_t pos, double t,
                         ForwardStats* stats, bool want_group_terms);
  NodeId positive(Graph& g, NodeId x);
  std::vector<int> with_bos(const std::vector<int>& residues) const;

  Vocabulary vocab_;
  LocationRegistry registry_;
  GroupStructure groups_;
  ModelConfig cfg_;
  ParameterStore store_;
  std::unique_ptr<Encoder> enc_;
  std::unique_ptr<Encoder> enc_boundary_;  // null when encoders are shared

  std::vector<int> candidates_;
  std::vector<int> cand_index_of_;   // vocab id -> candidate index or -1
  std::vector<std::size_t> block_off_;  // per group, offset into a candidate's rate chunk
  std::size_t rate_chunk_ = 0;          // sum of block sizes squared
  std::vector<int> assemble_perm_;      // location -> index in group-major concat
  Tensor inter_mask_;    // [m, G]: zero at a location's own group
  Tensor offdiag_mask_;  // [G, G]: zero diagonal
};

// Location-free baseline: per-token logits a(x_s, x_<s) t + b(x_s, x_<s),
// softmax over candidates. Also serves as the held-out scoring oracle.
class GlobalModel : public SequenceModel, public TrainableModel {
 public:
  GlobalModel(Vocabulary vocab, int num_locations, ModelConfig cfg, std::uint64_t seed);

  const Vocabulary& vocab() const override { return vocab_; }
  const std::vector<int>& candidates() const override { return candidates_; }
  int num_locations() const override { return num_locations_; }
  std::vector<double> next_token_log_probs(const std::vector<int>& prefix, int location,
                                           double t) override;

  ParameterStore& params() override { return store_; }
  NodeId loss_node(Graph& g, const std::vector<const Sample*>& batch,
                   ForwardStats* stats) override;

  const ModelConfig& config() const { return cfg_; }

 private:
  NodeId position_log_probs(Graph& g, NodeId hidden, std::size_t pos, double t);

  Vocabulary vocab_;
  int num_locations_;
  ModelConfig cfg_;
  ParameterStore store_;
  std::unique_ptr<Encoder> enc_;
  std::vector<int> candidates_;
  std::vector<int> cand_index_of_;
};

}  // namespace vdyn
