#include "vdyn/model.hpp"

#include <algorithm>
#include <cmath>

#include "vdyn/errors.hpp"

namespace vdyn {

bool SequenceModel::eos_enabled() const {
  return candidate_index(Vocabulary::eos()) >= 0;
}

int SequenceModel::candidate_index(int vocab_id) const {
  const auto& c = candidates();
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c[i] == vocab_id) return static_cast<int>(i);
  return -1;
}

double SequenceModel::sequence_log_prob(const std::vector<int>& residues, int location,
                                        double t) {
  double lp = 0.0;
  std::vector<int> prefix;
  prefix.reserve(residues.size());
  for (int tok : residues) {
    const int ci = candidate_index(tok);
    if (ci < 0)
      throw data_error("sequence_log_prob: token " + std::to_string(tok) +
                       " is not in the candidate set");
    lp += next_token_log_probs(prefix, location, t)[static_cast<std::size_t>(ci)];
    prefix.push_back(tok);
  }
  if (eos_enabled())
    lp += next_token_log_probs(prefix, location, t)[static_cast<std::size_t>(
        candidate_index(Vocabulary::eos()))];
  return lp;
}

namespace {

Tensor normal_init(std::vector<std::size_t> shape, double sd, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal(0.0, sd);
  return t;
}

std::vector<int> build_candidates(const Vocabulary& vocab, bool include_eos) {
  std::vector<int> out;
  for (int id = 1; id < vocab.size(); ++id) {
    if (id == Vocabulary::eos() && !include_eos) continue;
    out.push_back(id);
  }
  return out;
}

std::vector<int> build_cand_index(const Vocabulary& vocab, const std::vector<int>& cands) {
  std::vector<int> idx(static_cast<std::size_t>(vocab.size()), -1);
  for (std::size_t i = 0; i < cands.size(); ++i)
    idx[static_cast<std::size_t>(cands[i])] = static_cast<int>(i);
  return idx;
}

void add_linear_head(ParameterStore& store, const std::string& name, std::size_t in,
                     std::size_t out, Rng& rng, double bias_init = 0.0,
                     double weight_scale = 1.0) {
  store.add(name + ".w", normal_init({in, out},
                                     weight_scale / std::sqrt(static_cast<double>(in)), rng));
  Tensor b = Tensor::zeros({out});
  for (auto& v : b.data) v = bias_init;
  store.add(name + ".b", std::move(b));
}

}  // namespace

TransmissionModel::TransmissionModel(Vocabulary vocab, LocationRegistry locations,
                                     ModelConfig cfg, std::uint64_t seed)
    : vocab_(std::move(vocab)), registry_(std::move(locations)), cfg_(cfg) {
  const int m = registry_.size();
  if (m < 1) throw config_error("model needs at least one location");
  if (cfg_.lambda_group < 0.0) throw config_error("lambda_group must be >= 0");
  if (cfg_.hierarchical) {
    if (registry_.num_groups() == 0)
      throw config_error("hierarchical model requires a group for every location");
    groups_ = GroupStructure::from_assignment(registry_.group_of());
  } else {
    groups_ = GroupStructure::single_group(m);
  }
  if (cfg_.eig_top_k < 0) throw config_error("eig_top_k must be >= 0");

  candidates_ = build_candidates(vocab_, cfg_.include_eos);
  cand_index_of_ = build_cand_index(vocab_, candidates_);

  rate_chunk_ = 0;
  for (const auto& mem : groups_.members) {
    block_off_.push_back(rate_chunk_);
    rate_chunk_ += mem.size() * mem.size();
  }
  assemble_perm_.resize(static_cast<std::size_t>(m));
  std::size_t start = 0;
  for (const auto& mem : groups_.members) {
    for (std::size_t k = 0; k < mem.size(); ++k)
      assemble_perm_[static_cast<std::size_t>(mem[k])] = static_cast<int>(start + k);
    start += mem.size();
  }

  const std::size_t g_count = groups_.members.size();
  inter_mask_ = Tensor({static_cast<std::size_t>(m), g_count});
  for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i)
    for (std::size_t gi = 0; gi < g_count; ++gi)
      inter_mask_.at(i, gi) = groups_.group_of[i] == static_cast<int>(gi) ? 0.0 : 1.0;
  offdiag_mask_ = Tensor({g_count, g_count});
  for (std::size_t i = 0; i < g_count; ++i)
    for (std::size_t j = 0; j < g_count; ++j)
      offdiag_mask_.at(i, j) = i == j ? 0.0 : 1.0;

  Rng rng(seed);
  enc_ = std::make_unique<Encoder>(store_, "enc", vocab_.size(), cfg_.encoder, rng);
  if (!cfg_.share_encoders)
    enc_boundary_ =
        std::make_unique<Encoder>(store_, "enc_b", vocab_.size(), cfg_.encoder, rng);

  const std::size_t h = static_cast<std::size_t>(cfg_.encoder.hidden_dim);
  const std::size_t c = candidates_.size();
  const std::size_t mm = static_cast<std::size_t>(m);
  const std::size_t g = static_cast<std::size_t>(groups_.num_groups());
  // Rate heads start slow and nearly symmetric across location pairs: the
  // bias puts initial rates at softplus(rate_bias_init) and the small weight
  // scale keeps pair-to-pair spread below the signal training adds, so the
  // learned ordering of rates reflects the data rather than the init draw.
  add_linear_head(store_, "head.rate", h, c * rate_chunk_, rng, cfg_.rate_bias_init, 0.1);
  add_linear_head(store_, "head.boundary", h, c * mm, rng);
  if (cfg_.hierarchical) {
    const std::size_t inter_out =
        cfg_.inter_mode == InterMode::G2L ? c * mm * g : c * (g * g + mm);
    add_linear_head(store_, "head.inter", h, inter_out, rng);
    add_linear_head(store_, "head.aux_rate", h, c * g * g, rng, cfg_.rate_bias_init, 0.1);
    add_linear_head(store_, "head.aux_b", h, c * g, rng);
  }
}

NodeId TransmissionModel::head_linear(Graph& g, NodeId hidden, const std::string& name) {
  return g.add(g.matmul(hidden, g.param(store_.at(name + ".w"))),
               g.param(store_.at(name + ".b")));
}

TransmissionModel::HeadRows TransmissionModel::heads(Graph& g, const std::vector<int>& ids,
                                                     bool last_only) {
  const NodeId hid = last_only ? enc_->forward_last(g, ids) : enc_->forward(g, ids);
  NodeId hid_b = hid;
  if (enc_boundary_)
    hid_b = last_only ? enc_boundary_->forward_last(g, ids) : enc_boundary_->forward(g, ids);
  HeadRows h;
  h.rate = head_linear(g, hid, "head.rate");
  h.boundary = head_linear(g, hid_b, "head.boundary");
  if (cfg_.hierarchical) {
    h.inter = head_linear(g, hid, "head.inter");
    h.aux_rate = head_linear(g, hid, "head.aux_rate");
    h.aux_b = head_linear(g, hid, "head.aux_b");
  }
  return h;
}

NodeId TransmissionModel::positive(Graph& g, NodeId x) {
  return cfg_.positivity == Positivity::Softplus ? g.softplus(x) : g.sigmoid(x);
}

std::vector<int> TransmissionModel::with_bos(const std::vector<int>& residues) const {
  std::vector<int> ids;
  ids.reserve(residues.size() + 1);
  ids.push_back(Vocabulary::bos());
  for (int tok : residues) {
    if (!vocab_.is_residue(tok))
      throw data_error("prefix token " + std::to_string(tok) + " is not a residue");
    ids.push_back(tok);
  }
  return ids;
}

TransmissionModel::PosNodes TransmissionModel::eval_position(Graph& g, const HeadRows& h,
                                                             std::size_t pos, double t,
                                                             ForwardStats* stats,
                                                             bool want_group_terms) {
  const std::size_t c_count = candidates_.size();
  const std::size_t m = static_cast<std::size_t>(registry_.size());
  const std::size_t n_groups = groups_.members.size();
  const bool hier = cfg_.hierarchical;

  const NodeId bmat = g.softmax(g.reshape(g.row(h.boundary, pos), {c_count, m}), 0);
  const NodeId rrow = g.row(h.rate, pos);
  const NodeId irow = hier ? g.row(h.inter, pos) : -1;
  const NodeId arow = hier ? g.row(h.aux_rate, pos) : -1;
  const NodeId abrow = hier ? g.row(h.aux_b, pos) : -1;

  struct BlockEig {
    NodeId lam = -1;  // possibly truncated
    NodeId u = -1;
    std::size_t sz = 0;
    std::size_t keep = 0;
  };
  std::vector<std::vector<BlockEig>> eigs(c_count);
  std::vector<BlockEig> aux_eigs(hier ? c_count : 0);
  // Every eigenvalue vector feeds a shared max node; the rescale exponent
  // exp((lambda - shift) t) then stays differentiable through the shift,
  // which the group-consistency penalty needs (probability ratios cancel the
  // shift either way, the penalty does not).
  std::vector<NodeId> all_lams;
  auto track_shift = [&](NodeId full_lam) { all_lams.push_back(full_lam); };

  for (std::size_t c = 0; c < c_count; ++c) {
    eigs[c].resize(n_groups);
    for (std::size_t gi = 0; gi < n_groups; ++gi) {
      const std::size_t sz = groups_.members[gi].size();
      const NodeId raw = g.reshape(
          g.slice(rrow, c * rate_chunk_ + block_off_[gi], sz * sz), {sz, sz});
      const NodeId sym = g.scale(g.add(raw, g.transpose(raw)), 0.5);
      auto [lam, u] = g.sym_eig(positive(g, sym));
      track_shift(lam);
      BlockEig be;
      be.sz = sz;
      be.keep = sz;
      if (cfg_.eig_top_k > 0 && static_cast<std::size_t>(cfg_.eig_top_k) < sz) {
        be.keep = static_cast<std::size_t>(cfg_.eig_top_k);
        lam = g.slice(lam, sz - be.keep, be.keep);
        u = g.slice_cols(u, sz - be.keep, be.keep);
      }
      be.lam = lam;
      be.u = u;
      eigs[c][gi] = be;
    }
    if (hier) {
      const NodeId raw =
          g.reshape(g.slice(arow, c * n_groups * n_groups, n_groups * n_groups),
                    {n_groups, n_groups});
      const NodeId sym = g.scale(g.add(raw, g.transpose(raw)), 0.5);
      auto [lam, u] = g.sym_eig(positive(g, sym));
      track_shift(lam);
      aux_eigs[c] = {lam, u, n_groups, n_groups};
    }
  }
  const NodeId shift_node = cfg_.rescale ? g.reduce_max(all_lams) : -1;

  auto evolve = [&](const BlockEig& be, NodeId n0) {
    const NodeId cvec = g.matmul(g.transpose(be.u), n0);
    const NodeId expo =
        cfg_.rescale
            ? g.sub(be.lam, g.gather(shift_node, std::vector<int>(be.keep, 0)))
            : be.lam;
    const NodeId eterm = g.exp(g.scale(expo, t));
    return g.matmul(be.u, g.mul(eterm, cvec));
  };

  PosNodes out;
  if (want_group_terms) {
    out.block.resize(c_count);
    if (hier) out.aux.resize(c_count);
  }
  std::vector<NodeId> occ_rows(c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    const NodeId n0_full = g.row(bmat, c);
    std::vector<NodeId> blocks(n_groups);
    for (std::size_t gi = 0; gi < n_groups; ++gi) {
      const NodeId n0_g =
          n_groups == 1 ? n0_full : g.gather(n0_full, groups_.members[gi]);
      blocks[gi] = evolve(eigs[c][gi], n0_g);
    }
    const NodeId intra =
        n_groups == 1 ? blocks[0] : g.gather(g.concat(blocks), assemble_perm_);

    NodeId total = intra;
    NodeId aux_occ = -1;
    if (hier) {
      const NodeId aux_n0 = g.softplus(g.slice(abrow, c * n_groups, n_groups));
      aux_occ = g.clamp_min(evolve(aux_eigs[c], aux_n0), 1e-300, stats);
      NodeId inter;
      if (cfg_.inter_mode == InterMode::G2L) {
        const NodeId w =
            g.reshape(g.slice(irow, c * m * n_groups, m * n_groups), {m, n_groups});
        inter = g.matmul(g.mul(w, g.constant(inter_mask_)), aux_occ);
      } else {
        const std::size_t chunk = n_groups * n_groups + m;
        const NodeId cg = g.reshape(g.slice(irow, c * chunk, n_groups * n_groups),
                                    {n_groups, n_groups});
        const NodeId dg = g.slice(irow, c * chunk + n_groups * n_groups, m);
        const NodeId s = g.matmul(g.mul(cg, g.constant(offdiag_mask_)), aux_occ);
        inter = g.mul(dg, g.gather(s, groups_.group_of));
      }
      total = g.add(intra, inter);
    }
    occ_rows[c] = g.clamp_min(total, 1e-300, stats);
    if (want_group_terms) {
      out.block[c] = blocks;
      if (hier) out.aux[c] = aux_occ;
    }
  }
  out.occ = g.stack_rows(occ_rows);
  return out;
}

NodeId TransmissionModel::sequence_log_prob_node(Graph& g, const Sample& sample,
                                                 ForwardStats* stats) {
  if (sample.location < 0 || sample.location >= registry_.size())
    throw data_error("sample '" + sample.id + "' has an out-of-range location");
  const std::vector<int> ids = with_bos(sample.tokens);
  const HeadRows h = heads(g, ids, false);
  const std::size_t l = sample.tokens.size();
  const std::size_t n_pos = cfg_.include_eos ? l + 1 : l;
  std::vector<NodeId> logps;
  logps.reserve(n_pos);
  for (std::size_t p = 0; p < n_pos; ++p) {
    const int realized = p < l ? sample.tokens[p] : Vocabulary::eos();
    const int ci = cand_index_of_.at(static_cast<std::size_t>(realized));
    if (ci < 0)
      throw data_error("sample '" + sample.id + "' uses token " + std::to_string(realized) +
                       " outside the candidate set");
    const PosNodes r = eval_position(g, h, p, sample.time, stats, false);
    const NodeId colv = g.col(r.occ, static_cast<std::size_t>(sample.location));
    logps.push_back(g.sub(g.log(g.pick(colv, static_cast<std::size_t>(ci))),
                          g.log(g.sum_all(colv))));
  }
  return g.add_n(logps);
}

NodeId TransmissionModel::loss_node(Graph& g, const std::vector<const Sample*>& batch,
                                    ForwardStats* stats) {
  if (batch.empty()) throw data_error("loss_node: empty batch");
  std::vector<NodeId> per_sample;
  per_sample.reserve(batch.size());
  for (const Sample* sp : batch) {
    const Sample& sample = *sp;
    if (sample.location < 0 || sample.location >= registry_.size())
      throw data_error("sample '" + sample.id + "' has an out-of-range location");
    const std::vector<int> ids = with_bos(sample.tokens);
    const HeadRows h = heads(g, ids, false);
    const std::size_t l = sample.tokens.size();
    const std::size_t n_pos = cfg_.include_eos ? l + 1 : l;
    const int group = groups_.group_of[static_cast<std::size_t>(sample.location)];
    std::vector<NodeId> logps, gpens;
    for (std::size_t p = 0; p < n_pos; ++p) {
      const int realized = p < l ? sample.tokens[p] : Vocabulary::eos();
      const int ci = cand_index_of_.at(static_cast<std::size_t>(realized));
      if (ci < 0)
        throw data_error("sample '" + sample.id + "' uses token " +
                         std::to_string(realized) + " outside the candidate set");
      const PosNodes r = eval_position(g, h, p, sample.time, stats, cfg_.hierarchical);
      const NodeId colv = g.col(r.occ, static_cast<std::size_t>(sample.location));
      logps.push_back(g.sub(g.log(g.pick(colv, static_cast<std::size_t>(ci))),
                            g.log(g.sum_all(colv))));
      if (cfg_.hierarchical) {
        const NodeId block_sum =
            g.sum_all(r.block[static_cast<std::size_t>(ci)][static_cast<std::size_t>(group)]);
        const NodeId aux_val = g.pick(r.aux[static_cast<std::size_t>(ci)],
                                      static_cast<std::size_t>(group));
        const NodeId d = g.sub(block_sum, aux_val);
        gpens.push_back(g.mul(d, d));
      }
    }
    NodeId loss_s = g.scale(g.add_n(logps), -1.0);
    if (cfg_.hierarchical && cfg_.lambda_group > 0.0)
      loss_s = g.add(loss_s, g.scale(g.add_n(gpens), cfg_.lambda_group));
    per_sample.push_back(loss_s);
  }
  return g.scale(g.add_n(per_sample), 1.0 / static_cast<double>(batch.size()));
}

std::vector<double> TransmissionModel::next_token_log_probs(const std::vector<int>& prefix,
                                                            int location, double t) {
  if (location < 0 || location >= registry_.size())
    throw data_error("next_token_log_probs: location out of range");
  Graph g;
  const HeadRows h = heads(g, with_bos(prefix), true);
  const PosNodes r = eval_position(g, h, 0, t, nullptr, false);
  const Tensor& occ = g.value(r.occ);
  const std::size_t c_count = candidates_.size();
  const std::size_t m = static_cast<std::size_t>(registry_.size());
  std::vector<double> lp(c_count);
  double denom = 0.0;
  for (std::size_t c = 0; c < c_count; ++c)
    denom += occ.data[c * m + static_cast<std::size_t>(location)];
  const double log_denom = std::log(denom);
  for (std::size_t c = 0; c < c_count; ++c)
    lp[c] = std::log(occ.data[c * m + static_cast<std::size_t>(location)]) - log_denom;
  return lp;
}

RateBundle TransmissionModel::numeric_bundle(const std::vector<int>& prefix) {
  if (cfg_.hierarchical)
    throw data_error("rate matrices are only materialized by the non-hierarchical model");
  Graph g;
  const HeadRows h = heads(g, with_bos(prefix), true);
  const std::size_t c_count = candidates_.size();
  const std::size_t m = static_cast<std::size_t>(registry_.size());
  const NodeId rrow = g.row(h.rate, 0);
  const NodeId bmat = g.softmax(g.reshape(g.row(h.boundary, 0), {c_count, m}), 0);
  RateBundle out;
  out.m = m;
  for (std::size_t c = 0; c < c_count; ++c) {
    const NodeId raw = g.reshape(g.slice(rrow, c * m * m, m * m), {m, m});
    const NodeId a = positive(g, g.scale(g.add(raw, g.transpose(raw)), 0.5));
    out.A.push_back(g.value(a).data);
    const Tensor& bv = g.value(bmat);
    out.n0.emplace_back(bv.data.begin() + static_cast<std::ptrdiff_t>(c * m),
                        bv.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * m));
  }
  return out;
}

GlobalModel::GlobalModel(Vocabulary vocab, int num_locations, ModelConfig cfg,
                         std::uint64_t seed)
    : vocab_(std::move(vocab)), num_locations_(num_locations), cfg_(cfg) {
  if (num_locations_ < 1) throw config_error("model needs at least one location");
  candidates_ = build_candidates(vocab_, cfg_.include_eos);
  cand_index_of_ = build_cand_index(vocab_, candidates_);
  Rng rng(seed);
  enc_ = std::make_unique<Encoder>(store_, "enc", vocab_.size(), cfg_.encoder, rng);
  const std::size_t h = static_cast<std::size_t>(cfg_.encoder.hidden_dim);
  add_linear_head(store_, "head.a", h, candidates_.size(), rng);
  add_linear_head(store_, "head.b", h, candidates_.size(), rng);
}

NodeId GlobalModel::position_log_probs(Graph& g, NodeId hidden, std::size_t pos, double t) {
  const NodeId arow = g.row(g.add(g.matmul(hidden, g.param(store_.at("head.a.w"))),
                                  g.param(store_.at("head.a.b"))),
                            pos);
  const NodeId brow = g.row(g.add(g.matmul(hidden, g.param(store_.at("head.b.w"))),
                                  g.param(store_.at("head.b.b"))),
                            pos);
  return g.log(g.softmax(g.add(g.scale(arow, t), brow)));
}

std::vector<double> GlobalModel::next_token_log_probs(const std::vector<int>& prefix,
                                                      int location, double t) {
  (void)location;
  Graph g;
  std::vector<int> ids;
  ids.push_back(Vocabulary::bos());
  ids.insert(ids.end(), prefix.begin(), prefix.end());
  const NodeId lp = position_log_probs(g, enc_->forward_last(g, ids), 0, t);
  return g.value(lp).data;
}

NodeId GlobalModel::loss_node(Graph& g, const std::vector<const Sample*>& batch,
                              ForwardStats* stats) {
  (void)stats;
  if (batch.empty()) throw data_error("loss_node: empty batch");
  std::vector<NodeId> per_sample;
  for (const Sample* sp : batch) {
    const Sample& sample = *sp;
    std::vector<int> ids;
    ids.push_back(Vocabulary::bos());
    ids.insert(ids.end(), sample.tokens.begin(), sample.tokens.end());
    const NodeId hidden = enc_->forward(g, ids);
    const std::size_t l = sample.tokens.size();
    const std::size_t n_pos = cfg_.include_eos ? l + 1 : l;
    std::vector<NodeId> logps;
    for (std::size_t p = 0; p < n_pos; ++p) {
      const int realized = p < l ? sample.tokens[p] : Vocabulary::eos();
      const int ci = cand_index_of_.at(static_cast<std::size_t>(realized));
      if (ci < 0)
        throw data_error("sample '" + sample.id + "' uses token " +
                         std::to_string(realized) + " outside the candidate set");
      logps.push_back(g.pick(position_log_probs(g, hidden, p, sample.time),
                             static_cast<std::size_t>(ci)));
    }
    per_sample.push_back(g.scale(g.add_n(logps), -1.0));
  }
  return g.scale(g.add_n(per_sample), 1.0 / static_cast<double>(batch.size()));
}

}  // namespace vdyn
