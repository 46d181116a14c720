#include "vdyn/encoder.hpp"

#include <cmath>
#include <numeric>

#include "vdyn/errors.hpp"

namespace vdyn {

namespace {

Tensor normal_init(std::vector<std::size_t> shape, double sd, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal(0.0, sd);
  return t;
}

NodeId silu(Graph& g, NodeId x) { return g.mul(x, g.sigmoid(x)); }

}  // namespace

Encoder::Encoder(ParameterStore& store, std::string prefix, int vocab_size,
                 EncoderConfig cfg, Rng& rng)
    : store_(&store), prefix_(std::move(prefix)), cfg_(cfg) {
  if (cfg_.embed_dim < 1 || cfg_.hidden_dim < 1 || cfg_.num_layers < 1 ||
      cfg_.window < 1 || cfg_.max_positions < 1)
    throw config_error("encoder dimensions must be positive");
  const auto e = static_cast<std::size_t>(cfg_.embed_dim);
  const auto h = static_cast<std::size_t>(cfg_.hidden_dim);
  const auto w = static_cast<std::size_t>(cfg_.window);
  store.add(prefix_ + ".tok_emb",
            normal_init({static_cast<std::size_t>(vocab_size), e}, 0.1, rng));
  store.add(prefix_ + ".pos_emb",
            normal_init({static_cast<std::size_t>(cfg_.max_positions), e}, 0.1, rng));
  std::size_t fan_in = w * e;
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string lp = prefix_ + ".l" + std::to_string(l);
    store.add(lp + ".w", normal_init({fan_in, h}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
    store.add(lp + ".b", Tensor::zeros({h}));
    fan_in = h;
  }
}

NodeId Encoder::mlp(Graph& g, NodeId x) const {
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string lp = prefix_ + ".l" + std::to_string(l);
    x = silu(g, g.add(g.matmul(x, g.param(store_->at(lp + ".w"))),
                      g.param(store_->at(lp + ".b"))));
  }
  return x;
}

NodeId Encoder::forward(Graph& g, const std::vector<int>& ids) const {
  if (ids.empty()) throw data_error("encoder: empty input");
  if (ids.size() > static_cast<std::size_t>(cfg_.max_positions))
    throw data_error("encoder: input length " + std::to_string(ids.size()) +
                     " exceeds max positions " + std::to_string(cfg_.max_positions));
  std::vector<int> positions(ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  const NodeId emb = g.add(g.embedding(g.param(store_->at(prefix_ + ".tok_emb")), ids),
                           g.embedding(g.param(store_->at(prefix_ + ".pos_emb")), positions));
  return mlp(g, g.causal_window(emb, cfg_.window));
}

NodeId Encoder::forward_last(Graph& g, const std::vector<int>& ids) const {
  if (ids.empty()) throw data_error("encoder: empty input");
  if (ids.size() > static_cast<std::size_t>(cfg_.max_positions))
    throw data_error("encoder: input length " + std::to_string(ids.size()) +
                     " exceeds max positions " + std::to_string(cfg_.max_positions));
  const std::size_t l = ids.size();
  const std::size_t w = static_cast<std::size_t>(cfg_.window);
  const std::size_t e = static_cast<std::size_t>(cfg_.embed_dim);
  const std::size_t take = std::min(l, w);

  std::vector<int> win_ids(ids.end() - static_cast<std::ptrdiff_t>(take), ids.end());
  std::vector<int> win_pos(take);
  std::iota(win_pos.begin(), win_pos.end(), static_cast<int>(l - take));
  const NodeId emb = g.add(g.embedding(g.param(store_->at(prefix_ + ".tok_emb")), win_ids),
                           g.embedding(g.param(store_->at(prefix_ + ".pos_emb")), win_pos));
  NodeId flat = g.reshape(emb, {take * e});
  if (take < w) {
    const NodeId pad = g.constant(Tensor::zeros({(w - take) * e}));
    flat = g.concat({pad, flat});
  }
  return mlp(g, g.reshape(flat, {1, w * e}));
}

}  // namespace vdyn
