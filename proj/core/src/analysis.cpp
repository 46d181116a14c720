#include "vdyn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vdyn/errors.hpp"

namespace vdyn {

std::vector<double> avg_rate_matrix(TransmissionModel& model,
                                    const std::vector<Sample>& samples) {
  const std::size_t m = static_cast<std::size_t>(model.num_locations());
  std::vector<double> acc(m * m, 0.0);
  long long positions = 0;
  for (const Sample& s : samples) {
    std::vector<int> prefix;
    prefix.reserve(s.tokens.size());
    for (int tok : s.tokens) {
      const int ci = model.candidate_index(tok);
      if (ci < 0)
        throw data_error("avg_rate_matrix: sample '" + s.id +
                         "' uses a token outside the candidate set");
      const RateBundle bundle = model.numeric_bundle(prefix);
      const auto& a = bundle.A[static_cast<std::size_t>(ci)];
      for (std::size_t k = 0; k < m * m; ++k) acc[k] += a[k];
      ++positions;
      prefix.push_back(tok);
    }
  }
  if (positions == 0) throw data_error("avg_rate_matrix: no scored positions");
  for (double& v : acc) v /= static_cast<double>(positions);
  return acc;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  bool unite(int a, int b) {
    const int ra = find(a), rb = find(b);
    if (ra == rb) return false;
    parent[static_cast<std::size_t>(rb)] = ra;
    return true;
  }
};

}  // namespace

std::vector<TreeEdge> max_spanning_tree(const std::vector<double>& weights, std::size_t m) {
  if (weights.size() != m * m)
    throw std::invalid_argument("max_spanning_tree: weight matrix size does not match m");
  if (m == 0) throw std::invalid_argument("max_spanning_tree: empty matrix");

  std::vector<TreeEdge> edges;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const double w = 0.5 * (weights[i * m + j] + weights[j * m + i]);
      if (w > 0.0)
        edges.push_back({static_cast<int>(i), static_cast<int>(j), w});
    }
  std::sort(edges.begin(), edges.end(), [](const TreeEdge& a, const TreeEdge& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.from != b.from) return a.from < b.from;
    return a.to < b.to;
  });

  UnionFind uf(m);
  std::vector<TreeEdge> tree;
  for (const TreeEdge& e : edges)
    if (uf.unite(e.from, e.to)) tree.push_back(e);

  if (tree.size() != m - 1) {
    std::vector<std::vector<int>> comps(m);
    for (std::size_t i = 0; i < m; ++i)
      comps[static_cast<std::size_t>(uf.find(static_cast<int>(i)))].push_back(
          static_cast<int>(i));
    std::string msg = "max_spanning_tree: graph is disconnected; components:";
    for (const auto& comp : comps) {
      if (comp.empty()) continue;
      msg += " {";
      for (std::size_t k = 0; k < comp.size(); ++k)
        msg += (k ? "," : "") + std::to_string(comp[k]);
      msg += "}";
    }
    throw data_error(msg);
  }
  return tree;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length vectors of size >= 2");
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0)
    throw numeric_error("spearman: a rank vector is constant");
  return num / std::sqrt(da * db);
}

}  // namespace vdyn
