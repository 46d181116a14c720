#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vdyn/params.hpp"
#include "vdyn/tensor.hpp"

namespace vdyn {

using NodeId = int;

// Counters filled in during the forward pass (eager) for diagnostics.
struct ForwardStats {
  long long clamped = 0;
};

// Eager reverse-mode tape. Every op computes its value immediately, records a
// backward closure, and returns a node id. backward() sweeps ids in reverse
// (exact reverse topological order, since the tape is append-only) and
// accumulates into each bound Param's grad. Forward values are checked for
// NaN/Inf as they are produced.
class Graph {
 public:
  NodeId constant(Tensor t);
  NodeId param(Param& p);  // binding the same Param twice reuses the node

  NodeId add(NodeId a, NodeId b);  // same shape, or [n,d] + [d] row broadcast
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId add_const(NodeId a, double c);
  NodeId add_n(const std::vector<NodeId>& xs);

  NodeId matmul(NodeId a, NodeId b);  // [n,k]x[k,m] -> [n,m], or [n,k]x[k] -> [n]
  NodeId transpose(NodeId a);

  NodeId softplus(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId softmax(NodeId a, int axis = 0);
  NodeId clamp_min(NodeId a, double floor, ForwardStats* stats = nullptr);

  NodeId embedding(NodeId table, const std::vector<int>& ids);
  NodeId causal_window(NodeId a, int window);  // [L,E] -> [L,window*E], zero left pad
  NodeId concat(const std::vector<NodeId>& xs);      // 1-D pieces -> 1-D
  NodeId stack_rows(const std::vector<NodeId>& xs);  // k pieces [m] -> [k,m]
  NodeId slice(NodeId a, std::size_t offset, std::size_t len);  // 1-D
  NodeId row(NodeId a, std::size_t i);
  NodeId col(NodeId a, std::size_t j);
  NodeId slice_cols(NodeId a, std::size_t j0, std::size_t n);
  NodeId reshape(NodeId a, std::vector<std::size_t> shape);
  NodeId gather(NodeId a, std::vector<int> idx);  // 1-D -> 1-D by index list
  NodeId pick(NodeId a, std::size_t flat_index);  // -> scalar
  NodeId sum(NodeId a, int axis);                 // 2-D -> 1-D
  NodeId sum_all(NodeId a);                       // -> scalar
  NodeId reduce_max(const std::vector<NodeId>& xs);  // 1-D inputs -> scalar max

  // Symmetric eigendecomposition of a square matrix node (input symmetrized).
  // Returns {eigenvalues ascending [m], eigenvectors [m,m] column-major-by-
  // meaning}. The combined adjoint runs once, when the reverse sweep reaches
  // the eigenvector node; near-degenerate eigenvalue gaps are clamped to
  // 1e-6 in magnitude, sign preserved.
  std::pair<NodeId, NodeId> sym_eig(NodeId a);

  const Tensor& value(NodeId id) const;
  const Tensor& grad(NodeId id) const;  // zeros-shaped tensor if untouched
  bool needs_grad(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1, sweeps the tape backwards, then adds each
  // bound param node's grad into its Param::grad. Loss must be scalar; a
  // graph can run backward once.
  void backward(NodeId loss);

 private:
  struct Node {
    Tensor val;
    Tensor grad;  // empty until touched
    bool needs = false;
    NodeId partner = -1;  // sym_eig pairs the eigenvector node with its eigenvalue node
    std::function<void(Graph&)> back;
  };

  NodeId push(Tensor val, bool needs, const char* op);
  Tensor& grad_buf(NodeId id);
  const Node& node(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<NodeId, Param*>> bound_;
  std::unordered_map<const Param*, NodeId> bound_ids_;
  bool swept_ = false;
};

// Central-difference derivative of f at x[i], used by the gradient tests.
double finite_difference(const std::function<double(const std::vector<double>&)>& f,
                         std::vector<double> x, std::size_t i, double h);

}  // namespace vdyn
