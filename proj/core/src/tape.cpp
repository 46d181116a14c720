#include "vdyn/tape.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "vdyn/errors.hpp"
#include "vdyn/linalg.hpp"

namespace vdyn {

namespace {

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string("tape op '") + op + "': " + detail);
}

void check_finite(const char* op, const Tensor& t) {
  for (double v : t.data)
    if (!std::isfinite(v))
      throw numeric_error(std::string("non-finite value in output of tape op '") + op + "'");
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace

NodeId Graph::push(Tensor val, bool needs, const char* op) {
  check_finite(op, val);
  Node n;
  n.val = std::move(val);
  n.needs = needs;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw std::invalid_argument("tape: node id out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

const Tensor& Graph::value(NodeId id) const { return node(id).val; }

bool Graph::needs_grad(NodeId id) const { return node(id).needs; }

Tensor& Graph::grad_buf(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.val.shape);
  return n.grad;
}

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = node(id);
  if (n.grad.data.empty()) {
    static thread_local Tensor zeros;
    zeros = Tensor::zeros(n.val.shape);
    return zeros;
  }
  return n.grad;
}

NodeId Graph::constant(Tensor t) { return push(std::move(t), false, "constant"); }

NodeId Graph::param(Param& p) {
  auto it = bound_ids_.find(&p);
  if (it != bound_ids_.end()) return it->second;
  const NodeId id = push(p.value, true, "param");
  bound_.emplace_back(id, &p);
  bound_ids_[&p] = id;
  return id;
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  const bool bias = av.ndim() == 2 && bv.ndim() == 1 && av.cols() == bv.shape[0];
  if (!bias && !av.same_shape(bv))
    shape_fail("add", av.shape_string() + " vs " + bv.shape_string());
  Tensor out = av;
  if (bias) {
    for (std::size_t i = 0; i < av.rows(); ++i)
      for (std::size_t j = 0; j < av.cols(); ++j) out.at(i, j) += bv[j];
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  }
  const NodeId id = push(std::move(out), nodes_[a].needs || nodes_[b].needs, "add");
  nodes_[id].back = [a, b, id, bias](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    if (g.nodes_[a].needs) {
      Tensor& ga = g.grad_buf(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    }
    if (g.nodes_[b].needs) {
      Tensor& gb = g.grad_buf(b);
      if (bias) {
        const std::size_t d = gb.size();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i % d] += go[i];
      } else {
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i];
      }
    }
  };
  return id;
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv))
    shape_fail("sub", av.shape_string() + " vs " + bv.shape_string());
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const NodeId id = push(std::move(out), nodes_[a].needs || nodes_[b].needs, "sub");
  nodes_[id].back = [a, b, id](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    if (g.nodes_[a].needs) {
      Tensor& ga = g.grad_buf(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    }
    if (g.nodes_[b].needs) {
      Tensor& gb = g.grad_buf(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
    }
  };
  return id;
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv))
    shape_fail("mul", av.shape_string() + " vs " + bv.shape_string());
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const NodeId id = push(std::move(out), nodes_[a].needs || nodes_[b].needs, "mul");
  nodes_[id].back = [a, b, id](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    const Tensor& av2 = g.value(a);
    const Tensor& bv2 = g.value(b);
    if (g.nodes_[a].needs) {
      Tensor& ga = g.grad_buf(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bv2[i];
    }
    if (g.nodes_[b].needs) {
      Tensor& gb = g.grad_buf(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * av2[i];
    }
  };
  return id;
}

NodeId Graph::scale(NodeId a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v *= c;
  const NodeId id = push(std::move(out), nodes_[a].needs, "scale");
  nodes_[id].back = [a, c, id](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * go[i];
  };
  return id;
}

NodeId Graph::add_const(NodeId a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v += c;
  const NodeId id = push(std::move(out), nodes_[a].needs, "add_const");
  nodes_[id].back = [a, id](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
  };
  return id;
}

NodeId Graph::add_n(const std::vector<NodeId>& xs) {
  if (xs.empty()) shape_fail("add_n", "empty operand list");
  Tensor out = value(xs[0]);
  bool needs = nodes_[xs[0]].needs;
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const Tensor& v = value(xs[k]);
    if (!v.same_shape(out))
      shape_fail("add_n", out.shape_string() + " vs " + v.shape_string());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
    needs = needs || nodes_[xs[k]].needs;
  }
  const NodeId id = push(std::move(out), needs, "add_n");
  nodes_[id].back = [xs, id](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    for (NodeId x : xs) {
      if (!g.nodes_[x].needs) continue;
      Tensor& gx = g.grad_buf(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    }
  };
  return id;
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.ndim() != 2) shape_fail("matmul", "left operand must be 2-D, got " + av.shape_string());
  const std::size_t n = av.rows(), k = av.cols();

  if (bv.ndim() == 1) {
    if (bv.shape[0] != k)
      shape_fail("matmul", av.shape_string() + " x " + bv.shape_string());
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += av.data[i * k + p] * bv[p];
      out[i] = s;
    }
    const NodeId id = push(std::move(out), nodes_[a].needs || nodes_[b].needs, "matmul");
    nodes_[id].back = [a, b, id, n, k](Graph& g) {
      const Tensor& go = g.grad_buf(id);
      const Tensor& av2 = g.value(a);
      const Tensor& bv2 = g.value(b);
      if (g.nodes_[a].needs) {
        Tensor& ga = g.grad_buf(a);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) ga.data[i * k + p] += go[i] * bv2[p];
      }
      if (g.nodes_[b].needs) {
        Tensor& gb = g.grad_buf(b);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) gb[p] += av2.data[i * k + p] * go[i];
      }
    };
    return id;
  }

  if (bv.ndim() != 2 || bv.rows() != k)
    shape_fail("matmul", av.shape_string() + " x " + bv.shape_string());
  const std::size_t m = bv.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av.data[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] += aip * bv.data[p * m + j];
    }
  const NodeId id = push(std::move(out), nodes_[a].needs || nodes_[b].needs, "matmul");
  nodes_[id].back = [a, b, id, n, k, m](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    const Tensor& av2 = g.value(a);
    const Tensor& bv2 = g.value(b);
    if (g.nodes_[a].needs) {
      Tensor& ga = g.grad_buf(a);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double gij = go.data[i * m + j];
          if (gij == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) ga.data[i * k + p] += gij * bv2.data[p * m + j];
        }
    }
    if (g.nodes_[b].needs) {
      Tensor& gb = g.grad_buf(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av2.data[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) gb.data[p * m + j] += aip * go.data[i * m + j];
        }
    }
  };
  return id;
}

NodeId Graph::transpose(NodeId a) {
  const Tensor& av = value(a);
  if (av.ndim() != 2) shape_fail("transpose", "needs 2-D, got " + av.shape_string());
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.data[j * n + i] = av.data[i * m + j];
  const NodeId id = push(std::move(out), nodes_[a].needs, "transpose");
  nodes_[id].back = [a, id, n, m](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga.data[i * m + j] += go.data[j * n + i];
  };
  return id;
}

NodeId Graph::softplus(NodeId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = stable_softplus(v);
  const NodeId id = push(std::move(out), nodes_[a].needs, "softplus");
  nodes_[id].back = [a, id](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    const Tensor& av = g.value(a);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga[i] += go[i] / (1.0 + std::exp(-av[i]));
  };
  return id;
}

NodeId Graph::sigmoid(NodeId a) {
  Tensor out = value(a);
  for (double& v : out.data) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  const NodeId id = push(std::move(out), nodes_[a].needs, "sigmoid");
  nodes_[id].back = [a, id](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    const Tensor& ov = g.value(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga[i] += go[i] * ov[i] * (1.0 - ov[i]);
  };
  return id;
}

NodeId Graph::exp(NodeId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::exp(v);
  const NodeId id = push(std::move(out), nodes_[a].needs, "exp");
  nodes_[id].back = [a, id](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    const Tensor& ov = g.value(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * ov[i];
  };
  return id;
}

NodeId Graph::log(NodeId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::log(v);
  const NodeId id = push(std::move(out), nodes_[a].needs, "log");
  nodes_[id].back = [a, id](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    const Tensor& av = g.value(a);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] / av[i];
  };
  return id;
}

namespace {

// Slice iteration for 1-D/2-D softmax: (start, stride, count) per slice.
struct SliceSpec {
  std::vector<std::size_t> starts;
  std::size_t stride;
  std::size_t count;
};

SliceSpec softmax_slices(const Tensor& t, int axis) {
  SliceSpec s;
  if (t.ndim() == 1) {
    s.starts = {0};
    s.stride = 1;
    s.count = t.size();
    return s;
  }
  if (t.ndim() != 2) shape_fail("softmax", "needs 1-D or 2-D, got " + t.shape_string());
  const std::size_t n = t.rows(), m = t.cols();
  if (axis == 1) {
    for (std::size_t i = 0; i < n; ++i) s.starts.push_back(i * m);
    s.stride = 1;
    s.count = m;
  } else if (axis == 0) {
    for (std::size_t j = 0; j < m; ++j) s.starts.push_back(j);
    s.stride = m;
    s.count = n;
  } else {
    shape_fail("softmax", "axis must be 0 or 1");
  }
  return s;
}

}  // namespace

NodeId Graph::softmax(NodeId a, int axis) {
  const Tensor& av = value(a);
  const SliceSpec spec = softmax_slices(av, axis);
  Tensor out = av;
  for (std::size_t start : spec.starts) {
    double mx = -HUGE_VAL;
    for (std::size_t i = 0; i < spec.count; ++i)
      mx = std::max(mx, av[start + i * spec.stride]);
    double denom = 0.0;
    for (std::size_t i = 0; i < spec.count; ++i) {
      const double e = std::exp(av[start + i * spec.stride] - mx);
      out[start + i * spec.stride] = e;
      denom += e;
    }
    for (std::size_t i = 0; i < spec.count; ++i) out[start + i * spec.stride] /= denom;
  }
  const NodeId id = push(std::move(out), nodes_[a].needs, "softmax");
  nodes_[id].back = [a, id, spec](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    const Tensor& ov = g.value(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t start : spec.starts) {
      double dot = 0.0;
      for (std::size_t i = 0; i < spec.count; ++i) {
        const std::size_t idx = start + i * spec.stride;
        dot += go[idx] * ov[idx];
      }
      for (std::size_t i = 0; i < spec.count; ++i) {
        const std::size_t idx = start + i * spec.stride;
        ga[idx] += ov[idx] * (go[idx] - dot);
      }
    }
  };
  return id;
}

NodeId Graph::clamp_min(NodeId a, double floor, ForwardStats* stats) {
  const Tensor& av = value(a);
  Tensor out = av;
  std::vector<char> pass(av.size(), 1);
  long long clamped = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < floor) {
      out[i] = floor;
      pass[i] = 0;
      ++clamped;
    }
  }
  if (stats) stats->clamped += clamped;
  const NodeId id = push(std::move(out), nodes_[a].needs, "clamp_min");
  nodes_[id].back = [a, id, pass = std::move(pass)](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (pass[i]) ga[i] += go[i];
  };
  return id;
}

NodeId Graph::embedding(NodeId table, const std::vector<int>& ids) {
  const Tensor& tv = value(table);
  if (tv.ndim() != 2) shape_fail("embedding", "table must be 2-D, got " + tv.shape_string());
  const std::size_t v = tv.rows(), e = tv.cols();
  for (int idx : ids)
    if (idx < 0 || static_cast<std::size_t>(idx) >= v)
      shape_fail("embedding", "index out of range for table " + tv.shape_string());
  Tensor out({ids.size(), e});
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < e; ++j)
      out.data[i * e + j] = tv.data[static_cast<std::size_t>(ids[i]) * e + j];
  const NodeId id = push(std::move(out), nodes_[table].needs, "embedding");
  nodes_[id].back = [table, id, ids, e](Graph& g) {
    if (!g.nodes_[table].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& gt = g.grad_buf(table);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < e; ++j)
        gt.data[static_cast<std::size_t>(ids[i]) * e + j] += go.data[i * e + j];
  };
  return id;
}

NodeId Graph::causal_window(NodeId a, int window) {
  const Tensor& av = value(a);
  if (av.ndim() != 2) shape_fail("causal_window", "needs 2-D, got " + av.shape_string());
  if (window < 1) shape_fail("causal_window", "window must be >= 1");
  const std::size_t l = av.rows(), e = av.cols();
  const std::size_t w = static_cast<std::size_t>(window);
  Tensor out({l, w * e});
  for (std::size_t s = 0; s < l; ++s)
    for (std::size_t k = 0; k < w; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(s) -
                                 static_cast<std::ptrdiff_t>(w - 1 - k);
      if (src < 0) continue;
      for (std::size_t j = 0; j < e; ++j)
        out.data[s * w * e + k * e + j] = av.data[static_cast<std::size_t>(src) * e + j];
    }
  const NodeId id = push(std::move(out), nodes_[a].needs, "causal_window");
  nodes_[id].back = [a, id, l, e, w](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t s = 0; s < l; ++s)
      for (std::size_t k = 0; k < w; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(s) -
                                   static_cast<std::ptrdiff_t>(w - 1 - k);
        if (src < 0) continue;
        for (std::size_t j = 0; j < e; ++j)
          ga.data[static_cast<std::size_t>(src) * e + j] += go.data[s * w * e + k * e + j];
      }
  };
  return id;
}

NodeId Graph::concat(const std::vector<NodeId>& xs) {
  if (xs.empty()) shape_fail("concat", "empty operand list");
  std::size_t total = 0;
  bool needs = false;
  for (NodeId x : xs) {
    const Tensor& v = value(x);
    if (v.ndim() != 1) shape_fail("concat", "operands must be 1-D, got " + v.shape_string());
    total += v.size();
    needs = needs || nodes_[x].needs;
  }
  Tensor out({total});
  std::size_t off = 0;
  for (NodeId x : xs) {
    const Tensor& v = value(x);
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  const NodeId id = push(std::move(out), needs, "concat");
  nodes_[id].back = [xs, id](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    std::size_t off2 = 0;
    for (NodeId x : xs) {
      const std::size_t sz = g.value(x).size();
      if (g.nodes_[x].needs) {
        Tensor& gx = g.grad_buf(x);
        for (std::size_t i = 0; i < sz; ++i) gx[i] += go[off2 + i];
      }
      off2 += sz;
    }
  };
  return id;
}

NodeId Graph::stack_rows(const std::vector<NodeId>& xs) {
  if (xs.empty()) shape_fail("stack_rows", "empty operand list");
  const std::size_t m = value(xs[0]).size();
  bool needs = false;
  for (NodeId x : xs) {
    const Tensor& v = value(x);
    if (v.ndim() != 1 || v.size() != m)
      shape_fail("stack_rows", "operands must all be 1-D of equal length");
    needs = needs || nodes_[x].needs;
  }
  Tensor out({xs.size(), m});
  for (std::size_t r = 0; r < xs.size(); ++r) {
    const Tensor& v = value(xs[r]);
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(r * m));
  }
  const NodeId id = push(std::move(out), needs, "stack_rows");
  nodes_[id].back = [xs, id, m](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    for (std::size_t r = 0; r < xs.size(); ++r) {
      if (!g.nodes_[xs[r]].needs) continue;
      Tensor& gx = g.grad_buf(xs[r]);
      for (std::size_t i = 0; i < m; ++i) gx[i] += go.data[r * m + i];
    }
  };
  return id;
}

NodeId Graph::slice(NodeId a, std::size_t offset, std::size_t len) {
  const Tensor& av = value(a);
  if (av.ndim() != 1) shape_fail("slice", "needs 1-D, got " + av.shape_string());
  if (offset + len > av.size()) shape_fail("slice", "range out of bounds");
  Tensor out({len});
  std::copy(av.data.begin() + static_cast<std::ptrdiff_t>(offset),
            av.data.begin() + static_cast<std::ptrdiff_t>(offset + len), out.data.begin());
  const NodeId id = push(std::move(out), nodes_[a].needs, "slice");
  nodes_[id].back = [a, id, offset, len](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < len; ++i) ga[offset + i] += go[i];
  };
  return id;
}

NodeId Graph::row(NodeId a, std::size_t i) {
  const Tensor& av = value(a);
  if (av.ndim() != 2) shape_fail("row", "needs 2-D, got " + av.shape_string());
  if (i >= av.rows()) shape_fail("row", "row index out of range");
  const std::size_t m = av.cols();
  Tensor out({m});
  std::copy(av.data.begin() + static_cast<std::ptrdiff_t>(i * m),
            av.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * m), out.data.begin());
  const NodeId id = push(std::move(out), nodes_[a].needs, "row");
  nodes_[id].back = [a, id, i, m](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t j = 0; j < m; ++j) ga.data[i * m + j] += go[j];
  };
  return id;
}

NodeId Graph::col(NodeId a, std::size_t j) {
  const Tensor& av = value(a);
  if (av.ndim() != 2) shape_fail("col", "needs 2-D, got " + av.shape_string());
  if (j >= av.cols()) shape_fail("col", "column index out of range");
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) out[i] = av.data[i * m + j];
  const NodeId id = push(std::move(out), nodes_[a].needs, "col");
  nodes_[id].back = [a, id, j, n, m](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < n; ++i) ga.data[i * m + j] += go[i];
  };
  return id;
}

NodeId Graph::slice_cols(NodeId a, std::size_t j0, std::size_t n) {
  const Tensor& av = value(a);
  if (av.ndim() != 2) shape_fail("slice_cols", "needs 2-D, got " + av.shape_string());
  if (j0 + n > av.cols()) shape_fail("slice_cols", "column range out of bounds");
  const std::size_t rows = av.rows(), m = av.cols();
  Tensor out({rows, n});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = av.data[i * m + j0 + j];
  const NodeId id = push(std::move(out), nodes_[a].needs, "slice_cols");
  nodes_[id].back = [a, id, j0, n, rows, m](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < n; ++j) ga.data[i * m + j0 + j] += go.data[i * n + j];
  };
  return id;
}

NodeId Graph::reshape(NodeId a, std::vector<std::size_t> shape) {
  const Tensor& av = value(a);
  if (shape_numel(shape) != av.size())
    shape_fail("reshape", av.shape_string() + " -> incompatible target");
  Tensor out(std::move(shape), av.data);
  const NodeId id = push(std::move(out), nodes_[a].needs, "reshape");
  nodes_[id].back = [a, id](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
  };
  return id;
}

NodeId Graph::gather(NodeId a, std::vector<int> idx) {
  const Tensor& av = value(a);
  if (av.ndim() != 1) shape_fail("gather", "needs 1-D, got " + av.shape_string());
  for (int i : idx)
    if (i < 0 || static_cast<std::size_t>(i) >= av.size())
      shape_fail("gather", "index out of range");
  Tensor out({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = av[static_cast<std::size_t>(idx[i])];
  const NodeId id = push(std::move(out), nodes_[a].needs, "gather");
  nodes_[id].back = [a, id, idx = std::move(idx)](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < idx.size(); ++i)
      ga[static_cast<std::size_t>(idx[i])] += go[i];
  };
  return id;
}

NodeId Graph::pick(NodeId a, std::size_t flat_index) {
  const Tensor& av = value(a);
  if (flat_index >= av.size()) shape_fail("pick", "flat index out of range");
  Tensor out = Tensor::scalar(av[flat_index]);
  const NodeId id = push(std::move(out), nodes_[a].needs, "pick");
  nodes_[id].back = [a, id, flat_index](Graph& g) {
    if (!g.nodes_[a].needs) return;
    g.grad_buf(a)[flat_index] += g.grad_buf(id)[0];
  };
  return id;
}

NodeId Graph::sum(NodeId a, int axis) {
  const Tensor& av = value(a);
  if (av.ndim() != 2) shape_fail("sum", "needs 2-D, got " + av.shape_string());
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out(axis == 0 ? std::vector<std::size_t>{m} : std::vector<std::size_t>{n});
  if (axis == 0) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) out[j] += av.data[i * m + j];
  } else if (axis == 1) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) out[i] += av.data[i * m + j];
  } else {
    shape_fail("sum", "axis must be 0 or 1");
  }
  const NodeId id = push(std::move(out), nodes_[a].needs, "sum");
  nodes_[id].back = [a, id, axis, n, m](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        ga.data[i * m + j] += (axis == 0) ? go[j] : go[i];
  };
  return id;
}

NodeId Graph::sum_all(NodeId a) {
  const Tensor& av = value(a);
  double s = 0.0;
  for (double v : av.data) s += v;
  const NodeId id = push(Tensor::scalar(s), nodes_[a].needs, "sum_all");
  nodes_[id].back = [a, id](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const double go = g.grad_buf(id)[0];
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
  };
  return id;
}

NodeId Graph::reduce_max(const std::vector<NodeId>& xs) {
  if (xs.empty()) shape_fail("reduce_max", "needs at least one input");
  bool needs = false;
  NodeId arg_node = -1;
  std::size_t arg_idx = 0;
  double best = 0.0;
  bool first = true;
  for (NodeId x : xs) {
    const Tensor& xv = value(x);
    if (xv.ndim() != 1) shape_fail("reduce_max", "needs 1-D inputs, got " + xv.shape_string());
    needs = needs || nodes_[x].needs;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (first || xv[i] > best) {
        best = xv[i];
        arg_node = x;
        arg_idx = i;
        first = false;
      }
    }
  }
  const NodeId id = push(Tensor::scalar(best), needs, "reduce_max");
  nodes_[id].back = [arg_node, arg_idx, id](Graph& g) {
    if (!g.nodes_[arg_node].needs) return;
    g.grad_buf(arg_node)[arg_idx] += g.grad_buf(id)[0];
  };
  return id;
}

std::pair<NodeId, NodeId> Graph::sym_eig(NodeId a) {
  const Tensor& av = value(a);
  if (av.ndim() != 2 || av.rows() != av.cols())
    shape_fail("sym_eig", "needs square 2-D, got " + av.shape_string());
  const std::size_t m = av.rows();
  const SymEig eig = jacobi_sym_eig(av.data, m);
  const bool needs = nodes_[a].needs;
  const NodeId lid = push(Tensor({m}, eig.lambda), needs, "sym_eig.lambda");
  const NodeId uid = push(Tensor({m, m}, eig.U), needs, "sym_eig.U");
  nodes_[uid].partner = lid;
  nodes_[uid].back = [a, lid, uid, m](Graph& g) {
    if (!g.nodes_[a].needs) return;
    const std::vector<double>& lam = g.value(lid).data;
    const std::vector<double>& u = g.value(uid).data;
    const std::vector<double>& lbar = g.grad_buf(lid).data;
    const std::vector<double>& ubar = g.grad_buf(uid).data;

    std::vector<double> k = mat_mul(mat_transpose(u, m, m), ubar, m, m, m);
    std::vector<double> mid(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      mid[i * m + i] = lbar[i];
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) continue;
        double gap = lam[j] - lam[i];
        if (std::abs(gap) < 1e-6) gap = gap >= 0.0 ? 1e-6 : -1e-6;
        mid[i * m + j] += k[i * m + j] / gap;
      }
    }
    const std::vector<double> s =
        mat_mul(mat_mul(u, mid, m, m, m), mat_transpose(u, m, m), m, m, m);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        ga.data[i * m + j] += 0.5 * (s[i * m + j] + s[j * m + i]);
  };
  return {lid, uid};
}

void Graph::backward(NodeId loss) {
  if (swept_) throw std::logic_error("Graph::backward: tape already swept");
  const Node& ln = node(loss);
  if (ln.val.size() != 1)
    throw std::invalid_argument("Graph::backward: loss must be scalar, got " +
                                ln.val.shape_string());
  swept_ = true;
  grad_buf(loss)[0] = 1.0;
  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs || !n.back) continue;
    bool touched = !n.grad.data.empty();
    if (!touched && n.partner >= 0)
      touched = !nodes_[static_cast<std::size_t>(n.partner)].grad.data.empty();
    if (!touched) continue;
    n.back(*this);
  }
  for (auto [id, p] : bound_) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) continue;
    if (n.grad.shape != p->value.shape)
      throw std::logic_error("Graph::backward: grad shape mismatch for param '" + p->name + "'");
    for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += n.grad[i];
  }
}

double finite_difference(const std::function<double(const std::vector<double>&)>& f,
                         std::vector<double> x, std::size_t i, double h) {
  x[i] += h;
  const double fp = f(x);
  x[i] -= 2.0 * h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

}  // namespace vdyn
