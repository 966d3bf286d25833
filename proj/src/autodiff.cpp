#include "snx/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "snx/errors.hpp"

namespace snx::ad {

namespace {

double sigmoid_value(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

std::string shape_str(const Tensor& t) {
  return "(" + std::to_string(t.rows) + "x" + std::to_string(t.cols) + ")";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void accumulate(Tensor& into, const Tensor& delta) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += delta[i];
}

}  // namespace

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) {
    throw ShapeError("tensor data size " + std::to_string(data.size()) + " does not match " +
                     std::to_string(r) + "x" + std::to_string(c));
  }
}

Tensor Tensor::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(n, 1, std::move(values));
}

// ---------------------------------------------------------------------------
// Construction

Var Tape::push(Node n) {
  for (NodeId in : n.inputs) {
    if (in >= nodes_.size()) throw StateError("tape input refers to a missing node");
  }
  nodes_.push_back(std::move(n));
  evaluated_ = false;
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw StateError("unknown tape node " + std::to_string(v.id));
  return nodes_[v.id];
}

Var Tape::leaf(const std::string& name, std::size_t rows, std::size_t cols) {
  for (const Node& n : nodes_) {
    if (n.op == Op::kLeaf && n.name == name) throw StateError("duplicate leaf '" + name + "'");
  }
  Node n;
  n.op = Op::kLeaf;
  n.name = name;
  n.value = Tensor(rows, cols);
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::Node Tape::make_node(Op op, std::vector<NodeId> inputs) {
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  return n;
}

Var Tape::add(Var a, Var b) { return push(make_node(Op::kAdd, {a.id, b.id})); }
Var Tape::sub(Var a, Var b) { return push(make_node(Op::kSub, {a.id, b.id})); }
Var Tape::mul(Var a, Var b) { return push(make_node(Op::kMul, {a.id, b.id})); }
Var Tape::neg(Var a) { return push(make_node(Op::kNeg, {a.id})); }
Var Tape::matmul(Var a, Var b) { return push(make_node(Op::kMatMul, {a.id, b.id})); }
Var Tape::sigmoid(Var a) { return push(make_node(Op::kSigmoid, {a.id})); }
Var Tape::tanh(Var a) { return push(make_node(Op::kTanh, {a.id})); }
Var Tape::relu(Var a) { return push(make_node(Op::kRelu, {a.id})); }
Var Tape::abs(Var a) { return push(make_node(Op::kAbs, {a.id})); }
Var Tape::log(Var a) { return push(make_node(Op::kLog, {a.id})); }
Var Tape::exp(Var a) { return push(make_node(Op::kExp, {a.id})); }
Var Tape::square(Var a) { return push(make_node(Op::kSquare, {a.id})); }
Var Tape::dot(Var a, Var b) { return push(make_node(Op::kDot, {a.id, b.id})); }
Var Tape::sum(Var a) { return push(make_node(Op::kSum, {a.id})); }
Var Tape::l2norm(Var a) { return push(make_node(Op::kL2Norm, {a.id})); }
Var Tape::mean_rows(Var a) { return push(make_node(Op::kMeanRows, {a.id})); }
Var Tape::normalize_adjacency(Var a) { return push(make_node(Op::kNormalizeAdjacency, {a.id})); }

Var Tape::affine(Var a, double scale, double shift) {
  Node n = make_node(Op::kAffine, {a.id});
  n.a = scale;
  n.b = shift;
  return push(std::move(n));
}

Var Tape::clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw InputError("clamp: lo > hi");
  Node n = make_node(Op::kClamp, {a.id});
  n.a = lo;
  n.b = hi;
  return push(std::move(n));
}

Var Tape::cosine(Var u, Var v, double floor) {
  Node n = make_node(Op::kCosine, {u.id, v.id});
  n.a = floor;
  return push(std::move(n));
}

Var Tape::gather(Var a, std::vector<std::size_t> indices) {
  Node n = make_node(Op::kGather, {a.id});
  n.indices = std::move(indices);
  return push(std::move(n));
}

Var Tape::edges_to_adjacency(Var weights, std::size_t num_nodes,
                             std::vector<std::pair<std::size_t, std::size_t>> edges) {
  for (const auto& [i, j] : edges) {
    if (i >= num_nodes || j >= num_nodes || i == j) {
      throw InputError("edges_to_adjacency: invalid edge (" + std::to_string(i) + "," +
                       std::to_string(j) + ")");
    }
  }
  Node n = make_node(Op::kEdgesToAdjacency, {weights.id});
  n.n = num_nodes;
  n.pairs = std::move(edges);
  return push(std::move(n));
}

Var Tape::noisy_or_blocks(Var a, std::vector<std::size_t> block_sizes) {
  Node n = make_node(Op::kNoisyOrBlocks, {a.id});
  n.indices = std::move(block_sizes);
  return push(std::move(n));
}

Var Tape::kl_bernoulli(Var a, Tensor b, double delta) {
  Node n = make_node(Op::kKlBernoulli, {a.id});
  n.aux = std::move(b);
  n.a = delta;
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  if (!evaluated_) throw StateError("tape has not been evaluated");
  return node(v).value;
}

Var Tape::terminal() const {
  if (nodes_.empty()) throw StateError("empty tape");
  return Var{nodes_.size() - 1};
}

// ---------------------------------------------------------------------------
// Forward

void Tape::eval_node(Node& n) {
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
  auto map1 = [&](auto fn) {
    const Tensor& x = in(0);
    Tensor out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fn(x[i]);
    n.value = std::move(out);
  };

  switch (n.op) {
    case Op::kLeaf:
    case Op::kConst:
      return;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& x = in(0);
      const Tensor& y = in(1);
      require_same_shape(x, y, "elementwise");
      Tensor out(x.rows, x.cols);
      for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = n.op == Op::kAdd ? x[i] + y[i] : n.op == Op::kSub ? x[i] - y[i] : x[i] * y[i];
      }
      n.value = std::move(out);
      return;
    }
    case Op::kNeg:
      return map1([](double v) { return -v; });
    case Op::kAffine:
      return map1([&](double v) { return n.a * v + n.b; });
    case Op::kMatMul: {
      const Tensor& x = in(0);
      const Tensor& y = in(1);
      if (x.cols != y.rows) {
        throw ShapeError("matmul: " + shape_str(x) + " * " + shape_str(y));
      }
      Tensor out(x.rows, y.cols);
      for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t k = 0; k < x.cols; ++k) {
          const double xv = x(r, k);
          if (xv == 0.0) continue;
          for (std::size_t c = 0; c < y.cols; ++c) out(r, c) += xv * y(k, c);
        }
      }
      n.value = std::move(out);
      return;
    }
    case Op::kSigmoid:
      return map1(sigmoid_value);
    case Op::kTanh:
      return map1([](double v) { return std::tanh(v); });
    case Op::kRelu:
      return map1([](double v) { return v > 0.0 ? v : 0.0; });
    case Op::kAbs:
      return map1([](double v) { return std::fabs(v); });
    case Op::kLog:
      return map1([](double v) { return std::log(v); });
    case Op::kExp:
      return map1([](double v) { return std::exp(v); });
    case Op::kSquare:
      return map1([](double v) { return v * v; });
    case Op::kClamp:
      return map1([&](double v) { return std::clamp(v, n.a, n.b); });
    case Op::kDot: {
      const Tensor& x = in(0);
      const Tensor& y = in(1);
      if (x.size() != y.size()) throw ShapeError("dot: " + shape_str(x) + " . " + shape_str(y));
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
      n.value = Tensor::scalar(s);
      return;
    }
    case Op::kSum: {
      double s = 0.0;
      for (double v : in(0).data) s += v;
      n.value = Tensor::scalar(s);
      return;
    }
    case Op::kL2Norm: {
      double s = 0.0;
      for (double v : in(0).data) s += v * v;
      n.value = Tensor::scalar(std::sqrt(s));
      return;
    }
    case Op::kCosine: {
      const Tensor& u = in(0);
      const Tensor& v = in(1);
      if (u.size() != v.size()) throw ShapeError("cosine: " + shape_str(u) + " vs " + shape_str(v));
      double uv = 0.0, uu = 0.0, vv = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
      }
      const double denom = std::max(std::sqrt(uu) * std::sqrt(vv), n.a);
      n.value = Tensor::scalar(uv / denom);
      return;
    }
    case Op::kMeanRows: {
      const Tensor& x = in(0);
      if (x.rows == 0) throw ShapeError("mean_rows: empty input");
      Tensor out(x.cols, 1);
      for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) out[c] += x(r, c);
      }
      for (double& v : out.data) v /= static_cast<double>(x.rows);
      n.value = std::move(out);
      return;
    }
    case Op::kGather: {
      const Tensor& x = in(0);
      Tensor out(n.indices.size(), 1);
      for (std::size_t k = 0; k < n.indices.size(); ++k) {
        if (n.indices[k] >= x.size()) throw ShapeError("gather: index out of range");
        out[k] = x[n.indices[k]];
      }
      n.value = std::move(out);
      return;
    }
    case Op::kEdgesToAdjacency: {
      const Tensor& w = in(0);
      if (w.size() != n.pairs.size()) {
        throw ShapeError("edges_to_adjacency: " + std::to_string(w.size()) + " weights for " +
                         std::to_string(n.pairs.size()) + " edges");
      }
      Tensor out(n.n, n.n);
      for (std::size_t k = 0; k < n.pairs.size(); ++k) {
        const auto [i, j] = n.pairs[k];
        out(i, j) = w[k];
        out(j, i) = w[k];
      }
      n.value = std::move(out);
      return;
    }
    case Op::kNormalizeAdjacency: {
      const Tensor& a = in(0);
      if (a.rows != a.cols) throw ShapeError("normalize_adjacency: non-square " + shape_str(a));
      const std::size_t m = a.rows;
      std::vector<double> scale(m);
      for (std::size_t i = 0; i < m; ++i) {
        double d = 1.0;
        for (std::size_t j = 0; j < m; ++j) d += a(i, j);
        scale[i] = 1.0 / std::sqrt(d);
      }
      Tensor out(m, m);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          out(i, j) = (a(i, j) + (i == j ? 1.0 : 0.0)) * scale[i] * scale[j];
        }
      }
      n.value = std::move(out);
      return;
    }
    case Op::kNoisyOrBlocks: {
      const Tensor& x = in(0);
      std::size_t total = 0;
      for (std::size_t s : n.indices) total += s;
      if (total != x.size()) throw ShapeError("noisy_or_blocks: block sizes do not cover input");
      Tensor out(n.indices.size(), 1);
      std::size_t offset = 0;
      for (std::size_t b = 0; b < n.indices.size(); ++b) {
        double prod = 1.0;
        for (std::size_t j = 0; j < n.indices[b]; ++j) prod *= 1.0 - x[offset + j];
        out[b] = 1.0 - prod;
        offset += n.indices[b];
      }
      n.value = std::move(out);
      return;
    }
    case Op::kKlBernoulli: {
      const Tensor& x = in(0);
      if (x.size() != n.aux.size()) throw ShapeError("kl_bernoulli: " + shape_str(x) + " vs " + shape_str(n.aux));
      const double lo = n.a, hi = 1.0 - n.a;
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double p = std::clamp(x[i], lo, hi);
        const double q = std::clamp(n.aux[i], lo, hi);
        s += p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
      }
      n.value = Tensor::scalar(s);
      return;
    }
  }
}

double Tape::forward(const Bindings& leaves) {
  if (nodes_.empty()) throw StateError("empty tape");
  for (Node& n : nodes_) {
    if (n.op != Op::kLeaf) continue;
    auto it = leaves.find(n.name);
    if (it == leaves.end()) throw MissingInputError("unbound leaf '" + n.name + "'");
    if (!it->second.same_shape(n.value)) {
      throw ShapeError("leaf '" + n.name + "' expects " + shape_str(n.value) + ", got " +
                       shape_str(it->second));
    }
  }
  evaluated_ = false;
  for (Node& n : nodes_) {
    if (n.op == Op::kLeaf) {
      n.value = leaves.at(n.name);
    } else {
      eval_node(n);
    }
  }
  if (!nodes_.back().value.is_scalar()) {
    throw ShapeError("terminal node is not scalar " + shape_str(nodes_.back().value));
  }
  bindings_ = leaves;
  evaluated_ = true;
  return nodes_.back().value[0];
}

// ---------------------------------------------------------------------------
// Backward

Gradients Tape::backward() const {
  if (!evaluated_) throw StateError("backward called before forward");

  std::vector<Tensor> grads(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    grads[i] = Tensor(nodes_[i].value.rows, nodes_[i].value.cols);
  }
  grads.back()[0] = 1.0;

  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    const Node& n = nodes_[idx];
    const Tensor& g = grads[idx];
    if (n.op == Op::kLeaf || n.op == Op::kConst) continue;

    auto x_of = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
    auto g_of = [&](std::size_t k) -> Tensor& { return grads[n.inputs[k]]; };
    auto elementwise = [&](auto dfn) {
      const Tensor& x = x_of(0);
      Tensor& gx = g_of(0);
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * dfn(x[i], n.value[i]);
    };

    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kAdd:
        accumulate(g_of(0), g);
        accumulate(g_of(1), g);
        break;
      case Op::kSub: {
        accumulate(g_of(0), g);
        Tensor& gy = g_of(1);
        for (std::size_t i = 0; i < g.size(); ++i) gy[i] -= g[i];
        break;
      }
      case Op::kMul: {
        const Tensor& x = x_of(0);
        const Tensor& y = x_of(1);
        Tensor& gx = g_of(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
        Tensor& gy = g_of(1);
        for (std::size_t i = 0; i < g.size(); ++i) gy[i] += g[i] * x[i];
        break;
      }
      case Op::kNeg:
        elementwise([](double, double) { return -1.0; });
        break;
      case Op::kAffine:
        elementwise([&](double, double) { return n.a; });
        break;
      case Op::kMatMul: {
        const Tensor& x = x_of(0);
        const Tensor& y = x_of(1);
        Tensor& gx = g_of(0);
        Tensor& gy = g_of(1);
        // gx = g * y^T ; gy = x^T * g
        for (std::size_t r = 0; r < x.rows; ++r) {
          for (std::size_t c = 0; c < y.cols; ++c) {
            const double gv = g(r, c);
            if (gv == 0.0) continue;
            for (std::size_t k = 0; k < x.cols; ++k) {
              gx(r, k) += gv * y(k, c);
              gy(k, c) += x(r, k) * gv;
            }
          }
        }
        break;
      }
      case Op::kSigmoid:
        elementwise([](double, double s) { return s * (1.0 - s); });
        break;
      case Op::kTanh:
        elementwise([](double, double t) { return 1.0 - t * t; });
        break;
      case Op::kRelu:
        elementwise([](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
        break;
      case Op::kAbs:
        elementwise([](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
        break;
      case Op::kLog:
        elementwise([](double x, double) { return 1.0 / x; });
        break;
      case Op::kExp:
        elementwise([](double, double e) { return e; });
        break;
      case Op::kSquare:
        elementwise([](double x, double) { return 2.0 * x; });
        break;
      case Op::kClamp:
        elementwise([&](double x, double) { return (x >= n.a && x <= n.b) ? 1.0 : 0.0; });
        break;
      case Op::kDot: {
        const Tensor& x = x_of(0);
        const Tensor& y = x_of(1);
        Tensor& gx = g_of(0);
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[0] * y[i];
        Tensor& gy = g_of(1);
        for (std::size_t i = 0; i < x.size(); ++i) gy[i] += g[0] * x[i];
        break;
      }
      case Op::kSum: {
        Tensor& gx = g_of(0);
        for (double& v : gx.data) v += g[0];
        break;
      }
      case Op::kL2Norm: {
        const double norm = n.value[0];
        if (norm == 0.0) break;  // subgradient 0 at the origin
        const Tensor& x = x_of(0);
        Tensor& gx = g_of(0);
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[0] * x[i] / norm;
        break;
      }
      case Op::kCosine: {
        const Tensor& u = x_of(0);
        const Tensor& v = x_of(1);
        double uu = 0.0, vv = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
          uu += u[i] * u[i];
          vv += v[i] * v[i];
        }
        const double nu = std::sqrt(uu), nv = std::sqrt(vv);
        const double prod = nu * nv;
        Tensor& gu = g_of(0);
        Tensor& gv = g_of(1);
        if (prod > n.a) {
          const double c = n.value[0];
          for (std::size_t i = 0; i < u.size(); ++i) {
            gu[i] += g[0] * (v[i] / prod - c * u[i] / uu);
            gv[i] += g[0] * (u[i] / prod - c * v[i] / vv);
          }
        } else {
          for (std::size_t i = 0; i < u.size(); ++i) {
            gu[i] += g[0] * v[i] / n.a;
            gv[i] += g[0] * u[i] / n.a;
          }
        }
        break;
      }
      case Op::kMeanRows: {
        const Tensor& x = x_of(0);
        Tensor& gx = g_of(0);
        const double inv = 1.0 / static_cast<double>(x.rows);
        for (std::size_t r = 0; r < x.rows; ++r) {
          for (std::size_t c = 0; c < x.cols; ++c) gx(r, c) += g[c] * inv;
        }
        break;
      }
      case Op::kGather: {
        Tensor& gx = g_of(0);
        for (std::size_t k = 0; k < n.indices.size(); ++k) gx[n.indices[k]] += g[k];
        break;
      }
      case Op::kEdgesToAdjacency: {
        Tensor& gw = g_of(0);
        for (std::size_t k = 0; k < n.pairs.size(); ++k) {
          const auto [i, j] = n.pairs[k];
          gw[k] += g(i, j) + g(j, i);
        }
        break;
      }
      case Op::kNormalizeAdjacency: {
        const Tensor& a = x_of(0);
        Tensor& ga = g_of(0);
        const std::size_t m = a.rows;
        std::vector<double> deg(m, 1.0), scale(m);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < m; ++j) deg[i] += a(i, j);
          scale[i] = 1.0 / std::sqrt(deg[i]);
        }
        // S_ij = B_ij s_i s_j with B = A + I, s = deg^{-1/2}, deg_i = sum_j B_ij.
        std::vector<double> g_deg(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            const double b = a(i, j) + (i == j ? 1.0 : 0.0);
            const double t = g(i, j) * b;
            // dS_ij/ds_i = B_ij s_j, ds_i/ddeg_i = -0.5 deg_i^{-3/2}
            g_deg[i] += t * scale[j] * (-0.5) * scale[i] / deg[i];
            g_deg[j] += t * scale[i] * (-0.5) * scale[j] / deg[j];
          }
        }
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            ga(i, j) += g(i, j) * scale[i] * scale[j] + g_deg[i];
          }
        }
        break;
      }
      case Op::kNoisyOrBlocks: {
        const Tensor& x = x_of(0);
        Tensor& gx = g_of(0);
        std::size_t offset = 0;
        for (std::size_t b = 0; b < n.indices.size(); ++b) {
          const std::size_t len = n.indices[b];
          for (std::size_t j = 0; j < len; ++j) {
            double others = 1.0;
            for (std::size_t l = 0; l < len; ++l) {
              if (l != j) others *= 1.0 - x[offset + l];
            }
            gx[offset + j] += g[b] * others;
          }
          offset += len;
        }
        break;
      }
      case Op::kKlBernoulli: {
        const Tensor& x = x_of(0);
        Tensor& gx = g_of(0);
        const double lo = n.a, hi = 1.0 - n.a;
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (x[i] < lo || x[i] > hi) continue;
          const double q = std::clamp(n.aux[i], lo, hi);
          gx[i] += g[0] * (std::log(x[i] / q) - std::log((1.0 - x[i]) / (1.0 - q)));
        }
        break;
      }
    }
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == Op::kLeaf) out.emplace(nodes_[i].name, std::move(grads[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------

Var binary_cross_entropy(Tape& tape, double target, Var prediction, double clip) {
  Var loss{};
  bool have = false;
  if (target > 0.0) {
    loss = tape.affine(tape.log(tape.clamp(prediction, clip, 1.0)), -target, 0.0);
    have = true;
  }
  if (target < 1.0) {
    const Var q = tape.clamp(tape.affine(prediction, -1.0, 1.0), clip, 1.0);
    const Var tail = tape.affine(tape.log(q), -(1.0 - target), 0.0);
    loss = have ? tape.add(loss, tail) : tail;
  }
  return loss;
}

double finite_diff_check(Tape& tape, const std::string& leaf, double step) {
  if (!(step > 0.0)) throw InputError("finite_diff_check: step must be positive");
  if (!tape.evaluated()) throw StateError("finite_diff_check needs a forward pass first");
  const Bindings base = tape.bindings();
  auto it = base.find(leaf);
  if (it == base.end()) throw MissingInputError("unknown leaf '" + leaf + "'");

  const Gradients grads = tape.backward();
  const Tensor& analytic = grads.at(leaf);

  double worst = 0.0;
  Bindings probe = base;
  for (std::size_t i = 0; i < it->second.size(); ++i) {
    probe[leaf][i] = base.at(leaf)[i] + step;
    const double up = tape.forward(probe);
    probe[leaf][i] = base.at(leaf)[i] - step;
    const double down = tape.forward(probe);
    probe[leaf][i] = base.at(leaf)[i];
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(analytic[i]));
    worst = std::max(worst, err);
  }
  tape.forward(base);
  return worst;
}

}  // namespace snx::ad
