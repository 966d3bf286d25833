#pragma once

// Reverse-mode differentiation over a small, fixed set of primitives.
//
// A Tape is built once as a symbolic expression (leaves are named
// placeholders) and can then be evaluated any number of times with new leaf
// bindings. backward() differentiates the terminal (last) node, which must be
// a scalar.

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace snx::ad {

// Dense row-major matrix. Column vectors are (n x 1), scalars (1 x 1).
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor column(std::vector<double> values);

  std::size_t size() const noexcept { return data.size(); }
  bool is_scalar() const noexcept { return rows == 1 && cols == 1; }
  bool same_shape(const Tensor& o) const noexcept { return rows == o.rows && cols == o.cols; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

using NodeId = std::size_t;

// Handle to a node on a particular tape.
struct Var {
  NodeId id = 0;
};

using Bindings = std::map<std::string, Tensor>;
using Gradients = std::map<std::string, Tensor>;

enum class Op {
  kLeaf,
  kConst,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kAffine,  // a * x + b
  kMatMul,
  kSigmoid,
  kTanh,
  kRelu,
  kAbs,
  kLog,
  kExp,
  kSquare,
  kClamp,
  kDot,
  kSum,
  kL2Norm,
  kCosine,
  kMeanRows,
  kGather,
  kEdgesToAdjacency,
  kNormalizeAdjacency,
  kNoisyOrBlocks,
  kKlBernoulli,
};

class Tape {
 public:
  Var leaf(const std::string& name, std::size_t rows, std::size_t cols = 1);
  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::scalar(value)); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var neg(Var a);
  Var affine(Var a, double scale, double shift);
  Var matmul(Var a, Var b);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var abs(Var a);
  Var log(Var a);
  Var exp(Var a);
  Var square(Var a);
  Var clamp(Var a, double lo, double hi);
  Var dot(Var a, Var b);
  Var sum(Var a);
  Var l2norm(Var a);
  // u.v / max(|u||v|, floor)
  Var cosine(Var u, Var v, double floor = 1e-12);
  // (n x h) -> (h x 1) column of per-column means.
  Var mean_rows(Var a);
  // Column vector of a[indices[k]] (flat indexing).
  Var gather(Var a, std::vector<std::size_t> indices);
  // Edge-weight column -> symmetric (n x n) matrix with zero diagonal.
  Var edges_to_adjacency(Var weights, std::size_t num_nodes,
                         std::vector<std::pair<std::size_t, std::size_t>> edges);
  // D^{-1/2} (A + I) D^{-1/2} with D the row sums of A + I.
  Var normalize_adjacency(Var a);
  // out_i = 1 - prod_j (1 - x_{i,j}) over consecutive blocks of the input.
  Var noisy_or_blocks(Var a, std::vector<std::size_t> block_sizes);
  // Sum of Bernoulli KL(a_i || b_i), both clipped to [delta, 1 - delta].
  Var kl_bernoulli(Var a, Tensor b, double delta = 1e-7);

  // Evaluates every node in order. Returns the terminal scalar.
  double forward(const Bindings& leaves);
  // Gradients of the terminal scalar for every leaf, keyed by leaf name.
  Gradients backward() const;

  const Tensor& value(Var v) const;
  const Bindings& bindings() const noexcept { return bindings_; }
  bool evaluated() const noexcept { return evaluated_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  Var terminal() const;

 private:
  struct Node {
    Op op = Op::kConst;
    std::vector<NodeId> inputs;
    Tensor value;
    std::string name;
    double a = 0.0;
    double b = 0.0;
    std::size_t n = 0;
    std::vector<std::size_t> indices;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    Tensor aux;
  };

  static Node make_node(Op op, std::vector<NodeId> inputs);
  Var push(Node node);
  const Node& node(Var v) const;
  void eval_node(Node& node);

  std::vector<Node> nodes_;
  Bindings bindings_;
  bool evaluated_ = false;
};

// Binary cross-entropy -(t ln p + (1 - t) ln(1 - p)) with both logarithm
// arguments floored at clip. Terms with a zero coefficient are dropped, so t in {0, 1}
// never multiplies an infinite log.
Var binary_cross_entropy(Tape& tape, double target, Var prediction, double clip = 1e-12);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for the named leaf, using the bindings of the last forward pass. Leaves the
// tape re-evaluated at the original bindings.
double finite_diff_check(Tape& tape, const std::string& leaf, double step = 1e-5);

}  // namespace snx::ad
