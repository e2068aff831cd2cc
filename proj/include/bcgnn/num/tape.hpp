#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bcgnn/num/matrix.hpp"

namespace bcgnn::num {

/// A trainable tensor: value plus accumulated gradient of the same shape.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode differentiation tape over dense matrices.
///
/// Nodes are appended in evaluation order, so parents always precede their
/// children. backward() walks the tape once in reverse and then adds the
/// gradient of every parameter node into the bound Parameter::grad.
class Tape {
 public:
  /// Receives the gradient flowing into a node and pushes it to the parents.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Matrix value);
  /// Leaf that receives a gradient (readable via grad()).
  Var variable(Matrix value);
  /// Leaf bound to a Parameter; backward() accumulates into p.grad.
  Var parameter(Parameter& p);

  /// Appends a computed node. fn is dropped when no parent requires grad.
  Var push(Matrix value, std::span<const Var> parents, BackwardFn fn);

  /// Installs the backward closure of a node created by push() with an empty
  /// closure; for ops whose closure needs the node's own id.
  void set_backward(Var v, BackwardFn fn);

  /// Runs reverse accumulation from a 1x1 loss node. Throws ShapeError for a
  /// non-scalar loss. Node gradients are zeroed first, so repeated calls do
  /// not compound on the tape itself (parameter grads still accumulate).
  void backward(Var loss);

  const Matrix& value(Var v) const { return nodes_[v.id_].value; }
  /// Gradient of a leaf from the last backward pass; zero when none reached
  /// it. Interior nodes release their gradient once propagated.
  const Matrix& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

  // Id-based accessors for backward closures, which capture ids not Vars.
  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Adds g into the gradient slot of node id (used by backward closures).
  void accumulate(std::size_t id, const Matrix& g);
  void accumulate(std::size_t id, Matrix&& g);
  /// Mutable gradient slot of node id, allocated on first use.
  Matrix& grad_slot(std::size_t id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Var make(Node node);

  std::vector<Node> nodes_;
};

enum class Aggregation { mean, sum, max };

// Differentiable operations. Every result lives on the tape of its inputs.

Var matmul(Var a, Var b);
/// a * b^T; weights are stored out x in, so x * W^T is the affine map.
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Adds a 1 x cols row to every row of a.
Var add_row(Var a, Var row);
/// out(i, j) = col(i, 0) + row(0, j).
Var outer_add(Var col, Var row);
Var mul(Var a, Var b);
/// Elementwise product with a constant matrix.
Var mul_const(Var a, const Matrix& c);
Var scale(Var a, double s);
Var activation(Var x, Activation kind);
inline Var relu(Var x) { return activation(x, Activation::relu()); }
inline Var leaky_relu(Var x, double slope) { return activation(x, Activation::leaky_relu(slope)); }
/// out.row(k) = a.row(idx[k]).
Var gather_rows(Var a, std::span<const std::size_t> idx);
/// out(k, 0) = a[idx[k]] over the flat row-major storage of a.
Var gather_elements(Var a, std::span<const std::size_t> idx);
/// Reduces the rows of a into `segments` output rows; row k goes to
/// segment[k]. Empty segments yield zero rows. Max routes the gradient to the
/// first maximal row per column. Sums do not depend on the order of rows
/// within a segment.
Var segment_reduce(Var a, std::span<const std::size_t> segment, std::size_t segments,
                   Aggregation agg);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var transpose(Var a);
/// One addend of fused_sum: the rows of `source` selected by `index`, or all
/// rows in order when `index` is empty.
struct Addend {
  Var source;
  std::vector<std::size_t> index;
};
/// act(sum of addends + bias row) as a single tape node; same result as
/// chaining gather_rows, add, add_row and activation. `bias` may be invalid.
/// The activation must be identity, relu or leaky_relu with slope >= 0.
Var fused_sum(std::span<const Addend> addends, Var bias, Activation act);
/// Row-wise softmax.
Var softmax_rows(Var a);
/// Multiplies row k of a by s(k, 0).
Var scale_rows(Var a, Var s);
/// Sum of all entries as a 1x1 node.
Var sum(Var a);
/// Mean of all entries as a 1x1 node; 0 for an empty input.
Var mean(Var a);
/// Mean over rows of squared (pred - target); pred and target are k x 1.
Var mean_squared_error(Var pred, const Matrix& target);
/// Mean over rows of -log softmax(logits)[row, target[row]].
Var cross_entropy(Var logits, std::span<const std::size_t> target);

}  // namespace bcgnn::num

namespace bcgnn::num {

/// Keeps freed tape buffers in the process heap instead of returning them to
/// the OS, so per-epoch allocations do not page-fault. Idempotent; a no-op
/// outside glibc.
void retain_heap_memory();

}  // namespace bcgnn::num
