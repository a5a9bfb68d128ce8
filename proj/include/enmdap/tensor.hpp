#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace enmdap {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles. Rank 0 is a scalar.
class Tensor {
 public:
  Tensor() : values_(1, 0.0) {}
  /// Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape);
  /// Throws ShapeError if `values.size()` disagrees with the shape.
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor full(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }

  /// Value of a single-element tensor.
  double item() const;
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

enum class OpTag {
  kLeaf,
  kMatMul,
  kAddRowBias,
  kAdd,
  kScale,
  kRelu,
  kPow,
  kMaskedMeanRows,
  kL2NormDiff,
  kSoftmaxCrossEntropy,
  kConcatCols,
  kSliceCols,
};

const char* op_name(OpTag tag);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  /// Adjoint after Tape::backward; nullptr for nodes that do not require grad.
  const Tensor* grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only computation graph. Node ids increase in creation order, which
/// is a topological order, so backward is a single reverse sweep.
///
/// A tape is not thread-safe; build distinct graphs on distinct threads.
class Tape {
 public:
  /// Accumulates `upstream`-scaled contributions into parent adjoints.
  using BackwardFn = std::function<void(Tape&, std::span<const double> upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);

  /// Reverse sweep from a scalar loss. Clears adjoints from any earlier sweep.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  OpTag tag(Var v) const { return nodes_[v.id()].tag; }
  const std::vector<std::size_t>& parents(Var v) const { return nodes_[v.id()].parents; }

  // Used by op implementations.
  Var push(OpTag tag, std::vector<std::size_t> parents, Tensor value, BackwardFn fn);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor* adjoint(std::size_t id) const;
  /// Adds `delta` into the adjoint of node `id` if it requires grad.
  void accumulate(std::size_t id, std::span<const double> delta);
  /// Writable adjoint buffer of node `id`, allocated on first use. Only valid
  /// for nodes that require grad.
  std::span<double> adjoint_buffer(std::size_t id);

 private:
  struct Node {
    OpTag tag;
    std::vector<std::size_t> parents;
    Tensor value;
    bool requires_grad;
    std::optional<Tensor> adjoint;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // push never invalidates references to earlier nodes
};

// Operations. All shape rules are explicit; mismatches throw ShapeError.

/// [B x p] * [p x q] -> [B x q].
Var matmul(Var a, Var b);
/// Adds bias [q] to every row of x [B x q]. The only broadcasting rule.
Var add_row_bias(Var x, Var bias);
/// Elementwise sum of two same-shape tensors.
Var add(Var a, Var b);
/// Sum of one or more same-shape tensors.
Var add_n(std::span<const Var> terms);
Var scale(Var x, double factor);
/// max(0, x); derivative at exactly 0 is 0.
Var relu(Var x);
/// x^k elementwise, k >= 1.
Var elementwise_pow(Var x, int k);
/// Mean of the rows of m [B x d] selected by `mask`; result has shape [d].
/// Throws EmptyClassError if no row is selected.
Var masked_mean_rows(Var m, const std::vector<bool>& mask);
/// ||a - b||_2 as a scalar; gradient is the zero vector where a == b.
Var l2_norm_diff(Var a, Var b);
/// Batch mean of -log softmax(logits)[label]. Throws LabelError for labels
/// outside [0, C).
Var softmax_cross_entropy(Var logits, std::span<const int> labels);
/// Column-wise concatenation of [B x d_i] parts in order.
Var concat_cols(std::span<const Var> parts);
/// Columns [begin, end) of x [B x d].
Var slice_cols(Var x, std::size_t begin, std::size_t end);

/// Compares reverse-mode adjoints with central differences
/// (f(x+h) - f(x-h)) / 2h for every coordinate of every point and returns the
/// largest |ad - fd| / max(1, |ad|, |fd|).
///
/// `fn` receives one requires-grad leaf per entry of `points`, all on the
/// same tape, and must return a scalar built from them.
double grad_check(const std::function<Var(std::span<const Var>)>& fn,
                  std::span<const Tensor> points, double step);
double grad_check(const std::function<Var(Var)>& fn, const Tensor& point,
                  double step);

}  // namespace enmdap
