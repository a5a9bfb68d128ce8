#include "enmdap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "enmdap/error.hpp"
#include "enmdap/kernels.hpp"

namespace enmdap {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), values_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != values_.size())
    throw ShapeError("shape " + shape_string(shape_) + " holds " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(values_.size()));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n_rows = rows.size();
  const std::size_t n_cols = n_rows ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(n_rows * n_cols);
  for (const auto& row : rows) {
    if (row.size() != n_cols) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({n_rows, n_cols}, std::move(values));
}

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on non-matrix " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on non-matrix " + shape_string(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (values_.size() != 1)
    throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return values_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

const char* op_name(OpTag tag) {
  switch (tag) {
    case OpTag::kLeaf: return "leaf";
    case OpTag::kMatMul: return "matmul";
    case OpTag::kAddRowBias: return "add_row_bias";
    case OpTag::kAdd: return "add";
    case OpTag::kScale: return "scale";
    case OpTag::kRelu: return "relu";
    case OpTag::kPow: return "elementwise_pow";
    case OpTag::kMaskedMeanRows: return "masked_mean_rows";
    case OpTag::kL2NormDiff: return "l2_norm_diff";
    case OpTag::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpTag::kConcatCols: return "concat_cols";
    case OpTag::kSliceCols: return "slice_cols";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }
const Tensor* Var::grad() const { return tape_->adjoint(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{OpTag::kLeaf, {}, std::move(value), requires_grad, std::nullopt, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(OpTag tag, std::vector<std::size_t> parents, Tensor value,
               BackwardFn fn) {
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [&](std::size_t p) { return nodes_[p].requires_grad; });
  nodes_.push_back(Node{tag, std::move(parents), std::move(value), needs,
                        std::nullopt, needs ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

const Tensor* Tape::adjoint(std::size_t id) const {
  const auto& adj = nodes_[id].adjoint;
  return adj ? &*adj : nullptr;
}

std::span<double> Tape::adjoint_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.adjoint) node.adjoint = Tensor(node.value.shape());
  return node.adjoint->values();
}

void Tape::accumulate(std::size_t id, std::span<const double> delta) {
  if (!nodes_[id].requires_grad) return;
  auto buf = adjoint_buffer(id);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += delta[i];
}

void Tape::backward(Var loss) {
  if (loss.value().size() != 1)
    throw ShapeError("backward needs a scalar loss, got shape " +
                     shape_string(loss.shape()));
  for (auto& node : nodes_) node.adjoint.reset();
  if (!nodes_[loss.id()].requires_grad) return;
  // Every requires-grad node up to the loss gets an adjoint, zero when no
  // path reaches it.
  std::vector<bool> reached(loss.id() + 1, false);
  for (std::size_t id = 0; id <= loss.id(); ++id)
    if (nodes_[id].requires_grad) nodes_[id].adjoint = Tensor(nodes_[id].value.shape());
  adjoint_buffer(loss.id())[0] = 1.0;
  reached[loss.id()] = true;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!reached[id] || !node.backward) continue;
    for (std::size_t p : node.parents) reached[p] = true;
    // Parents always have smaller ids, so this node's adjoint is final here
    // and is not touched by the accumulation below.
    node.backward(*this, node.adjoint->values());
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands live on different tapes");
}

void require_rank(Var x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_string(x.shape()));
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t rows = a.shape()[0], inner = a.shape()[1], cols = b.shape()[1];
  if (b.shape()[0] != inner)
    throw ShapeError("matmul: inner dimensions disagree, " + shape_string(a.shape()) +
                     " x " + shape_string(b.shape()));
  Tensor out({rows, cols});
  kernels::matmul_nn(a.value().values(), b.value().values(), out.values(), rows, inner, cols);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(
      OpTag::kMatMul, {ia, ib}, std::move(out),
      [ia, ib, rows, inner, cols](Tape& t, std::span<const double> g) {
        if (t.requires_grad(ia)) {
          std::vector<double> da(rows * inner);
          kernels::matmul_nt(g, t.value(ib).values(), da, rows, inner, cols);
          t.accumulate(ia, da);
        }
        if (t.requires_grad(ib)) {
          std::vector<double> db(inner * cols);
          kernels::matmul_tn(t.value(ia).values(), g, db, rows, inner, cols);
          t.accumulate(ib, db);
        }
      });
}

Var add_row_bias(Var x, Var bias) {
  require_same_tape(x, bias);
  require_rank(x, 2, "add_row_bias");
  require_rank(bias, 1, "add_row_bias");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (bias.shape()[0] != cols)
    throw ShapeError("add_row_bias: bias " + shape_string(bias.shape()) +
                     " does not match rows of " + shape_string(x.shape()));
  Tensor out = x.value();
  const auto b = bias.value().values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) += b[c];
  const std::size_t ix = x.id(), ib = bias.id();
  return x.tape().push(OpTag::kAddRowBias, {ix, ib}, std::move(out),
                       [ix, ib, rows, cols](Tape& t, std::span<const double> g) {
                         t.accumulate(ix, g);
                         if (t.requires_grad(ib)) {
                           std::vector<double> db(cols, 0.0);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < cols; ++c) db[c] += g[r * cols + c];
                           t.accumulate(ib, db);
                         }
                       });
}

Var add(Var a, Var b) {
  const Var terms[] = {a, b};
  return add_n(terms);
}

Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw std::invalid_argument("add_n: no terms");
  const Shape& shape = terms[0].shape();
  Tensor out(shape);
  std::vector<std::size_t> ids;
  for (const Var& v : terms) {
    require_same_tape(terms[0], v);
    if (v.shape() != shape)
      throw ShapeError("add: shape mismatch " + shape_string(shape) + " vs " +
                       shape_string(v.shape()));
    const auto src = v.value().values();
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    ids.push_back(v.id());
  }
  auto parents = ids;
  return terms[0].tape().push(OpTag::kAdd, std::move(parents), std::move(out),
                              [ids](Tape& t, std::span<const double> g) {
                                for (std::size_t id : ids) t.accumulate(id, g);
                              });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  const std::size_t ix = x.id();
  return x.tape().push(OpTag::kScale, {ix}, std::move(out),
                       [ix, factor](Tape& t, std::span<const double> g) {
                         std::vector<double> dx(g.begin(), g.end());
                         for (double& v : dx) v *= factor;
                         t.accumulate(ix, dx);
                       });
}

Var relu(Var x) {
  Tensor out = x.value();
  // NaN passes through so non-finite inputs stay visible downstream.
  for (double& v : out.values()) v = v < 0.0 ? 0.0 : v;
  const std::size_t ix = x.id();
  return x.tape().push(OpTag::kRelu, {ix}, std::move(out),
                       [ix](Tape& t, std::span<const double> g) {
                         const auto xv = t.value(ix).values();
                         std::vector<double> dx(g.size());
                         for (std::size_t i = 0; i < dx.size(); ++i)
                           dx[i] = xv[i] > 0.0 ? g[i] : 0.0;
                         t.accumulate(ix, dx);
                       });
}

namespace {
double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}
}  // namespace

Var elementwise_pow(Var x, int k) {
  if (k < 1)
    throw std::invalid_argument("elementwise_pow: exponent must be >= 1, got " +
                                std::to_string(k));
  Tensor out = x.value();
  for (double& v : out.values()) v = ipow(v, k);
  const std::size_t ix = x.id();
  return x.tape().push(OpTag::kPow, {ix}, std::move(out),
                       [ix, k](Tape& t, std::span<const double> g) {
                         const auto xv = t.value(ix).values();
                         std::vector<double> dx(g.size());
                         for (std::size_t i = 0; i < dx.size(); ++i)
                           dx[i] = k * ipow(xv[i], k - 1) * g[i];
                         t.accumulate(ix, dx);
                       });
}

Var masked_mean_rows(Var m, const std::vector<bool>& mask) {
  require_rank(m, 2, "masked_mean_rows");
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  if (mask.size() != rows)
    throw ShapeError("masked_mean_rows: mask of length " + std::to_string(mask.size()) +
                     " for " + shape_string(m.shape()));
  const auto count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (count == 0) throw EmptyClassError("masked_mean_rows: no rows selected");
  Tensor out({cols});
  const auto mv = m.value().values();
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    for (std::size_t c = 0; c < cols; ++c) out[c] += mv[r * cols + c];
  }
  const double inv = 1.0 / static_cast<double>(count);
  for (double& v : out.values()) v *= inv;
  const std::size_t im = m.id();
  return m.tape().push(OpTag::kMaskedMeanRows, {im}, std::move(out),
                       [im, mask, rows, cols, inv](Tape& t, std::span<const double> g) {
                         std::vector<double> dm(rows * cols, 0.0);
                         for (std::size_t r = 0; r < rows; ++r) {
                           if (!mask[r]) continue;
                           for (std::size_t c = 0; c < cols; ++c) dm[r * cols + c] = g[c] * inv;
                         }
                         t.accumulate(im, dm);
                       });
}

Var l2_norm_diff(Var a, Var b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape())
    throw ShapeError("l2_norm_diff: shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  const auto av = a.value().values(), bv = b.value().values();
  double sq = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) sq += (av[i] - bv[i]) * (av[i] - bv[i]);
  const double norm = std::sqrt(sq);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(OpTag::kL2NormDiff, {ia, ib}, Tensor::scalar(norm),
                       [ia, ib, norm](Tape& t, std::span<const double> g) {
                         if (norm == 0.0) return;
                         const auto av = t.value(ia).values(), bv = t.value(ib).values();
                         std::vector<double> da(av.size()), db(av.size());
                         for (std::size_t i = 0; i < av.size(); ++i) {
                           da[i] = g[0] * (av[i] - bv[i]) / norm;
                           db[i] = -da[i];
                         }
                         t.accumulate(ia, da);
                         t.accumulate(ib, db);
                       });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  if (labels.size() != rows)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_string(logits.shape()));
  if (rows == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  for (std::size_t r = 0; r < rows; ++r)
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= cols)
      throw LabelError("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                           " at row " + std::to_string(r) + " outside [0, " +
                           std::to_string(cols) + ")",
                       r);
  std::vector<double> probs(rows * cols), row_loss(rows);
  kernels::softmax_xent_rows(logits.value().values(), labels, probs, row_loss, rows, cols);
  double total = 0.0;
  for (double v : row_loss) total += v;
  const double inv = 1.0 / static_cast<double>(rows);
  std::vector<int> y(labels.begin(), labels.end());
  const std::size_t il = logits.id();
  return logits.tape().push(
      OpTag::kSoftmaxCrossEntropy, {il}, Tensor::scalar(total * inv),
      [il, probs = std::move(probs), y = std::move(y), rows, cols, inv](
          Tape& t, std::span<const double> g) {
        std::vector<double> dl(probs);
        for (std::size_t r = 0; r < rows; ++r) dl[r * cols + static_cast<std::size_t>(y[r])] -= 1.0;
        const double s = g[0] * inv;
        for (double& v : dl) v *= s;
        t.accumulate(il, dl);
      });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const std::size_t rows = parts[0].value().rank() == 2 ? parts[0].shape()[0] : 0;
  std::vector<std::size_t> widths, ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    require_rank(p, 2, "concat_cols");
    if (p.shape()[0] != rows)
      throw ShapeError("concat_cols: row count mismatch " + shape_string(parts[0].shape()) +
                       " vs " + shape_string(p.shape()));
    widths.push_back(p.shape()[1]);
    ids.push_back(p.id());
    total += p.shape()[1];
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].value().values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k],
                  out.values().begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    offset += widths[k];
  }
  auto parents = ids;
  return parts[0].tape().push(
      OpTag::kConcatCols, std::move(parents), std::move(out),
      [ids, widths, rows, total](Tape& t, std::span<const double> g) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.requires_grad(ids[k])) {
            std::vector<double> d(rows * widths[k]);
            for (std::size_t r = 0; r < rows; ++r)
              std::copy_n(g.begin() + static_cast<std::ptrdiff_t>(r * total + offset), widths[k],
                          d.begin() + static_cast<std::ptrdiff_t>(r * widths[k]));
            t.accumulate(ids[k], d);
          }
          offset += widths[k];
        }
      });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (begin >= end || end > cols)
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for " + shape_string(x.shape()));
  const std::size_t width = end - begin;
  Tensor out({rows, width});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c) out.at(r, c) = x.value().at(r, begin + c);
  const std::size_t ix = x.id();
  return x.tape().push(OpTag::kSliceCols, {ix}, std::move(out),
                       [ix, rows, cols, begin, width](Tape& t, std::span<const double> g) {
                         std::vector<double> dx(rows * cols, 0.0);
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < width; ++c)
                             dx[r * cols + begin + c] = g[r * width + c];
                         t.accumulate(ix, dx);
                       });
}

// ---------------------------------------------------------------------------
// Gradient check

namespace {

double evaluate(const std::function<Var(std::span<const Var>)>& fn,
                std::span<const Tensor> points) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(points.size());
  for (const Tensor& p : points) leaves.push_back(tape.leaf(p, false));
  return fn(leaves).value().item();
}

}  // namespace

double grad_check(const std::function<Var(std::span<const Var>)>& fn,
                  std::span<const Tensor> points, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : points) leaves.push_back(tape.leaf(p, true));
    Var out = fn(leaves);
    tape.backward(out);
    for (const Var& leaf : leaves)
      analytic.push_back(leaf.grad() ? *leaf.grad() : Tensor(leaf.shape()));
  }

  double worst = 0.0;
  std::vector<Tensor> probe(points.begin(), points.end());
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (std::size_t i = 0; i < probe[p].size(); ++i) {
      const double orig = probe[p][i];
      probe[p][i] = orig + step;
      const double up = evaluate(fn, probe);
      probe[p][i] = orig - step;
      const double down = evaluate(fn, probe);
      probe[p][i] = orig;
      const double fd = (up - down) / (2.0 * step);
      const double ad = analytic[p][i];
      const double err = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double grad_check(const std::function<Var(Var)>& fn, const Tensor& point, double step) {
  const Tensor points[] = {point};
  return grad_check([&](std::span<const Var> leaves) { return fn(leaves[0]); }, points, step);
}

}  // namespace enmdap
