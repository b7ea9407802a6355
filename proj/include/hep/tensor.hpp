#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace hep {

using Shape = std::vector<int64_t>;

// One node of the reverse-mode tape. `grad` is the persistent accumulator;
// `tmp` is per-pass scratch owned by backward(). A node keeps its parents
// alive so the tape survives as long as its root does.
struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated iff requires_grad
  std::vector<double> tmp;
  bool requires_grad = false;
  int64_t epoch = -1;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // reads self.tmp, adds into parents' tmp

  int64_t size() const { return static_cast<int64_t>(values.size()); }
};

// Value-semantic handle to a tape node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return node_->size(); }
  int64_t rows() const;  // rank-2 only
  int64_t cols() const;
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& grad() const;
  std::vector<double>& grad();

  double item() const;  // single-element tensors
  double at(int64_t r, int64_t c) const;

  void zero_grad();
  bool all_finite() const;

  std::shared_ptr<TensorNode> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode> node_;
};

// --- elementwise and linear-algebra ops -------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Binary ops accept equal shapes, a one-element operand (scalar broadcast),
// or a row vector ({1,D} or {D}) against a {N,D} matrix.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor abs(const Tensor& a);
Tensor sign(const Tensor& a);  // zero gradient everywhere (constant gate)
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor scale(const Tensor& a, double c);

// Multiplies row r of `a` by factors[r]; factors are constants.
Tensor row_scale(const Tensor& a, const std::vector<double>& factors);

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx);

// Row s of the result is the mean of the rows of `x` whose id is s. Empty
// segments yield zero rows and are appended to *empty_segments when given.
Tensor segment_mean(const Tensor& x, const std::vector<int64_t>& ids, int64_t num_segments,
                    std::vector<int64_t>* empty_segments = nullptr);

// Per-coordinate max per segment; backward routes to the argmax row
// (ties to the lowest row index). Empty segments yield zero rows.
Tensor segment_max(const Tensor& x, const std::vector<int64_t>& ids, int64_t num_segments);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& a, Shape shape);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// --- losses ------------------------------------------------------------------

// Mean softmax cross-entropy over rows of `scores` ({B,C} or {C}), computed
// with max-shifted log-sum-exp.
Tensor cross_entropy(const Tensor& scores, const std::vector<int64_t>& targets);

Tensor mse(const Tensor& pred, const Tensor& target);

// Stable sigmoid cross-entropy on logits; `targets` in [0,1], same shape.
Tensor binary_ce(const Tensor& logits, const Tensor& targets);

// --- reverse pass ------------------------------------------------------------

// Accumulates gradients of `root` (a one-element tensor) into every
// requires_grad ancestor. Repeated calls accumulate.
void backward(const Tensor& root);

}  // namespace hep
