#include "hep/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "hep/error.hpp"

namespace hep {

namespace {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

int64_t shape_count(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

void check_shape(const Shape& s) {
  for (int64_t d : s) {
    if (d <= 0) throw ValidationError("tensor extents must be positive, got " + shape_str(s));
  }
}

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> values,
                                      std::vector<std::shared_ptr<TensorNode>> parents,
                                      std::function<void(TensorNode&)> backprop) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  for (const auto& p : parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
    n->grad.assign(n->values.size(), 0.0);
  }
  return n;
}

void require_rank2(const Tensor& t, const char* what) {
  if (t.shape().size() != 2)
    throw DimensionError(std::string(what) + " expects a rank-2 tensor, got " + shape_str(t.shape()));
}

// Index mapping for the supported broadcasts.
enum class Bc { Equal, Scalar, Row };

struct BcPlan {
  Shape out;
  Bc a = Bc::Equal;
  Bc b = Bc::Equal;
  int64_t cols = 0;
};

bool is_row_of(const Shape& small, const Shape& big) {
  if (big.size() != 2) return false;
  if (small.size() == 1 && small[0] == big[1]) return true;
  if (small.size() == 2 && small[0] == 1 && small[1] == big[1]) return true;
  return false;
}

BcPlan broadcast_plan(const Tensor& a, const Tensor& b, const char* op) {
  BcPlan plan;
  if (a.shape() == b.shape()) {
    plan.out = a.shape();
    return plan;
  }
  if (b.size() == 1) {
    plan.out = a.shape();
    plan.b = Bc::Scalar;
    return plan;
  }
  if (a.size() == 1) {
    plan.out = b.shape();
    plan.a = Bc::Scalar;
    return plan;
  }
  if (is_row_of(b.shape(), a.shape())) {
    plan.out = a.shape();
    plan.b = Bc::Row;
    plan.cols = a.shape()[1];
    return plan;
  }
  if (is_row_of(a.shape(), b.shape())) {
    plan.out = b.shape();
    plan.a = Bc::Row;
    plan.cols = b.shape()[1];
    return plan;
  }
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()));
}

inline int64_t bc_index(Bc kind, int64_t i, int64_t cols) {
  switch (kind) {
    case Bc::Equal: return i;
    case Bc::Scalar: return 0;
    case Bc::Row: return i % cols;
  }
  return i;
}

// d(out)/da and d(out)/db as functions of the operand values.
template <typename Fwd, typename Da, typename Db>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Da da, Db db) {
  BcPlan plan = broadcast_plan(a, b, name);
  int64_t n = shape_count(plan.out);
  std::vector<double> out(static_cast<size_t>(n));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int64_t i = 0; i < n; ++i)
    out[i] = fwd(av[bc_index(plan.a, i, plan.cols)], bv[bc_index(plan.b, i, plan.cols)]);

  auto an = a.node();
  auto bn = b.node();
  auto backprop = [an = an.get(), bn = bn.get(), plan, da, db](TensorNode& self) {
    int64_t n = self.size();
    for (int64_t i = 0; i < n; ++i) {
      double g = self.tmp[i];
      double x = an->values[bc_index(plan.a, i, plan.cols)];
      double y = bn->values[bc_index(plan.b, i, plan.cols)];
      if (an->requires_grad) an->tmp[bc_index(plan.a, i, plan.cols)] += g * da(x, y);
      if (bn->requires_grad) bn->tmp[bc_index(plan.b, i, plan.cols)] += g * db(x, y);
    }
  };
  return Tensor::wrap(make_node(plan.out, std::move(out), {an, bn}, backprop));
}

template <typename Fwd, typename Dx>
Tensor unary_op(const Tensor& a, Fwd fwd, Dx dx) {
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.values()[i]);
  auto an = a.node();
  auto backprop = [an = an.get(), dx](TensorNode& self) {
    for (int64_t i = 0; i < self.size(); ++i) an->tmp[i] += self.tmp[i] * dx(an->values[i]);
  };
  return Tensor::wrap(make_node(a.shape(), std::move(out), {an}, backprop));
}

}  // namespace

// --- Tensor ------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  int64_t n = shape_count(shape);
  return from(std::move(shape), std::vector<double>(static_cast<size_t>(n), value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (shape_count(shape) != static_cast<int64_t>(values.size()))
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->values.size(), 0.0);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

int64_t Tensor::rows() const {
  if (shape().size() != 2) throw UsageError("rows() requires a rank-2 tensor, got " + shape_str(shape()));
  return shape()[0];
}

int64_t Tensor::cols() const {
  if (shape().size() != 2) throw UsageError("cols() requires a rank-2 tensor, got " + shape_str(shape()));
  return shape()[1];
}

const std::vector<double>& Tensor::grad() const {
  if (!node_->requires_grad) throw UsageError("tensor does not require gradients");
  return node_->grad;
}

std::vector<double>& Tensor::grad() {
  if (!node_->requires_grad) throw UsageError("tensor does not require gradients");
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw UsageError("item() requires a one-element tensor, got " + shape_str(shape()));
  return node_->values[0];
}

double Tensor::at(int64_t r, int64_t c) const {
  if (shape().size() != 2) throw UsageError("at() requires a rank-2 tensor");
  return node_->values[static_cast<size_t>(r * cols() + c)];
}

void Tensor::zero_grad() {
  if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : node_->values)
    if (!std::isfinite(v)) return false;
  return true;
}

// --- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  int64_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + p * n;
      double* orow = out.data() + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  auto an = a.node();
  auto bn = b.node();
  auto backprop = [an = an.get(), bn = bn.get(), m, k, n](TensorNode& self) {
    const double* G = self.tmp.data();
    if (an->requires_grad) {
      const double* B = bn->values.data();
      double* gA = an->tmp.data();
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = G + i * n;
          const double* brow = B + p * n;
          for (int64_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          gA[i * k + p] += s;
        }
      }
    }
    if (bn->requires_grad) {
      const double* A = an->values.data();
      double* gB = bn->tmp.data();
      for (int64_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (int64_t p = 0; p < k; ++p) {
          double aip = A[i * k + p];
          if (aip == 0.0) continue;
          double* gbrow = gB + p * n;
          for (int64_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  };
  return Tensor::wrap(make_node({m, n}, std::move(out), {an, bn}, backprop));
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sign(const Tensor& a) {
  // Constant gate: detaches from the tape.
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) {
    double x = a.values()[i];
    out[i] = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  }
  return Tensor::from(a.shape(), std::move(out), false);
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); },
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return c * x; }, [c](double) { return c; });
}

Tensor row_scale(const Tensor& a, const std::vector<double>& factors) {
  require_rank2(a, "row_scale");
  int64_t r = a.shape()[0], c = a.shape()[1];
  if (static_cast<int64_t>(factors.size()) != r)
    throw DimensionError("row_scale: " + std::to_string(factors.size()) + " factors for " +
                         std::to_string(r) + " rows");
  std::vector<double> out(a.values().size());
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[i * c + j] = a.values()[i * c + j] * factors[i];
  auto an = a.node();
  auto backprop = [an = an.get(), factors, r, c](TensorNode& self) {
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) an->tmp[i * c + j] += self.tmp[i * c + j] * factors[i];
  };
  return Tensor::wrap(make_node(a.shape(), std::move(out), {an}, backprop));
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx) {
  require_rank2(x, "gather_rows");
  int64_t n = x.shape()[0], d = x.shape()[1];
  for (int64_t i : idx)
    if (i < 0 || i >= n)
      throw IndexError("gather_rows: index " + std::to_string(i) + " out of range [0," +
                       std::to_string(n) + ")");
  int64_t m = static_cast<int64_t>(idx.size());
  std::vector<double> out(static_cast<size_t>(m * d));
  for (int64_t r = 0; r < m; ++r)
    std::copy_n(x.values().data() + idx[r] * d, d, out.data() + r * d);
  auto xn = x.node();
  auto backprop = [xn = xn.get(), idx, d](TensorNode& self) {
    for (size_t r = 0; r < idx.size(); ++r) {
      const double* g = self.tmp.data() + r * d;
      double* dst = xn->tmp.data() + idx[r] * d;
      for (int64_t j = 0; j < d; ++j) dst[j] += g[j];
    }
  };
  return Tensor::wrap(make_node({m, d}, std::move(out), {xn}, backprop));
}

Tensor segment_mean(const Tensor& x, const std::vector<int64_t>& ids, int64_t num_segments,
                    std::vector<int64_t>* empty_segments) {
  require_rank2(x, "segment_mean");
  int64_t n = x.shape()[0], d = x.shape()[1];
  if (static_cast<int64_t>(ids.size()) != n)
    throw DimensionError("segment_mean: " + std::to_string(ids.size()) + " ids for " +
                         std::to_string(n) + " rows");
  if (num_segments <= 0) throw ValidationError("segment_mean: num_segments must be positive");
  std::vector<int64_t> counts(static_cast<size_t>(num_segments), 0);
  for (int64_t id : ids) {
    if (id < 0 || id >= num_segments)
      throw IndexError("segment_mean: id " + std::to_string(id) + " out of range [0," +
                       std::to_string(num_segments) + ")");
    counts[static_cast<size_t>(id)]++;
  }
  std::vector<double> out(static_cast<size_t>(num_segments * d), 0.0);
  for (int64_t r = 0; r < n; ++r) {
    const double* src = x.values().data() + r * d;
    double* dst = out.data() + ids[r] * d;
    for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
  }
  for (int64_t s = 0; s < num_segments; ++s) {
    if (counts[s] == 0) {
      if (empty_segments) empty_segments->push_back(s);
      continue;
    }
    double inv = 1.0 / static_cast<double>(counts[s]);
    double* dst = out.data() + s * d;
    for (int64_t j = 0; j < d; ++j) dst[j] *= inv;
  }
  auto xn = x.node();
  auto backprop = [xn = xn.get(), ids, counts, d](TensorNode& self) {
    for (size_t r = 0; r < ids.size(); ++r) {
      double inv = 1.0 / static_cast<double>(counts[static_cast<size_t>(ids[r])]);
      const double* g = self.tmp.data() + ids[r] * d;
      double* dst = xn->tmp.data() + r * d;
      for (int64_t j = 0; j < d; ++j) dst[j] += g[j] * inv;
    }
  };
  return Tensor::wrap(make_node({num_segments, d}, std::move(out), {xn}, backprop));
}

Tensor segment_max(const Tensor& x, const std::vector<int64_t>& ids, int64_t num_segments) {
  require_rank2(x, "segment_max");
  int64_t n = x.shape()[0], d = x.shape()[1];
  if (static_cast<int64_t>(ids.size()) != n)
    throw DimensionError("segment_max: " + std::to_string(ids.size()) + " ids for " +
                         std::to_string(n) + " rows");
  if (num_segments <= 0) throw ValidationError("segment_max: num_segments must be positive");
  std::vector<int64_t> argmax(static_cast<size_t>(num_segments * d), -1);
  std::vector<double> out(static_cast<size_t>(num_segments * d), 0.0);
  for (int64_t r = 0; r < n; ++r) {
    int64_t s = ids[r];
    if (s < 0 || s >= num_segments)
      throw IndexError("segment_max: id " + std::to_string(s) + " out of range [0," +
                       std::to_string(num_segments) + ")");
    for (int64_t j = 0; j < d; ++j) {
      double v = x.values()[r * d + j];
      int64_t& am = argmax[static_cast<size_t>(s * d + j)];
      if (am < 0 || v > out[s * d + j]) {
        am = r;
        out[s * d + j] = v;
      }
    }
  }
  auto xn = x.node();
  auto backprop = [xn = xn.get(), argmax, d, num_segments](TensorNode& self) {
    for (int64_t s = 0; s < num_segments; ++s) {
      for (int64_t j = 0; j < d; ++j) {
        int64_t am = argmax[static_cast<size_t>(s * d + j)];
        if (am >= 0) xn->tmp[am * d + j] += self.tmp[s * d + j];
      }
    }
  };
  return Tensor::wrap(make_node({num_segments, d}, std::move(out), {xn}, backprop));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_rows: no parts");
  int64_t d = -1, total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (d < 0) d = p.shape()[1];
    if (p.shape()[1] != d)
      throw DimensionError("concat_rows: column mismatch, " + std::to_string(p.shape()[1]) +
                           " vs " + std::to_string(d));
    total += p.shape()[0];
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total * d));
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::vector<int64_t> offsets;
  int64_t off = 0;
  for (const auto& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    parents.push_back(p.node());
    offsets.push_back(off);
    off += p.size();
  }
  std::vector<TensorNode*> raw;
  for (auto& p : parents) raw.push_back(p.get());
  auto backprop = [raw, offsets](TensorNode& self) {
    for (size_t i = 0; i < raw.size(); ++i) {
      if (!raw[i]->requires_grad) continue;
      for (int64_t j = 0; j < raw[i]->size(); ++j) raw[i]->tmp[j] += self.tmp[offsets[i] + j];
    }
  };
  return Tensor::wrap(make_node({total, d}, std::move(out), std::move(parents), backprop));
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_shape(shape);
  if (shape_count(shape) != a.size())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto an = a.node();
  auto backprop = [an = an.get()](TensorNode& self) {
    for (int64_t i = 0; i < self.size(); ++i) an->tmp[i] += self.tmp[i];
  };
  return Tensor::wrap(make_node(std::move(shape), a.values(), {an}, backprop));
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto an = a.node();
  auto backprop = [an = an.get()](TensorNode& self) {
    for (auto& g : an->tmp) g += self.tmp[0];
  };
  return Tensor::wrap(make_node({1}, {s}, {an}, backprop));
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  double inv = 1.0 / static_cast<double>(a.size());
  auto an = a.node();
  auto backprop = [an = an.get(), inv](TensorNode& self) {
    for (auto& g : an->tmp) g += self.tmp[0] * inv;
  };
  return Tensor::wrap(make_node({1}, {s * inv}, {an}, backprop));
}

Tensor cross_entropy(const Tensor& scores, const std::vector<int64_t>& targets) {
  Tensor s = scores.shape().size() == 1 ? reshape(scores, {1, scores.size()}) : scores;
  require_rank2(s, "cross_entropy");
  int64_t b = s.shape()[0], c = s.shape()[1];
  if (static_cast<int64_t>(targets.size()) != b)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(b) + " rows");
  for (int64_t t : targets)
    if (t < 0 || t >= c)
      throw IndexError("cross_entropy: class " + std::to_string(t) + " out of range [0," +
                       std::to_string(c) + ")");
  double loss = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    const double* row = s.values().data() + i * c;
    double mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    loss += mx + std::log(z) - row[targets[i]];
  }
  loss /= static_cast<double>(b);
  auto sn = s.node();
  auto backprop = [sn = sn.get(), targets, b, c](TensorNode& self) {
    double g = self.tmp[0] / static_cast<double>(b);
    for (int64_t i = 0; i < b; ++i) {
      const double* row = sn->values.data() + i * c;
      double mx = row[0];
      for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
      double z = 0.0;
      for (int64_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
      for (int64_t j = 0; j < c; ++j) {
        double p = std::exp(row[j] - mx) / z;
        sn->tmp[i * c + j] += g * (p - (j == targets[i] ? 1.0 : 0.0));
      }
    }
  };
  return Tensor::wrap(make_node({1}, {loss}, {sn}, backprop));
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw DimensionError("mse: shapes differ, " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
  int64_t n = pred.size();
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = pred.values()[i] - target.values()[i];
    loss += d * d;
  }
  loss /= static_cast<double>(n);
  auto pn = pred.node();
  auto tn = target.node();
  auto backprop = [pn = pn.get(), tn = tn.get(), n](TensorNode& self) {
    double g = self.tmp[0] * 2.0 / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      double d = pn->values[i] - tn->values[i];
      if (pn->requires_grad) pn->tmp[i] += g * d;
      if (tn->requires_grad) tn->tmp[i] -= g * d;
    }
  };
  return Tensor::wrap(make_node({1}, {loss}, {pn, tn}, backprop));
}

Tensor binary_ce(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape())
    throw DimensionError("binary_ce: shapes differ, " + shape_str(logits.shape()) + " vs " +
                         shape_str(targets.shape()));
  int64_t n = logits.size();
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double x = logits.values()[i], t = targets.values()[i];
    loss += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::fabs(x)));
  }
  loss /= static_cast<double>(n);
  auto ln = logits.node();
  auto tn = targets.node();
  auto backprop = [ln = ln.get(), tn = tn.get(), n](TensorNode& self) {
    double g = self.tmp[0] / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      double x = ln->values[i], t = tn->values[i];
      if (ln->requires_grad) ln->tmp[i] += g * (1.0 / (1.0 + std::exp(-x)) - t);
      if (tn->requires_grad) tn->tmp[i] += g * (-x);
    }
  };
  return Tensor::wrap(make_node({1}, {loss}, {ln, tn}, backprop));
}

void backward(const Tensor& root) {
  if (!root.defined()) throw UsageError("backward: undefined tensor");
  if (root.size() != 1)
    throw UsageError("backward: root must be a one-element tensor, got " + shape_str(root.shape()));
  if (!root.requires_grad()) return;

  static std::atomic<int64_t> pass_counter{0};
  const int64_t ep = ++pass_counter;

  struct Frame {
    TensorNode* n;
    size_t next;
  };
  std::vector<TensorNode*> order;  // postorder: parents before consumers
  std::vector<Frame> stack;
  TensorNode* rootn = root.node().get();
  rootn->epoch = ep;
  stack.push_back({rootn, 0});
  while (!stack.empty()) {
    Frame f = stack.back();
    if (f.next < f.n->parents.size()) {
      stack.back().next++;
      TensorNode* p = f.n->parents[f.next].get();
      if (p->requires_grad && p->epoch != ep) {
        p->epoch = ep;
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  for (TensorNode* n : order) n->tmp.assign(n->values.size(), 0.0);
  rootn->tmp[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
  for (TensorNode* n : order) {
    for (size_t i = 0; i < n->tmp.size(); ++i) n->grad[i] += n->tmp[i];
    n->tmp.clear();
    n->tmp.shrink_to_fit();
  }
}

}  // namespace hep
