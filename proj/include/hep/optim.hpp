#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "hep/tensor.hpp"

namespace hep {

// Ordered name -> tensor map. Iteration order is lexicographic, which makes
// updates and serialization deterministic.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  std::map<std::string, Tensor>& items() { return params_; }
  const std::map<std::string, Tensor>& items() const { return params_; }
  size_t count() const { return params_.size(); }

  void zero_grads();
  int64_t step_count = 0;

 private:
  std::map<std::string, Tensor> params_;
};

// Bias-corrected adaptive-moment update (Adam).
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update in lexicographic parameter order, then zeroes
  // gradients. Parameters with requires_grad == false are skipped (frozen).
  void step(ParameterStore& params);

  int64_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::map<std::string, Moments> state_;
  int64_t step_ = 0;
};

}  // namespace hep
