#include "hep/optim.hpp"

#include <cmath>

#include "hep/error.hpp"

namespace hep {

Tensor& ParameterStore::add(const std::string& name, Tensor t) {
  auto [it, inserted] = params_.emplace(name, std::move(t));
  if (!inserted) throw UsageError("parameter already registered: " + name);
  return it->second;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw NotFoundError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw NotFoundError("unknown parameter: " + name);
  return it->second;
}

void ParameterStore::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void AdamOptimizer::step(ParameterStore& params) {
  ++step_;
  params.step_count++;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (auto& [name, t] : params.items()) {
    if (!t.requires_grad()) continue;  // frozen
    const auto& g = t.grad();
    if (g.size() != t.values().size())
      throw UsageError("missing gradient for parameter: " + name);
    auto& mom = state_[name];
    if (mom.m.empty()) {
      mom.m.assign(g.size(), 0.0);
      mom.v.assign(g.size(), 0.0);
    }
    auto& x = t.values();
    for (size_t i = 0; i < g.size(); ++i) {
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g[i];
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      double mhat = mom.m[i] / bc1;
      double vhat = mom.v[i] / bc2;
      x[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    t.zero_grad();
  }
}

}  // namespace hep
