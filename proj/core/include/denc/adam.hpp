#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "denc/tensor.hpp"

namespace denc {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. One slot pair (m, v) per named parameter,
// created on first update. step() applies one update in-place.
template <typename S>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  int64_t step_count() const { return t_; }

  // params/grads keyed by name; every grad must match its param's shape.
  void step(std::map<std::string, Tensor<S>>& params,
            const std::map<std::string, Tensor<S>>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;  // param not touched this step
      const Tensor<S>& g = git->second;
      if (!g.same_shape(p)) {
        throw std::runtime_error("adam: grad shape " + shape_str(g.shape) +
                                 " != param shape " + shape_str(p.shape) + " for " + name);
      }
      Slot& s = slot(name, p);
      for (size_t i = 0; i < p.data.size(); ++i) {
        const double gi = static_cast<double>(g.data[i]);
        s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * gi;
        s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        p.data[i] -= static_cast<S>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

 private:
  struct Slot {
    std::vector<double> m, v;
  };

  Slot& slot(const std::string& name, const Tensor<S>& p) {
    auto it = slots_.find(name);
    if (it == slots_.end()) {
      Slot s;
      s.m.assign(p.data.size(), 0.0);
      s.v.assign(p.data.size(), 0.0);
      it = slots_.emplace(name, std::move(s)).first;
    } else if (it->second.m.size() != p.data.size()) {
      throw std::runtime_error("adam: parameter " + name + " changed size mid-run");
    }
    return it->second;
  }

  AdamConfig cfg_;
  std::map<std::string, Slot> slots_;
  int64_t t_ = 0;
};

}  // namespace denc
