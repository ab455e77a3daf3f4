#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "psvae/tensor.hpp"

namespace psvae {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named parameters with gradients and Adam moments. Iteration follows
// insertion order so updates are reproducible.
template <class T>
class ParameterStore {
 public:
  struct Entry {
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> m;
    Tensor<T> v;
  };

  void add(const std::string& name, Tensor<T> init) {
    if (entries_.count(name)) throw std::invalid_argument("parameter already exists: " + name);
    Entry e;
    e.grad = Tensor<T>(init.shape);
    e.m = Tensor<T>(init.shape);
    e.v = Tensor<T>(init.shape);
    e.value = std::move(init);
    order_.push_back(name);
    entries_.emplace(name, std::move(e));
  }

  Entry& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
  }
  const Entry& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  const std::vector<std::string>& names() const { return order_; }
  int64_t step_count() const { return step_; }
  void set_step_count(int64_t s) { step_ = s; }

  void zero_grad() {
    for (const auto& name : order_) {
      auto& g = entries_.at(name).grad;
      std::fill(g.data.begin(), g.data.end(), T(0));
    }
  }

  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& name : order_) n += entries_.at(name).value.size();
    return n;
  }

  template <class U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& name : order_) out.add(name, entries_.at(name).value.template cast<U>());
    out.set_step_count(step_);
    return out;
  }

  // One bias-corrected Adam update over every parameter. Rejects non-finite
  // gradients before mutating anything, naming the offending parameter.
  void adam_step(const AdamConfig& cfg) {
    for (const auto& name : order_) {
      const auto& g = entries_.at(name).grad;
      for (const T gv : g.data) {
        if (!std::isfinite(static_cast<double>(gv))) {
          throw NonFiniteError("adam_step: non-finite gradient in parameter '" + name + "'");
        }
      }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (const auto& name : order_) {
      Entry& e = entries_.at(name);
      T* wp = e.value.ptr();
      const T* gp = e.grad.ptr();
      T* mp = e.m.ptr();
      T* vp = e.v.ptr();
      const int64_t n = e.value.size();
      for (int64_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(gp[i]);
        const double m = cfg.beta1 * static_cast<double>(mp[i]) + (1.0 - cfg.beta1) * g;
        const double v = cfg.beta2 * static_cast<double>(vp[i]) + (1.0 - cfg.beta2) * g * g;
        mp[i] = static_cast<T>(m);
        vp[i] = static_cast<T>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        wp[i] = static_cast<T>(static_cast<double>(wp[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
      }
    }
  }

 private:
  std::vector<std::string> order_;
  std::map<std::string, Entry> entries_;
  int64_t step_ = 0;
};

}  // namespace psvae
