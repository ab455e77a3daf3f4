#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "psvae/adam.hpp"
#include "psvae/rng.hpp"

namespace psvae {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int coords_checked = 0;
};

// Central finite differences against reverse-mode gradients, 64-bit only.
// `loss` evaluates the scalar objective at the store's current values;
// when `fill_grads` is true it must also leave d(loss)/d(param) in each
// entry's grad tensor. Checks `coords_per_param` random coordinates of every
// parameter. Relative error: |ad - fd| / max(1e-8, |ad| + |fd|).
inline GradCheckReport grad_check(
    const std::function<double(ParameterStore<double>&, bool fill_grads)>& loss,
    ParameterStore<double>& params, double epsilon, int coords_per_param, uint64_t seed) {
  GradCheckReport rep;
  const double base = loss(params, true);
  if (!std::isfinite(base)) throw std::runtime_error("grad_check: non-finite loss");

  // Snapshot analytic gradients before the probing evaluations overwrite them.
  std::vector<std::vector<double>> analytic;
  for (const auto& name : params.names()) analytic.push_back(params.at(name).grad.data);

  Rng rng(seed);
  size_t pi = 0;
  for (const auto& name : params.names()) {
    auto& entry = params.at(name);
    const int64_t n = entry.value.size();
    const int ncheck = static_cast<int>(std::min<int64_t>(coords_per_param, n));
    for (int c = 0; c < ncheck; ++c) {
      const int64_t idx = ncheck == n ? c : static_cast<int64_t>(rng.uniform_int(static_cast<int>(n)));
      const double w0 = entry.value.data[static_cast<size_t>(idx)];
      const double h = epsilon * std::max(1.0, std::abs(w0));
      entry.value.data[static_cast<size_t>(idx)] = w0 + h;
      const double fp = loss(params, false);
      entry.value.data[static_cast<size_t>(idx)] = w0 - h;
      const double fm = loss(params, false);
      entry.value.data[static_cast<size_t>(idx)] = w0;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw std::runtime_error("grad_check: non-finite loss while probing '" + name + "'");
      }
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = analytic[pi][static_cast<size_t>(idx)];
      const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      ++rep.coords_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = name;
        rep.worst_index = idx;
        rep.worst_analytic = ad;
        rep.worst_numeric = fd;
      }
    }
    ++pi;
  }
  return rep;
}

}  // namespace psvae
