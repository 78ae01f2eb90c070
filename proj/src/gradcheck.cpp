#include "mscod/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mscod::diff {

namespace {
constexpr double kNormFloor = 1e-7;
}

std::vector<GradCheckEntry> finite_difference_check(const std::function<Tensor()>& loss,
                                                    std::vector<NamedTensor> params, double eps,
                                                    std::size_t max_probes) {
  for (auto& p : params) p.tensor.zero_grad();
  backward(loss());

  std::vector<GradCheckEntry> report;
  for (auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    const std::size_t n = p.tensor.size();
    std::vector<std::size_t> probes;
    if (max_probes == 0 || n <= max_probes) {
      for (std::size_t i = 0; i < n; ++i) probes.push_back(i);
    } else {
      // Spread probes over the whole tensor, offset so rows and columns vary.
      const double step = static_cast<double>(n) / static_cast<double>(max_probes);
      for (std::size_t k = 0; k < max_probes; ++k)
        probes.push_back(std::min(n - 1, static_cast<std::size_t>(k * step + 0.37 * step)));
    }

    std::vector<double> analytic(probes.size(), 0.0);
    if (p.tensor.has_grad()) {
      for (std::size_t k = 0; k < probes.size(); ++k) analytic[k] = p.tensor.grad()[probes[k]];
    }

    std::vector<double> numeric(probes.size());
    auto values = p.tensor.mutable_values();
    for (std::size_t k = 0; k < probes.size(); ++k) {
      const double saved = values[probes[k]];
      values[probes[k]] = saved + eps;
      const double up = loss().item();
      values[probes[k]] = saved - eps;
      const double down = loss().item();
      values[probes[k]] = saved;
      numeric[k] = (up - down) / (2.0 * eps);
    }

    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t k = 0; k < probes.size(); ++k) {
      diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
      na += analytic[k] * analytic[k];
      nn += numeric[k] * numeric[k];
    }
    entry.probed = probes.size();
    entry.analytic_norm = std::sqrt(na);
    entry.numeric_norm = std::sqrt(nn);
    entry.relative_error =
        std::sqrt(diff) / std::max({entry.analytic_norm, entry.numeric_norm, kNormFloor});
    report.push_back(entry);
  }
  for (auto& p : params) p.tensor.zero_grad();
  return report;
}

}  // namespace mscod::diff
