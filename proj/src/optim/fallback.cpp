// SPDX-License-Identifier: Apache-2.0

#include "muonq/optim/fallback.hpp"

#include <cmath>
#include <string>

#include "muonq/error.hpp"

namespace muonq::optim {

void FallbackConfig::validate() const {
    if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0) ||
        !(weight_decay >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "fallback optimizer hyperparameters out of range");
    }
}

FallbackState init_fallback_state(std::size_t n) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0};
}

FallbackOutput elementwise_fallback_step(std::span<const double> w, std::span<const double> g,
                                         const FallbackState& state, const FallbackConfig& cfg) {
    cfg.validate();
    const std::size_t n = w.size();
    if (g.size() != n || state.m.size() != n || state.v.size() != n) {
        throw Error(ErrorCode::ShapeMismatch, "parameter length " + std::to_string(n) + ", gradient " +
                                                  std::to_string(g.size()) + ", state " +
                                                  std::to_string(state.m.size()));
    }
    FallbackOutput out{std::vector<double>(n), FallbackState{state.m, state.v, state.step + 1}};
    const double t = static_cast<double>(out.state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
        double& m = out.state.m[i];
        double& v = out.state.v[i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g[i];
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = m / c1;
        const double v_hat = v / c2;
        out.w[i] = (1.0 - cfg.lr * cfg.weight_decay) * w[i] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    return out;
}

}  // namespace muonq::optim
