// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace muonq::optim {

/// Adam with decoupled weight decay, for vector parameters (biases, gains).
struct FallbackConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    void validate() const;
};

struct FallbackState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;
};

struct FallbackOutput {
    std::vector<double> w;
    FallbackState state;
};

FallbackState init_fallback_state(std::size_t n);

FallbackOutput elementwise_fallback_step(std::span<const double> w, std::span<const double> g,
                                         const FallbackState& state, const FallbackConfig& cfg);

}  // namespace muonq::optim
