// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "muonq/optim/muon.hpp"
#include "muonq/xlab/report.hpp"

namespace muonq::xlab {

enum class ToyTask : std::uint8_t { Regression, Classification };

std::string to_string(ToyTask task);
ToyTask parse_toy_task(const std::string& text);

enum class LrSchedule : std::uint8_t { Constant, Cosine };

std::string to_string(LrSchedule schedule);
LrSchedule parse_lr_schedule(const std::string& text);

/// Two-layer tanh network x(256) -> 256 -> 128 trained against a fixed random
/// teacher of the same shape. Regression uses MSE on the teacher outputs;
/// classification uses cross-entropy on the teacher's argmax class.
///
/// Teacher, student init, batches and the eval set depend only on `seed`, so
/// variants trained with the same seed see identical data.
struct ToyConfig {
    ToyTask task = ToyTask::Regression;
    std::string variant = "muonq4";
    std::size_t steps = 2000;
    std::size_t batch = 64;
    double lr = 0.02;
    std::optional<double> weight_decay;  // unset keeps the variant's value
    std::size_t warmup_steps = 0;
    LrSchedule schedule = LrSchedule::Cosine;
    double input_spread = 0.5;   // per-feature input scale exp(spread * Laplace), RMS-normalized
    double output_spread = 0.5;  // same for the teacher's output channels
    double target_noise = 0.3;   // std of Gaussian noise added to regression targets
    double fallback_lr = 0.001;
    std::size_t eval_samples = 512;
    std::size_t log_every = 100;
    optim::PolarMode polar_mode = optim::PolarMode::NS5;
    std::uint64_t seed = 0;

    void validate() const;
    /// Variant config with this run's lr, weight decay, polar mode and seed applied.
    [[nodiscard]] optim::MuonConfig optimizer() const;
    [[nodiscard]] json to_json() const;
};

inline constexpr std::size_t kToyInput = 256;
inline constexpr std::size_t kToyHidden = 256;
inline constexpr std::size_t kToyOutput = 128;

/// When `final_states` is given it receives the optimizer states of the two
/// weight matrices (input layer first).
ExperimentReport toy_train(const ToyConfig& cfg, std::vector<optim::OptimizerState>* final_states = nullptr);

}  // namespace muonq::xlab
