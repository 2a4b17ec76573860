// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "muonq/matkit/matrix.hpp"

namespace muonq::xlab {

enum class Tail : std::uint8_t { Gaussian, Laplace, StudentT };

std::string to_string(Tail tail);
Tail parse_tail(const std::string& text);

/// Low-rank signal with a geometric spectrum plus heavy-tailed i.i.d. noise,
/// scaled to unit Frobenius norm.
struct SyntheticMomentumSpec {
    std::size_t rows = 256;
    std::size_t cols = 256;
    std::size_t dominant_rank = 16;
    double spectrum_decay = 0.7;
    Tail tail = Tail::Laplace;
    double tail_param = 1.0;  // Laplace scale b, or Student-t degrees of freedom
    double noise_level = 0.5;  // ||noise||_F relative to ||signal||_F
    // Row and column magnitudes are scaled by exp(spread * l) with l ~ Laplace(0, 1),
    // giving the outlier channels real momenta show. 0 disables.
    double channel_spread = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

matkit::Matrix synthetic_momentum(const SyntheticMomentumSpec& spec);

}  // namespace muonq::xlab
