// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "muonq/matkit/linalg.hpp"
#include "muonq/optim/muon.hpp"
#include "muonq/quant/quant.hpp"
#include "muonq/xlab/report.hpp"
#include "muonq/xlab/synthetic.hpp"

namespace muonq::xlab {

using optim::PolarMode;
using quant::Granularity;

// Quantized momentum recursion next to a float64 reference fed the same
// gradients; each run is compared with the reference of its own recursion.
struct DriftConfig {
    std::size_t steps = 50;
    std::size_t rows = 64;
    std::size_t cols = 64;
    int bits = 4;
    bool normalize = false;
    float mu = 0.0F;
    Granularity granularity = Granularity::tensor();
    double momentum = 0.95;
    // Gradient replay file (JSON Lines, one {"rows","cols","data"} per step).
    // Empty selects i.i.d. Gaussian directions with norm 10^sin(2 pi t / steps).
    std::string gradient_file;
    std::uint64_t seed = 0;

    void validate() const;
    [[nodiscard]] json to_json() const;
};

ExperimentReport drift_simulation(const DriftConfig& cfg);

enum class DecompositionMethod : std::uint8_t { Svd, PowerIteration };

std::string to_string(DecompositionMethod method);
DecompositionMethod parse_decomposition(const std::string& text);

struct AmplifyConfig {
    SyntheticMomentumSpec momentum;
    int bits = 4;
    float mu = 0.0F;
    bool decompose = true;
    std::size_t k = 64;
    PolarMode polar_mode = PolarMode::NS5;
    DecompositionMethod method = DecompositionMethod::Svd;
    int power_iters = 8;
    bool spectra = false;

    void validate() const;
    [[nodiscard]] json to_json() const;
};

ExperimentReport amplification_study(const AmplifyConfig& cfg);

struct RankSweepConfig {
    SyntheticMomentumSpec momentum;
    int bits = 4;
    float mu = quant::kDefaultMu;
    std::vector<double> ratios = {0.0, 1.0 / 64, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0};
    PolarMode polar_mode = PolarMode::NS5;
    // Shape used for the memory columns; 0 means the momentum shape.
    std::size_t memory_rows = 0;
    std::size_t memory_cols = 0;

    void validate() const;
    [[nodiscard]] json to_json() const;
};

ExperimentReport rank_sweep(const RankSweepConfig& cfg);

struct MuSweepConfig {
    SyntheticMomentumSpec momentum;
    int bits = 4;
    Granularity granularity = Granularity::row();
    std::vector<double> mus = {15, 63, 127, 255, 511, 1023};
    PolarMode polar_mode = PolarMode::NS5;

    void validate() const;
    [[nodiscard]] json to_json() const;
};

ExperimentReport mu_sweep(const MuSweepConfig& cfg);

struct GranularityConfig {
    SyntheticMomentumSpec momentum;
    int bits = 4;
    float mu = quant::kDefaultMu;  // companding for the raw-momentum table
    float factor_mu = 0.0F;        // factor quantizer in the U x S table; 0 is uniform
    std::size_t k = 0;             // 0 means min(rows, cols) / 4
    PolarMode polar_mode = PolarMode::NS5;

    void validate() const;
    [[nodiscard]] json to_json() const;
};

ExperimentReport granularity_study(const GranularityConfig& cfg);

/// Top-k factors M ~ U S + R with U orthonormal (m x k) and S = U^T M.
struct Factors {
    matkit::Matrix u;
    matkit::Matrix s;
    matkit::Matrix r;
};

Factors svd_factors(const matkit::Matrix& m, const matkit::SvdResult& svd, std::size_t k);
Factors power_factors(const matkit::Matrix& m, std::size_t k, int iters, std::uint64_t seed);

/// dequant(quantize(x)).
matkit::Matrix fake_quant(const matkit::Matrix& x, const quant::QuantSpec& spec);

/// U_hat S_hat + R_hat with U, S and R quantized at the given granularities.
matkit::Matrix fake_quant_factors(const Factors& f, int bits, float mu, Granularity u_gran, Granularity s_gran,
                                  Granularity r_gran = Granularity::tensor());

}  // namespace muonq::xlab
