// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "muonq/matkit/matrix.hpp"
#include "muonq/quant/quant.hpp"

namespace muonq::optim {

using matkit::Matrix;
using quant::QuantizedBlock;
using quant::QuantSpec;

enum class PolarMode : std::uint8_t { NS5, Exact };

std::string to_string(PolarMode mode);
PolarMode parse_polar_mode(const std::string& text);

/// Momentum-state quantization toggles map onto the fields as follows:
///   C (companding)    state_spec.companding_mu > 0, shared by the factors
///   N (normalization) normalize
///   D (decomposition) rank_ratio set
struct MuonConfig {
    double lr = 0.001;
    double momentum = 0.95;
    double weight_decay = 0.1;
    PolarMode polar_mode = PolarMode::NS5;
    QuantSpec state_spec{4, quant::Granularity::tensor(), quant::kDefaultMu, {}};
    int factor_bits = 4;
    std::optional<double> rank_ratio = 1.0 / 16.0;
    bool normalize = true;
    std::uint64_t seed = 0;

    /// Throws InvalidArgument on out-of-range fields.
    void validate() const;

    /// Truncation rank for an m x n momentum: max(1, round(ratio * min(m, n))).
    [[nodiscard]] std::size_t rank_for(std::size_t m, std::size_t n) const;

    [[nodiscard]] QuantSpec factor_spec(quant::Granularity g) const;

    static MuonConfig muon32();
    static MuonConfig muon8();
    static MuonConfig muon4();
    static MuonConfig muonq4();
    /// MuonQ with 8-bit U and S factors over a 4-bit residual.
    static MuonConfig muonq_mixed84();
    /// Muon4 with the selected components switched on.
    static MuonConfig ablation(bool companding, bool normalization, bool decomposition);
};

struct FpState {
    Matrix m;
    std::uint64_t step = 0;
};

struct NaiveQuantState {
    QuantizedBlock mq;
    std::uint64_t step = 0;
};

/// Quantized factor triple (U, S, R). U must be column-granular and S
/// row-granular; the constructor rejects anything else.
class MuonQState {
public:
    MuonQState(QuantizedBlock uq, QuantizedBlock sq, QuantizedBlock rq, std::uint64_t step, std::uint64_t stream);

    [[nodiscard]] const QuantizedBlock& uq() const noexcept {
        return m_uq;
    }
    [[nodiscard]] const QuantizedBlock& sq() const noexcept {
        return m_sq;
    }
    [[nodiscard]] const QuantizedBlock& rq() const noexcept {
        return m_rq;
    }
    [[nodiscard]] std::size_t k() const noexcept {
        return m_uq.cols;
    }
    [[nodiscard]] std::size_t rows() const noexcept {
        return m_rq.rows;
    }
    [[nodiscard]] std::size_t cols() const noexcept {
        return m_rq.cols;
    }
    [[nodiscard]] std::uint64_t step() const noexcept {
        return m_step;
    }
    /// Per-tensor random stream id mixed into every seed this state draws.
    [[nodiscard]] std::uint64_t stream() const noexcept {
        return m_stream;
    }
    [[nodiscard]] std::array<QuantizedBlock, 3> blocks() const {
        return {m_uq, m_sq, m_rq};
    }

private:
    QuantizedBlock m_uq;
    QuantizedBlock m_sq;
    QuantizedBlock m_rq;
    std::uint64_t m_step;
    std::uint64_t m_stream;
};

using OptimizerState = std::variant<FpState, NaiveQuantState, MuonQState>;

template <typename State>
struct StepOutput {
    Matrix w;
    State state;
};

FpState init_fp_state(std::size_t m, std::size_t n);
NaiveQuantState init_naive_state(std::size_t m, std::size_t n, const MuonConfig& cfg);
/// Zero reconstruction; S holds a seeded Gaussian that only warm-starts the
/// first power iteration.
MuonQState init_muonq_state(std::size_t m, std::size_t n, const MuonConfig& cfg, std::uint64_t stream = 0);

/// Picks the state kind from the config: MuonQ when rank_ratio is set,
/// full precision when state bits are 32, naive quantized otherwise.
OptimizerState init_state(std::size_t m, std::size_t n, const MuonConfig& cfg, std::uint64_t stream = 0);

Matrix reconstruct_momentum(const MuonQState& state);
Matrix reconstruct_momentum(const NaiveQuantState& state);

/// Orthogonal update direction per cfg.polar_mode.
Matrix polar(const Matrix& m, PolarMode mode);

StepOutput<FpState> step_muon_fp(const Matrix& w, const Matrix& g, const FpState& state, const MuonConfig& cfg);
StepOutput<NaiveQuantState> step_muon_naive_quant(const Matrix& w, const Matrix& g, const NaiveQuantState& state,
                                                  const MuonConfig& cfg);
StepOutput<MuonQState> step_muonq(const Matrix& w, const Matrix& g, const MuonQState& state, const MuonConfig& cfg);
StepOutput<OptimizerState> step(const Matrix& w, const Matrix& g, const OptimizerState& state, const MuonConfig& cfg);

quant::Footprint state_footprint(const OptimizerState& state);

}  // namespace muonq::optim
