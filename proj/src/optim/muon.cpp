// SPDX-License-Identifier: Apache-2.0

#include "muonq/optim/muon.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "muonq/detail/seed.hpp"
#include "muonq/error.hpp"
#include "muonq/matkit/linalg.hpp"

namespace muonq::optim {

namespace {

using matkit::frobenius_norm;
using matkit::kDegenerateNorm;
using quant::Granularity;

enum Slot : std::uint64_t { kPowerIter = 0, kUSlot = 1, kSSlot = 2, kRSlot = 3, kWarmStart = 4 };

QuantSpec seeded(QuantSpec spec, std::uint64_t seed) {
    if (spec.rounding.mode == quant::RoundingMode::Stochastic) {
        spec.rounding.seed = detail::mix64(seed ^ spec.rounding.seed);
    }
    return spec;
}

void require_same_shape(const Matrix& w, const Matrix& g, std::size_t rows, std::size_t cols) {
    if (w.rows() != rows || w.cols() != cols || g.rows() != rows || g.cols() != cols) {
        throw Error(ErrorCode::ShapeMismatch, "parameter " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                                                  ", gradient " + std::to_string(g.rows()) + "x" +
                                                  std::to_string(g.cols()) + ", state " + std::to_string(rows) + "x" +
                                                  std::to_string(cols));
    }
    if (!g.all_finite()) {
        throw Error(ErrorCode::NonFinite, "gradient has non-finite entries");
    }
}

// M_t from the carried momentum and the gradient, normalized when cfg.normalize
// is set. Empty when the result is too small to orthogonalize.
std::optional<Matrix> next_momentum(const Matrix& prev, const Matrix& g, const MuonConfig& cfg) {
    Matrix m = cfg.momentum * prev;
    if (cfg.normalize) {
        const double gn = frobenius_norm(g);
        if (gn >= kDegenerateNorm) {
            m += (1.0 / gn) * g;
        }
    } else {
        m += g;
    }
    const double mn = frobenius_norm(m);
    if (mn < kDegenerateNorm) {
        return std::nullopt;
    }
    if (cfg.normalize) {
        m *= 1.0 / mn;
    }
    return m;
}

Matrix apply_update(const Matrix& w, const Matrix& m, const MuonConfig& cfg) {
    Matrix out = (1.0 - cfg.lr * cfg.weight_decay) * w;
    out -= cfg.lr * polar(m, cfg.polar_mode);
    return out;
}

bool in_unit_interval(double x) {
    return x > 0.0 && x <= 1.0;
}

}  // namespace

std::string to_string(PolarMode mode) {
    return mode == PolarMode::NS5 ? "ns5" : "exact";
}

PolarMode parse_polar_mode(const std::string& text) {
    if (text == "ns5" || text == "NS5") return PolarMode::NS5;
    if (text == "exact" || text == "Exact") return PolarMode::Exact;
    throw Error(ErrorCode::InvalidArgument, "unknown polar mode '" + text + "' (expected ns5 or exact)");
}

void MuonConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw Error(ErrorCode::InvalidArgument, "lr must be positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "momentum must be in [0, 1)");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw Error(ErrorCode::InvalidArgument, "weight_decay must be >= 0");
    }
    state_spec.validate();
    if (factor_bits != 4 && factor_bits != 8 && factor_bits != 32) {
        throw Error(ErrorCode::InvalidArgument, "factor_bits must be 4, 8 or 32");
    }
    if (rank_ratio && !in_unit_interval(*rank_ratio)) {
        throw Error(ErrorCode::InvalidArgument, "rank_ratio must be in (0, 1]");
    }
}

std::size_t MuonConfig::rank_for(std::size_t m, std::size_t n) const {
    if (!rank_ratio) {
        throw Error(ErrorCode::InvalidArgument, "rank_ratio is off");
    }
    const std::size_t lo = std::min(m, n);
    const auto k = static_cast<std::size_t>(std::llround(*rank_ratio * static_cast<double>(lo)));
    return std::clamp<std::size_t>(k, 1, lo);
}

QuantSpec MuonConfig::factor_spec(Granularity g) const {
    QuantSpec spec = state_spec;
    spec.bits = factor_bits;
    spec.granularity = g;
    return spec;
}

MuonConfig MuonConfig::muon32() {
    MuonConfig cfg;
    cfg.state_spec = QuantSpec{32, Granularity::tensor(), 0.0F, {}};
    cfg.factor_bits = 32;
    cfg.rank_ratio.reset();
    cfg.normalize = false;
    return cfg;
}

MuonConfig MuonConfig::muon8() {
    MuonConfig cfg = muon4();
    cfg.state_spec.bits = 8;
    cfg.factor_bits = 8;
    return cfg;
}

MuonConfig MuonConfig::muon4() {
    return ablation(false, false, false);
}

MuonConfig MuonConfig::muonq4() {
    return ablation(true, true, true);
}

MuonConfig MuonConfig::muonq_mixed84() {
    MuonConfig cfg = muonq4();
    cfg.factor_bits = 8;
    return cfg;
}

MuonConfig MuonConfig::ablation(bool companding, bool normalization, bool decomposition) {
    MuonConfig cfg;
    cfg.state_spec.companding_mu = companding ? quant::kDefaultMu : 0.0F;
    cfg.normalize = normalization;
    if (!decomposition) {
        cfg.rank_ratio.reset();
    }
    return cfg;
}

MuonQState::MuonQState(QuantizedBlock uq, QuantizedBlock sq, QuantizedBlock rq, std::uint64_t step,
                       std::uint64_t stream) :
    m_uq(std::move(uq)), m_sq(std::move(sq)), m_rq(std::move(rq)), m_step(step), m_stream(stream) {
    if (m_uq.spec.granularity.kind != Granularity::Kind::Column) {
        throw Error(ErrorCode::InvalidArgument, "U factor must be column-granular, got " +
                                                    quant::to_string(m_uq.spec.granularity));
    }
    if (m_sq.spec.granularity.kind != Granularity::Kind::Row) {
        throw Error(ErrorCode::InvalidArgument, "S factor must be row-granular, got " +
                                                    quant::to_string(m_sq.spec.granularity));
    }
    const std::size_t k = m_uq.cols;
    if (m_uq.rows != m_rq.rows || m_sq.cols != m_rq.cols || m_sq.rows != k || k == 0 ||
        k > std::min(m_rq.rows, m_rq.cols)) {
        throw Error(ErrorCode::ShapeMismatch, "factor shapes do not form an m x k, k x n, m x n triple");
    }
}

FpState init_fp_state(std::size_t m, std::size_t n) {
    return {Matrix::zeros(m, n), 0};
}

NaiveQuantState init_naive_state(std::size_t m, std::size_t n, const MuonConfig& cfg) {
    cfg.validate();
    return {quant::quantize(Matrix::zeros(m, n), cfg.state_spec), 0};
}

MuonQState init_muonq_state(std::size_t m, std::size_t n, const MuonConfig& cfg, std::uint64_t stream) {
    cfg.validate();
    const std::size_t k = cfg.rank_for(m, n);
    std::mt19937_64 rng(detail::derive_seed(cfg.seed, {stream, kWarmStart}));
    const Matrix s0 = matkit::gaussian_matrix(k, n, rng);
    QuantSpec s_spec = cfg.factor_spec(Granularity::row());
    s_spec.rounding = quant::Rounding::deterministic();
    QuantSpec u_spec = cfg.factor_spec(Granularity::column());
    u_spec.rounding = quant::Rounding::deterministic();
    QuantSpec r_spec = cfg.state_spec;
    r_spec.rounding = quant::Rounding::deterministic();
    return MuonQState(quant::quantize(Matrix::zeros(m, k), u_spec), quant::quantize(s0, s_spec),
                      quant::quantize(Matrix::zeros(m, n), r_spec), 0, stream);
}

OptimizerState init_state(std::size_t m, std::size_t n, const MuonConfig& cfg, std::uint64_t stream) {
    if (cfg.rank_ratio) {
        return init_muonq_state(m, n, cfg, stream);
    }
    if (cfg.state_spec.passthrough()) {
        cfg.validate();
        return init_fp_state(m, n);
    }
    return init_naive_state(m, n, cfg);
}

Matrix reconstruct_momentum(const MuonQState& state) {
    Matrix m = matkit::matmul(quant::dequant(state.uq()), quant::dequant(state.sq()));
    m += quant::dequant(state.rq());
    return m;
}

Matrix reconstruct_momentum(const NaiveQuantState& state) {
    return quant::dequant(state.mq);
}

Matrix polar(const Matrix& m, PolarMode mode) {
    return mode == PolarMode::Exact ? matkit::polar_exact(m) : matkit::polar_ns(m);
}

StepOutput<FpState> step_muon_fp(const Matrix& w, const Matrix& g, const FpState& state, const MuonConfig& cfg) {
    cfg.validate();
    require_same_shape(w, g, state.m.rows(), state.m.cols());
    auto m = next_momentum(state.m, g, cfg);
    if (!m) {
        return {w, state};
    }
    Matrix w_next = apply_update(w, *m, cfg);
    return {std::move(w_next), FpState{std::move(*m), state.step + 1}};
}

StepOutput<NaiveQuantState> step_muon_naive_quant(const Matrix& w, const Matrix& g, const NaiveQuantState& state,
                                                  const MuonConfig& cfg) {
    cfg.validate();
    require_same_shape(w, g, state.mq.rows, state.mq.cols);
    auto m = next_momentum(reconstruct_momentum(state), g, cfg);
    if (!m) {
        return {w, state};
    }
    const std::uint64_t t = state.step + 1;
    QuantizedBlock mq = quant::quantize(*m, seeded(cfg.state_spec, detail::derive_seed(cfg.seed, {t, kRSlot})));
    return {apply_update(w, *m, cfg), NaiveQuantState{std::move(mq), t}};
}

StepOutput<MuonQState> step_muonq(const Matrix& w, const Matrix& g, const MuonQState& state, const MuonConfig& cfg) {
    cfg.validate();
    require_same_shape(w, g, state.rows(), state.cols());
    auto m = next_momentum(reconstruct_momentum(state), g, cfg);
    if (!m) {
        return {w, state};
    }
    const std::uint64_t t = state.step() + 1;
    const auto seed = [&](Slot slot) { return detail::derive_seed(cfg.seed, {state.stream(), t, slot}); };

    const matkit::PowerIterResult pi =
        matkit::power_iter_update(*m, quant::dequant(state.sq()), state.k(), seed(kPowerIter));
    MuonQState next(quant::quantize(pi.u, seeded(cfg.factor_spec(Granularity::column()), seed(kUSlot))),
                    quant::quantize(pi.s, seeded(cfg.factor_spec(Granularity::row()), seed(kSSlot))),
                    quant::quantize(pi.r, seeded(cfg.state_spec, seed(kRSlot))), t, state.stream());
    return {apply_update(w, *m, cfg), std::move(next)};
}

StepOutput<OptimizerState> step(const Matrix& w, const Matrix& g, const OptimizerState& state, const MuonConfig& cfg) {
    return std::visit(
        [&](const auto& s) -> StepOutput<OptimizerState> {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, FpState>) {
                auto out = step_muon_fp(w, g, s, cfg);
                return {std::move(out.w), std::move(out.state)};
            } else if constexpr (std::is_same_v<S, NaiveQuantState>) {
                auto out = step_muon_naive_quant(w, g, s, cfg);
                return {std::move(out.w), std::move(out.state)};
            } else {
                auto out = step_muonq(w, g, s, cfg);
                return {std::move(out.w), std::move(out.state)};
            }
        },
        state);
}

quant::Footprint state_footprint(const OptimizerState& state) {
    return std::visit(
        [](const auto& s) -> quant::Footprint {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, FpState>) {
                return quant::block_footprint(s.m.rows(), s.m.cols(), QuantSpec{32, Granularity::tensor(), 0.0F, {}});
            } else if constexpr (std::is_same_v<S, NaiveQuantState>) {
                const QuantizedBlock blocks[] = {s.mq};
                return quant::memory_footprint(blocks);
            } else {
                const auto blocks = s.blocks();
                return quant::memory_footprint(blocks);
            }
        },
        state);
}

}  // namespace muonq::optim
