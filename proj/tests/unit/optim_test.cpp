// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>

#include "muonq/error.hpp"
#include "muonq/matkit/linalg.hpp"
#include "muonq/optim/checkpoint.hpp"
#include "muonq/optim/fallback.hpp"
#include "muonq/optim/muon.hpp"
#include "reference_muon.hpp"
#include "test_support.hpp"

using namespace muonq::optim;
using muonq::ErrorCode;
using muonq::matkit::Matrix;
using muonq::quant::Granularity;
using namespace muonq::testing;

namespace {

MuonConfig passthrough_cfg() {
    MuonConfig cfg;
    cfg.state_spec = QuantSpec{32, Granularity::tensor(), 0.0F, {}};
    cfg.factor_bits = 32;
    cfg.rank_ratio = 1.0;
    cfg.polar_mode = PolarMode::Exact;
    return cfg;
}

std::vector<Matrix> gradient_stream(std::size_t m, std::size_t n, int steps, std::uint64_t seed) {
    std::vector<Matrix> out;
    for (int t = 0; t < steps; ++t) {
        out.push_back(random_normal(m, n, seed * 1000 + t) * std::pow(10.0, std::sin(0.7 * t)));
    }
    return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const muonq::Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::Config;
}

bool same_state(const MuonQState& a, const MuonQState& b) {
    return muonq::quant::same_payload(a.uq(), b.uq()) && muonq::quant::same_payload(a.sq(), b.sq()) &&
           muonq::quant::same_payload(a.rq(), b.rq()) && a.step() == b.step() && a.stream() == b.stream();
}

double frob_bound(const muonq::quant::QuantizedBlock& block) {
    double sum = 0.0;
    for (std::size_t r = 0; r < block.rows; ++r) {
        for (std::size_t c = 0; c < block.cols; ++c) {
            const double s = block.scales[block.spec.granularity.group_of(r, c, block.cols)];
            sum += s * s / 4.0;
        }
    }
    return std::sqrt(sum);
}

}  // namespace

TEST(MuonConfig, RankRule) {
    const MuonConfig cfg;
    EXPECT_EQ(cfg.rank_for(768, 768), 48u);
    EXPECT_EQ(cfg.rank_for(768, 3072), 48u);
    EXPECT_EQ(cfg.rank_for(256, 128), 8u);
    EXPECT_EQ(cfg.rank_for(2, 2), 1u);
    MuonConfig full = cfg;
    full.rank_ratio = 1.0;
    EXPECT_EQ(full.rank_for(64, 48), 48u);
}

TEST(MuonConfig, Validation) {
    MuonConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.lr = 0.0;
    EXPECT_THROW(cfg.validate(), muonq::Error);
    cfg = MuonConfig{};
    cfg.momentum = 1.0;
    EXPECT_THROW(cfg.validate(), muonq::Error);
    cfg = MuonConfig{};
    cfg.weight_decay = -0.1;
    EXPECT_THROW(cfg.validate(), muonq::Error);
    cfg = MuonConfig{};
    cfg.rank_ratio = 0.0;
    EXPECT_THROW(cfg.validate(), muonq::Error);
    cfg.rank_ratio = 1.5;
    EXPECT_THROW(cfg.validate(), muonq::Error);
    cfg = MuonConfig{};
    cfg.factor_bits = 16;
    EXPECT_THROW(cfg.validate(), muonq::Error);
}

TEST(MuonConfig, PresetsAndToggles) {
    const MuonConfig q = MuonConfig::muonq4();
    EXPECT_TRUE(q.state_spec.companded());
    EXPECT_TRUE(q.normalize);
    ASSERT_TRUE(q.rank_ratio.has_value());
    EXPECT_DOUBLE_EQ(*q.rank_ratio, 1.0 / 16.0);

    const MuonConfig b = MuonConfig::muon4();
    EXPECT_FALSE(b.state_spec.companded());
    EXPECT_FALSE(b.normalize);
    EXPECT_FALSE(b.rank_ratio.has_value());
    EXPECT_EQ(b.state_spec.bits, 4);
    EXPECT_EQ(MuonConfig::muon8().state_spec.bits, 8);
    EXPECT_TRUE(MuonConfig::muon32().state_spec.passthrough());
    EXPECT_EQ(MuonConfig::muonq_mixed84().factor_bits, 8);

    const MuonConfig d = MuonConfig::ablation(false, false, true);
    EXPECT_TRUE(d.rank_ratio.has_value());
    EXPECT_FALSE(d.normalize);
    EXPECT_FALSE(d.state_spec.companded());

    EXPECT_TRUE(std::holds_alternative<MuonQState>(init_state(16, 8, q)));
    EXPECT_TRUE(std::holds_alternative<NaiveQuantState>(init_state(16, 8, b)));
    EXPECT_TRUE(std::holds_alternative<FpState>(init_state(16, 8, MuonConfig::muon32())));
}

TEST(MuonQState, InitReconstructsZeroAndIsSeeded) {
    MuonConfig cfg;
    cfg.seed = 11;
    const MuonQState a = init_muonq_state(32, 24, cfg);
    EXPECT_EQ(a.step(), 0u);
    EXPECT_EQ(a.k(), 2u);
    EXPECT_EQ(reconstruct_momentum(a), Matrix::zeros(32, 24));
    EXPECT_TRUE(same_state(a, init_muonq_state(32, 24, cfg)));
    cfg.seed = 12;
    EXPECT_FALSE(muonq::quant::same_payload(a.sq(), init_muonq_state(32, 24, cfg).sq()));
    cfg.seed = 11;
    EXPECT_FALSE(muonq::quant::same_payload(a.sq(), init_muonq_state(32, 24, cfg, 1).sq()));
}

TEST(MuonQState, GranularityAlignmentEnforced) {
    using muonq::quant::quantize;
    const QuantSpec col{4, Granularity::column(), 255.0F, {}};
    const QuantSpec row{4, Granularity::row(), 255.0F, {}};
    const QuantSpec ten{4, Granularity::tensor(), 255.0F, {}};
    const Matrix u = random_normal(8, 2, 1);
    const Matrix s = random_normal(2, 6, 2);
    const Matrix r = random_normal(8, 6, 3);
    EXPECT_NO_THROW(MuonQState(quantize(u, col), quantize(s, row), quantize(r, ten), 0, 0));
    EXPECT_THROW(MuonQState(quantize(u, row), quantize(s, row), quantize(r, ten), 0, 0), muonq::Error);
    EXPECT_THROW(MuonQState(quantize(u, col), quantize(s, col), quantize(r, ten), 0, 0), muonq::Error);
    EXPECT_THROW(MuonQState(quantize(u, ten), quantize(s, ten), quantize(r, ten), 0, 0), muonq::Error);
    EXPECT_THROW(MuonQState(quantize(u, col), quantize(random_normal(3, 6, 4), row), quantize(r, ten), 0, 0),
                 muonq::Error);
}

TEST(MuonQState, PassthroughReconstructionIsExact) {
    const QuantSpec col{32, Granularity::column(), 0.0F, {}};
    const QuantSpec row{32, Granularity::row(), 0.0F, {}};
    const QuantSpec ten{32, Granularity::tensor(), 0.0F, {}};
    const Matrix u = random_normal(9, 3, 1);
    const Matrix s = random_normal(3, 7, 2);
    const Matrix r = random_normal(9, 7, 3);
    const MuonQState st(muonq::quant::quantize(u, col), muonq::quant::quantize(s, row),
                        muonq::quant::quantize(r, ten), 0, 0);
    EXPECT_LT(max_abs_diff(reconstruct_momentum(st), naive_product(u, s) + r), 1e-14);
}

TEST(MuonQState, ReconstructionErrorComposesBlockBounds) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Matrix m = random_normal(24, 16, seed);
        m *= 1.0 / norm_of(m);
        const auto pi = muonq::matkit::power_iter_update(m, random_normal(4, 16, seed + 99), 4);
        const QuantSpec col{4, Granularity::column(), 0.0F, {}};
        const QuantSpec row{4, Granularity::row(), 0.0F, {}};
        const QuantSpec ten{4, Granularity::tensor(), 0.0F, {}};
        const MuonQState st(muonq::quant::quantize(pi.u, col), muonq::quant::quantize(pi.s, row),
                            muonq::quant::quantize(pi.r, ten), 1, 0);
        const Matrix u_hat = muonq::quant::dequant(st.uq());
        const Matrix s_hat = muonq::quant::dequant(st.sq());
        // M_hat - M = (U_hat - U) S_hat + U (S_hat - S) + (R_hat - R), U orthonormal.
        const double bound = frob_bound(st.uq()) * norm_of(s_hat) + frob_bound(st.sq()) + frob_bound(st.rq());
        ASSERT_LE(norm_of(reconstruct_momentum(st) - m), bound + 1e-12);
    }
}

TEST(StepMuonQ, FirstStepDiagonalExample) {
    for (double beta : {0.0, 0.5, 0.95}) {
        MuonConfig cfg = MuonConfig::muonq4();
        cfg.weight_decay = 0.0;
        cfg.momentum = beta;
        cfg.polar_mode = PolarMode::Exact;
        const Matrix g = Matrix{{2.0, 0.0}, {0.0, 3.0}};
        const auto out = step_muonq(Matrix::zeros(2, 2), g, init_muonq_state(2, 2, cfg), cfg);
        EXPECT_LT(max_abs_diff(out.w, -cfg.lr * Matrix::identity(2)), 1e-15);
        EXPECT_EQ(out.state.step(), 1u);
    }
}

TEST(StepMuonQ, FirstStepIgnoresGradientScale) {
    MuonConfig cfg = MuonConfig::muonq4();
    const Matrix w = random_normal(12, 8, 1);
    const Matrix g = random_normal(12, 8, 2);
    const MuonQState st = init_muonq_state(12, 8, cfg);
    for (PolarMode mode : {PolarMode::Exact, PolarMode::NS5}) {
        cfg.polar_mode = mode;
        EXPECT_LT(max_abs_diff(step_muonq(w, g, st, cfg).w, step_muonq(w, 5.0 * g, st, cfg).w), 1e-15);
    }
}

TEST(StepMuonQ, PassthroughMatchesReferenceRecursion) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        MuonConfig cfg = passthrough_cfg();
        cfg.seed = seed;
        const Matrix w0 = random_normal(64, 48, seed + 500) * 0.1;
        const auto grads = gradient_stream(64, 48, 10, seed);
        const auto ref = reference_trajectory(w0, grads, {cfg.lr, cfg.momentum, cfg.weight_decay, true});
        Matrix w = w0;
        MuonQState st = init_muonq_state(64, 48, cfg);
        for (std::size_t t = 0; t < grads.size(); ++t) {
            auto out = step_muonq(w, grads[t], st, cfg);
            w = std::move(out.w);
            st = std::move(out.state);
            ASSERT_LE(norm_of(w - ref[t]) / norm_of(ref[t]), 1e-6) << "step " << t + 1;
        }
    }
}

TEST(StepMuonQ, DeterministicAndStateIsolated) {
    MuonConfig cfg = MuonConfig::muonq4();
    cfg.seed = 3;
    cfg.state_spec.rounding = muonq::quant::Rounding::stochastic(8);
    const auto grads = gradient_stream(32, 16, 6, 4);
    const auto run = [&]() {
        Matrix w = random_normal(32, 16, 7);
        MuonQState st = init_muonq_state(32, 16, cfg);
        for (const auto& g : grads) {
            const MuonQState before = st;
            auto out = step_muonq(w, g, st, cfg);
            EXPECT_TRUE(same_state(before, st));
            w = std::move(out.w);
            st = std::move(out.state);
        }
        return std::make_pair(w, st);
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(a.first, b.first);
    EXPECT_TRUE(same_state(a.second, b.second));
}

TEST(StepMuonQ, MemoryLawAtFourBits) {
    const MuonConfig cfg = MuonConfig::muonq4();
    for (auto [m, n] : {std::pair<std::size_t, std::size_t>{64, 64}, {128, 32}, {32, 96}}) {
        MuonQState st = init_muonq_state(m, n, cfg);
        st = step_muonq(random_normal(m, n, 1), random_normal(m, n, 2), st, cfg).state;
        const std::size_t k = st.k();
        const auto fp = state_footprint(st);
        EXPECT_EQ(fp.code_bits, 4 * (m * n + m * k + k * n));
        EXPECT_EQ(fp.scale_bits, 32 * (k + k + 1));
    }
}

TEST(StepMuonQ, DegenerateInputs) {
    const MuonConfig cfg = MuonConfig::muonq4();
    const MuonQState st = init_muonq_state(6, 4, cfg);
    const Matrix w = random_normal(6, 4, 1);
    const auto out = step_muonq(w, Matrix::zeros(6, 4), st, cfg);
    EXPECT_EQ(out.w, w);
    EXPECT_TRUE(same_state(out.state, st));

    EXPECT_EQ(code_of([&] { (void)step_muonq(w, Matrix::zeros(4, 6), st, cfg); }), ErrorCode::ShapeMismatch);
    Matrix bad = random_normal(6, 4, 2);
    bad(1, 1) = std::nan("");
    EXPECT_EQ(code_of([&] { (void)step_muonq(w, bad, st, cfg); }), ErrorCode::NonFinite);
}

TEST(StepMuonFp, OrthogonalGradientFirstStep) {
    MuonConfig cfg = MuonConfig::muon32();
    cfg.weight_decay = 0.0;
    cfg.polar_mode = PolarMode::Exact;
    const Matrix q = random_orthonormal(10, 6, 5);
    const Matrix w = random_normal(10, 6, 6);
    const auto out = step_muon_fp(w, q, init_fp_state(10, 6), cfg);
    EXPECT_LT(max_abs_diff(out.w, w - cfg.lr * q), 1e-14);
}

TEST(StepMuonFp, TwoDiagonalStepsByHand) {
    MuonConfig cfg = MuonConfig::muon32();
    cfg.weight_decay = 0.0;
    cfg.momentum = 0.5;
    cfg.polar_mode = PolarMode::Exact;
    Matrix w = Matrix{{1.0, 0.0}, {0.0, 1.0}};
    FpState st = init_fp_state(2, 2);
    // M1 = diag(1, 2), polar = I.  M2 = 0.5 M1 + diag(-4, 1) = diag(-3.5, 2), polar = diag(-1, 1).
    auto out = step_muon_fp(w, Matrix{{1.0, 0.0}, {0.0, 2.0}}, st, cfg);
    out = step_muon_fp(out.w, Matrix{{-4.0, 0.0}, {0.0, 1.0}}, out.state, cfg);
    EXPECT_LT(max_abs_diff(out.state.m, Matrix{{-3.5, 0.0}, {0.0, 2.0}}), 1e-15);
    EXPECT_LT(max_abs_diff(out.w, Matrix{{1.0, 0.0}, {0.0, 1.0 - 2.0 * cfg.lr}}), 1e-15);
}

TEST(StepMuonFp, MatchesReferenceBothVariants) {
    for (bool normalize : {false, true}) {
        MuonConfig cfg = MuonConfig::muon32();
        cfg.normalize = normalize;
        cfg.polar_mode = PolarMode::Exact;
        const Matrix w0 = random_normal(20, 12, 1);
        const auto grads = gradient_stream(20, 12, 8, 2);
        const auto ref = reference_trajectory(w0, grads, {cfg.lr, cfg.momentum, cfg.weight_decay, normalize});
        Matrix w = w0;
        FpState st = init_fp_state(20, 12);
        for (std::size_t t = 0; t < grads.size(); ++t) {
            auto out = step_muon_fp(w, grads[t], st, cfg);
            w = out.w;
            st = out.state;
            ASSERT_LE(norm_of(w - ref[t]) / norm_of(ref[t]), 1e-12);
        }
    }
}

TEST(StepMuonFp, NormalizedFirstStepIsIdentical) {
    MuonConfig plain = MuonConfig::muon32();
    plain.weight_decay = 0.0;
    plain.polar_mode = PolarMode::Exact;
    MuonConfig normed = plain;
    normed.normalize = true;
    const Matrix w = random_normal(9, 5, 1);
    const Matrix g = random_normal(9, 5, 2) * 40.0;
    EXPECT_LT(max_abs_diff(step_muon_fp(w, g, init_fp_state(9, 5), plain).w,
                           step_muon_fp(w, g, init_fp_state(9, 5), normed).w),
              1e-15);
}

TEST(StepMuonNaive, PassthroughIsFullPrecision) {
    MuonConfig cfg = MuonConfig::muon32();
    const auto grads = gradient_stream(16, 10, 10, 3);
    Matrix wa = random_normal(16, 10, 4);
    Matrix wb = wa;
    FpState fa = init_fp_state(16, 10);
    NaiveQuantState nb = init_naive_state(16, 10, cfg);
    for (const auto& g : grads) {
        auto a = step_muon_fp(wa, g, fa, cfg);
        auto b = step_muon_naive_quant(wb, g, nb, cfg);
        wa = a.w;
        fa = a.state;
        wb = b.w;
        nb = b.state;
        ASSERT_EQ(wa, wb);
    }
}

TEST(StepMuonNaive, FirstStepUpdateIsUnquantized) {
    const MuonConfig cfg = MuonConfig::muon8();
    const Matrix w = random_normal(16, 10, 1);
    const Matrix g = random_normal(16, 10, 2);
    const auto q = step_muon_naive_quant(w, g, init_naive_state(16, 10, cfg), cfg);
    const auto f = step_muon_fp(w, g, init_fp_state(16, 10), cfg);
    EXPECT_EQ(q.w, f.w);
    EXPECT_EQ(q.state.step, 1u);
    EXPECT_GT(max_abs_diff(reconstruct_momentum(q.state), f.state.m), 0.0);
}

TEST(StepMuonNaive, FourBitsDriftFurtherThanEight) {
    std::vector<double> cs4;
    std::vector<double> cs8;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto grads = gradient_stream(32, 32, 50, seed + 40);
        for (int bits : {4, 8}) {
            MuonConfig cfg = MuonConfig::muon4();
            cfg.state_spec.bits = bits;
            Matrix ref = Matrix::zeros(32, 32);
            NaiveQuantState st = init_naive_state(32, 32, cfg);
            const Matrix w = Matrix::zeros(32, 32);
            for (const auto& g : grads) {
                ref = cfg.momentum * ref + g;
                st = step_muon_naive_quant(w, g, st, cfg).state;
            }
            (bits == 4 ? cs4 : cs8).push_back(cosine(ref, reconstruct_momentum(st)));
        }
    }
    EXPECT_LT(median(cs4), median(cs8));
}

TEST(Fallback, ZeroGradientLeavesParameter) {
    const std::vector<double> w{1.0, -2.0, 0.5};
    const std::vector<double> g(3, 0.0);
    const auto out = elementwise_fallback_step(w, g, init_fallback_state(3), FallbackConfig{});
    EXPECT_EQ(out.w, w);
}

TEST(Fallback, ConstantGradientMovesMonotonically) {
    std::vector<double> w{0.0, 0.0};
    const std::vector<double> g{0.3, -2.0};
    FallbackState st = init_fallback_state(2);
    for (int t = 0; t < 50; ++t) {
        auto out = elementwise_fallback_step(w, g, st, FallbackConfig{});
        EXPECT_LT(out.w[0], w[0]);
        EXPECT_GT(out.w[1], w[1]);
        w = out.w;
        st = out.state;
    }
}

TEST(Fallback, OneStepByHand) {
    FallbackConfig cfg;
    cfg.weight_decay = 0.1;
    const std::vector<double> w{1.0};
    const std::vector<double> g{0.5};
    const auto out = elementwise_fallback_step(w, g, init_fallback_state(1), cfg);
    // m = 0.05, v = 0.00025; bias-corrected 0.5 and 0.25.
    EXPECT_NEAR(out.state.m[0], 0.05, 1e-15);
    EXPECT_NEAR(out.state.v[0], 0.00025, 1e-15);
    const double expected = (1.0 - 0.001 * 0.1) * 1.0 - 0.001 * 0.5 / (0.5 + 1e-8);
    EXPECT_NEAR(out.w[0], expected, 1e-12);
    EXPECT_EQ(code_of([&] { (void)elementwise_fallback_step(w, std::vector<double>{1, 2}, out.state, cfg); }),
              ErrorCode::ShapeMismatch);
}

class CheckpointTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = std::filesystem::temp_directory_path() /
               ("muonq_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        std::filesystem::create_directories(dir_);
    }
    void TearDown() override {
        std::filesystem::remove_all(dir_);
    }

    static std::vector<CheckpointState> sample_states() {
        MuonConfig q = MuonConfig::muonq4();
        q.seed = 9;
        MuonQState a = init_muonq_state(24, 17, q, 3);
        for (int t = 0; t < 3; ++t) {
            a = step_muonq(random_normal(24, 17, t), random_normal(24, 17, 10 + t), a, q).state;
        }
        MuonConfig mixed = MuonConfig::muonq_mixed84();
        mixed.state_spec.granularity = Granularity::block(64);
        MuonQState b = init_muonq_state(9, 33, mixed, 4);
        b = step_muonq(random_normal(9, 33, 1), random_normal(9, 33, 2), b, mixed).state;
        const MuonConfig n8 = MuonConfig::muon8();
        NaiveQuantState c = init_naive_state(5, 7, n8);
        c = step_muon_naive_quant(random_normal(5, 7, 1), random_normal(5, 7, 2), c, n8).state;
        return {a, c, b};
    }

    static std::string bytes_of(const std::vector<CheckpointState>& states) {
        std::stringstream ss;
        write_checkpoint(ss, states);
        return ss.str();
    }

    std::filesystem::path dir_;
};

TEST_F(CheckpointTest, RoundTripIsBitIdentical) {
    const auto states = sample_states();
    const auto path = dir_ / "state.muq";
    save_state(states, path);
    EXPECT_FALSE(std::filesystem::exists(dir_ / "state.muq.tmp"));
    const auto loaded = load_state(path);
    ASSERT_EQ(loaded.size(), states.size());
    EXPECT_TRUE(same_state(std::get<MuonQState>(loaded[0]), std::get<MuonQState>(states[0])));
    EXPECT_TRUE(same_state(std::get<MuonQState>(loaded[2]), std::get<MuonQState>(states[2])));
    const auto& n0 = std::get<NaiveQuantState>(states[1]);
    const auto& n1 = std::get<NaiveQuantState>(loaded[1]);
    EXPECT_TRUE(muonq::quant::same_payload(n0.mq, n1.mq));
    EXPECT_EQ(n0.step, n1.step);
    EXPECT_EQ(bytes_of(loaded), bytes_of(states));
}

TEST_F(CheckpointTest, HeaderLayout) {
    const std::string b = bytes_of(sample_states());
    EXPECT_EQ(b.substr(0, 4), "MUQ1");
    EXPECT_EQ(b.substr(4, 2), std::string("\x01\x00", 2));
    EXPECT_EQ(b.substr(6, 4), std::string("\x07\x00\x00\x00", 4));
}

TEST_F(CheckpointTest, RejectsBadMagicAndVersion) {
    std::string b = bytes_of(sample_states());
    std::string magic = b;
    magic[0] = 'X';
    EXPECT_EQ(code_of([&] {
                  std::stringstream in(magic);
                  (void)read_checkpoint(in);
              }),
              ErrorCode::BadMagic);
    std::string version = b;
    version[4] = 2;
    EXPECT_EQ(code_of([&] {
                  std::stringstream in(version);
                  (void)read_checkpoint(in);
              }),
              ErrorCode::VersionMismatch);
}

TEST_F(CheckpointTest, EveryTruncationIsRejected) {
    const std::string b = bytes_of(sample_states());
    for (std::size_t cut = 0; cut < b.size(); cut += (cut < 64 || b.size() - cut < 64) ? 1 : 97) {
        std::stringstream in(b.substr(0, cut));
        ASSERT_EQ(code_of([&] { (void)read_checkpoint(in); }), ErrorCode::TruncatedFile) << "cut at " << cut;
    }
    const auto path = dir_ / "short.muq";
    {
        std::ofstream out(path, std::ios::binary);
        out << b.substr(0, b.size() / 2);
    }
    EXPECT_EQ(code_of([&] { (void)load_state(path); }), ErrorCode::TruncatedFile);
}

TEST_F(CheckpointTest, RejectsInconsistentContent) {
    std::string b = bytes_of(sample_states());
    EXPECT_EQ(code_of([&] {
                  std::stringstream in(b + "x");
                  (void)read_checkpoint(in);
              }),
              ErrorCode::CorruptFile);
    // First block is U; its granularity tag sits after rows, cols and bits.
    std::string tag = b;
    tag[10 + 8 + 1] = 0;
    EXPECT_EQ(code_of([&] {
                  std::stringstream in(tag);
                  (void)read_checkpoint(in);
              }),
              ErrorCode::CorruptFile);
}

TEST_F(CheckpointTest, IoErrors) {
    EXPECT_EQ(code_of([&] { (void)load_state(dir_ / "missing.muq"); }), ErrorCode::IoFailure);
    EXPECT_EQ(code_of([&] { save_state(sample_states(), dir_ / "no_such_dir" / "x.muq"); }), ErrorCode::IoFailure);
}
