// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "muonq/error.hpp"
#include "muonq/xlab/memory.hpp"
#include "muonq/xlab/metrics.hpp"
#include "muonq/xlab/report.hpp"
#include "muonq/xlab/studies.hpp"
#include "muonq/xlab/synthetic.hpp"
#include "muonq/xlab/toy.hpp"
#include "muonq/xlab/variants.hpp"
#include "test_support.hpp"

using namespace muonq::xlab;
using muonq::ErrorCode;
using muonq::matkit::Matrix;
using muonq::testing::random_normal;

namespace fs = std::filesystem;

namespace {

constexpr int kSeeds = 20;

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const muonq::Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::Config;
}

// Median over kSeeds of one summary value, with the seed written into the
// synthetic momentum spec.
template <typename Config, typename Study>
std::map<std::string, double> median_summary(Config cfg, Study study) {
    std::map<std::string, std::vector<double>> acc;
    for (int s = 0; s < kSeeds; ++s) {
        cfg.momentum.seed = static_cast<std::uint64_t>(s);
        for (const auto& [k, v] : study(cfg).summary) acc[k].push_back(v);
    }
    std::map<std::string, double> out;
    for (auto& [k, v] : acc) out[k] = median(v);
    return out;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("muonq_xlab_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::size_t file_count(const fs::path& dir) {
    return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator()));
}

}  // namespace

// ---- metrics ----

TEST(Metrics, Identities) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix a = random_normal(7, 5, seed);
        const Matrix b = random_normal(7, 5, seed + 100);
        EXPECT_EQ(relative_error(a, a), 0.0);
        EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
        for (double c : {1e-3, 0.5, 7.0, 1e3}) {
            EXPECT_NEAR(cosine_similarity(a, b * c), cosine_similarity(a, b), 1e-12);
            EXPECT_NEAR(relative_error(a * c, b * c), relative_error(a, b), 1e-12);
        }
    }
}

TEST(Metrics, Examples) {
    const Matrix i2 = Matrix::identity(2);
    const std::vector<double> diag = {1.0, 0.9};
    const Matrix d = Matrix::diagonal(diag);
    EXPECT_NEAR(relative_error(i2, d), 0.1 / std::sqrt(2.0), 1e-15);
    EXPECT_EQ(relative_error(i2, Matrix::zeros(2, 2)), 1.0);
    EXPECT_NEAR(cosine_similarity(i2, i2 * -1.0), -1.0, 1e-15);
}

TEST(Metrics, Errors) {
    const Matrix z = Matrix::zeros(2, 2);
    const Matrix a = Matrix::identity(2);
    EXPECT_EQ(code_of([&] { (void)relative_error(z, a); }), ErrorCode::ZeroReference);
    EXPECT_EQ(code_of([&] { (void)cosine_similarity(a, z); }), ErrorCode::ZeroOperand);
    EXPECT_EQ(code_of([&] { (void)cosine_similarity(z, a); }), ErrorCode::ZeroOperand);
    EXPECT_EQ(code_of([&] { (void)relative_error(a, Matrix::identity(3)); }), ErrorCode::ShapeMismatch);
}

// ---- reports ----

namespace {

ExperimentReport sample_report() {
    ExperimentReport r;
    r.experiment_id = "sample";
    r.seed = 3;
    r.config = {{"bits", 4}, {"mu", 255.0}};
    r.declare("cs", "cosine similarity");
    r.add("cs", 1, 0.5);
    r.add("cs", 2, 1.0 / 3.0);
    r.summary["final"] = 1.0 / 3.0;
    r.runtime_ms = 1234;
    return r;
}

}  // namespace

TEST(Report, UndeclaredSeriesRejected) {
    ExperimentReport r;
    EXPECT_EQ(code_of([&] { r.add("nope", 1, 1); }), ErrorCode::InvalidArgument);
}

TEST(Report, JsonlLayout) {
    const ExperimentReport r = sample_report();
    std::istringstream in(r.to_jsonl());
    std::string line;
    std::vector<json> rows;
    while (std::getline(in, line)) rows.push_back(json::parse(line));
    ASSERT_EQ(rows.size(), 3U);
    EXPECT_EQ(rows[0]["schema"], kReportSchema);
    EXPECT_EQ(rows[0]["experiment_id"], "sample");
    EXPECT_EQ(rows[0]["seed"], 3);
    EXPECT_EQ(rows[0]["config"]["bits"], 4);
    EXPECT_EQ(rows[0]["summary"]["final"].get<double>(), 1.0 / 3.0);
    EXPECT_EQ(rows[0]["series"]["cs"]["description"], "cosine similarity");
    EXPECT_FALSE(rows[0].contains("runtime_ms"));
    EXPECT_EQ(rows[1]["series"], "cs");
    EXPECT_EQ(rows[1]["step"], 1.0);
    EXPECT_EQ(rows[2]["value"].get<double>(), 1.0 / 3.0);
}

TEST(Report, CsvRoundTripsDoubles) {
    const std::string csv = sample_report().series_csv("cs");
    std::istringstream in(csv);
    std::string header;
    std::string row;
    std::getline(in, header);
    EXPECT_EQ(header, "step,value");
    std::getline(in, row);
    std::getline(in, row);
    EXPECT_EQ(std::stod(row.substr(row.find(',') + 1)), 1.0 / 3.0);
}

TEST(Report, DeterministicBytes) {
    ExperimentReport a = sample_report();
    ExperimentReport b = sample_report();
    b.runtime_ms = 99;
    EXPECT_EQ(a.to_jsonl(), b.to_jsonl());

    DriftConfig d;
    d.seed = 4;
    EXPECT_EQ(drift_simulation(d).to_jsonl(), drift_simulation(d).to_jsonl());
}

TEST(Report, WriteLeavesNoTemps) {
    const fs::path dir = fresh_dir("write");
    const auto files = write_report(sample_report(), dir);
    ASSERT_EQ(files.size(), 2U);
    EXPECT_EQ(files[0].filename(), "sample_seed3.jsonl");
    EXPECT_EQ(files[1].filename(), "sample_seed3_cs.csv");
    EXPECT_EQ(file_count(dir), 2U);
    std::ifstream in(files[0]);
    std::stringstream buf;
    buf << in.rdbuf();
    EXPECT_EQ(buf.str(), sample_report().to_jsonl());
    fs::remove_all(dir);
}

TEST(Report, FailedWriteLeavesNothing) {
    const fs::path dir = fresh_dir("fail");
    const fs::path blocker = dir / "not_a_dir";
    std::ofstream(blocker) << "x";
    EXPECT_EQ(code_of([&] { (void)write_report(sample_report(), blocker); }), ErrorCode::IoFailure);
    EXPECT_EQ(file_count(dir), 1U);
    fs::remove_all(dir);
}

TEST(Report, MedianAcrossRuns) {
    std::vector<ExperimentReport> runs;
    for (double v : {3.0, 1.0, 2.0}) {
        ExperimentReport r;
        r.experiment_id = "m";
        r.declare("x", "");
        r.add("x", 1, v);
        r.summary["s"] = 10 * v;
        runs.push_back(r);
    }
    const ExperimentReport m = median_report(runs, "m");
    EXPECT_EQ(m.series.at("x").points[0].second, 2.0);
    EXPECT_EQ(m.summary.at("s"), 20.0);
    EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);

    runs[1].series["x"].points[0].first = 5;
    EXPECT_EQ(code_of([&] { (void)median_report(runs, "m"); }), ErrorCode::InvalidArgument);
}

// ---- synthetic momentum ----

TEST(Synthetic, UnitNormAndSeeded) {
    SyntheticMomentumSpec spec;
    spec.rows = 64;
    spec.cols = 32;
    spec.dominant_rank = 4;
    const Matrix a = synthetic_momentum(spec);
    EXPECT_NEAR(muonq::testing::norm_of(a), 1.0, 1e-12);
    EXPECT_EQ(a.data()[7], synthetic_momentum(spec).data()[7]);
    spec.seed = 1;
    EXPECT_NE(a.data()[7], synthetic_momentum(spec).data()[7]);
}

TEST(Synthetic, LowRankWithoutNoise) {
    SyntheticMomentumSpec spec;
    spec.rows = 48;
    spec.cols = 40;
    spec.dominant_rank = 3;
    spec.noise_level = 0.0;
    const auto svd = muonq::matkit::svd_thin(synthetic_momentum(spec));
    EXPECT_GT(svd.sigma[2], 1e-3);
    EXPECT_LT(svd.sigma[3], 1e-12);
}

TEST(Synthetic, Validation) {
    SyntheticMomentumSpec spec;
    spec.dominant_rank = 300;
    EXPECT_EQ(code_of([&] { (void)synthetic_momentum(spec); }), ErrorCode::InvalidArgument);
    spec = {};
    spec.spectrum_decay = 1.0;
    EXPECT_EQ(code_of([&] { (void)synthetic_momentum(spec); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(parse_tail("student-t"), Tail::StudentT);
    EXPECT_EQ(code_of([] { (void)parse_tail("cauchy"); }), ErrorCode::InvalidArgument);
}

// ---- pass-through smoke: every study reports null effects at 32 bits ----

TEST(PassThrough, Drift) {
    DriftConfig d;
    d.bits = 32;
    for (bool normalize : {false, true}) {
        d.normalize = normalize;
        const auto r = drift_simulation(d);
        EXPECT_EQ(r.series.at("re").points.size(), 50U);
        EXPECT_LT(r.summary.at("re_final"), 1e-12);
        EXPECT_NEAR(r.summary.at("cs_final"), 1.0, 1e-12);
    }
}

TEST(PassThrough, Amplification) {
    AmplifyConfig a;
    a.bits = 32;
    a.momentum.rows = a.momentum.cols = 64;
    a.k = 16;
    const auto r = amplification_study(a);
    for (const char* key : {"pre_re_naive", "post_re_naive", "pre_re_decomposed", "post_re_decomposed"}) {
        EXPECT_LT(r.summary.at(key), 1e-9) << key;
    }
}

TEST(PassThrough, RankSweep) {
    RankSweepConfig c;
    c.bits = 32;
    c.momentum.rows = c.momentum.cols = 64;
    const auto r = rank_sweep(c);
    for (const auto& [ratio, re] : r.series.at("post_re").points) EXPECT_LT(re, 1e-9) << ratio;
    for (const auto& [ratio, cs] : r.series.at("post_cs").points) EXPECT_NEAR(cs, 1.0, 1e-12) << ratio;
}

TEST(PassThrough, MuSweepAndGranularity) {
    MuSweepConfig m;
    m.bits = 32;
    m.momentum.rows = m.momentum.cols = 64;
    const auto sweep = mu_sweep(m);
    for (const auto& [mu, re] : sweep.series.at("re").points) EXPECT_EQ(re, 0.0) << mu;
    GranularityConfig g;
    g.bits = 32;
    g.momentum.rows = g.momentum.cols = 64;
    for (const auto& [key, v] : granularity_study(g).summary) {
        if (key.find("_re_") != std::string::npos || key.rfind("post_re", 0) == 0) {
            EXPECT_LT(v, 1e-9) << key;
        } else {
            EXPECT_NEAR(v, 1.0, 1e-12) << key;
        }
    }
}

TEST(PassThrough, MemoryRatioIsOne) {
    const auto r = memory_report(builtin_inventory("gpt2-small"), {"muon32"});
    EXPECT_EQ(r.summary.at("ratio"), 1.0);
}

// ---- memory accounting ----

TEST(Memory, Gpt2SmallClosedForm) {
    // Per layer: four 768x768 and two 768x3072 matrices, rank 48 everywhere.
    const double elems = 4.0 * 768 * 768 + 2.0 * 768 * 3072;
    const double factor = 4.0 * (768 * 48 + 48 * 768) + 2.0 * (768 * 48 + 48 * 3072);
    const double dense = 12 * 32 * elems;
    const double muon4 = 12 * (4 * elems + 6 * 32);
    const double muonq4 = 12 * (4 * (elems + factor) + 6 * 32 * (2 * 48 + 1));

    const auto r = memory_report(builtin_inventory("gpt2-small"), {"muon4", "muonq4"});
    EXPECT_EQ(r.summary.at("bits_dense32"), dense);
    EXPECT_EQ(r.summary.at("bits_muon4"), muon4);
    EXPECT_EQ(r.summary.at("bits_muonq4"), muonq4);
    EXPECT_NEAR(r.summary.at("ratio_muonq4"), 7.31, 0.05);
    EXPECT_NEAR(r.summary.at("ratio_muon4"), 8.0, 0.01);
    EXPECT_NEAR(r.summary.at("muonq4_over_muon4"), 1.09, 0.01);
}

TEST(Memory, Square1024CodeOverhead) {
    const auto r = memory_report(builtin_inventory("square-1024"), {"muon4", "muonq4"});
    EXPECT_DOUBLE_EQ(r.summary.at("code_bits_muonq4") / r.summary.at("code_bits_muon4"), 1.125);
}

TEST(Memory, MatchesBuiltBlocks) {
    for (const std::string v : {"muon8", "muon4", "muonq4", "muonq84"}) {
        const auto cfg = variant_config(v);
        const auto state = muonq::optim::init_state(96, 64, cfg, 0);
        EXPECT_EQ(state_footprint(96, 64, cfg), muonq::optim::state_footprint(state)) << v;
    }
}

TEST(Memory, UnknownNames) {
    EXPECT_EQ(code_of([] { (void)builtin_inventory("gpt5"); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { (void)variant_config("muon3"); }), ErrorCode::InvalidArgument);
}

// ---- variants ----

TEST(Variants, AblationToggles) {
    const auto c = variant_config("c");
    EXPECT_TRUE(c.state_spec.companded());
    EXPECT_FALSE(c.normalize);
    EXPECT_FALSE(c.rank_ratio.has_value());
    const auto nd = variant_config("nd");
    EXPECT_FALSE(nd.state_spec.companded());
    EXPECT_TRUE(nd.normalize);
    EXPECT_TRUE(nd.rank_ratio.has_value());
    const auto cnd = variant_config("cnd");
    const auto full = variant_config("muonq4");
    EXPECT_EQ(cnd.state_spec.bits, full.state_spec.bits);
    EXPECT_EQ(cnd.state_spec.companding_mu, full.state_spec.companding_mu);
    EXPECT_EQ(cnd.state_spec.granularity, full.state_spec.granularity);
    EXPECT_EQ(cnd.normalize, full.normalize);
    EXPECT_EQ(cnd.rank_ratio, full.rank_ratio);
    EXPECT_EQ(variant_config("muonq84").factor_bits, 8);
    EXPECT_TRUE(variant_config("muon32n").normalize);
}

// ---- directional Monte-Carlo examples (20 seeds, medians) ----

TEST(Directional, DriftNormalizationHelps) {
    std::vector<double> cs5;
    std::vector<double> cs50;
    std::vector<double> norm50;
    for (int s = 0; s < kSeeds; ++s) {
        DriftConfig d;
        d.seed = static_cast<std::uint64_t>(s);
        const auto plain = drift_simulation(d);
        d.normalize = true;
        const auto normed = drift_simulation(d);
        cs5.push_back(plain.summary.at("cs_step5"));
        cs50.push_back(plain.summary.at("cs_final"));
        norm50.push_back(normed.summary.at("cs_final"));
    }
    EXPECT_LT(median(cs50), median(cs5));
    EXPECT_GT(median(norm50), median(cs50));
}

TEST(Directional, DecompositionStopsAmplification) {
    const auto m = median_summary(AmplifyConfig{}, amplification_study);
    EXPECT_GT(m.at("post_re_naive"), m.at("pre_re_naive"));
    EXPECT_GT(m.at("post_cs_decomposed"), m.at("post_cs_naive"));
}

TEST(Directional, PowerIterationAgreesWithSvd) {
    AmplifyConfig a;
    a.method = DecompositionMethod::PowerIteration;
    const auto m = median_summary(a, amplification_study);
    EXPECT_GT(m.at("post_cs_decomposed"), m.at("post_cs_naive"));
}

TEST(Directional, RankSweepNondecreasing) {
    std::vector<std::vector<double>> cs(5);
    for (int s = 0; s < kSeeds; ++s) {
        RankSweepConfig c;
        c.ratios = {0.0, 1.0 / 64, 1.0 / 16, 1.0 / 8, 1.0 / 4};
        c.momentum.seed = static_cast<std::uint64_t>(s);
        const auto r = rank_sweep(c);
        for (std::size_t i = 0; i < cs.size(); ++i) cs[i].push_back(r.series.at("post_cs").points[i].second);
    }
    for (std::size_t i = 1; i < cs.size(); ++i) {
        EXPECT_GE(median(cs[i]), median(cs[i - 1]) - 0.005) << i;
    }
    EXPECT_GT(median(cs.back()), median(cs.front()));
}

TEST(Directional, CompandingBeatsUniformAtTensor) {
    MuSweepConfig c;
    c.granularity = muonq::quant::Granularity::tensor();
    std::vector<std::vector<double>> re(c.mus.size() + 1);
    for (int s = 0; s < kSeeds; ++s) {
        c.momentum.seed = static_cast<std::uint64_t>(s);
        const auto r = mu_sweep(c);
        ASSERT_EQ(r.series.at("re").points.front().first, 0.0);
        for (std::size_t i = 0; i < re.size(); ++i) re[i].push_back(r.series.at("re").points[i].second);
    }
    for (std::size_t i = 1; i < re.size(); ++i) EXPECT_LT(median(re[i]), median(re[0])) << i;
}

TEST(Directional, BestMuIsInterior) {
    std::vector<double> best;
    for (int s = 0; s < kSeeds; ++s) {
        MuSweepConfig c;
        c.momentum.seed = static_cast<std::uint64_t>(s);
        best.push_back(mu_sweep(c).summary.at("best_cs_mu"));
    }
    const double m = median(best);
    EXPECT_TRUE(m == 127 || m == 255 || m == 511) << "median best mu " << m;
}

TEST(Directional, GranularityTables) {
    const auto m = median_summary(GranularityConfig{}, granularity_study);
    for (const char* g : {"tensor", "row", "column"}) {
        EXPECT_LE(m.at(std::string("companded_re_") + g), m.at(std::string("uniform_re_") + g)) << g;
    }
    const double row_s = std::min(m.at("post_cs_u_column_s_row"), m.at("post_cs_u_row_s_row"));
    const double col_s = std::max(m.at("post_cs_u_column_s_column"), m.at("post_cs_u_row_s_column"));
    const double u_effect = std::max(std::abs(m.at("post_cs_u_column_s_row") - m.at("post_cs_u_row_s_row")),
                                     std::abs(m.at("post_cs_u_column_s_column") - m.at("post_cs_u_row_s_column")));
    EXPECT_GT(row_s - col_s, u_effect);
}

// ---- toy trainer ----

TEST(Toy, DeterministicAndLearns) {
    ToyConfig t;
    t.steps = 30;
    t.log_every = 10;
    t.variant = "muonq4";
    const auto a = toy_train(t);
    const auto b = toy_train(t);
    EXPECT_EQ(a.to_jsonl(), b.to_jsonl());
    EXPECT_EQ(a.series.at("eval_loss").points.size(), 4U);
    EXPECT_LT(a.summary.at("final_loss"), a.summary.at("initial_loss"));
}

TEST(Toy, EveryVariantRuns) {
    for (const std::string& v : variant_names()) {
        for (ToyTask task : {ToyTask::Regression, ToyTask::Classification}) {
            ToyConfig t;
            t.task = task;
            t.variant = v;
            t.steps = 3;
            const auto r = toy_train(t);
            EXPECT_TRUE(std::isfinite(r.summary.at("final_loss"))) << v;
        }
    }
}

TEST(Toy, SameSeedSameData) {
    ToyConfig a;
    a.steps = 1;
    a.variant = "muon32";
    ToyConfig b = a;
    b.variant = "muon4";
    EXPECT_EQ(toy_train(a).summary.at("initial_loss"), toy_train(b).summary.at("initial_loss"));
}

TEST(Toy, Validation) {
    ToyConfig t;
    t.steps = 0;
    EXPECT_EQ(code_of([&] { (void)toy_train(t); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { (void)parse_toy_task("ranking"); }), ErrorCode::InvalidArgument);
}
