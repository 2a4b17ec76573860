// SPDX-License-Identifier: Apache-2.0

#include "muonq/xlab/studies.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "muonq/detail/seed.hpp"
#include "muonq/error.hpp"
#include "muonq/xlab/metrics.hpp"

namespace muonq::xlab {

using matkit::Matrix;
using quant::QuantSpec;

namespace {

void require_bits(int bits) {
    if (bits != 4 && bits != 8 && bits != 32) {
        throw Error(ErrorCode::InvalidArgument, "bits must be 4, 8 or 32");
    }
}

void require_mu(double mu) {
    if (!(mu == 0.0 || mu >= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "mu must be 0 or >= 1");
    }
}

QuantSpec spec_of(int bits, Granularity g, float mu) {
    return QuantSpec{bits, g, bits == 32 ? 0.0F : mu, {}};
}

std::vector<Matrix> load_gradients(const std::string& path, std::size_t steps) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open gradient file " + path);
    }
    std::vector<Matrix> out;
    std::string line;
    std::size_t lineno = 0;
    while (out.size() < steps && std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            const auto rows = j.at("rows").get<std::size_t>();
            const auto cols = j.at("cols").get<std::size_t>();
            out.emplace_back(rows, cols, j.at("data").get<std::vector<double>>());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Config, path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorCode::Config, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (out.back().rows() != out.front().rows() || out.back().cols() != out.front().cols()) {
            throw Error(ErrorCode::Config, path + ":" + std::to_string(lineno) + ": gradient shape changes");
        }
    }
    if (out.size() < steps) {
        throw Error(ErrorCode::Config, path + ": has " + std::to_string(out.size()) + " gradients, need " +
                                           std::to_string(steps));
    }
    return out;
}

Matrix scheduled_gradient(const DriftConfig& cfg, std::size_t t) {
    std::mt19937_64 rng(detail::derive_seed(cfg.seed, {t}));
    Matrix g = matkit::gaussian_matrix(cfg.rows, cfg.cols, rng);
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(cfg.steps);
    g *= std::pow(10.0, std::sin(phase)) / matkit::frobenius_norm(g);
    return g;
}

Matrix momentum_update(const Matrix& prev, const Matrix& g, double beta, bool normalize) {
    Matrix m = beta * prev;
    if (normalize) {
        const double gn = matkit::frobenius_norm(g);
        if (gn >= matkit::kDegenerateNorm) m += (1.0 / gn) * g;
        const double mn = matkit::frobenius_norm(m);
        if (mn >= matkit::kDegenerateNorm) m *= 1.0 / mn;
    } else {
        m += g;
    }
    return m;
}

struct PairMetrics {
    double pre_re;
    double pre_cs;
    double post_re;
    double post_cs;
};

PairMetrics compare(const Matrix& m, const Matrix& polar_m, const Matrix& approx, PolarMode mode) {
    const Matrix polar_approx = optim::polar(approx, mode);
    return {relative_error(m, approx), cosine_similarity(m, approx), relative_error(polar_m, polar_approx),
            cosine_similarity(polar_m, polar_approx)};
}

std::size_t min_dim(const SyntheticMomentumSpec& s) {
    return std::min(s.rows, s.cols);
}

std::string gran_key(Granularity g) {
    return quant::to_string(g);
}

}  // namespace

// ---------------------------------------------------------------------------

void DriftConfig::validate() const {
    if (steps == 0) throw Error(ErrorCode::InvalidArgument, "steps must be >= 1");
    if (rows == 0 || cols == 0) throw Error(ErrorCode::InvalidArgument, "drift shape must be nonempty");
    require_bits(bits);
    require_mu(mu);
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::InvalidArgument, "momentum must be in [0, 1)");
    spec_of(bits, granularity, mu).validate();
}

json DriftConfig::to_json() const {
    return {{"steps", steps},
            {"rows", rows},
            {"cols", cols},
            {"bits", bits},
            {"normalize", normalize},
            {"mu", mu},
            {"granularity", quant::to_string(granularity)},
            {"momentum", momentum},
            {"gradient_file", gradient_file},
            {"seed", seed},
            {"derived",
             {{"gradient_schedule", gradient_file.empty() ? "gaussian, norm 10^sin(2 pi t / steps)" : "replay"}}}};
}

ExperimentReport drift_simulation(const DriftConfig& cfg) {
    cfg.validate();
    std::vector<Matrix> replay;
    if (!cfg.gradient_file.empty()) {
        replay = load_gradients(cfg.gradient_file, cfg.steps);
    }
    ExperimentReport report;
    report.experiment_id = "drift";
    report.seed = cfg.seed;
    report.config = cfg.to_json();
    report.declare("re", "relative error of the dequantized momentum against the float64 recursion");
    report.declare("cs", "cosine similarity of the dequantized momentum with the float64 recursion");

    const std::size_t rows = replay.empty() ? cfg.rows : replay.front().rows();
    const std::size_t cols = replay.empty() ? cfg.cols : replay.front().cols();
    const QuantSpec spec = spec_of(cfg.bits, cfg.granularity, cfg.mu);
    Matrix reference = Matrix::zeros(rows, cols);
    Matrix carried = Matrix::zeros(rows, cols);
    for (std::size_t t = 1; t <= cfg.steps; ++t) {
        const Matrix g = replay.empty() ? scheduled_gradient(cfg, t) : replay[t - 1];
        reference = momentum_update(reference, g, cfg.momentum, cfg.normalize);
        carried = fake_quant(momentum_update(carried, g, cfg.momentum, cfg.normalize), spec);
        const double cs = cosine_similarity(reference, carried);
        report.add("re", static_cast<double>(t), relative_error(reference, carried));
        report.add("cs", static_cast<double>(t), cs);
        if (t == std::min<std::size_t>(5, cfg.steps)) report.summary["cs_step5"] = cs;
    }
    report.summary["cs_final"] = report.series["cs"].points.back().second;
    report.summary["re_final"] = report.series["re"].points.back().second;
    return report;
}

// ---------------------------------------------------------------------------

std::string to_string(DecompositionMethod method) {
    return method == DecompositionMethod::Svd ? "svd" : "power";
}

DecompositionMethod parse_decomposition(const std::string& text) {
    if (text == "svd") return DecompositionMethod::Svd;
    if (text == "power") return DecompositionMethod::PowerIteration;
    throw Error(ErrorCode::InvalidArgument, "unknown decomposition '" + text + "' (expected svd or power)");
}

Factors svd_factors(const Matrix& m, const matkit::SvdResult& svd, std::size_t k) {
    if (k == 0 || k > svd.sigma.size()) {
        throw Error(ErrorCode::InvalidArgument, "rank k out of range");
    }
    Matrix u(m.rows(), k);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < k; ++j) u(i, j) = svd.u(i, j);
    }
    Matrix s = matkit::matmul_tn(u, m);
    Matrix r = m - matkit::matmul(u, s);
    return {std::move(u), std::move(s), std::move(r)};
}

Factors power_factors(const Matrix& m, std::size_t k, int iters, std::uint64_t seed) {
    if (iters < 1) throw Error(ErrorCode::InvalidArgument, "power_iters must be >= 1");
    std::mt19937_64 rng(detail::derive_seed(seed, {0x90e7}));
    Matrix s = matkit::gaussian_matrix(k, m.cols(), rng);
    matkit::PowerIterResult pi;
    for (int i = 0; i < iters; ++i) {
        pi = matkit::power_iter_update(m, s, k, detail::derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        s = pi.s;
    }
    return {std::move(pi.u), std::move(pi.s), std::move(pi.r)};
}

Matrix fake_quant(const Matrix& x, const QuantSpec& spec) {
    return quant::dequant(quant::quantize(x, spec));
}

Matrix fake_quant_factors(const Factors& f, int bits, float mu, Granularity u_gran, Granularity s_gran,
                          Granularity r_gran) {
    Matrix out = matkit::matmul(fake_quant(f.u, spec_of(bits, u_gran, mu)), fake_quant(f.s, spec_of(bits, s_gran, mu)));
    out += fake_quant(f.r, spec_of(bits, r_gran, mu));
    return out;
}

// ---------------------------------------------------------------------------

void AmplifyConfig::validate() const {
    momentum.validate();
    require_bits(bits);
    require_mu(mu);
    if (decompose && (k == 0 || k > min_dim(momentum))) {
        throw Error(ErrorCode::InvalidArgument, "k must be in [1, min(rows, cols)]");
    }
}

json AmplifyConfig::to_json() const {
    return {{"momentum", momentum.to_json()},
            {"bits", bits},
            {"mu", mu},
            {"decompose", decompose},
            {"k", k},
            {"polar_mode", optim::to_string(polar_mode)},
            {"decomposition", to_string(method)},
            {"power_iters", power_iters},
            {"spectra", spectra},
            {"derived", {{"u_granularity", "column"}, {"s_granularity", "row"}, {"r_granularity", "tensor"}}}};
}

ExperimentReport amplification_study(const AmplifyConfig& cfg) {
    cfg.validate();
    const Matrix m = synthetic_momentum(cfg.momentum);
    const Matrix polar_m = optim::polar(m, cfg.polar_mode);

    ExperimentReport report;
    report.experiment_id = "amplify";
    report.seed = cfg.momentum.seed;
    report.config = cfg.to_json();

    const auto record = [&](const std::string& tag, const Matrix& approx) {
        const PairMetrics pm = compare(m, polar_m, approx, cfg.polar_mode);
        report.summary["pre_re_" + tag] = pm.pre_re;
        report.summary["pre_cs_" + tag] = pm.pre_cs;
        report.summary["post_re_" + tag] = pm.post_re;
        report.summary["post_cs_" + tag] = pm.post_cs;
        if (cfg.spectra) {
            const auto spectrum = [&](const std::string& name, const std::string& what, const Matrix& x) {
                report.declare(name, "singular values of the " + what, "index");
                const auto sigma = matkit::svd_thin(x).sigma;
                for (std::size_t i = 0; i < sigma.size(); ++i) report.add(name, static_cast<double>(i), sigma[i]);
            };
            spectrum("spectrum_" + tag + "_pre", tag + " quantized momentum", approx);
            spectrum("spectrum_" + tag + "_post", tag + " quantized momentum after orthogonalization",
                     optim::polar(approx, cfg.polar_mode));
        }
    };

    if (cfg.spectra) {
        report.declare("spectrum_original_pre", "singular values of the original momentum", "index");
        report.declare("spectrum_original_post", "singular values of the orthogonalized original momentum", "index");
        const auto s_pre = matkit::svd_thin(m).sigma;
        const auto s_post = matkit::svd_thin(polar_m).sigma;
        for (std::size_t i = 0; i < s_pre.size(); ++i) {
            report.add("spectrum_original_pre", static_cast<double>(i), s_pre[i]);
            report.add("spectrum_original_post", static_cast<double>(i), s_post[i]);
        }
    }

    record("naive", fake_quant(m, spec_of(cfg.bits, Granularity::tensor(), cfg.mu)));
    if (cfg.decompose) {
        const Factors f = cfg.method == DecompositionMethod::Svd
                              ? svd_factors(m, matkit::svd_thin(m), cfg.k)
                              : power_factors(m, cfg.k, cfg.power_iters, cfg.momentum.seed);
        record("decomposed", fake_quant_factors(f, cfg.bits, cfg.mu, Granularity::column(), Granularity::row()));
    }
    return report;
}

// ---------------------------------------------------------------------------

void RankSweepConfig::validate() const {
    momentum.validate();
    require_bits(bits);
    require_mu(mu);
    if (ratios.empty()) throw Error(ErrorCode::InvalidArgument, "ratios must be nonempty");
    for (double r : ratios) {
        if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidArgument, "ratios must lie in [0, 1]");
    }
    if ((memory_rows == 0) != (memory_cols == 0)) {
        throw Error(ErrorCode::InvalidArgument, "memory_rows and memory_cols must be set together");
    }
}

json RankSweepConfig::to_json() const {
    return {{"momentum", momentum.to_json()},
            {"bits", bits},
            {"mu", mu},
            {"ratios", ratios},
            {"polar_mode", optim::to_string(polar_mode)},
            {"memory_rows", memory_rows},
            {"memory_cols", memory_cols},
            {"derived",
             {{"memory_shape", {memory_rows == 0 ? momentum.rows : memory_rows, memory_cols == 0 ? momentum.cols : memory_cols}},
              {"decomposition", "svd"}}}};
}

ExperimentReport rank_sweep(const RankSweepConfig& cfg) {
    cfg.validate();
    const Matrix m = synthetic_momentum(cfg.momentum);
    const Matrix polar_m = optim::polar(m, cfg.polar_mode);
    const std::size_t mem_rows = cfg.memory_rows == 0 ? cfg.momentum.rows : cfg.memory_rows;
    const std::size_t mem_cols = cfg.memory_cols == 0 ? cfg.momentum.cols : cfg.memory_cols;

    ExperimentReport report;
    report.experiment_id = "rank-sweep";
    report.seed = cfg.momentum.seed;
    report.config = cfg.to_json();
    for (const char* metric : {"pre_re", "pre_cs", "post_re", "post_cs"}) {
        report.declare(metric, std::string(metric) + " of the quantized momentum (ratio 0: whole-tensor quantization)",
                       "rank_ratio");
    }
    report.declare("code_bits", "code bits of the state at the memory shape", "rank_ratio");
    report.declare("scale_bits", "scale bits of the state at the memory shape", "rank_ratio");

    const bool needs_svd = std::any_of(cfg.ratios.begin(), cfg.ratios.end(), [](double r) { return r > 0.0; });
    const matkit::SvdResult svd = needs_svd ? matkit::svd_thin(m) : matkit::SvdResult{};
    for (double ratio : cfg.ratios) {
        Matrix approx;
        quant::Footprint fp;
        if (ratio == 0.0) {
            const QuantSpec spec = spec_of(cfg.bits, Granularity::tensor(), cfg.mu);
            approx = fake_quant(m, spec);
            fp = quant::block_footprint(mem_rows, mem_cols, spec);
        } else {
            optim::MuonConfig rank_cfg;
            rank_cfg.rank_ratio = ratio;
            const std::size_t k = rank_cfg.rank_for(cfg.momentum.rows, cfg.momentum.cols);
            approx = fake_quant_factors(svd_factors(m, svd, k), cfg.bits, cfg.mu, Granularity::column(),
                                        Granularity::row());
            const std::size_t mk = rank_cfg.rank_for(mem_rows, mem_cols);
            fp = quant::block_footprint(mem_rows, mk, spec_of(cfg.bits, Granularity::column(), cfg.mu));
            fp += quant::block_footprint(mk, mem_cols, spec_of(cfg.bits, Granularity::row(), cfg.mu));
            fp += quant::block_footprint(mem_rows, mem_cols, spec_of(cfg.bits, Granularity::tensor(), cfg.mu));
        }
        const PairMetrics pm = compare(m, polar_m, approx, cfg.polar_mode);
        report.add("pre_re", ratio, pm.pre_re);
        report.add("pre_cs", ratio, pm.pre_cs);
        report.add("post_re", ratio, pm.post_re);
        report.add("post_cs", ratio, pm.post_cs);
        report.add("code_bits", ratio, static_cast<double>(fp.code_bits));
        report.add("scale_bits", ratio, static_cast<double>(fp.scale_bits));
    }
    return report;
}

// ---------------------------------------------------------------------------

void MuSweepConfig::validate() const {
    momentum.validate();
    require_bits(bits);
    spec_of(bits, granularity, 0.0F).validate();
    for (double mu : mus) require_mu(mu);
}

json MuSweepConfig::to_json() const {
    return {{"momentum", momentum.to_json()},
            {"bits", bits},
            {"granularity", quant::to_string(granularity)},
            {"mus", mus},
            {"polar_mode", optim::to_string(polar_mode)}};
}

ExperimentReport mu_sweep(const MuSweepConfig& cfg) {
    cfg.validate();
    const Matrix m = synthetic_momentum(cfg.momentum);
    const Matrix polar_m = optim::polar(m, cfg.polar_mode);

    ExperimentReport report;
    report.experiment_id = "mu-sweep";
    report.seed = cfg.momentum.seed;
    report.config = cfg.to_json();
    report.declare("re", "relative error of the quantized momentum (mu 0: uniform)", "mu");
    report.declare("cs", "cosine similarity of the quantized momentum (mu 0: uniform)", "mu");
    report.declare("post_re", "relative error after orthogonalization", "mu");
    report.declare("post_cs", "cosine similarity after orthogonalization", "mu");

    std::vector<double> mus = cfg.mus;
    if (std::find(mus.begin(), mus.end(), 0.0) == mus.end()) mus.insert(mus.begin(), 0.0);
    double best_cs = -2.0;
    double best_re = 1e300;
    for (double mu : mus) {
        const PairMetrics pm =
            compare(m, polar_m, fake_quant(m, spec_of(cfg.bits, cfg.granularity, static_cast<float>(mu))),
                    cfg.polar_mode);
        report.add("re", mu, pm.pre_re);
        report.add("cs", mu, pm.pre_cs);
        report.add("post_re", mu, pm.post_re);
        report.add("post_cs", mu, pm.post_cs);
        if (mu > 0.0 && pm.pre_cs > best_cs) {
            best_cs = pm.pre_cs;
            report.summary["best_cs_mu"] = mu;
        }
        if (mu > 0.0 && pm.pre_re < best_re) {
            best_re = pm.pre_re;
            report.summary["best_re_mu"] = mu;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------

void GranularityConfig::validate() const {
    momentum.validate();
    require_bits(bits);
    if (!(mu >= 1.0F)) throw Error(ErrorCode::InvalidArgument, "granularity study needs a companding mu >= 1");
    if (!(factor_mu == 0.0F || factor_mu >= 1.0F)) {
        throw Error(ErrorCode::InvalidArgument, "factor_mu must be 0 or >= 1");
    }
    if (k > min_dim(momentum)) throw Error(ErrorCode::InvalidArgument, "k exceeds min(rows, cols)");
}

json GranularityConfig::to_json() const {
    return {{"momentum", momentum.to_json()},
            {"bits", bits},
            {"mu", mu},
            {"factor_mu", factor_mu},
            {"k", k},
            {"polar_mode", optim::to_string(polar_mode)},
            {"derived",
             {{"k", k == 0 ? std::max<std::size_t>(1, min_dim(momentum) / 4) : k},
              {"r_granularity", "tensor"},
              {"decomposition", "svd"}}}};
}

ExperimentReport granularity_study(const GranularityConfig& cfg) {
    cfg.validate();
    const Matrix m = synthetic_momentum(cfg.momentum);
    const Matrix polar_m = optim::polar(m, cfg.polar_mode);
    const std::size_t k = cfg.k == 0 ? std::max<std::size_t>(1, min_dim(cfg.momentum) / 4) : cfg.k;

    ExperimentReport report;
    report.experiment_id = "granularity";
    report.seed = cfg.momentum.seed;
    report.config = cfg.to_json();

    const float mu = cfg.mu;
    for (Granularity g : {Granularity::tensor(), Granularity::row(), Granularity::column()}) {
        const Matrix uni = fake_quant(m, spec_of(cfg.bits, g, 0.0F));
        const Matrix comp = fake_quant(m, spec_of(cfg.bits, g, mu));
        report.summary["uniform_re_" + gran_key(g)] = relative_error(m, uni);
        report.summary["uniform_cs_" + gran_key(g)] = cosine_similarity(m, uni);
        report.summary["companded_re_" + gran_key(g)] = relative_error(m, comp);
        report.summary["companded_cs_" + gran_key(g)] = cosine_similarity(m, comp);
    }

    const Factors f = svd_factors(m, matkit::svd_thin(m), k);
    for (Granularity ug : {Granularity::column(), Granularity::row()}) {
        for (Granularity sg : {Granularity::row(), Granularity::column()}) {
            const PairMetrics pm =
                compare(m, polar_m, fake_quant_factors(f, cfg.bits, cfg.factor_mu, ug, sg), cfg.polar_mode);
            const std::string tag = "u_" + gran_key(ug) + "_s_" + gran_key(sg);
            report.summary["post_re_" + tag] = pm.post_re;
            report.summary["post_cs_" + tag] = pm.post_cs;
        }
    }
    return report;
}

}  // namespace muonq::xlab
