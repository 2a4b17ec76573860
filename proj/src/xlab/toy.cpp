// SPDX-License-Identifier: Apache-2.0

#include "muonq/xlab/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "muonq/detail/seed.hpp"
#include "muonq/error.hpp"
#include "muonq/matkit/linalg.hpp"
#include "muonq/optim/fallback.hpp"
#include "muonq/xlab/variants.hpp"

namespace muonq::xlab {

using matkit::Matrix;

namespace {

enum Stream : std::uint64_t {
    kTeacher = 1,
    kStudent = 2,
    kBatch = 3,
    kEval = 4,
    kOptimizer = 5,
    kChannels = 6,
    kNoise = 7
};

struct Net {
    Matrix w1;  // input x hidden
    std::vector<double> b1;
    Matrix w2;  // hidden x output
    std::vector<double> b2;
};

struct Grads {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;
};

Matrix scaled_gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Matrix m = matkit::gaussian_matrix(rows, cols, rng);
    m *= 1.0 / std::sqrt(static_cast<double>(rows));
    return m;
}

Net random_net(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Net n;
    n.w1 = scaled_gaussian(kToyInput, kToyHidden, rng);
    n.w2 = scaled_gaussian(kToyHidden, kToyOutput, rng);
    n.b1.assign(kToyHidden, 0.0);
    n.b2.assign(kToyOutput, 0.0);
    return n;
}

void add_bias(Matrix& z, const std::vector<double>& b) {
    for (std::size_t r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        for (std::size_t c = 0; c < z.cols(); ++c) row[c] += b[c];
    }
}

Matrix hidden(const Net& n, const Matrix& x) {
    Matrix h = matkit::matmul(x, n.w1);
    add_bias(h, n.b1);
    for (double& v : h.data()) v = std::tanh(v);
    return h;
}

Matrix forward(const Net& n, const Matrix& x, Matrix* h_out = nullptr) {
    Matrix h = hidden(n, x);
    Matrix out = matkit::matmul(h, n.w2);
    add_bias(out, n.b2);
    if (h_out != nullptr) *h_out = std::move(h);
    return out;
}

struct Targets {
    Matrix values;                   // regression targets
    std::vector<std::size_t> labels;  // classification labels
};

Targets teacher_targets(const Net& teacher, const Matrix& x, ToyTask task) {
    Targets t;
    t.values = forward(teacher, x);
    if (task == ToyTask::Classification) {
        t.labels.resize(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const auto row = t.values.row(r);
            t.labels[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        }
    }
    return t;
}

// Loss and its gradient with respect to the network output.
double loss_and_grad(const Matrix& out, const Targets& t, ToyTask task, Matrix* d_out) {
    const double batch = static_cast<double>(out.rows());
    double loss = 0.0;
    if (d_out != nullptr) *d_out = Matrix(out.rows(), out.cols());
    if (task == ToyTask::Regression) {
        const double denom = batch * static_cast<double>(out.cols());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double diff = out.data()[i] - t.values.data()[i];
            loss += diff * diff;
            if (d_out != nullptr) d_out->data()[i] = 2.0 * diff / denom;
        }
        return loss / denom;
    }
    for (std::size_t r = 0; r < out.rows(); ++r) {
        const auto row = out.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const double log_z = mx + std::log(z);
        loss += log_z - row[t.labels[r]];
        if (d_out != nullptr) {
            auto d = d_out->row(r);
            for (std::size_t c = 0; c < row.size(); ++c) d[c] = std::exp(row[c] - log_z) / batch;
            d[t.labels[r]] -= 1.0 / batch;
        }
    }
    return loss / batch;
}

double loss_on(const Net& n, const Matrix& x, const Targets& t, ToyTask task) {
    return loss_and_grad(forward(n, x), t, task, nullptr);
}

double train_step_grads(const Net& n, const Matrix& x, const Targets& t, ToyTask task, Grads& g) {
    Matrix h;
    const Matrix out = forward(n, x, &h);
    Matrix d_out;
    const double loss = loss_and_grad(out, t, task, &d_out);
    g.w2 = matkit::matmul_tn(h, d_out);
    g.b2.assign(kToyOutput, 0.0);
    for (std::size_t r = 0; r < d_out.rows(); ++r) {
        const auto row = d_out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) g.b2[c] += row[c];
    }
    Matrix d_h = matkit::matmul_nt(d_out, n.w2);
    for (std::size_t i = 0; i < d_h.size(); ++i) {
        const double hv = h.data()[i];
        d_h.data()[i] *= 1.0 - hv * hv;
    }
    g.w1 = matkit::matmul_tn(x, d_h);
    g.b1.assign(kToyHidden, 0.0);
    for (std::size_t r = 0; r < d_h.rows(); ++r) {
        const auto row = d_h.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) g.b1[c] += row[c];
    }
    return loss;
}

// exp(spread * l), l ~ Laplace(0, 1), rescaled to unit root mean square.
std::vector<double> channel_scales(std::size_t n, double spread, std::mt19937_64& rng) {
    std::vector<double> out(n, 1.0);
    if (spread == 0.0) return out;
    std::exponential_distribution<double> e(1.0);
    std::bernoulli_distribution coin(0.5);
    double ss = 0.0;
    for (double& v : out) {
        const double mag = e(rng);
        v = std::exp(spread * (coin(rng) ? mag : -mag));
        ss += v * v;
    }
    const double rms = std::sqrt(ss / static_cast<double>(n));
    for (double& v : out) v /= rms;
    return out;
}

struct Task {
    Net teacher;
    std::vector<double> feature_scale;
};

Task make_task(const ToyConfig& cfg) {
    Task t{random_net(detail::derive_seed(cfg.seed, {kTeacher})), {}};
    std::mt19937_64 rng(detail::derive_seed(cfg.seed, {kChannels}));
    t.feature_scale = channel_scales(kToyInput, cfg.input_spread, rng);
    const std::vector<double> out_scale = channel_scales(kToyOutput, cfg.output_spread, rng);
    for (std::size_t r = 0; r < kToyHidden; ++r) {
        auto row = t.teacher.w2.row(r);
        for (std::size_t c = 0; c < kToyOutput; ++c) row[c] *= out_scale[c];
    }
    return t;
}

Matrix inputs(const Task& task, std::size_t rows, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Matrix x = matkit::gaussian_matrix(rows, kToyInput, rng);
    for (std::size_t r = 0; r < rows; ++r) {
        auto row = x.row(r);
        for (std::size_t c = 0; c < kToyInput; ++c) row[c] *= task.feature_scale[c];
    }
    return x;
}

Targets sample_targets(const Task& task, const Matrix& x, const ToyConfig& cfg, std::uint64_t seed) {
    Targets t = teacher_targets(task.teacher, x, cfg.task);
    if (cfg.task == ToyTask::Regression && cfg.target_noise > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, cfg.target_noise);
        for (double& v : t.values.data()) v += n(rng);
    }
    return t;
}

double lr_factor(const ToyConfig& cfg, std::size_t t) {
    double f = 1.0;
    if (cfg.warmup_steps > 0 && t < cfg.warmup_steps) {
        f = static_cast<double>(t) / static_cast<double>(cfg.warmup_steps);
    }
    if (cfg.schedule == LrSchedule::Cosine) {
        const double progress = static_cast<double>(t - 1) / static_cast<double>(cfg.steps);
        f *= 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
    return f;
}

}  // namespace

std::string to_string(ToyTask task) {
    return task == ToyTask::Regression ? "regression" : "classification";
}

std::string to_string(LrSchedule schedule) {
    return schedule == LrSchedule::Constant ? "constant" : "cosine";
}

LrSchedule parse_lr_schedule(const std::string& text) {
    if (text == "constant") return LrSchedule::Constant;
    if (text == "cosine") return LrSchedule::Cosine;
    throw Error(ErrorCode::InvalidArgument, "unknown schedule '" + text + "' (expected constant or cosine)");
}

ToyTask parse_toy_task(const std::string& text) {
    if (text == "regression") return ToyTask::Regression;
    if (text == "classification") return ToyTask::Classification;
    throw Error(ErrorCode::InvalidArgument, "unknown task '" + text + "' (expected regression or classification)");
}

void ToyConfig::validate() const {
    if (steps == 0 || batch == 0 || eval_samples == 0 || log_every == 0) {
        throw Error(ErrorCode::InvalidArgument, "steps, batch, eval_samples and log_every must be positive");
    }
    if (!(input_spread >= 0.0 && input_spread <= 4.0) || !(output_spread >= 0.0 && output_spread <= 4.0)) {
        throw Error(ErrorCode::InvalidArgument, "input_spread and output_spread must be in [0, 4]");
    }
    if (!(target_noise >= 0.0) || !std::isfinite(target_noise)) {
        throw Error(ErrorCode::InvalidArgument, "target_noise must be >= 0");
    }
    if (!(fallback_lr > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "fallback_lr must be positive");
    }
    optimizer().validate();
}

optim::MuonConfig ToyConfig::optimizer() const {
    optim::MuonConfig cfg = variant_config(variant);
    cfg.lr = lr;
    if (weight_decay) cfg.weight_decay = *weight_decay;
    cfg.polar_mode = polar_mode;
    cfg.seed = detail::derive_seed(seed, {kOptimizer});
    return cfg;
}

json ToyConfig::to_json() const {
    json j = {{"task", xlab::to_string(task)},
              {"variant", variant},
              {"steps", steps},
              {"batch", batch},
              {"lr", lr},
              {"weight_decay", weight_decay ? json(*weight_decay) : json(nullptr)},
              {"warmup_steps", warmup_steps},
              {"schedule", xlab::to_string(schedule)},
              {"input_spread", input_spread},
              {"output_spread", output_spread},
              {"target_noise", target_noise},
              {"fallback_lr", fallback_lr},
              {"eval_samples", eval_samples},
              {"log_every", log_every},
              {"polar_mode", optim::to_string(polar_mode)},
              {"seed", seed}};
    j["derived"] = {{"optimizer", xlab::to_json(optimizer())}, {"shape", {kToyInput, kToyHidden, kToyOutput}}};
    return j;
}

ExperimentReport toy_train(const ToyConfig& cfg, std::vector<optim::OptimizerState>* final_states) {
    cfg.validate();
    const optim::MuonConfig base = cfg.optimizer();

    ExperimentReport report;
    report.experiment_id = "train-" + cfg.variant;
    report.seed = cfg.seed;
    report.config = cfg.to_json();
    report.declare("train_loss", "mini-batch loss before the update at this step");
    report.declare("eval_loss", "loss on the fixed evaluation set after this many steps");

    const Task task = make_task(cfg);
    Net net = random_net(detail::derive_seed(cfg.seed, {kStudent}));
    const Matrix eval_x = inputs(task, cfg.eval_samples, detail::derive_seed(cfg.seed, {kEval}));
    const Targets eval_t = sample_targets(task, eval_x, cfg, detail::derive_seed(cfg.seed, {kNoise, 0}));

    optim::OptimizerState s1 = optim::init_state(kToyInput, kToyHidden, base, 0);
    optim::OptimizerState s2 = optim::init_state(kToyHidden, kToyOutput, base, 1);
    optim::FallbackConfig fb;
    fb.lr = cfg.fallback_lr;
    optim::FallbackState fb1 = optim::init_fallback_state(kToyHidden);
    optim::FallbackState fb2 = optim::init_fallback_state(kToyOutput);

    report.add("eval_loss", 0.0, loss_on(net, eval_x, eval_t, cfg.task));
    Grads g;
    for (std::size_t t = 1; t <= cfg.steps; ++t) {
        const Matrix x = inputs(task, cfg.batch, detail::derive_seed(cfg.seed, {kBatch, t}));
        const Targets y = sample_targets(task, x, cfg, detail::derive_seed(cfg.seed, {kNoise, t}));
        const double loss = train_step_grads(net, x, y, cfg.task, g);
        if (!std::isfinite(loss)) {
            throw Error(ErrorCode::NonFinite, "training diverged at step " + std::to_string(t));
        }
        optim::MuonConfig step_cfg = base;
        step_cfg.lr = base.lr * lr_factor(cfg, t);
        fb.lr = cfg.fallback_lr * lr_factor(cfg, t);
        auto o1 = optim::step(net.w1, g.w1, s1, step_cfg);
        auto o2 = optim::step(net.w2, g.w2, s2, step_cfg);
        net.w1 = std::move(o1.w);
        s1 = std::move(o1.state);
        net.w2 = std::move(o2.w);
        s2 = std::move(o2.state);
        auto f1 = optim::elementwise_fallback_step(net.b1, g.b1, fb1, fb);
        auto f2 = optim::elementwise_fallback_step(net.b2, g.b2, fb2, fb);
        net.b1 = std::move(f1.w);
        fb1 = std::move(f1.state);
        net.b2 = std::move(f2.w);
        fb2 = std::move(f2.state);

        if (t % cfg.log_every == 0 || t == cfg.steps) {
            report.add("train_loss", static_cast<double>(t), loss);
            report.add("eval_loss", static_cast<double>(t), loss_on(net, eval_x, eval_t, cfg.task));
        }
    }
    report.summary["final_loss"] = report.series["eval_loss"].points.back().second;
    report.summary["initial_loss"] = report.series["eval_loss"].points.front().second;
    report.summary["final_train_loss"] = report.series["train_loss"].points.back().second;
    const auto fp1 = optim::state_footprint(s1);
    const auto fp2 = optim::state_footprint(s2);
    report.summary["state_bits"] = static_cast<double>(fp1.code_bits + fp1.scale_bits + fp2.code_bits + fp2.scale_bits);
    if (final_states != nullptr) {
        final_states->clear();
        final_states->push_back(std::move(s1));
        final_states->push_back(std::move(s2));
    }
    return report;
}

}  // namespace muonq::xlab
