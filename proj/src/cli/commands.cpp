// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <type_traits>
#include <variant>

#include "muonq/error.hpp"
#include "muonq/xlab/memory.hpp"
#include "muonq/xlab/studies.hpp"
#include "muonq/xlab/synthetic.hpp"
#include "muonq/xlab/toy.hpp"
#include "muonq/xlab/variants.hpp"

namespace muonq::cli {

namespace {

using xlab::SyntheticMomentumSpec;

Command named(std::string name, std::string about) {
    Command cmd;
    cmd.name = std::move(name);
    cmd.about = std::move(about);
    return cmd;
}

void add_momentum_keys(Command& cmd, SyntheticMomentumSpec& m) {
    KeyTable& k = cmd.keys;
    k.add("momentum.rows", "rows of the synthetic momentum", bind(m.rows));
    k.add("momentum.cols", "columns of the synthetic momentum", bind(m.cols));
    k.add("momentum.dominant_rank", "rank of the low-rank signal", bind(m.dominant_rank));
    k.add("momentum.spectrum_decay", "geometric decay of the signal spectrum", bind(m.spectrum_decay));
    k.add("momentum.tail", "noise and factor tail: gaussian, laplace or student-t", bind_parsed(m.tail, xlab::parse_tail));
    k.add("momentum.tail_param", "Laplace scale or Student-t degrees of freedom", bind(m.tail_param));
    k.add("momentum.noise_level", "noise Frobenius norm relative to the signal", bind(m.noise_level));
    k.add("momentum.channel_spread", "log-scale spread of row and column magnitudes", bind(m.channel_spread));
    k.add("momentum.seed", "seed of the synthetic momentum", bind(m.seed));
    for (const char* leaf : {"rows", "cols", "dominant_rank", "spectrum_decay", "tail", "tail_param", "noise_level",
                             "channel_spread"}) {
        cmd.aliases[leaf] = std::string("momentum.") + leaf;
    }
    cmd.seed_key = "momentum.seed";
}

// Wires validate/run for a config whose seed sits at `seed_of(cfg)`.
template <typename Config, typename SeedOf, typename Study>
void finish(Command& cmd, std::shared_ptr<Config> cfg, SeedOf seed_of, Study study) {
    cmd.validate = [cfg] { cfg->validate(); };
    cmd.base_seed = [cfg, seed_of] { return seed_of(*cfg); };
    cmd.run = [cfg, seed_of, study](std::uint64_t seed) {
        Config c = *cfg;
        seed_of(c) = seed;
        return RunResult{study(c), {}};
    };
    cmd.state = cfg;
}

Command drift() {
    Command cmd = named("drift", "momentum drift of a quantized recursion against float64");
    auto cfg = std::make_shared<xlab::DriftConfig>();
    auto& c = *cfg;
    KeyTable& k = cmd.keys;
    k.add("steps", "recursion steps", bind(c.steps));
    k.add("rows", "momentum rows", bind(c.rows));
    k.add("cols", "momentum columns", bind(c.cols));
    k.add("bits", "state bit-width: 4, 8 or 32", bind(c.bits));
    k.add("normalize", "normalize gradient and momentum each step", bind(c.normalize));
    k.add("mu", "mu-law companding parameter, 0 for uniform", bind(c.mu));
    k.add("granularity", "scale sharing: tensor, row, column or block:N", bind_parsed(c.granularity, quant::parse_granularity));
    k.add("momentum", "momentum coefficient", bind(c.momentum));
    k.add("gradient_file", "JSON Lines gradient replay; empty for synthetic gradients", bind(c.gradient_file));
    k.add("seed", "seed", bind(c.seed));
    cmd.seed_key = "seed";
    finish(cmd, cfg, [](auto& x) -> std::uint64_t& { return x.seed; }, xlab::drift_simulation);
    return cmd;
}

Command amplify() {
    Command cmd = named("amplify", "error amplification through orthogonalization, naive vs decomposed");
    auto cfg = std::make_shared<xlab::AmplifyConfig>();
    auto& c = *cfg;
    add_momentum_keys(cmd, c.momentum);
    KeyTable& k = cmd.keys;
    k.add("bits", "bit-width: 4, 8 or 32", bind(c.bits));
    k.add("mu", "mu-law companding parameter, 0 for uniform", bind(c.mu));
    k.add("decompose", "also run the decomposed quantizer", bind(c.decompose));
    k.add("k", "truncation rank of the decomposition", bind(c.k));
    k.add("polar_mode", "ns5 or exact", bind_parsed(c.polar_mode, optim::parse_polar_mode));
    k.add("decomposition", "svd or power_iteration", bind_parsed(c.method, xlab::parse_decomposition));
    k.add("power_iters", "iterations when decomposition is power_iteration", bind(c.power_iters));
    k.add("spectra", "record singular value spectra", bind(c.spectra));
    finish(cmd, cfg, [](auto& x) -> std::uint64_t& { return x.momentum.seed; }, xlab::amplification_study);
    return cmd;
}

Command rank_sweep() {
    Command cmd = named("rank-sweep", "directional fidelity and memory against truncation rank");
    auto cfg = std::make_shared<xlab::RankSweepConfig>();
    auto& c = *cfg;
    add_momentum_keys(cmd, c.momentum);
    KeyTable& k = cmd.keys;
    k.add("bits", "bit-width: 4, 8 or 32", bind(c.bits));
    k.add("mu", "mu-law companding parameter, 0 for uniform", bind(c.mu));
    k.add("ratios", "rank ratios, comma separated or a JSON list", bind(c.ratios));
    k.add("polar_mode", "ns5 or exact", bind_parsed(c.polar_mode, optim::parse_polar_mode));
    k.add("memory_rows", "rows of the shape used for memory columns, 0 for the momentum shape", bind(c.memory_rows));
    k.add("memory_cols", "columns of that shape", bind(c.memory_cols));
    finish(cmd, cfg, [](auto& x) -> std::uint64_t& { return x.momentum.seed; }, xlab::rank_sweep);
    return cmd;
}

Command mu_sweep() {
    Command cmd = named("mu-sweep", "companding parameter sweep against uniform quantization");
    auto cfg = std::make_shared<xlab::MuSweepConfig>();
    auto& c = *cfg;
    add_momentum_keys(cmd, c.momentum);
    KeyTable& k = cmd.keys;
    k.add("bits", "bit-width: 4, 8 or 32", bind(c.bits));
    k.add("granularity", "scale sharing: tensor, row, column or block:N", bind_parsed(c.granularity, quant::parse_granularity));
    k.add("mus", "mu values, comma separated or a JSON list", bind(c.mus));
    k.add("polar_mode", "ns5 or exact", bind_parsed(c.polar_mode, optim::parse_polar_mode));
    finish(cmd, cfg, [](auto& x) -> std::uint64_t& { return x.momentum.seed; }, xlab::mu_sweep);
    return cmd;
}

Command granularity() {
    Command cmd = named("granularity", "quantization granularity tables for raw momentum and factors");
    auto cfg = std::make_shared<xlab::GranularityConfig>();
    auto& c = *cfg;
    add_momentum_keys(cmd, c.momentum);
    KeyTable& k = cmd.keys;
    k.add("bits", "bit-width: 4, 8 or 32", bind(c.bits));
    k.add("mu", "companding for the raw-momentum table", bind(c.mu));
    k.add("factor_mu", "companding for the factor table, 0 for uniform", bind(c.factor_mu));
    k.add("k", "truncation rank, 0 for min(rows, cols) / 4", bind(c.k));
    k.add("polar_mode", "ns5 or exact", bind_parsed(c.polar_mode, optim::parse_polar_mode));
    finish(cmd, cfg, [](auto& x) -> std::uint64_t& { return x.momentum.seed; }, xlab::granularity_study);
    return cmd;
}

struct MemoryArgs {
    std::string inventory = "gpt2-small";
    std::vector<std::string> variants = {"muon32", "muon8", "muon4", "muonq4"};
};

Command memory() {
    Command cmd = named("memory", "optimizer state memory of a built-in shape inventory");
    auto cfg = std::make_shared<MemoryArgs>();
    cmd.keys.add("inventory", "gpt2-small or square-1024", bind(cfg->inventory));
    cmd.keys.add("variants", "optimizer variants, comma separated or a JSON list", bind(cfg->variants));
    cmd.aliases["variant"] = "variants";
    cmd.validate = [cfg] {
        xlab::builtin_inventory(cfg->inventory);
        if (cfg->variants.empty()) throw Error(ErrorCode::InvalidArgument, "no variants selected");
        for (const auto& v : cfg->variants) xlab::variant_config(v);
    };
    cmd.base_seed = [] { return std::uint64_t{0}; };
    cmd.run = [cfg](std::uint64_t seed) {
        RunResult r{xlab::memory_report(xlab::builtin_inventory(cfg->inventory), cfg->variants), {}};
        r.report.seed = seed;
        return r;
    };
    cmd.state = cfg;
    return cmd;
}

struct TrainArgs {
    xlab::ToyConfig toy;
    bool save_state = false;
};

bool checkpointable(const optim::MuonConfig& cfg) {
    return cfg.rank_ratio.has_value() || !cfg.state_spec.passthrough();
}

Command train() {
    Command cmd = named("train", "teacher-student toy training with one optimizer variant");
    auto args = std::make_shared<TrainArgs>();
    auto& c = args->toy;
    KeyTable& k = cmd.keys;
    k.add("task", "regression or classification", bind_parsed(c.task, xlab::parse_toy_task));
    k.add("variant", "optimizer variant (muon32, muon4, muonq4, c, n, d, ...)", bind(c.variant));
    k.add("steps", "training steps", bind(c.steps));
    k.add("batch", "batch size", bind(c.batch));
    k.add("lr", "learning rate of the matrix weights", bind(c.lr));
    k.add("weight_decay", "decoupled weight decay; null keeps the variant's value", bind(c.weight_decay));
    k.add("warmup_steps", "linear warmup steps", bind(c.warmup_steps));
    k.add("schedule", "constant or cosine", bind_parsed(c.schedule, xlab::parse_lr_schedule));
    k.add("input_spread", "log-scale spread of input feature magnitudes", bind(c.input_spread));
    k.add("output_spread", "log-scale spread of teacher output magnitudes", bind(c.output_spread));
    k.add("target_noise", "std of noise added to regression targets", bind(c.target_noise));
    k.add("fallback_lr", "learning rate of the non-matrix parameters", bind(c.fallback_lr));
    k.add("eval_samples", "held-out samples for the logged loss", bind(c.eval_samples));
    k.add("log_every", "steps between logged evaluations", bind(c.log_every));
    k.add("polar_mode", "ns5 or exact", bind_parsed(c.polar_mode, optim::parse_polar_mode));
    k.add("seed", "seed of data, init and optimizer", bind(c.seed));
    k.add("save_state", "write the final optimizer state as <report stem>.muq1", bind(args->save_state));
    cmd.seed_key = "seed";
    cmd.validate = [args] {
        args->toy.validate();
        if (args->save_state && !checkpointable(args->toy.optimizer())) {
            throw Error(ErrorCode::InvalidArgument,
                        "save_state: variant '" + args->toy.variant + "' keeps a full-precision state");
        }
    };
    cmd.base_seed = [args] { return args->toy.seed; };
    cmd.run = [args](std::uint64_t seed) {
        xlab::ToyConfig c = args->toy;
        c.seed = seed;
        RunResult r;
        if (!args->save_state) {
            r.report = xlab::toy_train(c);
            return r;
        }
        std::vector<optim::OptimizerState> states;
        r.report = xlab::toy_train(c, &states);
        for (auto& s : states) {
            std::visit(
                [&r](auto& st) {
                    if constexpr (!std::is_same_v<std::decay_t<decltype(st)>, optim::FpState>) {
                        r.states.emplace_back(std::move(st));
                    }
                },
                s);
        }
        return r;
    };
    cmd.state = args;
    return cmd;
}

}  // namespace

std::vector<std::string> study_command_names() {
    return {"drift", "amplify", "rank-sweep", "mu-sweep", "granularity", "memory", "train"};
}

Command make_command(const std::string& name) {
    if (name == "drift") return drift();
    if (name == "amplify") return amplify();
    if (name == "rank-sweep") return rank_sweep();
    if (name == "mu-sweep") return mu_sweep();
    if (name == "granularity") return granularity();
    if (name == "memory") return memory();
    if (name == "train") return train();
    throw UsageError("unknown command '" + name + "'");
}

}  // namespace muonq::cli
