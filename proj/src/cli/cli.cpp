// SPDX-License-Identifier: Apache-2.0

#include "muonq/cli/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "commands.hpp"
#include "inspect.hpp"
#include "muonq/error.hpp"
#include "options.hpp"

namespace muonq::cli {

namespace {

constexpr const char* kDefaultOutDir = "reports";

struct Override {
    std::string flag;
    std::string key;
    std::string value;
};

struct Invocation {
    std::string config;
    std::vector<std::string> sets;
    std::vector<Override> flags;
    std::optional<std::uint64_t> seed;
    std::size_t seeds = 1;
    std::size_t jobs = 1;
    std::string out_dir;
    int verbosity = 1;
    std::string checkpoint;
};

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void print_summary(std::ostream& out, const xlab::ExperimentReport& r) {
    out << r.experiment_id << "  seed " << r.seed << "\n";
    for (const auto& [key, value] : r.summary) {
        out << key << " = " << format_value(value) << "\n";
    }
    out << "runtime_ms = " << r.runtime_ms << "\n";
}

void add_common_options(CLI::App& sub, Invocation& inv) {
    sub.add_option("--config", inv.config, "JSON config file or report header (.json / .jsonl)");
    sub.add_option("--set", inv.sets, "key=value override, applied after the config file (repeatable)")
        ->allow_extra_args(false);
    sub.add_option("--seed", inv.seed, "base seed");
    sub.add_option("--seeds", inv.seeds, "run seeds base .. base+N-1 and add a median report")
        ->check(CLI::PositiveNumber);
    sub.add_option("--jobs", inv.jobs, "worker threads for multi-seed runs")->check(CLI::PositiveNumber);
    sub.add_option("--out-dir", inv.out_dir, "report directory (default $MUONQ_OUT_DIR, then ./reports)");
    sub.add_option("--verbosity", inv.verbosity, "0 summary only, 1 also written files, 2 also per-seed progress")
        ->check(CLI::Range(0, 2));
}

void add_key_options(CLI::App& sub, const Command& cmd, Invocation& inv) {
    const auto add = [&](const std::string& flag, const std::string& key, const std::string& help) {
        sub.add_option_function<std::string>(
               "--" + flag, [&inv, flag, key](const std::string& v) { inv.flags.push_back({"--" + flag, key, v}); },
               help)
            ->type_name("VALUE")
            ->allow_extra_args(false);
    };
    for (const auto& e : cmd.keys.entries()) {
        if (e.name == cmd.seed_key && e.name == "seed") continue;  // served by the common --seed
        add(e.name, e.name, e.help);
    }
    for (const auto& [flag, key] : cmd.aliases) {
        add(flag, key, "alias of --" + key);
    }
}

void configure(Command& cmd, const Invocation& inv) {
    if (!inv.config.empty()) {
        for (const auto& e : load_config(inv.config, cmd.name)) {
            cmd.keys.set(e.key, e.value, inv.config + ":" + std::to_string(e.line));
        }
    }
    for (const auto& s : inv.sets) {
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw UsageError("--set expects key=value, got '" + s + "'");
        }
        cmd.keys.set(s.substr(0, eq), parse_value(s.substr(eq + 1)), "--set " + s.substr(0, eq));
    }
    for (const auto& f : inv.flags) {
        cmd.keys.set(f.key, parse_value(f.value), f.flag);
    }
    if (inv.seed && !cmd.seed_key.empty()) {
        cmd.keys.set(cmd.seed_key, json(*inv.seed), "--seed");
    }
    try {
        cmd.validate();
    } catch (const Error& e) {
        if (e.code() != ErrorCode::InvalidArgument && e.code() != ErrorCode::Config) throw;
        throw UsageError(std::string("invalid configuration: ") + e.what());
    }
}

std::vector<RunResult> run_seeds(const Command& cmd, const std::vector<std::uint64_t>& seeds, std::size_t jobs,
                                 int verbosity, std::ostream& err) {
    const std::size_t n = seeds.size();
    std::vector<std::optional<RunResult>> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    const auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                const auto t0 = std::chrono::steady_clock::now();
                RunResult r = cmd.run(seeds[i]);
                r.report.runtime_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::steady_clock::now() - t0)
                                          .count();
                if (verbosity >= 2) {
                    const std::lock_guard lock(log_mutex);
                    err << cmd.name << ": seed " << seeds[i] << " done in " << r.report.runtime_ms << " ms\n";
                }
                results[i] = std::move(r);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(jobs, n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<RunResult> out;
    out.reserve(n);
    for (auto& r : results) out.push_back(std::move(*r));
    return out;
}

// All-or-nothing: files written before a failure are removed again.
std::vector<std::filesystem::path> write_all(const std::vector<const xlab::ExperimentReport*>& reports,
                                             const std::vector<RunResult>& runs, const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> written;
    try {
        for (const auto* r : reports) {
            for (auto& p : xlab::write_report(*r, dir)) written.push_back(std::move(p));
        }
        for (const auto& run : runs) {
            if (run.states.empty()) continue;
            const auto path = dir / (run.report.file_stem() + ".muq1");
            optim::save_state(run.states, path);
            written.push_back(path);
        }
    } catch (...) {
        std::error_code ec;
        for (const auto& p : written) std::filesystem::remove(p, ec);
        throw;
    }
    return written;
}

std::filesystem::path resolve_out_dir(const Invocation& inv) {
    if (!inv.out_dir.empty()) return inv.out_dir;
    if (const char* env = std::getenv("MUONQ_OUT_DIR"); env != nullptr && *env != '\0') return env;
    return kDefaultOutDir;
}

int run_study(Command& cmd, const Invocation& inv, std::ostream& out, std::ostream& err) {
    try {
        configure(cmd, inv);
    } catch (const UsageError& e) {
        err << "muonq " << cmd.name << ": " << e.what() << "\n";
        return kExitUsage;
    }
    const std::uint64_t base = cmd.seed_key.empty() && inv.seed ? *inv.seed : cmd.base_seed();
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < inv.seeds; ++i) seeds.push_back(base + i);

    try {
        std::vector<RunResult> runs = run_seeds(cmd, seeds, inv.jobs, inv.verbosity, err);
        std::vector<const xlab::ExperimentReport*> reports;
        for (const auto& r : runs) reports.push_back(&r.report);
        std::optional<xlab::ExperimentReport> aggregate;
        if (runs.size() > 1) {
            std::vector<xlab::ExperimentReport> all;
            for (const auto& r : runs) all.push_back(r.report);
            aggregate = xlab::median_report(all, runs.front().report.experiment_id + "-median");
            reports.push_back(&*aggregate);
        }
        const auto written = write_all(reports, runs, resolve_out_dir(inv));

        if (inv.verbosity >= 2 && aggregate) {
            for (const auto& r : runs) print_summary(out, r.report);
        }
        print_summary(out, aggregate ? *aggregate : runs.front().report);
        if (inv.verbosity >= 1) {
            for (const auto& p : written) out << "wrote " << p.string() << "\n";
        }
    } catch (const std::exception& e) {
        err << "muonq " << cmd.name << ": " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Low-bit Muon momentum studies and toy training.", "muonq"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "help for every command");

    Invocation inv;
    std::vector<Command> commands;
    for (const auto& name : study_command_names()) commands.push_back(make_command(name));
    for (auto& cmd : commands) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.about);
        add_common_options(*sub, inv);
        add_key_options(*sub, cmd, inv);
    }
    CLI::App* inspect = app.add_subcommand("ckpt-inspect", "dump the blocks and states of a MUQ1 checkpoint");
    inspect->add_option("path", inv.checkpoint, "checkpoint file")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "ckpt-inspect") {
        try {
            inspect_checkpoint(inv.checkpoint, out);
        } catch (const std::exception& e) {
            err << "muonq ckpt-inspect: " << e.what() << "\n";
            return kExitRuntime;
        }
        return kExitOk;
    }
    auto it = std::find_if(commands.begin(), commands.end(), [&](const Command& c) { return c.name == name; });
    return run_study(*it, inv, out, err);
}

}  // namespace muonq::cli
