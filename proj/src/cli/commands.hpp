// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "muonq/optim/checkpoint.hpp"
#include "muonq/xlab/report.hpp"
#include "options.hpp"

namespace muonq::cli {

struct RunResult {
    xlab::ExperimentReport report;
    std::vector<optim::CheckpointState> states;  // only filled when a checkpoint is requested
};

/// One report-producing command: its config, the keys that set it, and how to
/// run it for a given seed. The config lives in `state` and must not change
/// once runs start.
struct Command {
    std::string name;
    std::string about;
    KeyTable keys;
    std::map<std::string, std::string> aliases;  // extra flag name -> key
    std::string seed_key;                        // empty when runs are not seeded
    std::function<void()> validate;
    std::function<std::uint64_t()> base_seed;
    std::function<RunResult(std::uint64_t seed)> run;
    std::shared_ptr<void> state;
};

std::vector<std::string> study_command_names();
/// Throws UsageError for unknown names.
Command make_command(const std::string& name);

}  // namespace muonq::cli
