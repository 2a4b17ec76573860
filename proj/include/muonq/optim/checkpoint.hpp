// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "muonq/optim/muon.hpp"

namespace muonq::optim {

inline constexpr char kCheckpointMagic[4] = {'M', 'U', 'Q', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// States that carry quantized blocks. Full-precision states are not
/// checkpointed.
using CheckpointState = std::variant<NaiveQuantState, MuonQState>;

// Layout: magic, u16 version, u32 block count, the blocks, then u32 state
// count and per state {u8 kind, u64 step, u64 stream}. Kind 1 owns one block
// (M), kind 2 owns three (U, S, R), in file order.

void write_checkpoint(std::ostream& out, std::span<const CheckpointState> states);
std::vector<CheckpointState> read_checkpoint(std::istream& in);

/// Writes to a sibling temp file and renames it over `path`.
void save_state(std::span<const CheckpointState> states, const std::filesystem::path& path);
/// Returns nothing unless the whole file parses.
std::vector<CheckpointState> load_state(const std::filesystem::path& path);

}  // namespace muonq::optim
