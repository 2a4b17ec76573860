// SPDX-License-Identifier: Apache-2.0

#include "muonq/optim/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "muonq/detail/byte_io.hpp"
#include "muonq/error.hpp"

namespace muonq::optim {

namespace {

using detail::read_le;
using detail::write_le;

enum class Kind : std::uint8_t { Naive = 1, MuonQ = 2 };

constexpr std::uint32_t kMaxBlocks = 1U << 24;

}  // namespace

void write_checkpoint(std::ostream& out, std::span<const CheckpointState> states) {
    std::vector<const QuantizedBlock*> blocks;
    for (const auto& state : states) {
        if (const auto* naive = std::get_if<NaiveQuantState>(&state)) {
            blocks.push_back(&naive->mq);
        } else {
            const auto& q = std::get<MuonQState>(state);
            blocks.insert(blocks.end(), {&q.uq(), &q.sq(), &q.rq()});
        }
    }
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    write_le<std::uint16_t>(out, kCheckpointVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(blocks.size()));
    for (const QuantizedBlock* block : blocks) {
        quant::write_block(out, *block);
    }
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(states.size()));
    for (const auto& state : states) {
        if (const auto* naive = std::get_if<NaiveQuantState>(&state)) {
            write_le<std::uint8_t>(out, static_cast<std::uint8_t>(Kind::Naive));
            write_le<std::uint64_t>(out, naive->step);
            write_le<std::uint64_t>(out, 0);
        } else {
            const auto& q = std::get<MuonQState>(state);
            write_le<std::uint8_t>(out, static_cast<std::uint8_t>(Kind::MuonQ));
            write_le<std::uint64_t>(out, q.step());
            write_le<std::uint64_t>(out, q.stream());
        }
    }
}

std::vector<CheckpointState> read_checkpoint(std::istream& in) {
    char magic[sizeof kCheckpointMagic] = {};
    in.read(magic, sizeof magic);
    if (in.gcount() != static_cast<std::streamsize>(sizeof magic)) {
        throw Error(ErrorCode::TruncatedFile, "unexpected end of data reading magic");
    }
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) {
        throw Error(ErrorCode::BadMagic, "not a MUQ1 checkpoint");
    }
    const auto version = read_le<std::uint16_t>(in, "version");
    if (version != kCheckpointVersion) {
        throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                    std::to_string(kCheckpointVersion));
    }
    const auto block_count = read_le<std::uint32_t>(in, "block count");
    if (block_count > kMaxBlocks) {
        throw Error(ErrorCode::CorruptFile, "implausible block count " + std::to_string(block_count));
    }
    std::vector<QuantizedBlock> blocks;
    blocks.reserve(block_count);
    for (std::uint32_t i = 0; i < block_count; ++i) {
        blocks.push_back(quant::read_block(in));
    }
    const auto state_count = read_le<std::uint32_t>(in, "state count");
    if (state_count > block_count) {
        throw Error(ErrorCode::CorruptFile, "more states than blocks");
    }
    std::vector<CheckpointState> states;
    std::size_t next = 0;
    const auto take = [&]() -> QuantizedBlock& {
        if (next >= blocks.size()) {
            throw Error(ErrorCode::CorruptFile, "state records reference missing blocks");
        }
        return blocks[next++];
    };
    for (std::uint32_t i = 0; i < state_count; ++i) {
        const auto kind = read_le<std::uint8_t>(in, "state kind");
        const auto step = read_le<std::uint64_t>(in, "state step");
        const auto stream = read_le<std::uint64_t>(in, "state stream");
        if (kind == static_cast<std::uint8_t>(Kind::Naive)) {
            states.emplace_back(NaiveQuantState{std::move(take()), step});
        } else if (kind == static_cast<std::uint8_t>(Kind::MuonQ)) {
            QuantizedBlock& u = take();
            QuantizedBlock& s = take();
            QuantizedBlock& r = take();
            try {
                states.emplace_back(MuonQState(std::move(u), std::move(s), std::move(r), step, stream));
            } catch (const Error& e) {
                throw Error(ErrorCode::CorruptFile, std::string("invalid MuonQ state: ") + e.what());
            }
        } else {
            throw Error(ErrorCode::CorruptFile, "unknown state kind " + std::to_string(kind));
        }
    }
    if (next != blocks.size()) {
        throw Error(ErrorCode::CorruptFile, "blocks not owned by any state");
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw Error(ErrorCode::CorruptFile, "trailing bytes after checkpoint");
    }
    return states;
}

void save_state(std::span<const CheckpointState> states, const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::IoFailure, "cannot open " + tmp.string() + " for writing");
        }
        try {
            write_checkpoint(out, states);
            out.flush();
            if (!out) {
                throw Error(ErrorCode::IoFailure, "write to " + tmp.string() + " failed");
            }
        } catch (...) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw;
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::IoFailure, "cannot rename onto " + path.string());
    }
}

std::vector<CheckpointState> load_state(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    }
    return read_checkpoint(in);
}

}  // namespace muonq::optim
