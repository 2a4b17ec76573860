// SPDX-License-Identifier: Apache-2.0

#include "inspect.hpp"

#include <fstream>
#include <ostream>
#include <variant>

#include "muonq/error.hpp"
#include "muonq/optim/checkpoint.hpp"

namespace muonq::cli {

namespace {

struct Totals {
    std::size_t blocks = 0;
    std::size_t code_bytes = 0;
    std::size_t scale_bytes = 0;
};

void print_block(std::ostream& out, const char* label, const quant::QuantizedBlock& b, Totals& totals) {
    out << "  " << label << "  " << b.rows << "x" << b.cols << "  bits " << b.spec.bits << "  granularity "
        << quant::to_string(b.spec.granularity) << "  mu " << b.spec.companding_mu << "  scales " << b.scales.size()
        << "  code bytes " << b.codes.size() << "  scale bytes " << 4 * b.scales.size() << "\n";
    ++totals.blocks;
    totals.code_bytes += b.codes.size();
    totals.scale_bytes += 4 * b.scales.size();
}

}  // namespace

void inspect_checkpoint(const std::filesystem::path& path, std::ostream& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    }
    const std::vector<optim::CheckpointState> states = optim::read_checkpoint(in);
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);

    out << "file " << path.string();
    if (!ec) out << "  (" << size << " bytes)";
    out << "\nformat MUQ1 version " << optim::kCheckpointVersion << "\nstates " << states.size() << "\n";
    Totals totals;
    for (std::size_t i = 0; i < states.size(); ++i) {
        std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, optim::MuonQState>) {
                    out << "state " << i << "  muonq  step " << s.step() << "  stream " << s.stream() << "  shape "
                        << s.rows() << "x" << s.cols() << "  rank " << s.k() << "\n";
                    print_block(out, "U", s.uq(), totals);
                    print_block(out, "S", s.sq(), totals);
                    print_block(out, "R", s.rq(), totals);
                } else {
                    out << "state " << i << "  quantized momentum  step " << s.step << "  shape " << s.mq.rows << "x"
                        << s.mq.cols << "\n";
                    print_block(out, "M", s.mq, totals);
                }
            },
            states[i]);
    }
    out << "blocks " << totals.blocks << "  code bytes " << totals.code_bytes << "  scale bytes "
        << totals.scale_bytes << "\n";
}

}  // namespace muonq::cli
