// SPDX-License-Identifier: Apache-2.0

#include "muonq/quant/quant.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "muonq/detail/byte_io.hpp"
#include "muonq/error.hpp"

namespace muonq::quant {

namespace {

// Calls f(i, group) for every row-major element index i, with the granularity
// switch hoisted out of the element loop.
template <typename F>
void for_each_element(std::size_t rows, std::size_t cols, const Granularity& g, F&& f) {
    std::size_t i = 0;
    switch (g.kind) {
        case Granularity::Kind::Tensor:
            for (; i < rows * cols; ++i) f(i, std::size_t{0});
            return;
        case Granularity::Kind::Row:
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c, ++i) f(i, r);
            }
            return;
        case Granularity::Kind::Column:
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c, ++i) f(i, c);
            }
            return;
        case Granularity::Kind::Block:
            for (; i < rows * cols; ++i) f(i, i / g.group);
            return;
    }
}

std::vector<double> group_max_abs(const Matrix& x, const Granularity& g) {
    std::vector<double> maxima(g.group_count(x.rows(), x.cols()), 0.0);
    const auto data = x.data();
    for_each_element(x.rows(), x.cols(), g, [&](std::size_t i, std::size_t grp) {
        maxima[grp] = std::max(maxima[grp], std::abs(data[i]));
    });
    return maxima;
}

// log1p(mu * a) / log1p(mu) with the denominator precomputed.
double mulaw_scaled(double x, double mu, double inv_log1p_mu) {
    const double a = std::min(std::abs(x), 1.0);
    return std::copysign(std::log1p(mu * a) * inv_log1p_mu, x);
}

// Scale as it will be stored: the largest float32 not above `value`, so codes
// are computed against exactly the scale dequantization will use and exact
// half-steps still round away from zero. A nonzero group never gets scale 0.
float stored_scale(double value) {
    if (value <= 0.0) {
        return 0.0F;
    }
    auto f = static_cast<float>(value);
    if (static_cast<double>(f) > value) {
        f = std::nextafter(f, 0.0F);
    }
    return f > 0.0F ? f : std::numeric_limits<float>::denorm_min();
}

std::vector<std::uint8_t> pack_codes(const std::vector<std::int8_t>& codes, int bits) {
    if (bits == 4) {
        return pack_nibbles(codes);
    }
    std::vector<std::uint8_t> out(codes.size());
    std::transform(codes.begin(), codes.end(), out.begin(), [](std::int8_t c) { return static_cast<std::uint8_t>(c); });
    return out;
}

void require_shape(const Matrix& x) {
    if (x.rows() > std::numeric_limits<std::uint32_t>::max() || x.cols() > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::InvalidArgument, "block dimensions must fit in 32 bits");
    }
}

QuantizedBlock passthrough(const Matrix& x, const QuantSpec& spec) {
    QuantizedBlock block{static_cast<std::uint32_t>(x.rows()), static_cast<std::uint32_t>(x.cols()), spec, {}, {}};
    block.codes.resize(8 * x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(x.data()[i]);
        for (int b = 0; b < 8; ++b) {
            block.codes[8 * i + b] = static_cast<std::uint8_t>((bits >> (8 * b)) & 0xFF);
        }
    }
    return block;
}

}  // namespace

std::size_t Granularity::group_count(std::size_t rows, std::size_t cols) const {
    switch (kind) {
        case Kind::Tensor: return 1;
        case Kind::Row: return rows;
        case Kind::Column: return cols;
        case Kind::Block: return (rows * cols + group - 1) / group;
    }
    return 1;
}

std::size_t Granularity::group_of(std::size_t r, std::size_t c, std::size_t cols) const {
    switch (kind) {
        case Kind::Tensor: return 0;
        case Kind::Row: return r;
        case Kind::Column: return c;
        case Kind::Block: return (r * cols + c) / group;
    }
    return 0;
}

std::string to_string(Granularity g) {
    switch (g.kind) {
        case Granularity::Kind::Tensor: return "tensor";
        case Granularity::Kind::Row: return "row";
        case Granularity::Kind::Column: return "column";
        case Granularity::Kind::Block: return "block:" + std::to_string(g.group);
    }
    return "tensor";
}

Granularity parse_granularity(const std::string& text) {
    if (text == "tensor") {
        return Granularity::tensor();
    }
    if (text == "row") {
        return Granularity::row();
    }
    if (text == "column" || text == "col") {
        return Granularity::column();
    }
    if (text == "block") {
        return Granularity::block();
    }
    if (text.rfind("block:", 0) == 0) {
        try {
            const unsigned long g = std::stoul(text.substr(6));
            return Granularity::block(static_cast<std::uint32_t>(g));
        } catch (const std::exception&) {
        }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown granularity '" + text + "' (tensor|row|column|block[:g])");
}

void QuantSpec::validate() const {
    if (bits != 4 && bits != 8 && bits != 32) {
        throw Error(ErrorCode::InvalidArgument, "bits must be 4, 8 or 32, got " + std::to_string(bits));
    }
    if (granularity.kind == Granularity::Kind::Block && granularity.group < 2) {
        throw Error(ErrorCode::InvalidArgument, "block group length must be >= 2");
    }
    if (!(companding_mu == 0.0F || companding_mu >= 1.0F)) {
        throw Error(ErrorCode::InvalidArgument, "companding mu must be 0 or >= 1");
    }
}

int QuantizedBlock::code(std::size_t i) const {
    if (spec.bits == 4) {
        const std::uint8_t byte = codes[i / 2];
        const int nibble = (i % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
        return nibble - 8;
    }
    return static_cast<std::int8_t>(codes[i]);
}

std::vector<int> QuantizedBlock::unpacked_codes() const {
    std::vector<int> out(elements());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = code(i);
    }
    return out;
}

bool same_payload(const QuantizedBlock& a, const QuantizedBlock& b) {
    auto scale_bits = [](const std::vector<float>& s) {
        std::vector<std::uint32_t> out(s.size());
        std::transform(s.begin(), s.end(), out.begin(), [](float f) { return std::bit_cast<std::uint32_t>(f); });
        return out;
    };
    return a.rows == b.rows && a.cols == b.cols && a.spec.bits == b.spec.bits &&
           a.spec.granularity == b.spec.granularity &&
           std::bit_cast<std::uint32_t>(a.spec.companding_mu) == std::bit_cast<std::uint32_t>(b.spec.companding_mu) &&
           scale_bits(a.scales) == scale_bits(b.scales) && a.codes == b.codes;
}

std::int64_t round_half_away(double z) {
    // z - trunc(z) is exact, so this matches std::round without the libm call.
    const double t = std::trunc(z);
    const double frac = z - t;
    if (frac >= 0.5) return static_cast<std::int64_t>(t) + 1;
    if (frac <= -0.5) return static_cast<std::int64_t>(t) - 1;
    return static_cast<std::int64_t>(t);
}

std::int64_t Rounder::operator()(double z) {
    if (m_mode == RoundingMode::Deterministic) {
        return round_half_away(z);
    }
    const double lo = std::floor(z);
    // Up with probability z - floor(z), down with probability ceil(z) - z.
    return static_cast<std::int64_t>(lo) + (m_uniform(m_rng) < z - lo ? 1 : 0);
}

std::int64_t round_value(double z, Rounder& rounder) {
    return rounder(z);
}

double mulaw(double x, double mu) {
    return mulaw_scaled(x, mu, 1.0 / std::log1p(mu));
}

double mulaw_inv(double y, double mu) {
    const double a = std::abs(y);
    if (a >= 1.0) return std::copysign(1.0, y);  // keep the endpoints exact
    return std::copysign(std::expm1(a * std::log1p(mu)) / mu, y);
}

QuantizedBlock quant_uniform(const Matrix& x, const QuantSpec& spec) {
    spec.validate();
    require_shape(x);
    if (spec.companded()) {
        throw Error(ErrorCode::InvalidArgument, "quant_uniform requires companding_mu = 0");
    }
    if (spec.passthrough()) {
        return passthrough(x, spec);
    }
    const int qmax = spec.max_code();
    const std::vector<double> maxima = group_max_abs(x, spec.granularity);
    QuantizedBlock block{static_cast<std::uint32_t>(x.rows()), static_cast<std::uint32_t>(x.cols()), spec, {}, {}};
    block.scales.resize(maxima.size());
    for (std::size_t g = 0; g < maxima.size(); ++g) {
        block.scales[g] = stored_scale(maxima[g] / qmax);
    }
    Rounder rounder(spec.rounding);
    std::vector<std::int8_t> codes(x.size(), 0);
    const auto data = x.data();
    for_each_element(x.rows(), x.cols(), spec.granularity, [&](std::size_t i, std::size_t grp) {
        const double s = block.scales[grp];
        if (s == 0.0) {
            return;
        }
        const std::int64_t q = std::clamp<std::int64_t>(rounder(data[i] / s), -qmax, qmax);
        codes[i] = static_cast<std::int8_t>(q);
    });
    block.codes = pack_codes(codes, spec.bits);
    return block;
}

QuantizedBlock cquant(const Matrix& x, const QuantSpec& spec) {
    spec.validate();
    require_shape(x);
    if (!spec.companded()) {
        throw Error(ErrorCode::InvalidArgument, "cquant requires companding_mu > 0");
    }
    if (spec.passthrough()) {
        return passthrough(x, spec);
    }
    const int qmax = spec.max_code();
    const double mu = spec.companding_mu;
    const std::vector<double> maxima = group_max_abs(x, spec.granularity);
    QuantizedBlock block{static_cast<std::uint32_t>(x.rows()), static_cast<std::uint32_t>(x.cols()), spec, {}, {}};
    block.scales.resize(maxima.size());
    for (std::size_t g = 0; g < maxima.size(); ++g) {
        block.scales[g] = stored_scale(maxima[g]);
    }
    const double inv_log = 1.0 / std::log1p(mu);
    Rounder rounder(spec.rounding);
    const auto exact_code = [&](double unit) {
        return std::clamp<std::int64_t>(rounder(mulaw_scaled(unit, mu, inv_log) * qmax), -qmax, qmax);
    };
    // Deterministic rounding only needs the decision points between adjacent
    // codes; magnitudes close to one fall back to the formula so ties resolve
    // exactly as above.
    std::vector<double> edges;
    if (spec.rounding.mode == RoundingMode::Deterministic) {
        for (int j = 1; j <= qmax; ++j) {
            edges.push_back(mulaw_inv((j - 0.5) / qmax, mu));
        }
    }
    std::vector<std::int8_t> codes(x.size(), 0);
    const auto data = x.data();
    for_each_element(x.rows(), x.cols(), spec.granularity, [&](std::size_t i, std::size_t grp) {
        const double s = block.scales[grp];
        if (s == 0.0) {
            return;
        }
        const double unit = std::clamp(data[i] / s, -1.0, 1.0);
        if (edges.empty()) {
            codes[i] = static_cast<std::int8_t>(exact_code(unit));
            return;
        }
        const double a = std::abs(unit);
        const auto it = std::upper_bound(edges.begin(), edges.end(), a);
        const bool near_below = it != edges.begin() && a - *(it - 1) < 1e-9;
        const bool near_above = it != edges.end() && *it - a < 1e-9;
        if (near_below || near_above) {
            codes[i] = static_cast<std::int8_t>(exact_code(unit));
            return;
        }
        const auto q = static_cast<std::int8_t>(it - edges.begin());
        codes[i] = static_cast<std::int8_t>(unit < 0.0 ? -q : q);
    });
    block.codes = pack_codes(codes, spec.bits);
    return block;
}

QuantizedBlock quantize(const Matrix& x, const QuantSpec& spec) {
    return spec.companded() ? cquant(x, spec) : quant_uniform(x, spec);
}

Matrix dequant(const QuantizedBlock& block) {
    Matrix out(block.rows, block.cols);
    auto data = out.data();
    if (block.spec.passthrough()) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) {
                bits |= static_cast<std::uint64_t>(block.codes[8 * i + b]) << (8 * b);
            }
            data[i] = std::bit_cast<double>(bits);
        }
        return out;
    }
    const int qmax = block.spec.max_code();
    const double mu = block.spec.companding_mu;
    // Normalized reconstruction level of every storable code, indexed by
    // code + qmax + 1 (the extra slot covers -2^(b-1)).
    std::vector<double> level(2 * qmax + 2);
    for (int q = -qmax - 1; q <= qmax; ++q) {
        level[q + qmax + 1] = block.spec.companded() ? mulaw_inv(static_cast<double>(q) / qmax, mu) : q;
    }
    const bool nibbles = block.spec.bits == 4;
    const auto bytes = std::span<const std::uint8_t>(block.codes);
    for_each_element(block.rows, block.cols, block.spec.granularity, [&](std::size_t i, std::size_t grp) {
        const int q = nibbles ? ((i % 2 == 0) ? (bytes[i / 2] & 0x0F) : (bytes[i / 2] >> 4)) - 8
                              : static_cast<std::int8_t>(bytes[i]);
        data[i] = block.scales[grp] * level[q + qmax + 1];
    });
    return out;
}

std::vector<double> positive_levels(int bits, double mu) {
    const int qmax = (1 << (bits - 1)) - 1;
    std::vector<double> levels(qmax + 1);
    for (int q = 0; q <= qmax; ++q) {
        const double y = static_cast<double>(q) / qmax;
        levels[q] = mu > 0.0 ? mulaw_inv(y, mu) : y;
    }
    return levels;
}

std::vector<std::uint8_t> pack_nibbles(std::span<const std::int8_t> codes) {
    std::vector<std::uint8_t> out((codes.size() + 1) / 2, 0);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] < -7 || codes[i] > 7) {
            throw Error(ErrorCode::InvalidArgument, "4-bit code out of range: " + std::to_string(codes[i]));
        }
        const auto nibble = static_cast<std::uint8_t>(codes[i] + 8);
        out[i / 2] |= (i % 2 == 0) ? nibble : static_cast<std::uint8_t>(nibble << 4);
    }
    return out;
}

std::vector<std::int8_t> unpack_nibbles(std::span<const std::uint8_t> bytes, std::size_t count) {
    if (bytes.size() != (count + 1) / 2) {
        throw Error(ErrorCode::CorruptFile, "nibble payload has " + std::to_string(bytes.size()) +
                                                " bytes for " + std::to_string(count) + " codes");
    }
    std::vector<std::int8_t> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int nibble = (i % 2 == 0) ? (bytes[i / 2] & 0x0F) : (bytes[i / 2] >> 4);
        if (nibble == 0) {
            throw Error(ErrorCode::CorruptFile, "padding nibble inside code range at index " + std::to_string(i));
        }
        out[i] = static_cast<std::int8_t>(nibble - 8);
    }
    if (count % 2 == 1 && (bytes.back() >> 4) != 0) {
        throw Error(ErrorCode::CorruptFile, "nonzero padding nibble");
    }
    return out;
}

std::size_t packed_bytes(int bits, std::size_t elements) {
    switch (bits) {
        case 4: return (elements + 1) / 2;
        case 8: return elements;
        case 32: return 8 * elements;
        default: throw Error(ErrorCode::InvalidArgument, "unsupported bit-width " + std::to_string(bits));
    }
}

Footprint block_footprint(std::size_t rows, std::size_t cols, const QuantSpec& spec) {
    spec.validate();
    Footprint fp;
    // Pass-through is accounted as 32-bit dense state whatever its in-memory width.
    fp.code_bits = spec.passthrough() ? 32ULL * rows * cols : 8ULL * packed_bytes(spec.bits, rows * cols);
    fp.scale_bits = spec.passthrough() ? 0 : 32ULL * spec.granularity.group_count(rows, cols);
    fp.total_bytes = (fp.code_bits + fp.scale_bits) / 8;
    return fp;
}

Footprint memory_footprint(std::span<const QuantizedBlock> blocks) {
    Footprint total;
    for (const auto& b : blocks) {
        total += block_footprint(b.rows, b.cols, b.spec);
    }
    return total;
}

void write_block(std::ostream& out, const QuantizedBlock& block) {
    using detail::write_le;
    write_le<std::uint32_t>(out, block.rows);
    write_le<std::uint32_t>(out, block.cols);
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(block.spec.bits));
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(block.spec.granularity.kind));
    if (block.spec.granularity.kind == Granularity::Kind::Block) {
        write_le<std::uint32_t>(out, block.spec.granularity.group);
    }
    write_le<float>(out, block.spec.companding_mu);
    write_le<std::uint64_t>(out, block.scales.size());
    for (const float s : block.scales) {
        write_le<float>(out, s);
    }
    write_le<std::uint64_t>(out, block.codes.size());
    out.write(reinterpret_cast<const char*>(block.codes.data()), static_cast<std::streamsize>(block.codes.size()));
    if (!out) {
        throw Error(ErrorCode::IoFailure, "write failed");
    }
}

QuantizedBlock read_block(std::istream& in) {
    using detail::read_le;
    QuantizedBlock block;
    block.rows = read_le<std::uint32_t>(in, "block rows");
    block.cols = read_le<std::uint32_t>(in, "block cols");
    block.spec.bits = read_le<std::uint8_t>(in, "block bits");
    const auto tag = read_le<std::uint8_t>(in, "granularity tag");
    if (tag > 3) {
        throw Error(ErrorCode::CorruptFile, "unknown granularity tag " + std::to_string(tag));
    }
    block.spec.granularity.kind = static_cast<Granularity::Kind>(tag);
    if (block.spec.granularity.kind == Granularity::Kind::Block) {
        block.spec.granularity.group = read_le<std::uint32_t>(in, "block group length");
    }
    block.spec.companding_mu = read_le<float>(in, "mu");
    try {
        block.spec.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::CorruptFile, e.what());
    }
    if (block.rows == 0 || block.cols == 0) {
        throw Error(ErrorCode::CorruptFile, "empty block shape");
    }
    const std::size_t n = block.elements();
    const std::size_t expected_scales =
        block.spec.passthrough() ? 0 : block.spec.granularity.group_count(block.rows, block.cols);
    const auto scale_count = read_le<std::uint64_t>(in, "scale count");
    if (scale_count != expected_scales) {
        throw Error(ErrorCode::CorruptFile, "scale count " + std::to_string(scale_count) + " != expected " +
                                                std::to_string(expected_scales));
    }
    block.scales.resize(scale_count);
    for (float& s : block.scales) {
        s = read_le<float>(in, "scales");
        if (!(s >= 0.0F) || !std::isfinite(s)) {
            throw Error(ErrorCode::CorruptFile, "scale must be finite and nonnegative");
        }
    }
    const auto byte_count = read_le<std::uint64_t>(in, "packed byte count");
    if (byte_count != packed_bytes(block.spec.bits, n)) {
        throw Error(ErrorCode::CorruptFile, "packed byte count " + std::to_string(byte_count) + " does not match shape");
    }
    block.codes.resize(byte_count);
    in.read(reinterpret_cast<char*>(block.codes.data()), static_cast<std::streamsize>(byte_count));
    if (in.gcount() != static_cast<std::streamsize>(byte_count)) {
        throw Error(ErrorCode::TruncatedFile, "unexpected end of data reading packed codes");
    }
    if (block.spec.bits == 4) {
        (void)unpack_nibbles(block.codes, n);
    }
    return block;
}

}  // namespace muonq::quant
