// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "muonq/matkit/matrix.hpp"

namespace muonq::quant {

using matkit::Matrix;

inline constexpr std::uint32_t kDefaultBlockGroup = 128;
inline constexpr float kDefaultMu = 255.0F;

/// Which elements share one scale.
struct Granularity {
    enum class Kind : std::uint8_t { Tensor = 0, Row = 1, Column = 2, Block = 3 };

    Kind kind = Kind::Tensor;
    std::uint32_t group = 0;  // Block only: number of consecutive row-major elements

    static Granularity tensor() {
        return {};
    }
    static Granularity row() {
        return {Kind::Row, 0};
    }
    static Granularity column() {
        return {Kind::Column, 0};
    }
    static Granularity block(std::uint32_t group = kDefaultBlockGroup) {
        return {Kind::Block, group};
    }

    [[nodiscard]] std::size_t group_count(std::size_t rows, std::size_t cols) const;
    [[nodiscard]] std::size_t group_of(std::size_t r, std::size_t c, std::size_t cols) const;

    friend bool operator==(const Granularity&, const Granularity&) = default;
};

std::string to_string(Granularity g);
Granularity parse_granularity(const std::string& text);

enum class RoundingMode : std::uint8_t { Deterministic, Stochastic };

struct Rounding {
    RoundingMode mode = RoundingMode::Deterministic;
    std::uint64_t seed = 0;

    static Rounding deterministic() {
        return {};
    }
    static Rounding stochastic(std::uint64_t seed) {
        return {RoundingMode::Stochastic, seed};
    }
};

/// Quantizer configuration. bits = 32 is a lossless pass-through (values kept
/// as binary64, accounted as 32-bit dense state).
struct QuantSpec {
    int bits = 4;
    Granularity granularity;
    float companding_mu = 0.0F;  // 0 disables mu-law companding
    Rounding rounding;

    /// Throws InvalidArgument unless bits is 4, 8 or 32, a Block group has at
    /// least two elements, and mu is 0 or >= 1.
    void validate() const;

    [[nodiscard]] bool passthrough() const noexcept {
        return bits == 32;
    }
    [[nodiscard]] bool companded() const noexcept {
        return companding_mu > 0.0F;
    }
    /// Largest code magnitude, 2^(b-1) - 1.
    [[nodiscard]] int max_code() const noexcept {
        return (1 << (bits - 1)) - 1;
    }
};

/// Packed codes plus one float32 scale per group.
///
/// For uniform blocks the scale is the step size (group max / max_code); for
/// companded blocks it is the group max itself, and codes live on the
/// compressed [-1, 1] axis with step 1 / max_code.
struct QuantizedBlock {
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    QuantSpec spec;
    std::vector<float> scales;
    std::vector<std::uint8_t> codes;

    [[nodiscard]] std::size_t elements() const noexcept {
        return static_cast<std::size_t>(rows) * cols;
    }
    /// Unpacked signed code of element i (row-major). Not valid for bits = 32.
    [[nodiscard]] int code(std::size_t i) const;
    [[nodiscard]] std::vector<int> unpacked_codes() const;
};

/// Payload equality: shape, bit-width, granularity, mu, scales and codes.
/// The rounding mode is a quantize-time setting and is not compared.
bool same_payload(const QuantizedBlock& a, const QuantizedBlock& b);

/// Round-half-away-from-zero or unbiased stochastic rounding.
class Rounder {
public:
    explicit Rounder(Rounding rounding) : m_mode(rounding.mode), m_rng(rounding.seed) {}

    std::int64_t operator()(double z);

private:
    RoundingMode m_mode;
    std::mt19937_64 m_rng;
    std::uniform_real_distribution<double> m_uniform{0.0, 1.0};
};

std::int64_t round_half_away(double z);
std::int64_t round_value(double z, Rounder& rounder);

double mulaw(double x, double mu);
double mulaw_inv(double y, double mu);

/// Symmetric uniform quantization; spec.companding_mu must be 0.
QuantizedBlock quant_uniform(const Matrix& x, const QuantSpec& spec);
/// mu-law companded quantization; spec.companding_mu must be > 0.
QuantizedBlock cquant(const Matrix& x, const QuantSpec& spec);
/// Dispatches on the spec: pass-through, companded or uniform.
QuantizedBlock quantize(const Matrix& x, const QuantSpec& spec);
Matrix dequant(const QuantizedBlock& block);

/// Reconstruction levels of the nonnegative codes 0..max_code on the
/// normalized [0, 1] axis (uniform when mu == 0).
std::vector<double> positive_levels(int bits, double mu);

// Nibble layout: code + 8 in [1, 15], two per byte, even index in the low
// nibble, 0 reserved as padding.
std::vector<std::uint8_t> pack_nibbles(std::span<const std::int8_t> codes);
std::vector<std::int8_t> unpack_nibbles(std::span<const std::uint8_t> bytes, std::size_t count);

/// Stored payload size in bytes for a block of `elements` values.
std::size_t packed_bytes(int bits, std::size_t elements);

struct Footprint {
    std::uint64_t code_bits = 0;
    std::uint64_t scale_bits = 0;
    std::uint64_t total_bytes = 0;

    Footprint& operator+=(const Footprint& rhs) {
        code_bits += rhs.code_bits;
        scale_bits += rhs.scale_bits;
        total_bytes += rhs.total_bytes;
        return *this;
    }
    friend bool operator==(const Footprint&, const Footprint&) = default;
};

/// Storage a block of this shape and spec would occupy, without building it.
Footprint block_footprint(std::size_t rows, std::size_t cols, const QuantSpec& spec);
Footprint memory_footprint(std::span<const QuantizedBlock> blocks);

/// Checkpoint section for one block (little-endian).
void write_block(std::ostream& out, const QuantizedBlock& block);
/// Throws TruncatedFile on short input and CorruptFile on inconsistent fields.
QuantizedBlock read_block(std::istream& in);

}  // namespace muonq::quant
