// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "muonq/optim/muon.hpp"
#include "muonq/quant/quant.hpp"
#include "muonq/xlab/report.hpp"

namespace muonq::xlab {

struct ShapeEntry {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t count = 1;
};

struct Inventory {
    std::string name;
    std::vector<ShapeEntry> shapes;
};

/// "gpt2-small" (12 layers of four 768x768 attention and two MLP matrices)
/// or "square-1024".
Inventory builtin_inventory(const std::string& name);
std::vector<std::string> builtin_inventory_names();

/// Storage of one momentum state of this shape under `cfg`, from the block
/// layout the optimizer would create.
quant::Footprint state_footprint(std::size_t rows, std::size_t cols, const optim::MuonConfig& cfg);

/// Bits per variant and compression relative to 32-bit dense state.
ExperimentReport memory_report(const Inventory& inventory, const std::vector<std::string>& variants);

}  // namespace muonq::xlab
