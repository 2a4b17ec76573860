// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "muonq/optim/muon.hpp"

namespace muonq::xlab {

/// Named optimizer variants:
///   muon32, muon32n (normalized), muon8, muon4, muonq4, muonq84 (8-bit factors),
///   and Muon4 ablations named by their enabled components: c, n, d, cn, cd, nd, cnd.
optim::MuonConfig variant_config(const std::string& name);
std::vector<std::string> variant_names();

nlohmann::json to_json(const quant::QuantSpec& spec);
nlohmann::json to_json(const optim::MuonConfig& cfg);

}  // namespace muonq::xlab
