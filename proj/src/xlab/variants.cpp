// SPDX-License-Identifier: Apache-2.0

#include "muonq/xlab/variants.hpp"

#include "muonq/error.hpp"

namespace muonq::xlab {

optim::MuonConfig variant_config(const std::string& name) {
    using optim::MuonConfig;
    if (name == "muon32") return MuonConfig::muon32();
    if (name == "muon32n") {
        MuonConfig cfg = MuonConfig::muon32();
        cfg.normalize = true;
        return cfg;
    }
    if (name == "muon8") return MuonConfig::muon8();
    if (name == "muon4") return MuonConfig::muon4();
    if (name == "muonq4") return MuonConfig::muonq4();
    if (name == "muonq84") return MuonConfig::muonq_mixed84();
    if (!name.empty() && name.find_first_not_of("cnd") == std::string::npos) {
        return MuonConfig::ablation(name.find('c') != std::string::npos, name.find('n') != std::string::npos,
                                    name.find('d') != std::string::npos);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown optimizer variant '" + name + "'");
}

std::vector<std::string> variant_names() {
    return {"muon32", "muon32n", "muon8", "muon4", "muonq4", "muonq84", "c", "n", "d", "cn", "cd", "nd", "cnd"};
}

nlohmann::json to_json(const quant::QuantSpec& spec) {
    nlohmann::json j = {{"bits", spec.bits},
                        {"granularity", quant::to_string(spec.granularity)},
                        {"companding_mu", spec.companding_mu},
                        {"rounding", spec.rounding.mode == quant::RoundingMode::Stochastic ? "stochastic"
                                                                                            : "deterministic"}};
    if (spec.rounding.mode == quant::RoundingMode::Stochastic) {
        j["rounding_seed"] = spec.rounding.seed;
    }
    return j;
}

nlohmann::json to_json(const optim::MuonConfig& cfg) {
    return {{"lr", cfg.lr},
            {"momentum", cfg.momentum},
            {"weight_decay", cfg.weight_decay},
            {"polar_mode", optim::to_string(cfg.polar_mode)},
            {"state_spec", to_json(cfg.state_spec)},
            {"factor_bits", cfg.factor_bits},
            {"rank_ratio", cfg.rank_ratio ? nlohmann::json(*cfg.rank_ratio) : nlohmann::json("off")},
            {"normalize", cfg.normalize},
            {"seed", cfg.seed}};
}

}  // namespace muonq::xlab
