// SPDX-License-Identifier: Apache-2.0

#include "muonq/xlab/memory.hpp"

#include "muonq/error.hpp"
#include "muonq/xlab/variants.hpp"

namespace muonq::xlab {

Inventory builtin_inventory(const std::string& name) {
    if (name == "gpt2-small") {
        return {name,
                {{"attn.q_proj", 768, 768, 12},
                 {"attn.k_proj", 768, 768, 12},
                 {"attn.v_proj", 768, 768, 12},
                 {"attn.o_proj", 768, 768, 12},
                 {"mlp.fc_in", 768, 3072, 12},
                 {"mlp.fc_out", 3072, 768, 12}}};
    }
    if (name == "square-1024") {
        return {name, {{"square", 1024, 1024, 1}}};
    }
    throw Error(ErrorCode::InvalidArgument, "unknown inventory '" + name + "' (expected gpt2-small or square-1024)");
}

std::vector<std::string> builtin_inventory_names() {
    return {"gpt2-small", "square-1024"};
}

quant::Footprint state_footprint(std::size_t rows, std::size_t cols, const optim::MuonConfig& cfg) {
    cfg.validate();
    if (!cfg.rank_ratio) {
        return quant::block_footprint(rows, cols, cfg.state_spec);
    }
    const std::size_t k = cfg.rank_for(rows, cols);
    quant::Footprint fp = quant::block_footprint(rows, k, cfg.factor_spec(quant::Granularity::column()));
    fp += quant::block_footprint(k, cols, cfg.factor_spec(quant::Granularity::row()));
    fp += quant::block_footprint(rows, cols, cfg.state_spec);
    return fp;
}

ExperimentReport memory_report(const Inventory& inventory, const std::vector<std::string>& variants) {
    if (inventory.shapes.empty()) {
        throw Error(ErrorCode::InvalidArgument, "empty shape inventory");
    }
    if (variants.empty()) {
        throw Error(ErrorCode::InvalidArgument, "no variants selected");
    }
    ExperimentReport report;
    report.experiment_id = "memory";
    report.config["inventory"] = inventory.name;
    report.config["variants"] = variants;
    json shapes = json::array();
    double dense_bits = 0.0;
    for (const auto& s : inventory.shapes) {
        shapes.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}, {"count", s.count}});
        dense_bits += 32.0 * static_cast<double>(s.rows * s.cols * s.count);
    }
    report.config["derived"]["shapes"] = shapes;
    report.summary["bits_dense32"] = dense_bits;

    std::map<std::string, double> totals;
    for (const auto& v : variants) {
        const optim::MuonConfig cfg = variant_config(v);
        report.config["derived"]["variant_configs"][v] = to_json(cfg);
        const std::string series = "bits_" + v;
        report.declare(series, "bits per matrix of the inventory entry (one instance) under " + v, "entry");
        quant::Footprint total;
        for (std::size_t i = 0; i < inventory.shapes.size(); ++i) {
            const auto& s = inventory.shapes[i];
            const quant::Footprint one = state_footprint(s.rows, s.cols, cfg);
            report.add(series, static_cast<double>(i), static_cast<double>(one.code_bits + one.scale_bits));
            for (std::size_t c = 0; c < s.count; ++c) total += one;
        }
        const double bits = static_cast<double>(total.code_bits + total.scale_bits);
        totals[v] = bits;
        report.summary["bits_" + v] = bits;
        report.summary["code_bits_" + v] = static_cast<double>(total.code_bits);
        report.summary["scale_bits_" + v] = static_cast<double>(total.scale_bits);
        report.summary["megabytes_" + v] = bits / 8.0 / 1e6;
        report.summary["ratio_" + v] = dense_bits / bits;
    }
    if (variants.size() == 1) {
        report.summary["ratio"] = report.summary["ratio_" + variants.front()];
    }
    if (totals.count("muonq4") && totals.count("muon4")) {
        report.summary["muonq4_over_muon4"] = totals["muonq4"] / totals["muon4"];
    }
    return report;
}

}  // namespace muonq::xlab
