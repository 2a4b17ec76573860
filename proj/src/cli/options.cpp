// SPDX-License-Identifier: Apache-2.0

#include "options.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace muonq::cli {

void KeyTable::add(const std::string& name, std::string help, Setter set) {
    m_index[name] = m_entries.size();
    m_entries.push_back({name, std::move(help), std::move(set)});
}

bool KeyTable::contains(const std::string& name) const {
    return m_index.count(name) != 0;
}

void KeyTable::set(const std::string& name, const json& value, const std::string& origin) const {
    const auto it = m_index.find(name);
    if (it == m_index.end()) {
        throw UsageError(origin + ": unknown key '" + name + "'");
    }
    try {
        m_entries[it->second].set(value);
    } catch (const std::exception& e) {
        throw UsageError(origin + ": " + name + ": " + e.what());
    }
}

std::string describe(const json& value) {
    std::string s = value.dump();
    if (s.size() > 40) s = s.substr(0, 37) + "...";
    return s;
}

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        if (!part.empty()) parts.push_back(part);
    }
    return parts;
}

json parse_value(const std::string& text) {
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) return json(text);
    return v;
}

namespace {

int line_at(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line of the last path component, found by searching for each quoted key
// after the previous one.
int locate(const std::string& text, const std::vector<std::string>& path, std::size_t from) {
    std::size_t pos = from;
    for (const auto& part : path) {
        const std::size_t hit = text.find(json(part).dump(), pos);
        if (hit == std::string::npos) return 0;
        pos = hit;
    }
    return line_at(text, pos);
}

void flatten(const json& obj, std::vector<std::string>& path, const std::string& text, std::size_t from,
             std::vector<ConfigEntry>& out) {
    for (const auto& [key, value] : obj.items()) {
        if (path.empty() && key == "derived") continue;
        path.push_back(key);
        if (value.is_object()) {
            flatten(value, path, text, from, out);
        } else {
            std::string dotted;
            for (const auto& p : path) dotted += (dotted.empty() ? "" : ".") + p;
            out.push_back({dotted, value, locate(text, path, from)});
        }
        path.pop_back();
    }
}

}  // namespace

std::vector<ConfigEntry> load_config(const std::filesystem::path& path, const std::string& command) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot read config file " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    if (path.extension() == ".jsonl") {
        text = text.substr(0, text.find('\n'));
    }

    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t byte = e.byte == 0 ? 0 : e.byte - 1;
        std::string what = e.what();
        const std::size_t cut = what.find("parse error");
        if (cut != std::string::npos) what = what.substr(cut);
        throw UsageError(path.string() + ":" + std::to_string(line_at(text, byte)) + ": " + what);
    }
    if (!doc.is_object()) {
        throw UsageError(path.string() + ":1: config must be a JSON object");
    }

    std::size_t from = 0;
    const json* cfg = &doc;
    if (doc.contains("schema") && doc.contains("config")) {
        const std::string id = doc.value("experiment_id", "");
        if (id != command && id.rfind(command + "-", 0) != 0) {
            throw UsageError(path.string() + ": report header is from '" + id + "', not '" + command + "'");
        }
        if (!doc["config"].is_object()) {
            throw UsageError(path.string() + ":" + std::to_string(locate(text, {"config"}, 0)) +
                             ": header config must be an object");
        }
        cfg = &doc["config"];
        from = text.find("\"config\"");
    }
    std::vector<ConfigEntry> entries;
    std::vector<std::string> prefix;
    flatten(*cfg, prefix, text, from, entries);
    return entries;
}

}  // namespace muonq::cli
