// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

namespace muonq::cli {

using json = nlohmann::json;

/// Bad command line or config file; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown by setters; the key table adds the key name and origin.
class ValueError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Setter = std::function<void(const json&)>;

/// Settable config keys of one command, in dotted form ("momentum.rows").
class KeyTable {
public:
    void add(const std::string& name, std::string help, Setter set);
    [[nodiscard]] bool contains(const std::string& name) const;
    /// `origin` names where the value came from, for error messages.
    void set(const std::string& name, const json& value, const std::string& origin) const;

    struct Entry {
        std::string name;
        std::string help;
        Setter set;
    };
    [[nodiscard]] const std::vector<Entry>& entries() const noexcept {
        return m_entries;
    }

private:
    std::vector<Entry> m_entries;
    std::map<std::string, std::size_t> m_index;
};

std::string describe(const json& value);
std::vector<std::string> split_commas(const std::string& text);

/// Command-line value text: JSON when it parses as JSON, otherwise the raw
/// string, so `--bits 4`, `--normalize false` and `--variant muonq4` all work.
json parse_value(const std::string& text);

template <typename T>
Setter bind(T& field) {
    return [&field](const json& v) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ValueError("expected true or false, got " + describe(v));
            field = v.get<bool>();
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
                throw ValueError("expected a non-negative integer, got " + describe(v));
            }
            field = static_cast<T>(v.get<std::uint64_t>());
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ValueError("expected an integer, got " + describe(v));
            field = static_cast<T>(v.get<std::int64_t>());
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ValueError("expected a number, got " + describe(v));
            field = static_cast<T>(v.get<double>());
        } else if constexpr (std::is_same_v<T, std::string>) {
            field = v.is_string() ? v.get<std::string>() : v.dump();
        } else if constexpr (std::is_same_v<T, std::optional<double>>) {
            if (v.is_null() || (v.is_string() && v.get<std::string>() == "none")) {
                field.reset();
            } else if (v.is_number()) {
                field = v.get<double>();
            } else {
                throw ValueError("expected a number or null, got " + describe(v));
            }
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            field.clear();
            const auto push = [&field](const json& x) {
                if (!x.is_number()) throw ValueError("expected a list of numbers, got element " + describe(x));
                field.push_back(x.get<double>());
            };
            if (v.is_array()) {
                for (const auto& x : v) push(x);
            } else if (v.is_number()) {
                push(v);
            } else if (v.is_string()) {
                for (const auto& part : split_commas(v.get<std::string>())) push(parse_value(part));
            } else {
                throw ValueError("expected a list of numbers, got " + describe(v));
            }
        } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
            field.clear();
            if (v.is_array()) {
                for (const auto& x : v) {
                    if (!x.is_string()) throw ValueError("expected a list of names, got element " + describe(x));
                    field.push_back(x.get<std::string>());
                }
            } else if (v.is_string()) {
                field = split_commas(v.get<std::string>());
            } else {
                throw ValueError("expected a list of names, got " + describe(v));
            }
        } else {
            static_assert(sizeof(T) == 0, "no binder for this field type");
        }
    };
}

/// Binds a field parsed from its text name.
template <typename T, typename Parse>
Setter bind_parsed(T& field, Parse parse) {
    return [&field, parse](const json& v) {
        if (!v.is_string()) throw ValueError("expected a name, got " + describe(v));
        field = parse(v.get<std::string>());
    };
}

struct ConfigEntry {
    std::string key;
    json value;
    int line = 0;
};

/// Flattened keys of a config file. The file holds either a plain config
/// object or a report header (a JSON Lines report works too; its first line
/// is the header), in which case the header's "config" is used. The
/// "derived" subtree is informational and skipped. `experiment_id`, when
/// the file is a report header, must match `command`.
std::vector<ConfigEntry> load_config(const std::filesystem::path& path, const std::string& command);

}  // namespace muonq::cli
