#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "spinflow/errors.hpp"

namespace spinflow {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace detail

// Flat key-value configuration with one section per module. Parse and
// serialize are mutually inverse on the section/key/value map, which makes a
// written manifest directly reusable as a config file.
class RunConfig {
public:
    using Section = std::map<std::string, std::string>;

    static RunConfig parse_string(const std::string& text) {
        RunConfig cfg;
        std::istringstream in(text);
        std::string line;
        std::string section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string t = detail::trim(line);
            if (t.empty() || t.front() == '#') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw InvalidArgumentError("config line " + std::to_string(line_no) +
                                               ": unterminated section header");
                section = detail::trim(t.substr(1, t.size() - 2));
                if (section.empty())
                    throw InvalidArgumentError("config line " + std::to_string(line_no) +
                                               ": empty section name");
                cfg.sections_[section];  // sections may be declared empty
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw InvalidArgumentError("config line " + std::to_string(line_no) +
                                           ": expected key = value");
            const std::string key = detail::trim(t.substr(0, eq));
            const std::string value = detail::trim(t.substr(eq + 1));
            if (key.empty())
                throw InvalidArgumentError("config line " + std::to_string(line_no) +
                                           ": empty key");
            cfg.sections_[section][key] = value;
        }
        return cfg;
    }

    static RunConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse_string(buf.str());
    }

    std::string serialize() const {
        std::ostringstream out;
        bool first = true;
        if (auto it = sections_.find(""); it != sections_.end()) {
            for (const auto& [key, value] : it->second) out << key << " = " << value << "\n";
            first = false;
        }
        for (const auto& [name, section] : sections_) {
            if (name.empty()) continue;
            if (!first) out << "\n";
            first = false;
            out << "[" << name << "]\n";
            for (const auto& [key, value] : section) out << key << " = " << value << "\n";
        }
        return out.str();
    }

    bool has(const std::string& section, const std::string& key) const {
        const auto it = sections_.find(section);
        return it != sections_.end() && it->second.count(key) > 0;
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        sections_[section][key] = value;
    }

    // Accepts "section.key=value"; a key without a dot lands in the unnamed
    // top-level section.
    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos)
            throw InvalidArgumentError("override '" + assignment + "' is not key=value");
        std::string key = detail::trim(assignment.substr(0, eq));
        const std::string value = detail::trim(assignment.substr(eq + 1));
        std::string section;
        if (const auto dot = key.find('.'); dot != std::string::npos) {
            section = key.substr(0, dot);
            key = key.substr(dot + 1);
        }
        if (key.empty()) throw InvalidArgumentError("override '" + assignment + "' has empty key");
        set(section, key, value);
    }

    const std::string& get(const std::string& section, const std::string& key) const {
        const auto sec = sections_.find(section);
        if (sec == sections_.end() || sec->second.count(key) == 0)
            throw InvalidArgumentError("missing config key [" + section + "] " + key);
        return sec->second.at(key);
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
        return has(section, key) ? get(section, key) : fallback;
    }

    int get_int(const std::string& section, const std::string& key, int fallback) const {
        if (!has(section, key)) return fallback;
        return parse_number<int>(section, key, [](const std::string& s, std::size_t* pos) {
            return std::stoi(s, pos);
        });
    }

    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const {
        if (!has(section, key)) return fallback;
        return parse_number<std::uint64_t>(section, key,
                                           [](const std::string& s, std::size_t* pos) {
                                               return std::stoull(s, pos);
                                           });
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        if (!has(section, key)) return fallback;
        return parse_number<double>(section, key, [](const std::string& s, std::size_t* pos) {
            return std::stod(s, pos);
        });
    }

    const std::map<std::string, Section>& sections() const { return sections_; }

    bool operator==(const RunConfig& other) const { return sections_ == other.sections_; }

private:
    template <typename T, typename Parser>
    T parse_number(const std::string& section, const std::string& key, Parser parse) const {
        const std::string& raw = get(section, key);
        try {
            std::size_t pos = 0;
            const T value = parse(raw, &pos);
            if (pos != raw.size()) throw std::invalid_argument("trailing characters");
            return value;
        } catch (const std::exception&) {
            throw InvalidArgumentError("config key [" + section + "] " + key +
                                       " has invalid value '" + raw + "'");
        }
    }

    std::map<std::string, Section> sections_;
};

}  // namespace spinflow
