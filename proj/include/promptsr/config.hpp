#pragma once

// Flat key=value config text with '#' comments; the checkpoint sidecar and
// the CLI config file share this format.

#include <fstream>
#include <map>
#include <sstream>

#include "promptsr/model.hpp"

namespace promptsr::config {

class KeyValues {
public:
    static KeyValues parse(std::istream& in) {
        KeyValues kv;
        std::string line;
        while (std::getline(in, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            const std::string key = trim(line.substr(0, eq));
            if (!key.empty()) kv.values_[key] = trim(line.substr(eq + 1));
        }
        return kv;
    }

    static KeyValues parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        return parse(in);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }
    int geti(const std::string& key, int fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoi(it->second);
        } catch (...) {
            throw ConfigError("bad integer for key " + key + ": " + it->second);
        }
    }
    double getd(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (...) {
            throw ConfigError("bad number for key " + key + ": " + it->second);
        }
    }

    void set(const std::string& key, const std::string& v) { values_[key] = v; }
    void seti(const std::string& key, int64_t v) { values_[key] = std::to_string(v); }
    void setd(const std::string& key, double v) {
        std::ostringstream os;
        os << v;
        values_[key] = os.str();
    }

    std::string serialize() const {
        std::ostringstream os;
        for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
        return os.str();
    }

    const std::map<std::string, std::string>& raw() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

inline ModelConfig model_from(const KeyValues& kv) {
    ModelConfig m;
    m.channels = kv.geti("channels", m.channels);
    m.heads = kv.geti("heads", m.heads);
    m.mlp_ratio = kv.geti("mlp_ratio", m.mlp_ratio);
    m.window_size = kv.geti("window_size", m.window_size);
    m.sub_category_size = kv.geti("sub_category_size", m.sub_category_size);
    m.downscale = kv.geti("downscale", m.downscale);
    m.alpha = float(kv.getd("alpha", m.alpha));
    m.num_rg = kv.geti("num_rg", m.num_rg);
    m.cpb_per_rg = kv.geti("cpb_per_rg", m.cpb_per_rg);
    m.scale = kv.geti("scale", m.scale);
    m.validate();
    return m;
}

inline void model_to(const ModelConfig& m, KeyValues& kv) {
    kv.seti("channels", m.channels);
    kv.seti("heads", m.heads);
    kv.seti("mlp_ratio", m.mlp_ratio);
    kv.seti("window_size", m.window_size);
    kv.seti("sub_category_size", m.sub_category_size);
    kv.seti("downscale", m.downscale);
    kv.setd("alpha", m.alpha);
    kv.seti("num_rg", m.num_rg);
    kv.seti("cpb_per_rg", m.cpb_per_rg);
    kv.seti("scale", m.scale);
}

}  // namespace promptsr::config
