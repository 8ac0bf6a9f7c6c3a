#include "ppc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ppc::config {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.' && c != '-')
            return false;
    return true;
}

}  // namespace

Config Config::parse_string(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = origin + ":" + std::to_string(line_no);
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        require(eq != std::string::npos, "parse-error", where + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        require(valid_key(key), "parse-error", where + ": invalid key '" + key + "'");
        require(!cfg.kv_.count(key), "parse-error", where + ": duplicate key '" + key + "'");
        cfg.kv_[key] = value;
    }
    return cfg;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "io-error", "cannot open config " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_string(buf.str(), path);
}

void Config::set(const std::string& key, const std::string& value) {
    require(valid_key(key), "parse-error", "invalid key '" + key + "'");
    kv_[key] = value;
    consumed_.erase(key);
}

const std::string* Config::lookup(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
}

std::string Config::get_str(const std::string& key, const std::string& def) {
    const std::string* v = lookup(key);
    return v ? *v : def;
}

int Config::get_int(const std::string& key, int def) {
    const std::string* v = lookup(key);
    if (!v) return def;
    try {
        size_t used = 0;
        int r = std::stoi(*v, &used);
        require(used == v->size(), "parse-error", "");
        return r;
    } catch (...) {
        fail("parse-error", origin_ + ": key '" + key + "' is not an integer: " + *v);
    }
}

uint64_t Config::get_u64(const std::string& key, uint64_t def) {
    const std::string* v = lookup(key);
    if (!v) return def;
    try {
        size_t used = 0;
        unsigned long long r = std::stoull(*v, &used);
        require(used == v->size(), "parse-error", "");
        return static_cast<uint64_t>(r);
    } catch (...) {
        fail("parse-error", origin_ + ": key '" + key + "' is not an unsigned int: " + *v);
    }
}

double Config::get_double(const std::string& key, double def) {
    const std::string* v = lookup(key);
    if (!v) return def;
    try {
        size_t used = 0;
        double r = std::stod(*v, &used);
        require(used == v->size(), "parse-error", "");
        return r;
    } catch (...) {
        fail("parse-error", origin_ + ": key '" + key + "' is not a number: " + *v);
    }
}

bool Config::get_bool(const std::string& key, bool def) {
    const std::string* v = lookup(key);
    if (!v) return def;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    fail("parse-error", origin_ + ": key '" + key + "' is not a bool: " + *v);
}

void Config::finish() const {
    for (const auto& [k, v] : kv_)
        require(consumed_.count(k) > 0, "unknown-key",
                origin_ + ": unknown config key '" + k + "'");
}

}  // namespace ppc::config
