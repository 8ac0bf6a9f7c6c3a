#pragma once
// config.hpp — flat `key = value` UTF-8 config files. Consumers mark keys as
// read through the typed getters; finish() rejects anything left over, so
// misspelled keys fail loudly instead of silently using defaults.

#include "ppc/common.hpp"

#include <map>
#include <set>
#include <string>

namespace ppc::config {

class Config {
  public:
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text, const std::string& origin = "<string>");

    // flag overrides: replaces/creates the key (counts as not yet consumed)
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& def);
    int get_int(const std::string& key, int def);
    uint64_t get_u64(const std::string& key, uint64_t def);
    double get_double(const std::string& key, double def);
    bool get_bool(const std::string& key, bool def);

    // error unknown-key when any parsed key was never consumed
    void finish() const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

  private:
    std::string origin_ = "<empty>";
    std::map<std::string, std::string> kv_;
    std::set<std::string> consumed_;

    const std::string* lookup(const std::string& key);
};

}  // namespace ppc::config
