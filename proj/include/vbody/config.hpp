#pragma once

#include <map>
#include <string>
#include <vector>

#include "vbody/phantom.hpp"
#include "vbody/training.hpp"

namespace vbody {

// Plain-text `key = value` configuration, '#' comments. One file drives
// phantom generation, training, and evaluation; CLI flags override values.
class KeyValueConfig {
public:
    static KeyValueConfig from_file(const std::string& path);
    static KeyValueConfig from_string(const std::string& text,
                                      const std::string& origin = "<string>");

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    Dims get_dims(const std::string& key, Dims fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    std::string origin_;
};

PhantomConfig phantom_config_from(const KeyValueConfig& kv);
SplitFractions split_fractions_from(const KeyValueConfig& kv);
TrainConfig train_config_from(const KeyValueConfig& kv);

}  // namespace vbody
