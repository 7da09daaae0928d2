#include "vbody/config.hpp"

#include <fstream>
#include <sstream>

namespace vbody {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return from_string(ss.str(), path);
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text,
                                           const std::string& origin) {
    KeyValueConfig kv;
    kv.origin_ = origin;
    std::istringstream stream(text);
    std::string line;
    int lineno = 0;
    while (std::getline(stream, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + " line " + std::to_string(lineno) +
                              ": expected 'key = value'");
        const std::string key = trim(trimmed.substr(0, eq));
        const std::string value = trim(trimmed.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + " line " + std::to_string(lineno) +
                              ": empty key");
        kv.values_[key] = value;
    }
    return kv;
}

bool KeyValueConfig::has(const std::string& key) const {
    return values_.count(key) > 0;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    values_[key] = value;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + it->second +
                          "' is not a number");
    }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        const int v = std::stoi(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + it->second +
                          "' is not an integer");
    }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        const std::uint64_t v = std::stoull(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + it->second +
                          "' is not an unsigned integer");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key '" + key + "': '" + it->second +
                      "' is not a boolean (true/false)");
}

Dims KeyValueConfig::get_dims(const std::string& key, Dims fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::istringstream ss(it->second);
    Dims d;
    if (!(ss >> d[0] >> d[1] >> d[2]))
        throw ConfigError("config key '" + key + "': expected three integers");
    std::string rest;
    if (ss >> rest)
        throw ConfigError("config key '" + key + "': expected exactly three integers");
    return d;
}

PhantomConfig phantom_config_from(const KeyValueConfig& kv) {
    PhantomConfig c;
    c.dims = kv.get_dims("phantom.dims", c.dims);
    c.texture_amplitude =
        kv.get_double("phantom.texture_amplitude", c.texture_amplitude);
    c.ct_noise_sigma = kv.get_double("phantom.ct_noise_sigma", c.ct_noise_sigma);
    c.pet_noise_sigma = kv.get_double("phantom.pet_noise_sigma", c.pet_noise_sigma);
    c.lesion_count_min = kv.get_int("phantom.lesion_count_min", c.lesion_count_min);
    c.lesion_count_max = kv.get_int("phantom.lesion_count_max", c.lesion_count_max);
    c.lesion_radius_min =
        kv.get_double("phantom.lesion_radius_min", c.lesion_radius_min);
    c.lesion_radius_max =
        kv.get_double("phantom.lesion_radius_max", c.lesion_radius_max);
    c.lesion_uptake_boost =
        kv.get_double("phantom.lesion_uptake_boost", c.lesion_uptake_boost);
    c.lesion_ct_base = kv.get_double("phantom.lesion_ct_base", c.lesion_ct_base);
    c.seed = kv.get_u64("phantom.seed", c.seed);
    for (int d = 0; d < 4; ++d) {
        const std::string base = "phantom.transfer." +
                                 std::string(district_name(d + 1));
        auto& t = c.transfers[static_cast<std::size_t>(d)];
        t.scale = kv.get_double(base + ".scale", t.scale);
        t.power = kv.get_double(base + ".power", t.power);
        t.offset = kv.get_double(base + ".offset", t.offset);
    }
    return c;
}

SplitFractions split_fractions_from(const KeyValueConfig& kv) {
    SplitFractions f;
    f.train = kv.get_double("split.train", f.train);
    f.val = kv.get_double("split.val", f.val);
    f.test = kv.get_double("split.test", f.test);
    return f;
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
    TrainConfig c;
    c.total_epochs = kv.get_int("train.epochs", c.total_epochs);
    c.lr_initial = kv.get_double("train.lr", c.lr_initial);
    c.adam_beta1 = kv.get_double("train.beta1", c.adam_beta1);
    c.adam_beta2 = kv.get_double("train.beta2", c.adam_beta2);
    c.grad_clip_max_norm = kv.get_double("train.grad_clip", c.grad_clip_max_norm);
    c.lambda_l1 = kv.get_double("train.lambda_l1", c.lambda_l1);
    c.patches_per_epoch = kv.get_int("train.patches_per_epoch", c.patches_per_epoch);
    c.min_in_district_fraction =
        kv.get_double("train.min_district_fraction", c.min_in_district_fraction);
    c.val_interval_epochs = kv.get_int("train.val_interval", c.val_interval_epochs);
    c.seed = kv.get_u64("train.seed", c.seed);
    c.patch_size = kv.get_int("train.patch_size", c.patch_size);
    c.overlap = kv.get_int("train.overlap", c.overlap);
    c.base_channels = kv.get_int("train.base_channels", c.base_channels);
    c.depth = kv.get_int("train.depth", c.depth);
    c.disc_levels = kv.get_int("train.disc_levels", c.disc_levels);
    c.disc_base_channels =
        kv.get_int("train.disc_base_channels", c.disc_base_channels);
    c.augment.rotate = kv.get_bool("train.augment_rotate", c.augment.rotate);
    c.augment.max_rotation_deg =
        kv.get_double("train.rotation_deg", c.augment.max_rotation_deg);
    c.augment.flips = kv.get_bool("train.augment_flips", c.augment.flips);
    c.augment.noise_sigma =
        kv.get_double("train.augment_noise_sigma", c.augment.noise_sigma);
    // Default decay start follows the paper's shape: decay over the last
    // third when a custom epoch count is set without an explicit start.
    if (!kv.has("train.decay_start_epoch") && c.total_epochs != 150)
        c.decay_start_epoch = c.total_epochs - c.total_epochs / 3 + 1;
    else
        c.decay_start_epoch = kv.get_int("train.decay_start_epoch",
                                         c.decay_start_epoch);
    return c;
}

}  // namespace vbody
