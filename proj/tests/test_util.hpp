#pragma once

#include <atomic>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "vbody/volume.hpp"

namespace testutil {

// Scoped temporary directory under the system temp root.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = (std::filesystem::temp_directory_path() /
                 ("vbody_" + tag + "_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++)))
                    .string();
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::string& path() const { return path_; }
    std::string file(const std::string& name) const {
        return (std::filesystem::path(path_) / name).string();
    }

private:
    std::string path_;
};

inline vbody::Volume random_volume(vbody::Dims dims, std::uint64_t seed,
                                   float lo = 0.0f, float hi = 1.0f) {
    vbody::Volume v = vbody::Volume::zeros(dims, vbody::Modality::PET,
                                           vbody::IntensityUnit::Normalized);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(lo, hi);
    for (float& x : v.data) x = dist(rng);
    return v;
}

inline vbody::BinaryMask full_mask(vbody::Dims dims, int district_id = 0) {
    vbody::BinaryMask m;
    m.dims = dims;
    m.district_id = district_id;
    m.indicator.assign(static_cast<std::size_t>(vbody::voxel_count(dims)), 1);
    return m;
}

inline vbody::BinaryMask random_mask(vbody::Dims dims, std::uint64_t seed,
                                     double density = 0.5, int district_id = 0) {
    vbody::BinaryMask m;
    m.dims = dims;
    m.district_id = district_id;
    m.indicator.resize(static_cast<std::size_t>(vbody::voxel_count(dims)));
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(density);
    for (auto& b : m.indicator) b = coin(rng) ? 1 : 0;
    return m;
}

inline bool bitwise_equal(const vbody::Volume& a, const vbody::Volume& b) {
    if (a.dims != b.dims || a.data.size() != b.data.size()) return false;
    return std::memcmp(a.data.data(), b.data.data(),
                       a.data.size() * sizeof(float)) == 0;
}

}  // namespace testutil
