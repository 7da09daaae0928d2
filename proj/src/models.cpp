#include "vbody/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace vbody {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kMagic[4] = {'V', 'B', 'C', 'P'};

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void check_finite(const Pix2PixLosses& l) {
    if (!std::isfinite(l.loss_g) || !std::isfinite(l.loss_d))
        throw NumericError("pix2pix_losses: non-finite loss value");
}

void check_finite(const CycleGanLosses& l) {
    if (!std::isfinite(l.loss_g_total) || !std::isfinite(l.loss_d_x) ||
        !std::isfinite(l.loss_d_y))
        throw NumericError("cyclegan_losses: non-finite loss value");
}

}  // namespace

const char* to_string(Arch a) {
    return a == Arch::Pix2Pix ? "pix2pix" : "cyclegan";
}

Arch arch_from_string(const std::string& s) {
    if (s == "pix2pix") return Arch::Pix2Pix;
    if (s == "cyclegan") return Arch::CycleGan;
    throw ParameterError("unknown architecture '" + s + "'");
}

std::vector<nn::ParamRef<float>> ModelBundle::all_params() const {
    std::vector<nn::ParamRef<float>> out;
    auto append = [&](const char* net_prefix, auto& net) {
        if (!net) return;
        for (auto& p : net->params())
            out.push_back({std::string(net_prefix) + "." + p.name, p.value, p.grad});
    };
    append("g", g);
    append("f", f);
    append("d", d);
    append("d_x", d_x);
    return out;
}

std::uint64_t ModelBundle::config_hash() const {
    std::string s = std::string(to_string(arch)) + "|scope=" + std::to_string(scope) +
                    "|gin=" + std::to_string(gen_cfg.in_channels) +
                    "|gout=" + std::to_string(gen_cfg.out_channels) +
                    "|gbase=" + std::to_string(gen_cfg.base_channels) +
                    "|gdepth=" + std::to_string(gen_cfg.depth) +
                    "|s=" + std::to_string(gen_cfg.patch_size) +
                    "|din=" + std::to_string(disc_cfg.in_channels) +
                    "|dlevels=" + std::to_string(disc_cfg.levels) +
                    "|dbase=" + std::to_string(disc_cfg.base_channels);
    return fnv1a(s);
}

ModelBundle make_model_bundle(Arch arch, int scope, const nn::GeneratorConfig& gcfg,
                              int disc_levels, int disc_base_channels,
                              std::uint64_t seed) {
    if (scope < kWholeBody || scope > kNumDistricts)
        throw ParameterError("make_model_bundle: scope " + std::to_string(scope) +
                             " outside {0..4}");
    ModelBundle m;
    m.arch = arch;
    m.scope = scope;
    m.gen_cfg = gcfg;
    m.disc_cfg.levels = disc_levels;
    m.disc_cfg.base_channels = disc_base_channels;
    m.disc_cfg.in_channels = arch == Arch::Pix2Pix ? 2 : 1;
    m.seed = seed;

    m.g = std::make_unique<nn::UNetGenerator3d<float>>(gcfg);
    m.d = std::make_unique<nn::PatchGanDiscriminator3d<float>>(m.disc_cfg);
    if (arch == Arch::CycleGan) {
        m.f = std::make_unique<nn::UNetGenerator3d<float>>(gcfg);
        m.d_x = std::make_unique<nn::PatchGanDiscriminator3d<float>>(m.disc_cfg);
    }
    nn::init_params(m.all_params(), seed);
    return m;
}

nn::Tensor<float> patch_to_tensor(const std::vector<float>& patch, int size) {
    if (static_cast<std::int64_t>(patch.size()) !=
        static_cast<std::int64_t>(size) * size * size)
        throw ShapeError("patch_to_tensor: expected " + std::to_string(size) +
                         "^3 values, got " + std::to_string(patch.size()));
    nn::Tensor<float> t(1, size, size, size);
    std::copy(patch.begin(), patch.end(), t.data.begin());
    return t;
}

std::vector<float> tensor_to_patch(const nn::Tensor<float>& t) {
    return t.data;
}

std::vector<float> generator_forward(const ModelBundle& m,
                                     const std::vector<float>& patch) {
    for (float v : patch)
        if (!std::isfinite(v))
            throw NumericError("generator_forward: non-finite input value");
    auto t = patch_to_tensor(patch, m.gen_cfg.patch_size);
    return tensor_to_patch(m.g->forward(t));
}

Pix2PixLosses pix2pix_losses(ModelBundle& m, const nn::Tensor<float>& x,
                             const nn::Tensor<float>& y) {
    if (m.arch != Arch::Pix2Pix)
        throw OrchestrationError("pix2pix_losses: bundle is not a Pix2Pix model");
    Pix2PixLosses out;
    const auto fake = m.g->forward(x);
    const auto d_fake = m.d->forward(nn::concat_channels(x, fake));
    const auto d_real = m.d->forward(nn::concat_channels(x, y));

    out.adv_term = nn::bce_with_logits(d_fake, 1.0f).value;
    out.l1_term = nn::l1_loss(fake, y).value;
    out.loss_g = out.adv_term + kLambdaL1 * out.l1_term;
    out.loss_d = 0.5 * (nn::bce_with_logits(d_real, 1.0f).value +
                        nn::bce_with_logits(d_fake, 0.0f).value);
    check_finite(out);
    return out;
}

CycleGanLosses cyclegan_losses(ModelBundle& m, const nn::Tensor<float>& x,
                               const nn::Tensor<float>& y) {
    if (m.arch != Arch::CycleGan)
        throw OrchestrationError("cyclegan_losses: bundle is not a CycleGAN model");
    CycleGanLosses out;
    const auto fake_y = m.g->forward(x);
    const auto fake_x = m.f->forward(y);
    out.adv_g = nn::lsgan_loss(m.d->forward(fake_y), 1.0f).value;
    out.adv_f = nn::lsgan_loss(m.d_x->forward(fake_x), 1.0f).value;
    const auto cyc_x = m.f->forward(fake_y);
    const auto cyc_y = m.g->forward(fake_x);
    out.cycle_term = nn::l1_loss(cyc_x, x).value + nn::l1_loss(cyc_y, y).value;
    out.loss_g_total = out.adv_g + out.adv_f + kLambdaCycle * out.cycle_term;
    out.loss_d_y = 0.5 * (nn::lsgan_loss(m.d->forward(y), 1.0f).value +
                          nn::lsgan_loss(m.d->forward(fake_y), 0.0f).value);
    out.loss_d_x = 0.5 * (nn::lsgan_loss(m.d_x->forward(x), 1.0f).value +
                          nn::lsgan_loss(m.d_x->forward(fake_x), 0.0f).value);
    check_finite(out);
    return out;
}

void save_checkpoint(const ModelBundle& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint '" + path + "' for writing");
    auto put_u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); };
    auto put_u64 = [&](std::uint64_t v) { f.write(reinterpret_cast<char*>(&v), 8); };
    f.write(kMagic, 4);
    put_u32(kCheckpointVersion);
    put_u64(m.config_hash());
    put_u32(static_cast<std::uint32_t>(m.epoch));
    put_u64(m.seed);
    f.put(static_cast<char>(m.scope));
    f.put(m.arch == Arch::Pix2Pix ? 0 : 1);
    // Geometry needed to rebuild the networks before loading tensors.
    put_u32(static_cast<std::uint32_t>(m.gen_cfg.in_channels));
    put_u32(static_cast<std::uint32_t>(m.gen_cfg.out_channels));
    put_u32(static_cast<std::uint32_t>(m.gen_cfg.base_channels));
    put_u32(static_cast<std::uint32_t>(m.gen_cfg.depth));
    put_u32(static_cast<std::uint32_t>(m.gen_cfg.patch_size));
    put_u32(static_cast<std::uint32_t>(m.disc_cfg.in_channels));
    put_u32(static_cast<std::uint32_t>(m.disc_cfg.levels));
    put_u32(static_cast<std::uint32_t>(m.disc_cfg.base_channels));

    const auto params = m.all_params();
    put_u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put_u32(static_cast<std::uint32_t>(p.name.size()));
        f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put_u32(static_cast<std::uint32_t>(p.value->size()));
        f.write(reinterpret_cast<const char*>(p.value->data()),
                static_cast<std::streamsize>(p.value->size() * sizeof(float)));
    }
    if (!f) throw IoError("failed writing checkpoint '" + path + "'");
}

ModelBundle load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint '" + path + "'");
    auto get_u32 = [&]() {
        std::uint32_t v;
        f.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto get_u64 = [&]() {
        std::uint64_t v;
        f.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("'" + path + "' is not a checkpoint file");
    const std::uint32_t version = get_u32();
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint version " + std::to_string(version) +
                              " unsupported");
    const std::uint64_t stored_hash = get_u64();
    const int epoch = static_cast<int>(get_u32());
    const std::uint64_t seed = get_u64();
    const int scope = f.get();
    const int arch_byte = f.get();

    nn::GeneratorConfig gcfg;
    gcfg.in_channels = static_cast<int>(get_u32());
    gcfg.out_channels = static_cast<int>(get_u32());
    gcfg.base_channels = static_cast<int>(get_u32());
    gcfg.depth = static_cast<int>(get_u32());
    gcfg.patch_size = static_cast<int>(get_u32());
    nn::DiscriminatorConfig dcfg;
    dcfg.in_channels = static_cast<int>(get_u32());
    dcfg.levels = static_cast<int>(get_u32());
    dcfg.base_channels = static_cast<int>(get_u32());
    if (!f) throw CheckpointError("checkpoint '" + path + "' truncated in header");

    ModelBundle m = make_model_bundle(arch_byte == 0 ? Arch::Pix2Pix : Arch::CycleGan,
                                      scope, gcfg, dcfg.levels, dcfg.base_channels,
                                      seed);
    m.epoch = epoch;
    if (m.config_hash() != stored_hash)
        throw CheckpointError("checkpoint '" + path +
                              "': config hash mismatch (stored " +
                              std::to_string(stored_hash) + ", rebuilt " +
                              std::to_string(m.config_hash()) + ")");

    const auto params = m.all_params();
    const std::uint32_t n_tensors = get_u32();
    if (n_tensors != params.size())
        throw CheckpointError("checkpoint '" + path + "': expected " +
                              std::to_string(params.size()) + " tensors, found " +
                              std::to_string(n_tensors));
    for (const auto& p : params) {
        const std::uint32_t name_len = get_u32();
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        if (name != p.name)
            throw CheckpointError("checkpoint '" + path + "': tensor '" + name +
                                  "' does not match expected '" + p.name + "'");
        const std::uint32_t count = get_u32();
        if (count != p.value->size())
            throw CheckpointError("checkpoint '" + path + "': tensor '" + name +
                                  "' has " + std::to_string(count) +
                                  " values, expected " +
                                  std::to_string(p.value->size()));
        f.read(reinterpret_cast<char*>(p.value->data()),
               static_cast<std::streamsize>(count * sizeof(float)));
    }
    if (!f) throw CheckpointError("checkpoint '" + path + "' truncated in payload");
    return m;
}

}  // namespace vbody
