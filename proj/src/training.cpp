#include "vbody/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "vbody/evaluation.hpp"
#include "vbody/inference.hpp"

namespace vbody {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = seed ^ (a * 0x9e3779b97f4a7c15ull) ^ (b * 0xbf58476d1ce4e5b9ull);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

float sample_patch_trilinear(const std::vector<float>& v, int s, double cx,
                             double cy, double cz) {
    const int x0 = static_cast<int>(std::floor(cx));
    const int y0 = static_cast<int>(std::floor(cy));
    const int z0 = static_cast<int>(std::floor(cz));
    const double fx = cx - x0, fy = cy - y0, fz = cz - z0;
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz) {
        const int z = z0 + dz;
        if (z < 0 || z >= s) continue;
        const double wz = dz ? fz : 1.0 - fz;
        for (int dy = 0; dy < 2; ++dy) {
            const int y = y0 + dy;
            if (y < 0 || y >= s) continue;
            const double wy = dy ? fy : 1.0 - fy;
            for (int dx = 0; dx < 2; ++dx) {
                const int x = x0 + dx;
                if (x < 0 || x >= s) continue;
                const double wx = dx ? fx : 1.0 - fx;
                acc += wz * wy * wx *
                       v[static_cast<std::size_t>((z * s + y) * s + x)];
            }
        }
    }
    return static_cast<float>(acc);
}

// Joint rotation of the patch triple about its center. Output-to-input
// mapping uses the transposed matrix.
void rotate_patch_triple(std::vector<float>& ct, std::vector<float>& pet,
                         std::vector<std::uint8_t>& mask, int s, double ax,
                         double ay, double az) {
    auto deg = [](double d) { return d * kPi / 180.0; };
    const double cx = std::cos(deg(ax)), sx = std::sin(deg(ax));
    const double cy = std::cos(deg(ay)), sy = std::sin(deg(ay));
    const double cz = std::cos(deg(az)), sz = std::sin(deg(az));
    // R = Rz * Ry * Rx
    const double r[3][3] = {
        {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx},
        {sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx},
        {-sy, cy * sx, cy * cx}};
    const double c = (s - 1) / 2.0;
    std::vector<float> ct_out(ct.size()), pet_out(pet.size());
    std::vector<std::uint8_t> mask_out(mask.size());
    for (int z = 0; z < s; ++z)
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                const double px = x - c, py = y - c, pz = z - c;
                // inverse rotation = transpose
                const double qx = r[0][0] * px + r[1][0] * py + r[2][0] * pz + c;
                const double qy = r[0][1] * px + r[1][1] * py + r[2][1] * pz + c;
                const double qz = r[0][2] * px + r[1][2] * py + r[2][2] * pz + c;
                const std::size_t idx =
                    static_cast<std::size_t>((z * s + y) * s + x);
                ct_out[idx] = sample_patch_trilinear(ct, s, qx, qy, qz);
                pet_out[idx] = sample_patch_trilinear(pet, s, qx, qy, qz);
                const int nx = static_cast<int>(std::lround(qx));
                const int ny = static_cast<int>(std::lround(qy));
                const int nz = static_cast<int>(std::lround(qz));
                mask_out[idx] = (nx >= 0 && nx < s && ny >= 0 && ny < s &&
                                 nz >= 0 && nz < s)
                                    ? mask[static_cast<std::size_t>(
                                          (nz * s + ny) * s + nx)]
                                    : 0;
            }
    ct = std::move(ct_out);
    pet = std::move(pet_out);
    mask = std::move(mask_out);
}

struct StepLosses {
    double loss_g = 0.0;
    double loss_d = 0.0;
    double l1 = 0.0;
    double grad_norm_g = 0.0;
    double grad_norm_d = 0.0;
};

class Pix2PixTrainer {
public:
    Pix2PixTrainer(ModelBundle& m, const TrainConfig& cfg)
        : m_(m), cfg_(cfg), adam_g_(m.g->params(), cfg.adam_beta1, cfg.adam_beta2),
          adam_d_(m.d->params(), cfg.adam_beta1, cfg.adam_beta2) {}

    StepLosses step(const nn::Tensor<float>& x, const nn::Tensor<float>& y,
                    double lr) {
        StepLosses out;
        // Discriminator update: real pair toward 1, fake pair toward 0,
        // halved so loss_D matches 0.5 * (bce_real + bce_fake).
        m_.d->zero_grad();
        auto fake = m_.g->forward(x);
        {
            const auto d_real = m_.d->forward(nn::concat_channels(x, y));
            auto bce_real = nn::bce_with_logits(d_real, 1.0f);
            for (float& v : bce_real.grad.data) v *= 0.5f;
            m_.d->backward(bce_real.grad);
            const auto d_fake = m_.d->forward(nn::concat_channels(x, fake));
            auto bce_fake = nn::bce_with_logits(d_fake, 0.0f);
            for (float& v : bce_fake.grad.data) v *= 0.5f;
            m_.d->backward(bce_fake.grad);
            out.loss_d = 0.5 * (bce_real.value + bce_fake.value);
        }
        out.grad_norm_d = nn::clip_global_norm(m_.d->params(),
                                               cfg_.grad_clip_max_norm);
        adam_d_.step(lr);

        // Generator update: adversarial through D plus weighted L1.
        m_.g->zero_grad();
        m_.d->zero_grad();
        fake = m_.g->forward(x);
        const auto d_fake = m_.d->forward(nn::concat_channels(x, fake));
        const auto adv = nn::bce_with_logits(d_fake, 1.0f);
        const auto into_pair = m_.d->backward(adv.grad);
        auto grad_fake = nn::split_channels(into_pair, x.c).second;
        const auto l1 = nn::l1_loss(fake, y);
        for (std::size_t i = 0; i < grad_fake.data.size(); ++i)
            grad_fake.data[i] += static_cast<float>(cfg_.lambda_l1) *
                                 l1.grad.data[i];
        m_.g->backward(grad_fake);
        out.grad_norm_g = nn::clip_global_norm(m_.g->params(),
                                               cfg_.grad_clip_max_norm);
        adam_g_.step(lr);
        m_.d->zero_grad();  // gradients from the G pass are not D updates

        out.l1 = l1.value;
        out.loss_g = adv.value + cfg_.lambda_l1 * l1.value;
        if (!std::isfinite(out.loss_g) || !std::isfinite(out.loss_d))
            throw NumericError("pix2pix step: non-finite loss");
        return out;
    }

private:
    ModelBundle& m_;
    const TrainConfig& cfg_;
    nn::AdamOptimizer<float> adam_g_;
    nn::AdamOptimizer<float> adam_d_;
};

class CycleGanTrainer {
public:
    CycleGanTrainer(ModelBundle& m, const TrainConfig& cfg)
        : m_(m), cfg_(cfg), adam_gf_(joint_params(m), cfg.adam_beta1, cfg.adam_beta2),
          adam_dy_(m.d->params(), cfg.adam_beta1, cfg.adam_beta2),
          adam_dx_(m.d_x->params(), cfg.adam_beta1, cfg.adam_beta2) {}

    StepLosses step(const nn::Tensor<float>& x, const nn::Tensor<float>& y,
                    double lr) {
        StepLosses out;
        // D_Y on real y and G(x); D_X on real x and F(y).
        const auto fake_y = m_.g->forward(x);
        const auto fake_x = m_.f->forward(y);
        out.loss_d = 0.5 * (disc_update(*m_.d, adam_dy_, y, fake_y, lr) +
                            disc_update(*m_.d_x, adam_dx_, x, fake_x, lr));
        out.grad_norm_d = last_disc_norm_;

        // Joint G/F update, one loss term at a time so layer caches stay
        // consistent: adversarial both directions plus both cycles.
        m_.g->zero_grad();
        m_.f->zero_grad();
        double loss_g = 0.0;
        {
            const auto fy = m_.g->forward(x);
            const auto s = m_.d->forward(fy);
            const auto ls = nn::lsgan_loss(s, 1.0f);
            loss_g += ls.value;
            m_.g->backward(m_.d->backward(ls.grad));
        }
        {
            const auto fx = m_.f->forward(y);
            const auto s = m_.d_x->forward(fx);
            const auto ls = nn::lsgan_loss(s, 1.0f);
            loss_g += ls.value;
            m_.f->backward(m_.d_x->backward(ls.grad));
        }
        double cycle = 0.0;
        {
            const auto fy = m_.g->forward(x);
            const auto rec_x = m_.f->forward(fy);
            auto l1 = nn::l1_loss(rec_x, x);
            cycle += l1.value;
            for (float& v : l1.grad.data) v *= static_cast<float>(kLambdaCycle);
            m_.g->backward(m_.f->backward(l1.grad));
        }
        {
            const auto fx = m_.f->forward(y);
            const auto rec_y = m_.g->forward(fx);
            auto l1 = nn::l1_loss(rec_y, y);
            cycle += l1.value;
            for (float& v : l1.grad.data) v *= static_cast<float>(kLambdaCycle);
            m_.f->backward(m_.g->backward(l1.grad));
        }
        out.grad_norm_g = nn::clip_global_norm(joint_params(m_),
                                               cfg_.grad_clip_max_norm);
        adam_gf_.step(lr);
        m_.d->zero_grad();
        m_.d_x->zero_grad();

        out.l1 = cycle;
        out.loss_g = loss_g + kLambdaCycle * cycle;
        if (!std::isfinite(out.loss_g) || !std::isfinite(out.loss_d))
            throw NumericError("cyclegan step: non-finite loss");
        return out;
    }

private:
    static std::vector<nn::ParamRef<float>> joint_params(ModelBundle& m) {
        auto params = m.g->params();
        for (auto& p : m.f->params()) params.push_back(p);
        return params;
    }

    double disc_update(nn::PatchGanDiscriminator3d<float>& d,
                       nn::AdamOptimizer<float>& adam, const nn::Tensor<float>& real,
                       const nn::Tensor<float>& fake, double lr) {
        d.zero_grad();
        const auto s_real = d.forward(real);
        auto ls_real = nn::lsgan_loss(s_real, 1.0f);
        for (float& v : ls_real.grad.data) v *= 0.5f;
        d.backward(ls_real.grad);
        const auto s_fake = d.forward(fake);
        auto ls_fake = nn::lsgan_loss(s_fake, 0.0f);
        for (float& v : ls_fake.grad.data) v *= 0.5f;
        d.backward(ls_fake.grad);
        last_disc_norm_ = nn::clip_global_norm(d.params(), cfg_.grad_clip_max_norm);
        adam.step(lr);
        return ls_real.value + ls_fake.value;
    }

    ModelBundle& m_;
    const TrainConfig& cfg_;
    nn::AdamOptimizer<float> adam_gf_;
    nn::AdamOptimizer<float> adam_dy_;
    nn::AdamOptimizer<float> adam_dx_;
    double last_disc_norm_ = 0.0;
};

double validation_mae(const ModelBundle& m, const TrainingSet& data) {
    double acc = 0.0;
    int n = 0;
    for (const auto& sp : data.val) {
        if (sp.bundle.mask.count_set() == 0 || !sp.bundle.pet) continue;
        Volume pred;
        if (data.scope == kWholeBody)
            pred = mask_apply(
                translate_sliding(sp.bundle.ct,
                                  [&m](const std::vector<float>& patch) {
                                      return generator_forward(m, patch);
                                  },
                                  m.gen_cfg.patch_size, m.gen_cfg.patch_size / 2),
                sp.bundle.mask);
        else
            pred = translate_district(m, sp.bundle);
        acc += mae(pred, *sp.bundle.pet, sp.bundle.mask);
        ++n;
    }
    return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

void TrainConfig::validate() const {
    if (total_epochs < 1 || decay_start_epoch < 1 || patch_size < 1)
        throw ConfigError("train config: epochs and patch size must be >= 1");
    if (decay_start_epoch > total_epochs)
        throw ConfigError("train config: decay_start_epoch exceeds total_epochs");
    if (!(lr_initial > 0.0) || !(grad_clip_max_norm > 0.0) || !(lambda_l1 > 0.0))
        throw ConfigError("train config: rates and norms must be positive");
    if (batch_size != 1)
        throw ConfigError("train config: batch size is fixed at 1");
    if (!(overlap > 0 && overlap < patch_size))
        throw ConfigError("train config: need 0 < overlap < patch_size");
    generator_config().validate();
}

nn::GeneratorConfig TrainConfig::generator_config() const {
    nn::GeneratorConfig g;
    g.base_channels = base_channels;
    g.depth = depth;
    g.patch_size = patch_size;
    return g;
}

double lr_at(int epoch, const TrainConfig& c) {
    if (epoch < 1 || epoch > c.total_epochs)
        throw ParameterError("lr_at: epoch " + std::to_string(epoch) +
                             " outside 1.." + std::to_string(c.total_epochs));
    if (epoch < c.decay_start_epoch) return c.lr_initial;
    const int window = c.total_epochs - c.decay_start_epoch + 1;
    return c.lr_initial * static_cast<double>(c.total_epochs - epoch) /
           static_cast<double>(window);
}

void flip_patch(std::vector<float>& values, int size, int axis) {
    const int s = size;
    auto idx = [s](int x, int y, int z) {
        return static_cast<std::size_t>((z * s + y) * s + x);
    };
    for (int z = 0; z < s; ++z)
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                const int fx = axis == 0 ? s - 1 - x : x;
                const int fy = axis == 1 ? s - 1 - y : y;
                const int fz = axis == 2 ? s - 1 - z : z;
                const bool lower = axis == 0 ? x < s - 1 - x
                                             : (axis == 1 ? y < s - 1 - y
                                                          : z < s - 1 - z);
                if (lower) std::swap(values[idx(x, y, z)], values[idx(fx, fy, fz)]);
            }
}

void flip_patch(std::vector<std::uint8_t>& values, int size, int axis) {
    std::vector<float> tmp(values.begin(), values.end());
    flip_patch(tmp, size, axis);
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = static_cast<std::uint8_t>(tmp[i]);
}

void augment_pair(std::vector<float>& ct, std::vector<float>& pet,
                  std::vector<std::uint8_t>& mask, int size,
                  const AugmentOptions& opts, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double ax = 0.0, ay = 0.0, az = 0.0;
    if (opts.rotate) {
        std::uniform_real_distribution<double> angle(-opts.max_rotation_deg,
                                                     opts.max_rotation_deg);
        ax = angle(rng);
        ay = angle(rng);
        az = angle(rng);
    }
    if (ax != 0.0 || ay != 0.0 || az != 0.0)
        rotate_patch_triple(ct, pet, mask, size, ax, ay, az);
    if (opts.flips) {
        std::bernoulli_distribution coin(0.5);
        for (int axis = 0; axis < 3; ++axis)
            if (coin(rng)) {
                flip_patch(ct, size, axis);
                flip_patch(pet, size, axis);
                flip_patch(mask, size, axis);
            }
    }
    if (opts.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, opts.noise_sigma);
        for (float& v : ct)
            v = static_cast<float>(
                std::clamp(static_cast<double>(v) + noise(rng), 0.0, 1.0));
    }
}

TrainingSet build_training_set(const std::vector<PatientRecord>& patients,
                               int scope, int patch_size) {
    TrainingSet set;
    set.scope = scope;
    for (const auto& p : patients) {
        if (p.split == Split::Test) continue;
        ScopedPatient sp;
        sp.patient_id = p.patient_id;
        DistrictBundle b;
        if (scope == kWholeBody) {
            b.district_id = kWholeBody;
            b.ct = p.ct;
            b.pet = p.pet;
            b.mask = body_mask(p.district_mask);
        } else {
            auto bundles = extract_bundles(p);
            b = std::move(bundles[static_cast<std::size_t>(scope - 1)]);
        }
        auto [ct_padded, rec] = pad_to_min(b.ct, patch_size);
        sp.pad = rec;
        b.ct = std::move(ct_padded);
        if (b.pet) b.pet = pad_to_min(*b.pet, patch_size).first;
        b.mask = pad_to_min(b.mask, patch_size).first;
        sp.bundle = std::move(b);
        (p.split == Split::Train ? set.train : set.val).push_back(std::move(sp));
    }
    return set;
}

TrainResult train_model(int scope, Arch arch, const TrainingSet& data,
                        const TrainConfig& c, const std::string& out_dir,
                        ModelBundle* resume) {
    c.validate();
    if (data.train.empty())
        throw ConfigError("train_model: training split is empty");
    if (data.scope != scope)
        throw OrchestrationError("train_model: training set was built for scope '" +
                                 std::string(district_name(data.scope)) + "'");

    TrainResult result;
    if (resume) {
        if (resume->scope != scope || resume->arch != arch)
            throw CheckpointError("train_model: resume checkpoint scope/arch differ");
        result.model = std::move(*resume);
    } else {
        result.model = make_model_bundle(arch, scope, c.generator_config(),
                                         c.disc_levels, c.disc_base_channels,
                                         c.seed);
    }
    ModelBundle& model = result.model;

    const int patches_per_epoch =
        c.patches_per_epoch > 0
            ? c.patches_per_epoch
            : 64 * static_cast<int>(data.train.size());

    namespace fs = std::filesystem;
    std::ofstream log_file;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        result.log_path = (fs::path(out_dir) / "log.csv").string();
        const bool append = resume != nullptr && fs::exists(result.log_path);
        log_file.open(result.log_path,
                      append ? std::ios::app : std::ios::trunc);
        if (!log_file) throw IoError("cannot write '" + result.log_path + "'");
        if (!append) log_file << "epoch,step,loss_G,loss_D,l1,lr,grad_norm\n";
        result.best_ckpt_path = (fs::path(out_dir) / "best.ckpt").string();
        result.final_ckpt_path = (fs::path(out_dir) / "final.ckpt").string();
    }

    std::optional<Pix2PixTrainer> p2p;
    std::optional<CycleGanTrainer> cyc;
    if (arch == Arch::Pix2Pix)
        p2p.emplace(model, c);
    else
        cyc.emplace(model, c);

    result.best_val_mae = std::numeric_limits<double>::infinity();
    const int start_epoch = model.epoch + 1;
    int global_step = model.epoch * patches_per_epoch;
    char buf[160];
    for (int epoch = start_epoch; epoch <= c.total_epochs; ++epoch) {
        const double lr = lr_at(epoch, c);
        for (int step = 1; step <= patches_per_epoch; ++step) {
            ++global_step;
            const std::uint64_t step_seed =
                mix_seed(c.seed, static_cast<std::uint64_t>(epoch),
                         static_cast<std::uint64_t>(step));
            std::mt19937_64 pick_rng(step_seed);
            std::uniform_int_distribution<std::size_t> pick(0, data.train.size() - 1);

            const ScopedPatient& px = data.train[pick(pick_rng)];
            auto xs = sample_training_patches(px.bundle, 1,
                                              c.min_in_district_fraction,
                                              mix_seed(step_seed, 1, 0),
                                              c.patch_size);
            PatchPair pair = std::move(xs[0]);
            if (arch == Arch::CycleGan) {
                // Unpaired pools: PET patch drawn from an independent patient.
                const ScopedPatient& py = data.train[pick(pick_rng)];
                auto ys = sample_training_patches(py.bundle, 1,
                                                  c.min_in_district_fraction,
                                                  mix_seed(step_seed, 2, 0),
                                                  c.patch_size);
                pair.pet = std::move(ys[0].pet);
            }
            augment_pair(pair.ct, pair.pet, pair.mask, c.patch_size, c.augment,
                         mix_seed(step_seed, 3, 0));

            const auto x = patch_to_tensor(pair.ct, c.patch_size);
            const auto y = patch_to_tensor(pair.pet, c.patch_size);
            StepLosses losses;
            try {
                losses = arch == Arch::Pix2Pix ? p2p->step(x, y, lr)
                                               : cyc->step(x, y, lr);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at global step " +
                                   std::to_string(global_step));
            }
            ++result.steps_g;
            ++result.steps_d;
            result.log.push_back({epoch, global_step, losses.loss_g, losses.loss_d,
                                  losses.l1, lr, losses.grad_norm_g});
            if (log_file) {
                std::snprintf(buf, sizeof(buf), "%d,%d,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                              epoch, global_step, losses.loss_g, losses.loss_d,
                              losses.l1, lr, losses.grad_norm_g);
                log_file << buf;
            }
        }

        model.epoch = epoch;
        if (epoch % c.val_interval_epochs == 0 || epoch == c.total_epochs) {
            const double val = validation_mae(model, data);
            if (std::isfinite(val)) {
                result.val_history.emplace_back(epoch, val);
                if (val < result.best_val_mae) {
                    result.best_val_mae = val;
                    result.best_epoch = epoch;
                    if (!result.best_ckpt_path.empty())
                        save_checkpoint(model, result.best_ckpt_path);
                }
            }
        }
    }

    if (!result.final_ckpt_path.empty()) {
        save_checkpoint(model, result.final_ckpt_path);
        // No validation signal at all: fall back to the final weights.
        if (!fs::exists(result.best_ckpt_path))
            save_checkpoint(model, result.best_ckpt_path);
    }
    return result;
}

}  // namespace vbody
