#include "vbody/cli.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <atomic>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "vbody/config.hpp"
#include "vbody/dataset.hpp"
#include "vbody/districts.hpp"
#include "vbody/evaluation.hpp"
#include "vbody/inference.hpp"
#include "vbody/models.hpp"
#include "vbody/phantom.hpp"
#include "vbody/preprocess.hpp"
#include "vbody/training.hpp"

namespace vbody {

namespace {

namespace fs = std::filesystem;

KeyValueConfig load_config(const std::string& path) {
    if (path.empty()) return KeyValueConfig::from_string("");
    return KeyValueConfig::from_file(path);
}

std::vector<PatientRecord> load_split(const std::string& manifest_path,
                                      std::optional<Split> split) {
    const std::string root = fs::path(manifest_path).parent_path().string();
    std::vector<PatientRecord> out;
    for (const auto& e : read_manifest(manifest_path))
        if (!split || e.split == *split) out.push_back(load_patient(e, root));
    return out;
}

int cmd_phantom(const std::string& config_path, const std::string& out_dir,
                int patients_override, std::int64_t seed_override) {
    const KeyValueConfig kv = load_config(config_path);
    PhantomConfig pc = phantom_config_from(kv);
    if (seed_override >= 0) pc.seed = static_cast<std::uint64_t>(seed_override);
    const SplitFractions fractions = split_fractions_from(kv);
    const int n = patients_override > 0 ? patients_override
                                        : kv.get_int("phantom.patients", 10);
    const auto records = phantom_dataset_records(pc, n, fractions);
    const std::string manifest = write_dataset(records, out_dir);
    std::array<int, 3> counts{0, 0, 0};
    for (const auto& r : records) ++counts[static_cast<int>(r.split)];
    std::cout << "manifest: " << manifest << "\n"
              << "patients: " << n << " (train " << counts[0] << ", val "
              << counts[1] << ", test " << counts[2] << ")\n";
    return 0;
}

std::string lineage_dir(const std::string& out_dir, int scope, Arch arch) {
    return (fs::path(out_dir) /
            (std::string(district_name(scope)) + "_" + to_string(arch)))
        .string();
}

void train_one(int scope, Arch arch, const std::vector<PatientRecord>& patients,
               const TrainConfig& cfg, const std::string& out_dir, bool resume) {
    const std::string dir = lineage_dir(out_dir, scope, arch);
    const std::string final_path = (fs::path(dir) / "final.ckpt").string();
    std::optional<ModelBundle> resume_bundle;
    if (fs::exists(final_path)) {
        if (!resume)
            throw ConfigError("checkpoint lineage '" + dir +
                              "' already exists; pass --resume to continue");
        resume_bundle = load_checkpoint(final_path);
        if (resume_bundle->epoch >= cfg.total_epochs) {
            std::cout << district_name(scope) << "/" << to_string(arch)
                      << ": already trained to epoch " << resume_bundle->epoch
                      << "\n";
            return;
        }
    }
    const TrainingSet set = build_training_set(patients, scope, cfg.patch_size);
    const TrainResult result =
        train_model(scope, arch, set, cfg, dir,
                    resume_bundle ? &*resume_bundle : nullptr);
    std::cout << district_name(scope) << "/" << to_string(arch) << ": "
              << result.steps_g << " steps, best val MAE ";
    if (std::isfinite(result.best_val_mae))
        std::cout << result.best_val_mae << " at epoch " << result.best_epoch;
    else
        std::cout << "n/a";
    std::cout << ", checkpoints in " << dir << "\n";
}

int cmd_train(const std::string& manifest, const std::string& scope_name,
              const std::string& arch_name, const std::string& config_path,
              const std::string& out_dir, bool resume, int epochs_override,
              int ppe_override, std::int64_t seed_override, int jobs) {
    const KeyValueConfig kv = load_config(config_path);
    TrainConfig cfg = train_config_from(kv);
    if (epochs_override > 0) {
        cfg.total_epochs = epochs_override;
        if (cfg.decay_start_epoch > cfg.total_epochs)
            cfg.decay_start_epoch = cfg.total_epochs -
                                    cfg.total_epochs / 3 + 1;
    }
    if (ppe_override > 0) cfg.patches_per_epoch = ppe_override;
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    const Arch arch = arch_from_string(arch_name);
    const auto patients = load_split(manifest, std::nullopt);
    bool has_train = false;
    for (const auto& p : patients) has_train |= p.split == Split::Train;
    if (!has_train) throw ConfigError("manifest has no TRAIN split patients");

    if (scope_name != "all") {
        train_one(district_from_name(scope_name), arch, patients, cfg, out_dir,
                  resume);
        return 0;
    }
    const std::vector<int> scopes{1, 2, 3, 4, kWholeBody};
    if (jobs <= 1) {
        for (int scope : scopes)
            train_one(scope, arch, patients, cfg, out_dir, resume);
        return 0;
    }
    // The five lineages are independent; run them on a small worker pool.
    // Logs interleave, which is why sequential stays the default.
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(scopes.size());
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= scopes.size()) return;
            try {
                train_one(scopes[i], arch, patients, cfg, out_dir, resume);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min<int>(jobs, static_cast<int>(scopes.size())); ++t)
        pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return 0;
}

ModelBundle load_lineage(const std::string& models_dir, int scope, Arch arch,
                         const std::string& which) {
    const fs::path dir = lineage_dir(models_dir, scope, arch);
    const fs::path path = dir / (which + ".ckpt");
    if (!fs::exists(path))
        throw OrchestrationError("missing checkpoint for scope '" +
                                 std::string(district_name(scope)) + "': " +
                                 path.string());
    return load_checkpoint(path.string());
}

int cmd_translate(const std::string& manifest, const std::string& models_dir,
                  const std::string& method, const std::string& arch_name,
                  const std::string& out_dir, const std::string& which) {
    const Arch arch = arch_from_string(arch_name);
    fs::create_directories(out_dir);

    std::vector<ModelBundle> district_models;
    std::optional<ModelBundle> wholebody;
    if (method == "proposed") {
        for (int scope = 1; scope <= kNumDistricts; ++scope)
            district_models.push_back(load_lineage(models_dir, scope, arch, which));
    } else if (method == "competitor") {
        wholebody = load_lineage(models_dir, kWholeBody, arch, which);
    } else {
        throw ParameterError("method must be 'proposed' or 'competitor', got '" +
                             method + "'");
    }

    const auto patients = load_split(manifest, Split::Test);
    if (patients.empty()) throw ConfigError("manifest has no TEST split patients");
    for (const auto& p : patients) {
        Volume pred;
        if (method == "proposed") {
            std::array<const ModelBundle*, 4> models{};
            for (int i = 0; i < 4; ++i)
                models[static_cast<std::size_t>(i)] =
                    &district_models[static_cast<std::size_t>(i)];
            pred = translate_patient(models, p);
        } else {
            pred = translate_patient_wholebody(*wholebody, p);
        }
        pred.spacing = p.ct.spacing;
        pred.origin = p.ct.origin;
        const std::string path =
            (fs::path(out_dir) / (p.patient_id + "_synth.vvol")).string();
        write_volume(pred, path);
        std::cout << p.patient_id << " -> " << path << "\n";
    }

    nlohmann::ordered_json meta;
    meta["method"] = method;
    meta["arch"] = to_string(arch);
    meta["checkpoint"] = which;
    std::ofstream mf((fs::path(out_dir) / "predictions.json").string(),
                     std::ios::trunc);
    mf << meta.dump(2) << "\n";
    return 0;
}

struct PredDirInfo {
    std::string dir;
    std::string method;
    Arch arch = Arch::Pix2Pix;
};

PredDirInfo pred_dir_info(const std::string& dir) {
    PredDirInfo info;
    info.dir = dir;
    info.method = fs::path(dir).filename().string();
    const fs::path meta_path = fs::path(dir) / "predictions.json";
    if (fs::exists(meta_path)) {
        std::ifstream f(meta_path.string());
        nlohmann::json meta;
        f >> meta;
        info.method = meta.value("method", info.method);
        if (meta.contains("arch"))
            info.arch = arch_from_string(meta["arch"].get<std::string>());
    }
    return info;
}

int cmd_evaluate(const std::string& manifest,
                 const std::vector<std::string>& pred_dirs,
                 const std::string& out_dir) {
    const auto patients = load_split(manifest, Split::Test);
    if (patients.empty()) throw ReportError("manifest has no TEST split patients");

    std::vector<MetricRecord> records;
    // per (pred dir, metric, scope): patient -> value, for pairwise tests
    std::vector<PredDirInfo> infos;
    for (const auto& dir : pred_dirs) infos.push_back(pred_dir_info(dir));

    for (const auto& info : infos) {
        for (const auto& p : patients) {
            const std::string path =
                (fs::path(info.dir) / (p.patient_id + "_synth.vvol")).string();
            if (!fs::exists(path))
                throw ReportError("missing prediction for patient '" +
                                  p.patient_id + "' in '" + info.dir + "'");
            const Volume pred = read_volume(path);
            for (auto& r : evaluate_patient(pred, p, info.method, info.arch))
                records.push_back(std::move(r));
        }
    }

    std::vector<TTestResult> tests;
    const std::array<const char*, 3> metric_names{"mae", "psnr", "ssim"};
    for (std::size_t a = 0; a + 1 < infos.size(); ++a)
        for (std::size_t b = a + 1; b < infos.size(); ++b) {
            std::vector<std::string> scopes;
            for (const auto& r : records)
                if (std::find(scopes.begin(), scopes.end(), r.scope) == scopes.end())
                    scopes.push_back(r.scope);
            for (const auto& scope : scopes)
                for (int mi = 0; mi < 3; ++mi) {
                    std::map<std::string, double> va, vb;
                    for (const auto& r : records) {
                        if (r.scope != scope) continue;
                        const double v = mi == 0 ? r.mae : (mi == 1 ? r.psnr : r.ssim);
                        if (!std::isfinite(v)) continue;
                        if (r.method == infos[a].method && r.arch == infos[a].arch)
                            va[r.patient_id] = v;
                        else if (r.method == infos[b].method &&
                                 r.arch == infos[b].arch)
                            vb[r.patient_id] = v;
                    }
                    std::vector<double> xs, ys;
                    for (const auto& [pid, v] : va) {
                        const auto it = vb.find(pid);
                        if (it != vb.end()) {
                            xs.push_back(v);
                            ys.push_back(it->second);
                        }
                    }
                    if (xs.size() < 2) continue;
                    const auto [t, pval] = paired_ttest(xs, ys);
                    TTestResult res;
                    res.metric = metric_names[static_cast<std::size_t>(mi)];
                    res.group = scope;
                    res.method_a = infos[a].method;
                    res.method_b = infos[b].method;
                    res.n = static_cast<int>(xs.size());
                    res.t = t;
                    res.p = pval;
                    double ma = 0, mb = 0;
                    for (double v : xs) ma += v;
                    for (double v : ys) mb += v;
                    res.mean_a = ma / xs.size();
                    res.mean_b = mb / ys.size();
                    tests.push_back(std::move(res));
                }
        }

    emit_report(records, tests, out_dir);
    std::cout << "report tables written to " << out_dir << "\n";
    return 0;
}

int cmd_preprocess(const std::string& manifest_path, const std::string& out_dir,
                   const std::string& label_map_path) {
    // Input manifest: JSON lines with patient_id, ct (HU), pet (Bq/mL),
    // district_labels (raw integer labels), optional lesion_mask, optional
    // rigid (12 numbers, row-major rotation then translation), SUV params,
    // condition, split. NIfTI (.nii) and .vvol inputs are accepted.
    std::ifstream f(manifest_path);
    if (!f) throw IoError("cannot open manifest '" + manifest_path + "'");
    const std::string root = fs::path(manifest_path).parent_path().string();
    std::optional<LabelCollapseMap> label_map;
    if (!label_map_path.empty())
        label_map = LabelCollapseMap::from_file(label_map_path);

    auto read_any = [&](const std::string& rel, Modality m, IntensityUnit u) {
        const std::string path = (fs::path(root) / rel).string();
        if (rel.size() >= 4 && rel.compare(rel.size() - 4, 4, ".nii") == 0)
            return import_nifti(path, m, u);
        Volume v = read_volume(path);
        v.modality = m;
        v.unit = u;
        return v;
    };

    std::vector<ManifestEntry> out_entries;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest '" + manifest_path + "' line " +
                              std::to_string(lineno) + ": " + e.what());
        }
        PatientRecord p;
        p.patient_id = j.at("patient_id").get<std::string>();
        p.condition = condition_from_string(j.value("condition",
                                                    "NEGATIVE_CONTROL"));
        p.split = split_from_string(j.value("split", "TEST"));
        p.body_weight_kg = j.at("body_weight_kg").get<double>();
        p.injected_dose_bq = j.at("injected_dose_bq").get<double>();

        Volume ct = read_any(j.at("ct").get<std::string>(), Modality::CT,
                             IntensityUnit::HU);
        Volume pet = read_any(j.at("pet").get<std::string>(), Modality::PET,
                              IntensityUnit::BqPerMl);

        // CT onto the PET grid; optional rigid correction on top.
        const GridSpec pet_grid = GridSpec::of(pet);
        if (j.contains("rigid")) {
            const auto nums = j["rigid"].get<std::vector<double>>();
            if (nums.size() != 12)
                throw FormatError("manifest line " + std::to_string(lineno) +
                                  ": rigid must hold 12 numbers");
            RigidTransform t;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    t.rotation[r][c] = nums[static_cast<std::size_t>(3 * r + c)];
            t.translation = {nums[9], nums[10], nums[11]};
            ct = apply_rigid(ct, t, pet_grid);
        } else {
            ct = resample_trilinear(ct, pet_grid);
        }

        p.ct = normalize_ct(ct);
        p.pet = clamp_normalize_pet(
            suv_convert(pet, {p.body_weight_kg, p.injected_dose_bq}));

        const std::string labels_rel = j.at("district_labels").get<std::string>();
        Volume labels_vol = read_any(labels_rel, Modality::Labels,
                                     IntensityUnit::Label);
        if (label_map) {
            RawLabelVolume raw;
            raw.dims = labels_vol.dims;
            raw.labels.resize(labels_vol.data.size());
            for (std::size_t i = 0; i < labels_vol.data.size(); ++i)
                raw.labels[i] =
                    static_cast<std::int32_t>(std::lround(labels_vol.data[i]));
            p.district_mask = collapse_labels(raw, *label_map);
        } else {
            p.district_mask = district_mask_from_volume(labels_vol);
        }
        if (p.district_mask.dims != p.ct.dims)
            throw ShapeError("patient '" + p.patient_id +
                             "': district labels grid differs from the PET grid");
        if (j.contains("lesion_mask") && !j["lesion_mask"].get<std::string>().empty())
            p.lesion_mask = binary_mask_from_volume(
                read_any(j["lesion_mask"].get<std::string>(), Modality::Labels,
                         IntensityUnit::Label),
                kWholeBody);
        out_entries.push_back(write_patient(p, out_dir));
        std::cout << p.patient_id << ": preprocessed\n";
    }
    const std::string manifest_out =
        (fs::path(out_dir) / "manifest.jsonl").string();
    write_manifest(out_entries, manifest_out);
    std::cout << "manifest: " << manifest_out << "\n";
    return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{"District-specific CT-to-PET synthesis pipeline"};
    app.require_subcommand(1);

    // phantom
    auto* phantom = app.add_subcommand("phantom", "Generate a synthetic dataset");
    std::string ph_config, ph_out;
    int ph_patients = 0;
    std::int64_t ph_seed = -1;
    phantom->add_option("--config", ph_config, "key = value config file");
    phantom->add_option("--out", ph_out, "output dataset directory")->required();
    phantom->add_option("--patients", ph_patients, "number of patients");
    phantom->add_option("--seed", ph_seed, "phantom seed override");

    // preprocess
    auto* preprocess =
        app.add_subcommand("preprocess", "Align and normalize raw CT/PET pairs");
    std::string pre_manifest, pre_out, pre_label_map;
    preprocess->add_option("--manifest", pre_manifest, "raw input manifest")
        ->required();
    preprocess->add_option("--out", pre_out, "output dataset directory")
        ->required();
    preprocess->add_option("--label-map", pre_label_map,
                           "label collapse map (source_label = district_id)");

    // train
    auto* train = app.add_subcommand("train", "Train district or whole-body models");
    std::string tr_manifest, tr_scope = "all", tr_arch = "pix2pix", tr_config,
                tr_out;
    bool tr_resume = false;
    int tr_epochs = 0, tr_ppe = 0;
    std::int64_t tr_seed = -1;
    train->add_option("--manifest", tr_manifest, "dataset manifest")->required();
    train->add_option("--scope", tr_scope,
                      "head|trunk|arms|legs|whole_body|all");
    train->add_option("--arch", tr_arch, "pix2pix|cyclegan");
    train->add_option("--config", tr_config, "key = value config file");
    train->add_option("--out", tr_out, "checkpoint directory")->required();
    train->add_flag("--resume", tr_resume, "continue an existing lineage");
    train->add_option("--epochs", tr_epochs, "override train.epochs");
    train->add_option("--patches-per-epoch", tr_ppe,
                      "override train.patches_per_epoch");
    train->add_option("--seed", tr_seed, "override train.seed");
    int tr_jobs = 1;
    train->add_option("--jobs", tr_jobs, "concurrent lineages for --scope all");

    // translate
    auto* translate =
        app.add_subcommand("translate", "Synthesize PET for the test split");
    std::string xl_manifest, xl_models, xl_method = "proposed",
                xl_arch = "pix2pix", xl_out, xl_which = "best";
    translate->add_option("--manifest", xl_manifest, "dataset manifest")
        ->required();
    translate->add_option("--models", xl_models, "checkpoint directory")
        ->required();
    translate->add_option("--method", xl_method, "proposed|competitor");
    translate->add_option("--arch", xl_arch, "pix2pix|cyclegan");
    translate->add_option("--out", xl_out, "prediction output directory")
        ->required();
    translate->add_option("--checkpoint", xl_which, "best|final");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions");
    std::string ev_manifest, ev_out;
    std::vector<std::string> ev_pred;
    evaluate->add_option("--manifest", ev_manifest, "dataset manifest")
        ->required();
    evaluate->add_option("--pred", ev_pred, "prediction directory (repeatable)")
        ->required();
    evaluate->add_option("--out", ev_out, "report output directory")->required();

    std::vector<const char*> argv;
    argv.push_back("vbody");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()),
                  const_cast<char**>(argv.data()));
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() != 0)
            std::cerr << "vbody: error: usage: " << e.what() << "\n";
        else
            std::cout << app.help();
        return e.get_exit_code();
    }

    try {
        if (phantom->parsed())
            return cmd_phantom(ph_config, ph_out, ph_patients, ph_seed);
        if (preprocess->parsed())
            return cmd_preprocess(pre_manifest, pre_out, pre_label_map);
        if (train->parsed())
            return cmd_train(tr_manifest, tr_scope, tr_arch, tr_config, tr_out,
                             tr_resume, tr_epochs, tr_ppe, tr_seed, tr_jobs);
        if (translate->parsed())
            return cmd_translate(xl_manifest, xl_models, xl_method, xl_arch,
                                 xl_out, xl_which);
        if (evaluate->parsed())
            return cmd_evaluate(ev_manifest, ev_pred, ev_out);
    } catch (const Error& e) {
        std::cerr << "vbody: error: " << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "vbody: error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace vbody
