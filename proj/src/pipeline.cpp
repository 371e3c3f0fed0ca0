#include "evlab/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "evlab/manipulation.hpp"
#include "evlab/selection.hpp"

namespace evlab {

using nlohmann::json;
namespace fs = std::filesystem;

ShapConfig Experiment::shap_config() const {
    ShapConfig cfg = config.shap;
    cfg.seed = derive_seed(config.master_seed, seed_stream::attack);
    return cfg;
}

std::vector<NamedModel> Experiment::named_models() const {
    std::vector<NamedModel> out;
    for (std::size_t i = 0; i < models.size(); ++i) {
        out.push_back(NamedModel{model_names[i], models[i].get()});
    }
    return out;
}

Experiment load_or_generate_dataset(const ExperimentConfig& config) {
    Experiment exp;
    exp.config = config;
    if (config.synth.has_value()) {
        SynthOutput out = generate_synthetic(*config.synth);
        exp.data = std::move(out.dataset);
        exp.samples = std::move(out.samples);
    } else {
        exp.data = load_csv(config.dataset_csv);
        // Reconstruct the problem-space view from the feature rows: every set
        // bit becomes a live token.
        exp.samples.resize(exp.data.size());
        for (std::size_t i = 0; i < exp.data.size(); ++i) {
            exp.samples[i].sample_id = exp.data.matrix.sample_ids[i];
            for (std::size_t f = 0; f < exp.data.matrix.n_features(); ++f) {
                if (exp.data.matrix.rows[i][f]) {
                    exp.samples[i].live_tokens.push_back(exp.data.matrix.specs[f].name);
                }
            }
        }
    }
    assign_splits(exp.data, config.split_ratios, config.master_seed);
    return exp;
}

void train_models(Experiment& exp) {
    exp.models.clear();
    exp.model_names.clear();
    exp.fits.clear();
    for (std::size_t i = 0; i < exp.config.models.size(); ++i) {
        const ModelConfig& mc = exp.config.models[i];
        FitResult fit = fit_detector(mc.kind, mc.hyperparams, exp.data, exp.model_seed(i));
        exp.model_names.push_back(mc.name);
        exp.models.push_back(std::move(fit.model));
        exp.fits.push_back(std::move(fit));
    }
}

json HardeningReport::to_json() const {
    json rows_j = json::array();
    for (const HardeningRow& r : rows) {
        rows_j.push_back(json{{"k", r.k},
                              {"amm_seed_detection", r.amm_seed_detection},
                              {"amm_adv_detection", r.amm_adv_detection},
                              {"sage_seed_detection", r.sage_seed_detection},
                              {"sage_adv_detection", r.sage_adv_detection}});
    }
    return json{{"format", "evlab-hardening/1"},
                {"base_model", base_model},
                {"config_digest", config_digest},
                {"base_seed_detection", base_seed_detection},
                {"base_adv_detection", base_adv_detection},
                {"n_evading", n_evading},
                {"amm_ranking", amm_ranking},
                {"sage_ranking", sage_ranking},
                {"rows", std::move(rows_j)}};
}

HardeningReport hardening_eval(const Experiment& exp, std::size_t base_index) {
    const Detector& base = *exp.models[base_index];
    const LabeledDataset& data = exp.data;
    ShapConfig shap_cfg = exp.shap_config();
    shap_cfg.seed = derive_seed(shap_cfg.seed, base_index + 1);

    // AMM ranking from the first-iteration AMM vector of the base model.
    std::vector<BoolRow> shap_rows;
    for (std::size_t i :
         sample_row_subset(data.indices_of(Split::train), shap_cfg.row_limit, shap_cfg.seed)) {
        shap_rows.push_back(data.matrix.rows[i]);
    }
    Background bg = Background::sample_train(data, shap_cfg.background_size, shap_cfg.seed);
    ShapMatrix shap = shap_matrix_rows(base, shap_rows, bg, shap_cfg);
    AmmVectors amm = amm_vectors_full(shap);
    std::vector<int> amm_ranking(amm.amm.size());
    for (std::size_t f = 0; f < amm.amm.size(); ++f) amm_ranking[f] = static_cast<int>(f);
    std::stable_sort(amm_ranking.begin(), amm_ranking.end(), [&](int a, int b) {
        return amm.amm[static_cast<std::size_t>(a)] > amm.amm[static_cast<std::size_t>(b)];
    });

    // SAGE ranking on a capped validation subset.
    SageConfig sage_cfg;
    sage_cfg.loss = exp.config.sage.loss;
    sage_cfg.n_permutations = exp.config.sage.n_permutations;
    sage_cfg.n_marginal_draws = exp.config.sage.n_marginal_draws;
    sage_cfg.seed = derive_seed(exp.config.master_seed, seed_stream::sage);
    std::vector<BoolRow> sage_rows;
    std::vector<int> sage_labels;
    for (std::size_t i : sample_row_subset(data.indices_of(Split::val),
                                           exp.config.sage.row_limit, sage_cfg.seed)) {
        sage_rows.push_back(data.matrix.rows[i]);
        sage_labels.push_back(data.labels[i]);
    }
    SageReport sage = sage_values(base, sage_rows, sage_labels, bg, sage_cfg);

    // Base-model AMM attack on the malicious test set; hardened models are
    // judged on the samples that actually evaded the base model.
    FeaturePatch patch = amm_select_core(shap, shap_rows, data.matrix.specs, exp.config.attack_n,
                                         PatchMode::problem_space);
    std::vector<BoolRow> seed_rows, adv_rows, evading_rows;
    for (std::size_t i : data.indices_of(Split::test, 1)) {
        AdversarialPair pair = build_adversarial(exp.samples[i], patch, data.matrix.specs);
        if (!verify_functionality(pair)) {
            throw error("hardening_eval: functionality verification failed for " +
                        exp.samples[i].sample_id);
        }
        seed_rows.push_back(data.matrix.rows[i]);
        adv_rows.push_back(vectorize(pair.adversarial, data.matrix.specs));
        if (base.predict(adv_rows.back()).label == 0) evading_rows.push_back(adv_rows.back());
    }

    HardeningReport report;
    report.base_model = exp.model_names[base_index];
    report.base_seed_detection = detection_rate(base, seed_rows);
    report.base_adv_detection = detection_rate(base, adv_rows);
    report.n_evading = evading_rows.size();
    report.amm_ranking = amm_ranking;
    report.sage_ranking = sage.ranking();

    const ModelConfig& mc = exp.config.models[base_index];
    for (std::size_t k : exp.config.sage.k_list) {
        ImprovedDetector m_a = exclude_and_retrain(data, amm_ranking, k, mc.kind, mc.hyperparams,
                                                   derive_seed(exp.model_seed(base_index), k));
        ImprovedDetector m_i = exclude_and_retrain(data, report.sage_ranking, k, mc.kind,
                                                   mc.hyperparams,
                                                   derive_seed(exp.model_seed(base_index), k + 500));
        HardeningRow row;
        row.k = k;
        row.amm_seed_detection = detection_rate(*m_a.model, seed_rows);
        row.sage_seed_detection = detection_rate(*m_i.model, seed_rows);
        if (!evading_rows.empty()) {
            row.amm_adv_detection = detection_rate(*m_a.model, evading_rows);
            row.sage_adv_detection = detection_rate(*m_i.model, evading_rows);
        }
        report.rows.push_back(row);
    }
    return report;
}

namespace {

void write_json_artifact(const json& j, const std::string& path,
                         std::vector<std::string>& artifacts) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw error("failed writing '" + path + "'");
    artifacts.push_back(path);
}

}  // namespace

ReproResult run_repro(const ExperimentConfig& config, const std::string& out_dir,
                      const EmitFormats& formats, bool force) {
    const std::string config_hash = config.digest();
    const std::string manifest_path = out_dir + "/manifest.json";
    if (fs::exists(manifest_path) && !force) {
        std::ifstream in(manifest_path, std::ios::binary);
        json old = json::parse(in, nullptr, false);
        if (!old.is_discarded() && old.contains("config_hash") &&
            old.at("config_hash").get<std::string>() != config_hash) {
            throw error("output directory '" + out_dir +
                        "' holds artifacts for a different config hash (" +
                        old.at("config_hash").get<std::string>() + " != " + config_hash +
                        "); pass --force to overwrite");
        }
    }
    fs::create_directories(out_dir);
    ReproResult result;

    // dataset
    Experiment exp = load_or_generate_dataset(config);
    save_csv(exp.data, out_dir + "/dataset.csv");
    result.artifacts.push_back(out_dir + "/dataset.csv");
    result.artifacts.push_back(out_dir + "/dataset.csv.specs.json");
    fs::create_directories(out_dir + "/samples");
    for (const ProblemSample& s : exp.samples) {
        save_samp(s, out_dir + "/samples/" + s.sample_id + ".samp");
    }
    result.artifacts.push_back(out_dir + "/samples");

    // models
    train_models(exp);
    fs::create_directories(out_dir + "/models");
    json accuracy_table = json::array();
    for (std::size_t i = 0; i < exp.models.size(); ++i) {
        const std::string path = out_dir + "/models/" + exp.model_names[i] + ".model.json";
        save_model(*exp.models[i], path);
        result.artifacts.push_back(path);
        accuracy_table.push_back(json{{"model", exp.model_names[i]},
                                      {"kind", kind_name(exp.models[i]->kind())},
                                      {"train_accuracy", exp.fits[i].train_accuracy},
                                      {"val_accuracy", exp.fits[i].val_accuracy},
                                      {"test_accuracy", accuracy(*exp.models[i], exp.data, Split::test)},
                                      {"final_loss", exp.fits[i].final_loss},
                                      {"digest", exp.models[i]->digest()}});
    }
    write_json_artifact(json{{"format", "evlab-accuracy/1"},
                             {"config_hash", config_hash},
                             {"models", accuracy_table}},
                        out_dir + "/accuracy.json", result.artifacts);

    ShapConfig shap_cfg = exp.shap_config();

    // white-box SHAP matrix + patches (first configured model)
    {
        ShapConfig cfg = shap_cfg;
        cfg.seed = derive_seed(shap_cfg.seed, 1);
        ShapMatrix shap = shap_matrix(*exp.models[0], exp.data, Split::train, cfg);
        save_shap_matrix(shap, cfg, out_dir + "/shap_train.csv");
        result.artifacts.push_back(out_dir + "/shap_train.csv");
        result.artifacts.push_back(out_dir + "/shap_train.csv.meta.json");
    }
    FeaturePatch amm_patch;
    {
        ShapConfig cfg = shap_cfg;
        cfg.seed = derive_seed(shap_cfg.seed, 1);
        amm_patch = amm_select(*exp.models[0], exp.data, Split::train, config.attack_n, cfg,
                               PatchMode::problem_space);
        amm_patch.config_digest = config_hash;
        save_patch(amm_patch, out_dir + "/patch_amm.json");
        result.artifacts.push_back(out_dir + "/patch_amm.json");
        FeaturePatch stats = stats_patch(stats_select(exp.data, Split::train, config.attack_n),
                                         exp.data.matrix.specs, PatchMode::problem_space);
        stats.config_digest = config_hash;
        save_patch(stats, out_dir + "/patch_stats.json");
        result.artifacts.push_back(out_dir + "/patch_stats.json");
    }

    // adversarial SAMP files for the white-box AMM patch
    {
        fs::create_directories(out_dir + "/adversarial");
        json deltas = json::array();
        for (std::size_t i : exp.data.indices_of(Split::test, 1)) {
            AdversarialPair pair = build_adversarial(exp.samples[i], amm_patch,
                                                     exp.data.matrix.specs);
            if (!verify_functionality(pair)) {
                throw error("repro: functionality verification failed for " +
                            exp.samples[i].sample_id);
            }
            save_samp(pair.adversarial, out_dir + "/adversarial/" + pair.adversarial.sample_id +
                                            ".samp");
            json skips = json::array();
            for (const SkippedPair& s : pair.skipped_pairs) {
                skips.push_back(json{{"feature", s.feature}, {"reason", s.reason}});
            }
            deltas.push_back(json{{"sample_id", pair.adversarial.sample_id},
                                  {"n_added", pair.feature_delta.size()},
                                  {"skipped", std::move(skips)}});
        }
        write_json_artifact(json{{"format", "evlab-attack-manifest/1"},
                                 {"config_hash", config_hash},
                                 {"patch", "patch_amm.json"},
                                 {"samples", std::move(deltas)}},
                            out_dir + "/adversarial/manifest.json", result.artifacts);
        result.artifacts.push_back(out_dir + "/adversarial");
    }

    // evaluation report
    {
        EvalReport report;
        report.config_digest = config_hash;
        report.attack_n = config.attack_n;
        std::set<AttackStrategy> strategies;
        for (const std::string& s : config.attack_strategies) {
            strategies.insert(strategy_from_name(s));
        }
        report.outcomes = run_attack_eval(exp.named_models(), exp.data, exp.samples, strategies,
                                          config.attack_n, shap_cfg);

        NamedModel first{exp.model_names[0], exp.models[0].get()};
        ShapConfig curve_cfg = shap_cfg;
        curve_cfg.seed = derive_seed(shap_cfg.seed, 1);
        report.curve_model = first.name;
        report.rate_vs_n = rate_vs_n_curve(first, exp.data, exp.samples, config.curve_n_list,
                                           config.curve_n_sets, config.curve_set_size, curve_cfg);

        std::vector<double> seed_rates, adv_rates;
        for (const AttackOutcome& o : report.outcomes) {
            if (o.strategy == "amm") {
                seed_rates.push_back(o.seed_rate);
                adv_rates.push_back(o.adversarial_rate);
            }
        }
        std::vector<std::size_t> excluded;
        report.drop_bins = drop_histogram(seed_rates, adv_rates, report.drop_bin_width, &excluded);
        for (std::size_t e : excluded) report.drop_excluded.push_back("amm:" + std::to_string(e));

        Background bg = Background::sample_train(exp.data, shap_cfg.background_size,
                                                 derive_seed(shap_cfg.seed, 1));
        std::size_t traced = 0;
        for (std::size_t i : exp.data.indices_of(Split::test, 1)) {
            if (traced >= config.n_case_traces) break;
            if (exp.models[0]->predict(exp.data.matrix.rows[i]).label != 1) continue;
            report.case_traces.push_back(case_trace(first, amm_patch, exp.samples[i],
                                                    exp.data.matrix.specs, config.attack_n, bg,
                                                    shap_cfg));
            ++traced;
        }
        for (const std::string& p : emit_report(report, out_dir, formats)) {
            result.artifacts.push_back(p);
        }
    }

    // transferability
    {
        std::vector<NamedModel> transfer_models;
        if (config.transfer_models.empty()) {
            transfer_models = exp.named_models();
        } else {
            for (const std::string& name : config.transfer_models) {
                auto it = std::find(exp.model_names.begin(), exp.model_names.end(), name);
                if (it == exp.model_names.end()) {
                    throw config_error("transfer_models: unknown model '" + name + "'");
                }
                std::size_t idx = static_cast<std::size_t>(it - exp.model_names.begin());
                transfer_models.push_back(NamedModel{name, exp.models[idx].get()});
            }
        }
        if (transfer_models.size() >= 2) {
            TransferMatrix tm = transfer_eval(transfer_models, exp.data, exp.samples,
                                              config.attack_n, config.transfer_top_k, shap_cfg);
            for (const std::string& p : emit_transfer(tm, out_dir, formats)) {
                result.artifacts.push_back(p);
            }
        }
    }

    // SAGE + hardening on the first model
    {
        HardeningReport hr = hardening_eval(exp, 0);
        hr.config_digest = config_hash;
        write_json_artifact(hr.to_json(), out_dir + "/hardening.json", result.artifacts);

        SageConfig sage_cfg;
        sage_cfg.loss = config.sage.loss;
        sage_cfg.n_permutations = config.sage.n_permutations;
        sage_cfg.n_marginal_draws = config.sage.n_marginal_draws;
        sage_cfg.seed = derive_seed(config.master_seed, seed_stream::sage);
        std::vector<BoolRow> rows;
        std::vector<int> labels;
        for (std::size_t i : sample_row_subset(exp.data.indices_of(Split::val),
                                               config.sage.row_limit, sage_cfg.seed)) {
            rows.push_back(exp.data.matrix.rows[i]);
            labels.push_back(exp.data.labels[i]);
        }
        Background bg = Background::sample_train(exp.data, shap_cfg.background_size,
                                                 sage_cfg.seed);
        SageReport sage = sage_values(*exp.models[0], rows, labels, bg, sage_cfg);
        sage.config_digest = config_hash;
        save_sage_report(sage, out_dir + "/sage.json");
        result.artifacts.push_back(out_dir + "/sage.json");
    }

    // run manifest
    {
        json seeds;
        seeds["dataset"] = derive_seed(config.master_seed, seed_stream::dataset);
        seeds["split"] = derive_seed(config.master_seed, seed_stream::split);
        seeds["attack"] = derive_seed(config.master_seed, seed_stream::attack);
        seeds["sage"] = derive_seed(config.master_seed, seed_stream::sage);
        for (std::size_t i = 0; i < exp.models.size(); ++i) {
            seeds["model:" + exp.model_names[i]] = exp.model_seed(i);
        }
        std::sort(result.artifacts.begin(), result.artifacts.end());
        json relative = json::array();
        for (const std::string& a : result.artifacts) {
            std::string rel = a;
            if (rel.rfind(out_dir + "/", 0) == 0) rel = rel.substr(out_dir.size() + 1);
            relative.push_back(rel);
        }
        json manifest{{"format", "evlab-manifest/1"},
                      {"tool", "evlab 1.0.0"},
                      {"config_hash", config_hash},
                      {"config", config.to_json()},
                      {"seeds", std::move(seeds)},
                      {"artifacts", std::move(relative)}};
        write_json_artifact(manifest, manifest_path, result.artifacts);
    }
    result.manifest_path = manifest_path;
    return result;
}

}  // namespace evlab
