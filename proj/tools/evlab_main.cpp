// evlab command line: chains dataset -> train -> explain -> select -> attack
// -> eval -> transfer -> sage/harden into reproducible experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "evlab/config.hpp"
#include "evlab/manipulation.hpp"
#include "evlab/pipeline.hpp"
#include "evlab/selection.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evlab;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string out_dir;
    std::string format = "json";
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool force = false;
};

ExperimentConfig load_config(const GlobalOpts& opts) {
    ExperimentConfig config =
        opts.config_path.empty() ? default_config() : ExperimentConfig::from_file(opts.config_path);
    if (opts.seed_set) {
        config.master_seed = opts.seed;
        if (config.synth.has_value()) config.synth->seed = opts.seed;
    }
    if (!opts.out_dir.empty()) config.output_dir = opts.out_dir;
    return config;
}

std::unique_ptr<Detector> load_named_model(const ExperimentConfig& config,
                                           const std::string& name) {
    const std::string path = config.output_dir + "/models/" + name + ".model.json";
    if (!fs::exists(path)) {
        throw error("model file '" + path + "' not found; run `evlab train` first");
    }
    return load_model(path);
}

int run_gen(const GlobalOpts& opts) {
    ExperimentConfig config = load_config(opts);
    Experiment exp = load_or_generate_dataset(config);
    fs::create_directories(config.output_dir);
    save_csv(exp.data, config.output_dir + "/dataset.csv");
    fs::create_directories(config.output_dir + "/samples");
    for (const ProblemSample& s : exp.samples) {
        save_samp(s, config.output_dir + "/samples/" + s.sample_id + ".samp");
    }
    std::printf("dataset: %zu samples, %zu features -> %s/dataset.csv (+ %zu SAMP files)\n",
                exp.data.size(), exp.data.matrix.n_features(), config.output_dir.c_str(),
                exp.samples.size());
    return 0;
}

int run_train(const GlobalOpts& opts) {
    ExperimentConfig config = load_config(opts);
    Experiment exp = load_or_generate_dataset(config);
    train_models(exp);
    fs::create_directories(config.output_dir + "/models");
    json table = json::array();
    for (std::size_t i = 0; i < exp.models.size(); ++i) {
        save_model(*exp.models[i],
                   config.output_dir + "/models/" + exp.model_names[i] + ".model.json");
        double test_acc = accuracy(*exp.models[i], exp.data, Split::test);
        table.push_back(json{{"model", exp.model_names[i]},
                             {"train_accuracy", exp.fits[i].train_accuracy},
                             {"val_accuracy", exp.fits[i].val_accuracy},
                             {"test_accuracy", test_acc}});
        std::printf("%-16s train %.4f  val %.4f  test %.4f\n", exp.model_names[i].c_str(),
                    exp.fits[i].train_accuracy, exp.fits[i].val_accuracy, test_acc);
    }
    json out{{"format", "evlab-accuracy/1"}, {"config_hash", config.digest()}, {"models", table}};
    std::ofstream f(config.output_dir + "/accuracy.json", std::ios::binary);
    f << out.dump(2) << '\n';
    return 0;
}

int run_explain(const GlobalOpts& opts, const std::string& model_name,
                const std::string& split_tag) {
    ExperimentConfig config = load_config(opts);
    Experiment exp = load_or_generate_dataset(config);
    std::unique_ptr<Detector> model = load_named_model(config, model_name);
    ShapConfig cfg = config.shap;
    cfg.seed = derive_seed(config.master_seed, seed_stream::attack);
    if (model->kind() == DetectorKind::linear_svm) cfg.method = AttributionMethod::linear;
    ShapMatrix m = shap_matrix(*model, exp.data, split_from_name(split_tag), cfg);
    const std::string path = config.output_dir + "/shap_" + model_name + "_" + split_tag + ".csv";
    save_shap_matrix(m, cfg, path);
    std::printf("shap matrix: %zu x %zu -> %s\n", m.n_rows(), m.n_features(), path.c_str());
    return 0;
}

int run_select(const GlobalOpts& opts, const std::string& model_name, const std::string& strategy,
               int n_pairs, const std::string& mode_name) {
    ExperimentConfig config = load_config(opts);
    if (n_pairs <= 0) n_pairs = config.attack_n;
    Experiment exp = load_or_generate_dataset(config);
    PatchMode mode = patch_mode_from_name(mode_name);
    FeaturePatch patch;
    if (strategy == "amm") {
        std::unique_ptr<Detector> model = load_named_model(config, model_name);
        ShapConfig cfg = config.shap;
        cfg.seed = derive_seed(config.master_seed, seed_stream::attack);
        if (model->kind() == DetectorKind::linear_svm) cfg.method = AttributionMethod::linear;
        patch = amm_select(*model, exp.data, Split::train, n_pairs, cfg, mode);
    } else if (strategy == "stats") {
        patch = stats_patch(stats_select(exp.data, Split::train, n_pairs), exp.data.matrix.specs,
                            mode);
    } else {
        throw config_error("unknown strategy '" + strategy + "'");
    }
    patch.config_digest = config.digest();
    const std::string path = config.output_dir + "/patch_" + strategy + "_" + model_name + ".json";
    save_patch(patch, path);
    std::printf("patch: %zu pairs (requested %d)%s -> %s\n", patch.pairs.size(), n_pairs,
                patch.truncated ? " [truncated]" : "", path.c_str());
    if (patch.truncated) {
        std::fprintf(stderr,
                     "warning: selection terminated before reaching N (rows or features "
                     "exhausted)\n");
    }
    return 0;
}

int run_attack(const GlobalOpts& opts, const std::string& patch_path,
               const std::string& samples_dir) {
    ExperimentConfig config = load_config(opts);
    Experiment exp = load_or_generate_dataset(config);
    FeaturePatch patch = load_patch(patch_path);
    const std::string dir =
        samples_dir.empty() ? config.output_dir + "/samples" : samples_dir;
    if (!fs::exists(dir)) throw error("samples directory '" + dir + "' not found");

    fs::create_directories(config.output_dir + "/adversarial");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".samp") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    json manifest_samples = json::array();
    std::size_t n_built = 0;
    for (const std::string& file : files) {
        ProblemSample sample = load_samp(file);
        AdversarialPair pair = build_adversarial(sample, patch, exp.data.matrix.specs);
        if (!verify_functionality(pair)) {
            throw error("functionality verification failed for " + sample.sample_id);
        }
        save_samp(pair.adversarial,
                  config.output_dir + "/adversarial/" + pair.adversarial.sample_id + ".samp");
        json skips = json::array();
        for (const SkippedPair& s : pair.skipped_pairs) {
            skips.push_back(json{{"feature", s.feature}, {"reason", s.reason}});
        }
        manifest_samples.push_back(json{{"sample_id", pair.adversarial.sample_id},
                                        {"n_added", pair.feature_delta.size()},
                                        {"skipped", std::move(skips)}});
        ++n_built;
    }
    json manifest{{"format", "evlab-attack-manifest/1"},
                  {"config_hash", config.digest()},
                  {"patch", patch_path},
                  {"samples", std::move(manifest_samples)}};
    std::ofstream f(config.output_dir + "/adversarial/manifest.json", std::ios::binary);
    f << manifest.dump(2) << '\n';
    std::printf("built %zu adversarial samples -> %s/adversarial\n", n_built,
                config.output_dir.c_str());
    return 0;
}

std::vector<std::unique_ptr<Detector>> load_all_models(const ExperimentConfig& config,
                                                       std::vector<std::string>& names) {
    std::vector<std::unique_ptr<Detector>> models;
    for (const ModelConfig& mc : config.models) {
        models.push_back(load_named_model(config, mc.name));
        names.push_back(mc.name);
    }
    return models;
}

int run_eval(const GlobalOpts& opts) {
    ExperimentConfig config = load_config(opts);
    Experiment exp = load_or_generate_dataset(config);
    std::vector<std::string> names;
    std::vector<std::unique_ptr<Detector>> models = load_all_models(config, names);
    std::vector<NamedModel> named;
    for (std::size_t i = 0; i < models.size(); ++i) {
        named.push_back(NamedModel{names[i], models[i].get()});
    }
    std::set<AttackStrategy> strategies;
    for (const std::string& s : config.attack_strategies) strategies.insert(strategy_from_name(s));
    ShapConfig cfg = config.shap;
    cfg.seed = derive_seed(config.master_seed, seed_stream::attack);

    EvalReport report;
    report.config_digest = config.digest();
    report.attack_n = config.attack_n;
    report.outcomes = run_attack_eval(named, exp.data, exp.samples, strategies, config.attack_n, cfg);
    for (const AttackOutcome& o : report.outcomes) {
        std::printf("%-6s %-16s seed %.4f -> adversarial %.4f (%zu samples)\n",
                    o.strategy.c_str(), o.model_name.c_str(), o.seed_rate, o.adversarial_rate,
                    o.n_samples);
    }
    std::vector<double> seed_rates, adv_rates;
    for (const AttackOutcome& o : report.outcomes) {
        if (o.strategy == "amm") {
            seed_rates.push_back(o.seed_rate);
            adv_rates.push_back(o.adversarial_rate);
        }
    }
    if (!seed_rates.empty()) {
        report.drop_bins = drop_histogram(seed_rates, adv_rates, report.drop_bin_width, nullptr);
    }
    emit_report(report, config.output_dir, formats_from_string(opts.format));
    return 0;
}

int run_transfer(const GlobalOpts& opts) {
    ExperimentConfig config = load_config(opts);
    Experiment exp = load_or_generate_dataset(config);
    std::vector<std::string> names;
    std::vector<std::unique_ptr<Detector>> models = load_all_models(config, names);
    std::vector<NamedModel> named;
    for (std::size_t i = 0; i < models.size(); ++i) {
        if (!config.transfer_models.empty() &&
            std::find(config.transfer_models.begin(), config.transfer_models.end(), names[i]) ==
                config.transfer_models.end()) {
            continue;
        }
        named.push_back(NamedModel{names[i], models[i].get()});
    }
    ShapConfig cfg = config.shap;
    cfg.seed = derive_seed(config.master_seed, seed_stream::attack);
    TransferMatrix tm = transfer_eval(named, exp.data, exp.samples, config.attack_n,
                                      config.transfer_top_k, cfg);
    for (std::size_t i = 0; i < tm.rates.size(); ++i) {
        for (std::size_t j = 0; j < tm.rates[i].size(); ++j) {
            std::printf("%s -> %s: rate %.4f (cosine %.4f)\n", tm.generator_names[i].c_str(),
                        tm.target_names[j].c_str(), tm.rates[i][j], tm.cosine[i][j]);
        }
    }
    emit_transfer(tm, config.output_dir, formats_from_string(opts.format));
    return 0;
}

int run_sage(const GlobalOpts& opts, const std::string& model_name) {
    ExperimentConfig config = load_config(opts);
    Experiment exp = load_or_generate_dataset(config);
    std::unique_ptr<Detector> model = load_named_model(config, model_name);
    SageConfig cfg;
    cfg.loss = config.sage.loss;
    cfg.n_permutations = config.sage.n_permutations;
    cfg.n_marginal_draws = config.sage.n_marginal_draws;
    cfg.seed = derive_seed(config.master_seed, seed_stream::sage);
    std::vector<BoolRow> rows;
    std::vector<int> labels;
    for (std::size_t i : sample_row_subset(exp.data.indices_of(Split::val),
                                           config.sage.row_limit, cfg.seed)) {
        rows.push_back(exp.data.matrix.rows[i]);
        labels.push_back(exp.data.labels[i]);
    }
    Background bg = Background::sample_train(exp.data, config.shap.background_size, cfg.seed);
    SageReport report = sage_values(*model, rows, labels, bg, cfg);
    report.config_digest = config.digest();
    const std::string path = config.output_dir + "/sage_" + model_name + ".json";
    save_sage_report(report, path);
    std::vector<int> ranking = report.ranking();
    std::printf("sage: v_full %.6f, top features:", report.v_full);
    for (std::size_t i = 0; i < std::min<std::size_t>(8, ranking.size()); ++i) {
        std::printf(" %d", ranking[i]);
    }
    std::printf(" -> %s\n", path.c_str());
    return 0;
}

int run_harden(const GlobalOpts& opts, const std::string& model_name, std::size_t k,
               const std::string& ranking_kind) {
    ExperimentConfig config = load_config(opts);
    Experiment exp = load_or_generate_dataset(config);

    auto it = std::find_if(config.models.begin(), config.models.end(),
                           [&](const ModelConfig& m) { return m.name == model_name; });
    if (it == config.models.end()) {
        throw config_error("model '" + model_name + "' is not in the config");
    }
    std::unique_ptr<Detector> model = load_named_model(config, model_name);

    std::vector<int> ranking;
    if (ranking_kind == "amm") {
        ShapConfig cfg = config.shap;
        cfg.seed = derive_seed(config.master_seed, seed_stream::attack);
        if (model->kind() == DetectorKind::linear_svm) cfg.method = AttributionMethod::linear;
        ShapMatrix shap = shap_matrix(*model, exp.data, Split::train, cfg);
        AmmVectors amm = amm_vectors_full(shap);
        ranking.resize(amm.amm.size());
        for (std::size_t f = 0; f < amm.amm.size(); ++f) ranking[f] = static_cast<int>(f);
        std::stable_sort(ranking.begin(), ranking.end(), [&](int a, int b) {
            return amm.amm[static_cast<std::size_t>(a)] > amm.amm[static_cast<std::size_t>(b)];
        });
    } else if (ranking_kind == "sage") {
        SageConfig cfg;
        cfg.loss = config.sage.loss;
        cfg.n_permutations = config.sage.n_permutations;
        cfg.n_marginal_draws = config.sage.n_marginal_draws;
        cfg.seed = derive_seed(config.master_seed, seed_stream::sage);
        std::vector<BoolRow> rows;
        std::vector<int> labels;
        for (std::size_t i : sample_row_subset(exp.data.indices_of(Split::val),
                                               config.sage.row_limit, cfg.seed)) {
            rows.push_back(exp.data.matrix.rows[i]);
            labels.push_back(exp.data.labels[i]);
        }
        Background bg = Background::sample_train(exp.data, config.shap.background_size, cfg.seed);
        ranking = sage_values(*model, rows, labels, bg, cfg).ranking();
    } else {
        throw config_error("unknown ranking '" + ranking_kind + "' (use amm or sage)");
    }

    ImprovedDetector improved = exclude_and_retrain(
        exp.data, ranking, k, it->kind, it->hyperparams,
        derive_seed(config.master_seed, seed_stream::model_base + 9000 + k));
    const std::string path = config.output_dir + "/models/" + model_name + "_hardened_" +
                             ranking_kind + "_k" + std::to_string(k) + ".model.json";
    fs::create_directories(config.output_dir + "/models");
    save_model(*improved.model, path);
    std::printf("hardened %s (excluded top %zu by %s): train %.4f val %.4f -> %s\n",
                model_name.c_str(), k, ranking_kind.c_str(), improved.train_accuracy,
                improved.val_accuracy, path.c_str());
    return 0;
}

int run_repro_cmd(const GlobalOpts& opts) {
    ExperimentConfig config = load_config(opts);
    ReproResult res = run_repro(config, config.output_dir, formats_from_string(opts.format),
                                opts.force);
    std::printf("repro complete: %zu artifacts under %s (manifest %s)\n", res.artifacts.size(),
                config.output_dir.c_str(), res.manifest_path.c_str());
    return 0;
}

void print_error_json(const std::string& kind, const std::string& message) {
    json err{{"error", json{{"kind", kind}, {"message", message}}}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evlab: explainability-guided evasion measurement on boolean feature vectors"};
    app.require_subcommand(1);

    GlobalOpts opts;
    app.add_option("--config", opts.config_path, "experiment config JSON (defaults to packaged)");
    app.add_option("--out", opts.out_dir, "output directory (overrides config.output_dir)");
    app.add_option("--format", opts.format, "emit formats: comma list of json,csv,svg")
        ->default_val("json");
    app.add_option("--seed", opts.seed, "master seed override")
        ->each([&](const std::string&) { opts.seed_set = true; });
    app.add_flag("--force", opts.force, "overwrite an output dir with a different config hash");

    app.add_subcommand("gen", "generate the dataset and SAMP files");
    app.add_subcommand("train", "train all configured detectors");

    std::string model_name = "gbdt", split_tag = "train", strategy = "amm";
    std::string mode_name = "problem_space", patch_path, samples_dir, ranking_kind = "amm";
    int n_pairs = 0;
    std::size_t k = 20;

    auto* explain = app.add_subcommand("explain", "SHAP matrix for one model");
    explain->add_option("--model", model_name, "model name")->required();
    explain->add_option("--split", split_tag, "train|val|test");

    auto* select = app.add_subcommand("select", "feature/value selection (amm or stats)");
    select->add_option("--model", model_name, "model name (amm strategy)");
    select->add_option("--strategy", strategy, "amm|stats");
    select->add_option("--n", n_pairs, "pairs to select (default: config attack.n)");
    select->add_option("--mode", mode_name, "problem_space|feature_space_only");

    auto* attack = app.add_subcommand("attack", "apply a patch to SAMP files");
    attack->add_option("--patch", patch_path, "patch JSON path")->required();
    attack->add_option("--samples", samples_dir, "SAMP directory (default: <out>/samples)");

    app.add_subcommand("eval", "seed vs adversarial detection rates for all models");
    app.add_subcommand("transfer", "cross-model transfer matrix with AMM cosine");

    auto* sage = app.add_subcommand("sage", "SAGE global importance for one model");
    sage->add_option("--model", model_name, "model name")->required();

    auto* harden = app.add_subcommand("harden", "retrain with top-ranked features excluded");
    harden->add_option("--model", model_name, "model name")->required();
    harden->add_option("--k", k, "features to exclude")->required();
    harden->add_option("--ranking", ranking_kind, "amm|sage");

    app.add_subcommand("repro", "full pipeline end-to-end into the output dir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        print_error_json("usage", e.what());
        return 2;
    }

    try {
        const std::string sub = app.get_subcommands().front()->get_name();
        if (sub == "gen") return run_gen(opts);
        if (sub == "train") return run_train(opts);
        if (sub == "explain") return run_explain(opts, model_name, split_tag);
        if (sub == "select") return run_select(opts, model_name, strategy, n_pairs, mode_name);
        if (sub == "attack") return run_attack(opts, patch_path, samples_dir);
        if (sub == "eval") return run_eval(opts);
        if (sub == "transfer") return run_transfer(opts);
        if (sub == "sage") return run_sage(opts, model_name);
        if (sub == "harden") return run_harden(opts, model_name, k, ranking_kind);
        if (sub == "repro") return run_repro_cmd(opts);
        print_error_json("usage", "unknown subcommand '" + sub + "'");
        return 2;
    } catch (const config_error& e) {
        print_error_json("config", e.what());
        return 1;
    } catch (const parse_error& e) {
        print_error_json("parse", e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error_json("runtime", e.what());
        return 1;
    }
}
