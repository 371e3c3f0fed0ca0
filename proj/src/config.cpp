#include "evlab/config.hpp"

#include <fstream>

#include "evlab/evaluation.hpp"

namespace evlab {

using nlohmann::json;

namespace {

SynthConfig synth_from_json(const json& j, std::uint64_t master_seed) {
    SynthConfig c;
    if (j.contains("n_samples")) c.n_samples = j.at("n_samples").get<std::size_t>();
    if (j.contains("n_features")) c.n_features = j.at("n_features").get<std::size_t>();
    if (j.contains("n_planted_malicious"))
        c.n_planted_malicious = j.at("n_planted_malicious").get<std::size_t>();
    if (j.contains("n_planted_benign"))
        c.n_planted_benign = j.at("n_planted_benign").get<std::size_t>();
    if (j.contains("p_signal")) c.p_signal = j.at("p_signal").get<double>();
    if (j.contains("p_noise")) c.p_noise = j.at("p_noise").get<double>();
    if (j.contains("class_balance")) c.class_balance = j.at("class_balance").get<double>();
    c.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : master_seed;
    return c;
}

json synth_to_json(const SynthConfig& c) {
    return json{{"n_samples", c.n_samples},
                {"n_features", c.n_features},
                {"n_planted_malicious", c.n_planted_malicious},
                {"n_planted_benign", c.n_planted_benign},
                {"p_signal", c.p_signal},
                {"p_noise", c.p_noise},
                {"class_balance", c.class_balance},
                {"seed", c.seed}};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();

    if (j.contains("dataset")) {
        const json& ds = j.at("dataset");
        if (ds.contains("synth") && ds.contains("csv")) {
            throw config_error("dataset: specify either synth or csv, not both");
        }
        if (ds.contains("synth")) {
            c.synth = synth_from_json(ds.at("synth"), c.master_seed);
        } else if (ds.contains("csv")) {
            c.dataset_csv = ds.at("csv").get<std::string>();
        } else {
            throw config_error("dataset: needs a synth section or a csv path");
        }
        if (ds.contains("split_ratios")) {
            auto r = ds.at("split_ratios").get<std::vector<double>>();
            if (r.size() != 3) throw config_error("split_ratios needs 3 entries");
            c.split_ratios = {r[0], r[1], r[2]};
        }
    } else {
        c.synth = SynthConfig{};
        c.synth->seed = c.master_seed;
    }

    if (j.contains("models")) {
        for (const json& mj : j.at("models")) {
            ModelConfig mc;
            mc.kind = kind_from_name(mj.at("kind").get<std::string>());
            mc.name = mj.contains("name") ? mj.at("name").get<std::string>()
                                          : kind_name(mc.kind);
            if (mj.contains("hyperparams")) mc.hyperparams = mj.at("hyperparams");
            c.models.push_back(std::move(mc));
        }
    } else {
        for (DetectorKind k : {DetectorKind::gbdt, DetectorKind::linear_svm,
                               DetectorKind::random_forest, DetectorKind::mlp}) {
            c.models.push_back(ModelConfig{kind_name(k), k, json::object()});
        }
    }
    if (c.models.empty()) throw config_error("models: at least one model required");
    for (std::size_t i = 0; i < c.models.size(); ++i) {
        for (std::size_t k = i + 1; k < c.models.size(); ++k) {
            if (c.models[i].name == c.models[k].name) {
                throw config_error("duplicate model name '" + c.models[i].name + "'");
            }
        }
    }

    if (j.contains("attack")) {
        const json& a = j.at("attack");
        if (a.contains("strategies"))
            c.attack_strategies = a.at("strategies").get<std::vector<std::string>>();
        if (a.contains("n")) c.attack_n = a.at("n").get<int>();
        if (a.contains("attribution")) {
            const json& at = a.at("attribution");
            if (at.contains("method"))
                c.shap.method = method_from_name(at.at("method").get<std::string>());
            if (at.contains("n_permutations"))
                c.shap.n_permutations = at.at("n_permutations").get<int>();
            if (at.contains("n_coalitions")) c.shap.n_coalitions = at.at("n_coalitions").get<int>();
            if (at.contains("regularization"))
                c.shap.regularization = at.at("regularization").get<double>();
            if (at.contains("background_size"))
                c.shap.background_size = at.at("background_size").get<std::size_t>();
            if (at.contains("row_limit")) c.shap.row_limit = at.at("row_limit").get<std::size_t>();
        }
    }
    for (const std::string& s : c.attack_strategies) strategy_from_name(s);  // validates
    if (c.attack_n < 1) throw config_error("attack.n must be >= 1");

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        if (e.contains("curve_n_list")) c.curve_n_list = e.at("curve_n_list").get<std::vector<int>>();
        if (e.contains("curve_n_sets")) c.curve_n_sets = e.at("curve_n_sets").get<std::size_t>();
        if (e.contains("curve_set_size"))
            c.curve_set_size = e.at("curve_set_size").get<std::size_t>();
        if (e.contains("n_case_traces")) c.n_case_traces = e.at("n_case_traces").get<std::size_t>();
        if (e.contains("transfer_models"))
            c.transfer_models = e.at("transfer_models").get<std::vector<std::string>>();
        if (e.contains("transfer_top_k"))
            c.transfer_top_k = e.at("transfer_top_k").get<std::size_t>();
    }

    if (j.contains("sage")) {
        const json& s = j.at("sage");
        if (s.contains("loss")) c.sage.loss = loss_from_name(s.at("loss").get<std::string>());
        if (s.contains("n_permutations")) c.sage.n_permutations = s.at("n_permutations").get<int>();
        if (s.contains("n_marginal_draws"))
            c.sage.n_marginal_draws = s.at("n_marginal_draws").get<int>();
        if (s.contains("k_list")) c.sage.k_list = s.at("k_list").get<std::vector<std::size_t>>();
        if (s.contains("row_limit")) c.sage.row_limit = s.at("row_limit").get<std::size_t>();
    }

    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw parse_error("malformed config '" + path + "': " + e.what());
    }
    return from_json(j);
}

json ExperimentConfig::to_json() const {
    json dataset;
    if (synth.has_value()) {
        dataset["synth"] = synth_to_json(*synth);
    } else {
        dataset["csv"] = dataset_csv;
    }
    dataset["split_ratios"] = std::vector<double>{split_ratios[0], split_ratios[1],
                                                  split_ratios[2]};
    json models_j = json::array();
    for (const ModelConfig& m : models) {
        models_j.push_back(
            json{{"name", m.name}, {"kind", kind_name(m.kind)}, {"hyperparams", m.hyperparams}});
    }
    return json{
        {"dataset", std::move(dataset)},
        {"models", std::move(models_j)},
        {"attack",
         json{{"strategies", attack_strategies},
              {"n", attack_n},
              {"attribution", json{{"method", method_name(shap.method)},
                                   {"n_permutations", shap.n_permutations},
                                   {"n_coalitions", shap.n_coalitions},
                                   {"regularization", shap.regularization},
                                   {"background_size", shap.background_size},
                                   {"row_limit", shap.row_limit}}}}},
        {"eval", json{{"curve_n_list", curve_n_list},
                      {"curve_n_sets", curve_n_sets},
                      {"curve_set_size", curve_set_size},
                      {"n_case_traces", n_case_traces},
                      {"transfer_models", transfer_models},
                      {"transfer_top_k", transfer_top_k}}},
        {"sage", json{{"loss", loss_name(sage.loss)},
                      {"n_permutations", sage.n_permutations},
                      {"n_marginal_draws", sage.n_marginal_draws},
                      {"k_list", sage.k_list},
                      {"row_limit", sage.row_limit}}},
        {"output_dir", output_dir},
        {"master_seed", master_seed}};
}

std::string ExperimentConfig::digest() const {
    Fnv1a h;
    h.update(to_json().dump());
    return h.hex();
}

void ExperimentConfig::validate() const {
    if (synth.has_value()) {
        synth->validate();
    } else if (dataset_csv.empty()) {
        throw config_error("no dataset configured");
    }
    if (attack_n < 1) throw config_error("attack.n must be >= 1");
    for (std::size_t i = 1; i < curve_n_list.size(); ++i) {
        if (curve_n_list[i] <= curve_n_list[i - 1]) {
            throw config_error("eval.curve_n_list must be strictly ascending");
        }
    }
}

ExperimentConfig default_config() {
    ExperimentConfig c;
    c.synth = SynthConfig{};  // the reference corpus: n=2000, d=300, 20+20 planted, seed 7
    c.master_seed = 7;
    c.synth->seed = 7;
    for (DetectorKind k : {DetectorKind::gbdt, DetectorKind::linear_svm,
                           DetectorKind::random_forest, DetectorKind::mlp}) {
        c.models.push_back(ModelConfig{kind_name(k), k, json::object()});
    }
    c.shap.method = AttributionMethod::permutation;
    c.shap.n_permutations = 10;
    c.shap.background_size = 100;
    c.shap.row_limit = 300;  // SHAP-matrix rows per model; keeps the MLP tractable
    c.transfer_models = {"gbdt", "linear_svm", "random_forest"};
    return c;
}

}  // namespace evlab
