#include "evlab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "evlab/svg.hpp"

namespace evlab {

using nlohmann::json;

std::string strategy_name(AttackStrategy s) {
    return s == AttackStrategy::amm ? "amm" : "stats";
}

AttackStrategy strategy_from_name(const std::string& name) {
    if (name == "amm") return AttackStrategy::amm;
    if (name == "stats") return AttackStrategy::stats;
    throw config_error("unknown attack strategy '" + name + "'");
}

namespace {

struct MaliciousTestSet {
    std::vector<std::size_t> indices;               // rows in the dataset
    std::vector<const ProblemSample*> samples;
};

MaliciousTestSet malicious_test_set(const LabeledDataset& data,
                                    const std::vector<ProblemSample>& samples) {
    if (samples.size() != data.size()) {
        throw error("problem samples not aligned with dataset rows (" +
                    std::to_string(samples.size()) + " vs " + std::to_string(data.size()) + ")");
    }
    MaliciousTestSet out;
    for (std::size_t i : data.indices_of(Split::test, 1)) {
        out.indices.push_back(i);
        out.samples.push_back(&samples[i]);
    }
    if (out.indices.empty()) throw error("no malicious samples in the test split");
    return out;
}

// Builds the adversarial variant of every sample, checks functionality, and
// returns the detection rate of the patched rows plus skip accounting.
double adversarial_rate(const Detector& model, const MaliciousTestSet& set,
                        const FeaturePatch& patch, const std::vector<FeatureSpec>& specs,
                        std::size_t* skipped_out) {
    std::size_t flagged = 0, skipped = 0;
    for (const ProblemSample* sample : set.samples) {
        AdversarialPair pair = build_adversarial(*sample, patch, specs);
        if (!verify_functionality(pair)) {
            throw error("built adversarial sample failed functionality verification: " +
                        sample->sample_id);
        }
        skipped += pair.skipped_pairs.size();
        BoolRow row = vectorize(pair.adversarial, specs);
        if (model.predict(row).label == 1) ++flagged;
    }
    if (skipped_out != nullptr) *skipped_out = skipped;
    return static_cast<double>(flagged) / static_cast<double>(set.samples.size());
}

double seed_rate_of(const Detector& model, const LabeledDataset& data,
                    const MaliciousTestSet& set) {
    std::size_t flagged = 0;
    for (std::size_t i : set.indices) {
        if (model.predict(data.matrix.rows[i]).label == 1) ++flagged;
    }
    return static_cast<double>(flagged) / static_cast<double>(set.indices.size());
}

}  // namespace

std::vector<AttackOutcome> run_attack_eval(const std::vector<NamedModel>& models,
                                           const LabeledDataset& data,
                                           const std::vector<ProblemSample>& samples,
                                           const std::set<AttackStrategy>& strategies, int n_pairs,
                                           const ShapConfig& shap_config) {
    if (models.empty()) throw error("run_attack_eval: no models");
    MaliciousTestSet set = malicious_test_set(data, samples);

    std::vector<AttackOutcome> outcomes;
    for (AttackStrategy strategy : strategies) {
        FeaturePatch stats = strategy == AttackStrategy::stats
                                 ? stats_patch(stats_select(data, Split::train, n_pairs),
                                               data.matrix.specs, PatchMode::problem_space)
                                 : FeaturePatch{};
        for (std::size_t mi = 0; mi < models.size(); ++mi) {
            const NamedModel& nm = models[mi];
            FeaturePatch patch;
            if (strategy == AttackStrategy::amm) {
                ShapConfig cfg = shap_config;
                cfg.seed = derive_seed(shap_config.seed, mi + 1);
                patch = amm_select(*nm.model, data, Split::train, n_pairs, cfg,
                                   PatchMode::problem_space);
            } else {
                patch = stats;
            }
            AttackOutcome outcome;
            outcome.strategy = strategy_name(strategy);
            outcome.model_name = nm.name;
            outcome.model_digest = nm.model->digest();
            outcome.n_samples = set.indices.size();
            outcome.n_pairs = patch.pairs.size();
            outcome.seed_rate = seed_rate_of(*nm.model, data, set);
            outcome.adversarial_rate = adversarial_rate(*nm.model, set, patch, data.matrix.specs,
                                                        &outcome.n_skipped_applications);
            outcomes.push_back(std::move(outcome));
        }
    }
    return outcomes;
}

std::vector<CurvePoint> rate_vs_n_curve(const NamedModel& model, const LabeledDataset& data,
                                        const std::vector<ProblemSample>& samples,
                                        const std::vector<int>& n_list, std::size_t n_sets,
                                        std::size_t set_size, const ShapConfig& shap_config) {
    if (n_list.empty()) throw error("rate_vs_n: empty N list");
    for (std::size_t i = 0; i < n_list.size(); ++i) {
        if (n_list[i] < 0) throw error("rate_vs_n: N must be >= 0");
        if (i > 0 && n_list[i] == n_list[i - 1]) {
            throw error("rate_vs_n: duplicate N value " + std::to_string(n_list[i]));
        }
        if (i > 0 && n_list[i] < n_list[i - 1]) throw error("rate_vs_n: N list must be ascending");
    }
    MaliciousTestSet all = malicious_test_set(data, samples);

    // fixed seed sets, sampled once and reused for every N
    std::size_t want = n_sets * set_size;
    std::vector<std::size_t> chosen(all.indices.size());
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    Rng rng(derive_seed(shap_config.seed, seed_stream::eval));
    rng.shuffle(chosen);
    if (want > 0 && want < chosen.size()) chosen.resize(want);

    MaliciousTestSet set;
    for (std::size_t k : chosen) {
        set.indices.push_back(all.indices[k]);
        set.samples.push_back(all.samples[k]);
    }

    const int n_max = n_list.back();
    FeaturePatch full;
    if (n_max > 0) {
        full = amm_select(*model.model, data, Split::train, n_max, shap_config,
                          PatchMode::problem_space);
    }

    std::vector<CurvePoint> curve;
    for (int n : n_list) {
        CurvePoint pt;
        pt.n = n;
        if (n == 0) {
            pt.rate = seed_rate_of(*model.model, data, set);
        } else {
            FeaturePatch prefix = full.prefix(static_cast<std::size_t>(n));
            pt.rate = adversarial_rate(*model.model, set, prefix, data.matrix.specs, nullptr);
        }
        curve.push_back(pt);
    }
    return curve;
}

double amm_topk_cosine(const std::vector<double>& amm_a, const std::vector<double>& amm_b,
                       std::size_t top_k) {
    if (amm_a.size() != amm_b.size()) throw error("amm_topk_cosine: vector length mismatch");
    auto top_set = [&](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
        if (idx.size() > top_k) idx.resize(top_k);
        return std::set<std::size_t>(idx.begin(), idx.end());
    };
    std::set<std::size_t> ta = top_set(amm_a), tb = top_set(amm_b);
    std::set<std::size_t> u;
    u.insert(ta.begin(), ta.end());
    u.insert(tb.begin(), tb.end());

    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t f : u) {
        double a = ta.count(f) ? amm_a[f] : 0.0;
        double b = tb.count(f) ? amm_b[f] : 0.0;
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

TransferMatrix transfer_eval(const std::vector<NamedModel>& models, const LabeledDataset& data,
                             const std::vector<ProblemSample>& samples, int n_pairs,
                             std::size_t top_k, const ShapConfig& shap_config) {
    if (models.size() < 2) throw error("transfer_eval: needs at least 2 models");
    const std::size_t d = data.matrix.n_features();
    for (const NamedModel& nm : models) {
        if (nm.model->n_features() != d) {
            throw error("transfer_eval: model '" + nm.name +
                        "' was trained on a different feature space");
        }
    }
    MaliciousTestSet set = malicious_test_set(data, samples);

    TransferMatrix tm;
    std::vector<FeaturePatch> patches;
    std::vector<std::vector<double>> amm_vecs;
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
        const NamedModel& nm = models[mi];
        ShapConfig cfg = shap_config;
        cfg.seed = derive_seed(shap_config.seed, mi + 1);
        if (nm.model->kind() == DetectorKind::linear_svm) cfg.method = AttributionMethod::linear;
        std::vector<BoolRow> train_rows;
        for (std::size_t i :
             sample_row_subset(data.indices_of(Split::train), cfg.row_limit, cfg.seed)) {
            train_rows.push_back(data.matrix.rows[i]);
        }
        Background bg = Background::sample_train(data, cfg.background_size, cfg.seed);
        ShapMatrix shap = shap_matrix_rows(*nm.model, train_rows, bg, cfg);
        FeaturePatch patch = amm_select_core(shap, train_rows, data.matrix.specs, n_pairs,
                                             PatchMode::problem_space);
        patch.source_model_digest = nm.model->digest();
        patches.push_back(std::move(patch));
        amm_vecs.push_back(amm_vectors_full(shap).amm);
        tm.generator_names.push_back(nm.name);
        tm.generator_digests.push_back(nm.model->digest());
        tm.target_names.push_back(nm.name);
        tm.target_digests.push_back(nm.model->digest());
    }

    tm.rates.assign(models.size(), std::vector<double>(models.size(), 0.0));
    tm.cosine.assign(models.size(), std::vector<double>(models.size(), 0.0));
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = 0; j < models.size(); ++j) {
            tm.rates[i][j] =
                adversarial_rate(*models[j].model, set, patches[i], data.matrix.specs, nullptr);
            tm.cosine[i][j] = amm_topk_cosine(amm_vecs[i], amm_vecs[j], top_k);
        }
    }
    return tm;
}

std::map<int, int> drop_histogram(const std::vector<double>& seed_rates,
                                  const std::vector<double>& adv_rates, double bin_width,
                                  std::vector<std::size_t>* excluded) {
    if (bin_width <= 0.0) throw error("drop_histogram: bin_width must be > 0");
    if (seed_rates.size() != adv_rates.size()) {
        throw error("drop_histogram: rate lists are not aligned");
    }
    std::map<int, int> bins;
    for (std::size_t i = 0; i < seed_rates.size(); ++i) {
        if (seed_rates[i] < 0.5) {
            if (excluded != nullptr) excluded->push_back(i);
            continue;  // detectors that miss half the seed malware carry no signal
        }
        double drop_pp = (seed_rates[i] - adv_rates[i]) * 100.0;
        int bin = static_cast<int>(std::ceil(drop_pp / bin_width)) *
                  static_cast<int>(bin_width);
        if (bin < 0) bin = 0;
        bins[bin] += 1;
    }
    return bins;
}

CaseTrace case_trace(const NamedModel& model, const FeaturePatch& patch,
                     const ProblemSample& sample, const std::vector<FeatureSpec>& specs,
                     int n_max, const Background& bg, const ShapConfig& shap_config) {
    if (n_max < 0) throw error("case_trace: N_max must be >= 0");
    BoolRow seed_row = vectorize(sample, specs);
    Prediction seed_pred = model.model->predict(seed_row);
    if (seed_pred.label != 1) {
        throw error("case_trace: sample '" + sample.sample_id +
                    "' is not malicious under the model at N=0");
    }

    CaseTrace trace;
    trace.sample_id = sample.sample_id;
    const bool is_svm = model.model->kind() == DetectorKind::linear_svm;

    BoolRow final_row = seed_row;
    for (int n = 0; n <= n_max; ++n) {
        FeaturePatch prefix = patch.prefix(static_cast<std::size_t>(n));
        AdversarialPair pair = build_adversarial(sample, prefix, specs);
        BoolRow row = vectorize(pair.adversarial, specs);
        Prediction pred = model.model->predict(row);
        trace.points.push_back(CaseTracePoint{n, pred.raw_score, pred.probability, pred.label});
        if (is_svm) trace.decision_function.push_back(pred.raw_score);
        if (pred.label == 0 && trace.first_evasion_n < 0) trace.first_evasion_n = n;
        if (n == n_max) final_row = row;
    }

    auto attribution_of = [&](const BoolRow& row) {
        if (is_svm) return shap_linear(linear_weights(*model.model), row, bg).phi;
        return shap_permutation(*model.model, row, bg, shap_config.n_permutations,
                                derive_seed(shap_config.seed, 0xface))
            .phi;
    };
    trace.phi_before = attribution_of(seed_row);
    trace.phi_after = attribution_of(final_row);
    return trace;
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw error("spearman: need two aligned lists of length >= 2");
    }
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < idx.size()) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    std::vector<double> rx = ranks(xs), ry = ranks(ys);
    double mx = mean(rx), my = mean(ry);
    double num = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if (vx == 0.0 || vy == 0.0) return 0.0;
    return num / std::sqrt(vx * vy);
}

// --- serialization -----------------------------------------------------------

json EvalReport::to_json() const {
    json outcomes_j = json::array();
    for (const AttackOutcome& o : outcomes) {
        outcomes_j.push_back(json{{"strategy", o.strategy},
                                  {"model", o.model_name},
                                  {"model_digest", o.model_digest},
                                  {"seed_rate", o.seed_rate},
                                  {"adversarial_rate", o.adversarial_rate},
                                  {"n_samples", o.n_samples},
                                  {"n_pairs", o.n_pairs},
                                  {"n_skipped_applications", o.n_skipped_applications}});
    }
    json curve_j = json::array();
    for (const CurvePoint& p : rate_vs_n) curve_j.push_back(json::array({p.n, p.rate}));
    json bins_j = json::object();
    for (const auto& [bin, count] : drop_bins) bins_j[std::to_string(bin)] = count;
    json traces_j = json::array();
    for (const CaseTrace& t : case_traces) {
        json pts = json::array();
        for (const CaseTracePoint& p : t.points) {
            pts.push_back(json::array({p.n, p.raw_score, p.probability, p.label}));
        }
        json tj{{"sample_id", t.sample_id},
                {"points", std::move(pts)},
                {"first_evasion_n", t.first_evasion_n},
                {"phi_before", t.phi_before},
                {"phi_after", t.phi_after}};
        if (!t.decision_function.empty()) tj["decision_function"] = t.decision_function;
        traces_j.push_back(std::move(tj));
    }
    return json{{"format", "evlab-report/1"},
                {"config_digest", config_digest},
                {"attack_n", attack_n},
                {"outcomes", std::move(outcomes_j)},
                {"curve_model", curve_model},
                {"rate_vs_n", std::move(curve_j)},
                {"drop_bin_width", drop_bin_width},
                {"drop_histogram", std::move(bins_j)},
                {"drop_excluded", drop_excluded},
                {"case_traces", std::move(traces_j)}};
}

json transfer_to_json(const TransferMatrix& matrix) {
    return json{{"format", "evlab-transfer/1"},
                {"generators", matrix.generator_names},
                {"generator_digests", matrix.generator_digests},
                {"targets", matrix.target_names},
                {"target_digests", matrix.target_digests},
                {"rates", matrix.rates},
                {"cosine", matrix.cosine}};
}

EmitFormats formats_from_string(const std::string& csv_list) {
    EmitFormats f;
    f.json = false;
    std::stringstream ss(csv_list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "json") {
            f.json = true;
        } else if (item == "csv") {
            f.csv = true;
        } else if (item == "svg") {
            f.svg = true;
        } else if (!item.empty()) {
            throw config_error("unknown output format '" + item + "'");
        }
    }
    if (!f.json && !f.csv && !f.svg) f.json = true;
    return f;
}

namespace {

void write_text(const std::string& path, const std::string& text,
                std::vector<std::string>& written) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw error("failed writing '" + path + "'");
    written.push_back(path);
}

}  // namespace

std::vector<std::string> emit_report(const EvalReport& report, const std::string& dir,
                                     const EmitFormats& formats) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> written;
    if (formats.json) {
        write_text(dir + "/report.json", report.to_json().dump(2) + "\n", written);
    }
    if (formats.csv) {
        std::string t = "strategy,model,seed_rate,adversarial_rate,n_samples,n_pairs,n_skipped\n";
        for (const AttackOutcome& o : report.outcomes) {
            t += o.strategy + "," + o.model_name + "," + format_double(o.seed_rate) + "," +
                 format_double(o.adversarial_rate) + "," + std::to_string(o.n_samples) + "," +
                 std::to_string(o.n_pairs) + "," + std::to_string(o.n_skipped_applications) + "\n";
        }
        write_text(dir + "/outcomes.csv", t, written);

        std::string c = "n,rate\n";
        for (const CurvePoint& p : report.rate_vs_n) {
            c += std::to_string(p.n) + "," + format_double(p.rate) + "\n";
        }
        write_text(dir + "/rate_vs_n.csv", c, written);

        std::string h = "bin,count\n";
        for (const auto& [bin, count] : report.drop_bins) {
            h += std::to_string(bin) + "," + std::to_string(count) + "\n";
        }
        write_text(dir + "/drop_histogram.csv", h, written);

        std::string tr = "sample_id,n,raw_score,probability,label\n";
        for (const CaseTrace& t2 : report.case_traces) {
            for (const CaseTracePoint& p : t2.points) {
                tr += t2.sample_id + "," + std::to_string(p.n) + "," + format_double(p.raw_score) +
                      "," + format_double(p.probability) + "," + std::to_string(p.label) + "\n";
            }
        }
        write_text(dir + "/case_traces.csv", tr, written);
    }
    if (formats.svg) {
        write_text(dir + "/rate_vs_n.svg", svg_curve(report.rate_vs_n, report.curve_model),
                   written);
        write_text(dir + "/drop_histogram.svg",
                   svg_histogram(report.drop_bins, report.drop_bin_width), written);
    }
    return written;
}

std::vector<std::string> emit_transfer(const TransferMatrix& matrix, const std::string& dir,
                                       const EmitFormats& formats) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> written;
    if (formats.json) {
        write_text(dir + "/transfer.json", transfer_to_json(matrix).dump(2) + "\n", written);
    }
    if (formats.csv) {
        auto table = [&](const std::vector<std::vector<double>>& m) {
            std::string t = "generator";
            for (const std::string& name : matrix.target_names) t += "," + name;
            t += "\n";
            for (std::size_t i = 0; i < m.size(); ++i) {
                t += matrix.generator_names[i];
                for (double v : m[i]) t += "," + format_double(v);
                t += "\n";
            }
            return t;
        };
        write_text(dir + "/transfer_rates.csv", table(matrix.rates), written);
        write_text(dir + "/transfer_cosine.csv", table(matrix.cosine), written);
    }
    if (formats.svg) {
        write_text(dir + "/transfer.svg", svg_transfer_heatmap(matrix), written);
    }
    return written;
}

}  // namespace evlab
