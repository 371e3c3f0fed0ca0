#include "evlab/sage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace evlab {

using nlohmann::json;

std::string loss_name(SageLoss l) {
    return l == SageLoss::cross_entropy ? "cross_entropy" : "zero_one";
}

SageLoss loss_from_name(const std::string& name) {
    if (name == "cross_entropy") return SageLoss::cross_entropy;
    if (name == "zero_one") return SageLoss::zero_one;
    throw config_error("unknown sage loss '" + name + "'");
}

namespace {

// Probabilities are clamped away from 0/1 so vote-fraction models cannot
// produce infinite cross-entropy.
constexpr double kProbEps = 1e-12;

double loss_value(SageLoss loss, double probability, int label) {
    if (loss == SageLoss::cross_entropy) {
        double p = std::clamp(probability, kProbEps, 1.0 - kProbEps);
        return label == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    int predicted = probability >= 0.5 ? 1 : 0;
    return predicted == label ? 0.0 : 1.0;
}

double background_mean_raw(const Detector& model, const Background& bg) {
    double s = 0.0;
    for (const BoolRow& b : bg.rows) s += model.raw_score(b);
    return s / static_cast<double>(bg.rows.size());
}

}  // namespace

double restricted_score(const Detector& model, std::span<const std::uint8_t> x,
                        const std::vector<int>& subset, const Background& bg, int n_draws,
                        std::uint64_t seed) {
    if (bg.rows.empty()) throw error("restricted_score: empty background");
    const std::size_t d = model.n_features();
    std::vector<char> in_subset(d, 0);
    for (int f : subset) {
        if (f < 0 || static_cast<std::size_t>(f) >= d) {
            throw error("restricted_score: feature id " + std::to_string(f) + " out of range");
        }
        in_subset[static_cast<std::size_t>(f)] = 1;
    }
    if (subset.size() == d) return model.raw_score(x);  // conditioning on everything is exact

    const bool exhaustive = n_draws <= 0 || static_cast<std::size_t>(n_draws) >= bg.rows.size();
    const std::size_t n = exhaustive ? bg.rows.size() : static_cast<std::size_t>(n_draws);
    Rng rng(seed);
    BoolRow z(d);
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const BoolRow& b = exhaustive ? bg.rows[k] : bg.rows[rng.uniform_index(bg.rows.size())];
        for (std::size_t j = 0; j < d; ++j) z[j] = in_subset[j] ? x[j] : b[j];
        sum += model.raw_score(z);
    }
    return sum / static_cast<double>(n);
}

double predictive_power(const Detector& model, std::span<const BoolRow> rows,
                        std::span<const int> labels, const std::vector<int>& subset,
                        const Background& bg, const SageConfig& config) {
    if (rows.empty()) throw error("predictive_power: empty evaluation set");
    if (subset.empty()) return 0.0;  // v(empty) = 0 by construction

    const double f_empty = background_mean_raw(model, bg);
    const double p_empty = model.probability_from_raw(f_empty);
    double mean_loss_empty = 0.0, mean_loss_s = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        mean_loss_empty += loss_value(config.loss, p_empty, labels[i]);
        double raw = restricted_score(model, rows[i], subset, bg, config.n_marginal_draws,
                                      derive_seed(config.seed, 7000 + i));
        mean_loss_s += loss_value(config.loss, model.probability_from_raw(raw), labels[i]);
    }
    const double n = static_cast<double>(rows.size());
    return mean_loss_empty / n - mean_loss_s / n;
}

std::vector<int> SageReport::ranking() const {
    std::vector<int> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
    });
    return idx;
}

SageReport sage_values(const Detector& model, std::span<const BoolRow> rows,
                       std::span<const int> labels, const Background& bg,
                       const SageConfig& config) {
    if (rows.empty()) throw error("sage_values: empty evaluation set");
    if (config.n_permutations < 1) throw error("sage_values: n_permutations must be >= 1");
    if (bg.rows.empty()) throw error("sage_values: empty background");
    const std::size_t d = model.n_features();
    const std::size_t n = rows.size();

    const double f_empty = background_mean_raw(model, bg);
    const double p_empty = model.probability_from_raw(f_empty);

    // Exact endpoints shared by every permutation walk.
    std::vector<double> loss_empty(n), loss_full(n);
    double v_full = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        loss_empty[i] = loss_value(config.loss, p_empty, labels[i]);
        loss_full[i] = loss_value(
            config.loss, model.probability_from_raw(model.raw_score(rows[i])), labels[i]);
        v_full += loss_empty[i] - loss_full[i];
    }
    v_full /= static_cast<double>(n);

    const bool exhaustive = config.n_marginal_draws <= 0 ||
                            static_cast<std::size_t>(config.n_marginal_draws) >= bg.rows.size();
    const std::size_t n_draws = exhaustive ? bg.rows.size()
                                           : static_cast<std::size_t>(config.n_marginal_draws);

    const std::size_t T = static_cast<std::size_t>(config.n_permutations);
    std::vector<std::vector<double>> per_perm(T);

    parallel_for(T, env_threads(), [&](std::size_t t) {
        Rng rng(derive_seed(config.seed, 100 + t));
        std::vector<std::size_t> order = rng.permutation(d);
        std::vector<double> delta(d, 0.0);

        std::vector<BoolRow> z(n_draws, BoolRow(d));
        for (std::size_t i = 0; i < n; ++i) {
            // initialize the imputed copies from background draws (S = empty)
            for (std::size_t k = 0; k < n_draws; ++k) {
                z[k] = exhaustive ? bg.rows[k] : bg.rows[rng.uniform_index(bg.rows.size())];
            }
            double prev_loss = loss_empty[i];  // exact mean-prediction endpoint
            for (std::size_t step = 0; step < d; ++step) {
                const std::size_t f = order[step];
                double raw_sum = 0.0;
                for (std::size_t k = 0; k < n_draws; ++k) {
                    z[k][f] = rows[i][f];
                    raw_sum += model.raw_score(z[k]);
                }
                double cur_loss;
                if (step + 1 == d) {
                    cur_loss = loss_full[i];  // all features restored: exact
                } else {
                    double raw = raw_sum / static_cast<double>(n_draws);
                    cur_loss = loss_value(config.loss, model.probability_from_raw(raw), labels[i]);
                }
                delta[f] += prev_loss - cur_loss;
                prev_loss = cur_loss;
            }
        }
        for (double& v : delta) v /= static_cast<double>(n);
        per_perm[t] = std::move(delta);
    });

    SageReport report;
    report.loss = loss_name(config.loss);
    report.n_permutations = config.n_permutations;
    report.seed = config.seed;
    report.v_full = v_full;
    report.v_empty = 0.0;
    report.model_digest = model.digest();
    report.background_digest = bg.digest();
    report.values.assign(d, 0.0);
    report.std_errors.assign(d, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t f = 0; f < d; ++f) report.values[f] += per_perm[t][f];
    }
    for (double& v : report.values) v /= static_cast<double>(T);
    if (T > 1) {
        for (std::size_t f = 0; f < d; ++f) {
            double var = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                double dx = per_perm[t][f] - report.values[f];
                var += dx * dx;
            }
            var /= static_cast<double>(T - 1);
            report.std_errors[f] = std::sqrt(var / static_cast<double>(T));
        }
    }
    return report;
}

SageReport sage_values_split(const Detector& model, const LabeledDataset& data, Split split,
                             const Background& bg, const SageConfig& config) {
    std::vector<BoolRow> rows;
    std::vector<int> labels;
    for (std::size_t i : data.indices_of(split)) {
        rows.push_back(data.matrix.rows[i]);
        labels.push_back(data.labels[i]);
    }
    return sage_values(model, rows, labels, bg, config);
}

void save_sage_report(const SageReport& report, const std::string& path) {
    json values = json::array(), errors = json::array();
    for (double v : report.values) values.push_back(format_double(v));
    for (double v : report.std_errors) errors.push_back(format_double(v));
    json j{{"format", "evlab-sage/1"},
           {"values", std::move(values)},
           {"std_errors", std::move(errors)},
           {"v_full", format_double(report.v_full)},
           {"v_empty", format_double(report.v_empty)},
           {"loss", report.loss},
           {"n_permutations", report.n_permutations},
           {"seed", report.seed},
           {"model_digest", report.model_digest},
           {"background_digest", report.background_digest},
           {"config_digest", report.config_digest}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

ReducedInputDetector::ReducedInputDetector(std::unique_ptr<Detector> inner,
                                           std::vector<int> excluded, std::size_t full_width)
    : inner_(std::move(inner)), excluded_(std::move(excluded)), full_width_(full_width) {
    std::sort(excluded_.begin(), excluded_.end());
    std::vector<char> drop(full_width_, 0);
    for (int f : excluded_) {
        if (f < 0 || static_cast<std::size_t>(f) >= full_width_) {
            throw error("excluded feature id " + std::to_string(f) + " out of range");
        }
        drop[static_cast<std::size_t>(f)] = 1;
    }
    for (std::size_t j = 0; j < full_width_; ++j) {
        if (!drop[j]) keep_.push_back(j);
    }
    if (inner_->n_features() != keep_.size()) {
        throw error("reduced model width mismatch: inner expects " +
                    std::to_string(inner_->n_features()) + ", kept " +
                    std::to_string(keep_.size()));
    }
}

double ReducedInputDetector::raw_score(std::span<const std::uint8_t> row) const {
    BoolRow reduced(keep_.size());
    for (std::size_t j = 0; j < keep_.size(); ++j) reduced[j] = row[keep_[j]];
    return inner_->raw_score(reduced);
}

json ReducedInputDetector::to_json() const {
    return json{{"format", "evlab-model/1"},
                {"kind", "reduced"},
                {"full_width", full_width_},
                {"excluded", excluded_},
                {"inner", inner_->to_json()}};
}

std::unique_ptr<Detector> reduced_model_from_json(const json& j) {
    if (j.at("kind").get<std::string>() != "reduced") {
        throw parse_error("not a reduced model");
    }
    return std::make_unique<ReducedInputDetector>(model_from_json(j.at("inner")),
                                                  j.at("excluded").get<std::vector<int>>(),
                                                  j.at("full_width").get<std::size_t>());
}

ImprovedDetector exclude_and_retrain(const LabeledDataset& data, const std::vector<int>& ranked,
                                     std::size_t k, DetectorKind kind,
                                     const nlohmann::json& hyperparams, std::uint64_t seed) {
    const std::size_t d = data.matrix.n_features();
    if (k == 0) throw error("exclude_and_retrain: k must be > 0");
    if (k >= d) {
        throw error("exclude_and_retrain: k=" + std::to_string(k) +
                    " must be < feature count " + std::to_string(d));
    }
    if (ranked.size() < k) throw error("exclude_and_retrain: ranking shorter than k");

    std::vector<int> excluded(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<char> drop(d, 0);
    for (int f : excluded) {
        if (f < 0 || static_cast<std::size_t>(f) >= d) {
            throw error("exclude_and_retrain: ranked id " + std::to_string(f) + " out of range");
        }
        if (drop[static_cast<std::size_t>(f)]) {
            throw error("exclude_and_retrain: duplicate ranked id " + std::to_string(f));
        }
        drop[static_cast<std::size_t>(f)] = 1;
    }

    LabeledDataset reduced;
    reduced.labels = data.labels;
    reduced.split = data.split;
    reduced.matrix.sample_ids = data.matrix.sample_ids;
    for (std::size_t j = 0; j < d; ++j) {
        if (drop[j]) continue;
        FeatureSpec spec = data.matrix.specs[j];
        spec.id = static_cast<int>(reduced.matrix.specs.size());
        reduced.matrix.specs.push_back(std::move(spec));
    }
    reduced.matrix.rows.reserve(data.size());
    for (const BoolRow& row : data.matrix.rows) {
        BoolRow r;
        r.reserve(d - k);
        for (std::size_t j = 0; j < d; ++j) {
            if (!drop[j]) r.push_back(row[j]);
        }
        reduced.matrix.rows.push_back(std::move(r));
    }

    FitResult fit = fit_detector(kind, hyperparams, reduced, seed);
    ImprovedDetector out;
    out.excluded_features = excluded;
    out.train_accuracy = fit.train_accuracy;
    out.val_accuracy = fit.val_accuracy;
    out.model = std::make_unique<ReducedInputDetector>(std::move(fit.model), excluded, d);
    return out;
}

}  // namespace evlab
