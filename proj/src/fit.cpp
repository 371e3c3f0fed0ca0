#include <algorithm>
#include <cmath>
#include <numeric>

#include "evlab/detectors.hpp"

namespace evlab {

using nlohmann::json;

namespace {

struct TrainView {
    std::vector<const BoolRow*> rows;
    std::vector<int> labels;
    std::size_t d = 0;
};

TrainView collect_split(const LabeledDataset& data, Split split) {
    TrainView v;
    v.d = data.matrix.n_features();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.split[i] != split) continue;
        v.rows.push_back(&data.matrix.rows[i]);
        v.labels.push_back(data.labels[i]);
    }
    return v;
}

void require_two_classes(const TrainView& v) {
    if (v.rows.empty()) throw config_error("training split is empty");
    int first = v.labels[0];
    for (int y : v.labels) {
        if (y != first) return;
    }
    throw config_error("training split contains a single class (label " +
                       std::to_string(first) + ")");
}

double logloss_mean(const std::vector<double>& scores, const std::vector<int>& labels) {
    double s = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        double z = scores[i];
        // log(1 + exp(-|z|)) form avoids overflow
        double l = labels[i] == 1 ? std::log1p(std::exp(-std::abs(z))) + std::max(0.0, -z)
                                  : std::log1p(std::exp(-std::abs(z))) + std::max(0.0, z);
        s += l;
    }
    return s / static_cast<double>(scores.size());
}

// --- GBDT --------------------------------------------------------------------

struct GbdtParams {
    int n_trees = 100;
    int max_depth = 4;
    double learning_rate = 0.2;
    double lambda = 1.0;          // L2 on leaf weights
    double min_child_weight = 1.0;
    double min_gain = 1e-9;
};

GbdtParams gbdt_params(const json& hp) {
    GbdtParams p;
    if (hp.contains("n_trees")) p.n_trees = hp.at("n_trees").get<int>();
    if (hp.contains("max_depth")) p.max_depth = hp.at("max_depth").get<int>();
    if (hp.contains("learning_rate")) p.learning_rate = hp.at("learning_rate").get<double>();
    if (hp.contains("lambda")) p.lambda = hp.at("lambda").get<double>();
    if (hp.contains("min_child_weight")) p.min_child_weight = hp.at("min_child_weight").get<double>();
    if (p.n_trees < 1 || p.n_trees > 1000) throw config_error("gbdt n_trees out of range");
    if (p.max_depth < 1 || p.max_depth > 16) throw config_error("gbdt max_depth out of range");
    if (!(p.learning_rate > 0.0 && p.learning_rate <= 1.0))
        throw config_error("gbdt learning_rate out of range");
    return p;
}

// Grows one regression tree on gradients/hessians. Splits scan features in id
// order; strictly larger gain wins, so ties go to the lowest feature id.
class GbdtTreeBuilder {
  public:
    GbdtTreeBuilder(const TrainView& view, const std::vector<double>& grad,
                    const std::vector<double>& hess, const GbdtParams& params)
        : view_(view), grad_(grad), hess_(hess), params_(params) {}

    Tree build() {
        Tree tree;
        std::vector<std::size_t> all(view_.rows.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        grow(tree, all, 0);
        return tree;
    }

  private:
    int grow(Tree& tree, const std::vector<std::size_t>& idx, int depth) {
        double sum_g = 0.0, sum_h = 0.0;
        for (std::size_t i : idx) {
            sum_g += grad_[i];
            sum_h += hess_[i];
        }
        int best_feature = -1;
        double best_gain = params_.min_gain;
        if (depth < params_.max_depth) {
            std::vector<double> g1(view_.d, 0.0), h1(view_.d, 0.0);
            for (std::size_t i : idx) {
                const BoolRow& row = *view_.rows[i];
                double g = grad_[i], h = hess_[i];
                for (std::size_t f = 0; f < view_.d; ++f) {
                    if (row[f]) {
                        g1[f] += g;
                        h1[f] += h;
                    }
                }
            }
            const double parent = sum_g * sum_g / (sum_h + params_.lambda);
            for (std::size_t f = 0; f < view_.d; ++f) {
                double gl = sum_g - g1[f], hl = sum_h - h1[f];
                double gr = g1[f], hr = h1[f];
                if (hl < params_.min_child_weight || hr < params_.min_child_weight) continue;
                double gain = gl * gl / (hl + params_.lambda) + gr * gr / (hr + params_.lambda) -
                              parent;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                }
            }
        }
        if (best_feature < 0) {
            TreeNode leaf;
            leaf.value = -sum_g / (sum_h + params_.lambda);
            tree.nodes.push_back(leaf);
            return static_cast<int>(tree.nodes.size()) - 1;
        }
        std::vector<std::size_t> left, right;
        for (std::size_t i : idx) {
            ((*view_.rows[i])[static_cast<std::size_t>(best_feature)] ? right : left).push_back(i);
        }
        int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{best_feature, -1, -1, 0.0});
        int l = grow(tree, left, depth + 1);
        int r = grow(tree, right, depth + 1);
        tree.nodes[static_cast<std::size_t>(node_id)].left = l;
        tree.nodes[static_cast<std::size_t>(node_id)].right = r;
        return node_id;
    }

    const TrainView& view_;
    const std::vector<double>& grad_;
    const std::vector<double>& hess_;
    const GbdtParams& params_;
};

FitResult fit_gbdt(const json& hp, const TrainView& view, std::uint64_t /*seed*/) {
    GbdtParams params = gbdt_params(hp);
    const std::size_t n = view.rows.size();

    auto model = std::make_unique<GbdtModel>();
    model->n_features_ = view.d;
    model->learning_rate_ = params.learning_rate;

    std::size_t n_pos = 0;
    for (int y : view.labels) n_pos += static_cast<std::size_t>(y);
    double p0 = static_cast<double>(n_pos) / static_cast<double>(n);
    p0 = std::clamp(p0, 1e-6, 1.0 - 1e-6);
    model->base_score_ = std::log(p0 / (1.0 - p0));

    std::vector<double> scores(n, model->base_score_);
    std::vector<double> grad(n), hess(n);
    for (int round = 0; round < params.n_trees; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            double p = sigmoid(scores[i]);
            grad[i] = p - static_cast<double>(view.labels[i]);
            hess[i] = std::max(p * (1.0 - p), 1e-12);
        }
        Tree tree = GbdtTreeBuilder(view, grad, hess, params).build();
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] += params.learning_rate * tree.eval(*view.rows[i]);
        }
        model->trees_.push_back(std::move(tree));
    }

    FitResult res;
    res.final_loss = logloss_mean(scores, view.labels);
    res.model = std::move(model);
    return res;
}

// --- linear SVM --------------------------------------------------------------

struct SvmParams {
    int epochs = 30;
    double lambda = 1e-4;
};

FitResult fit_svm(const json& hp, const TrainView& view, std::uint64_t seed) {
    SvmParams params;
    if (hp.contains("epochs")) params.epochs = hp.at("epochs").get<int>();
    if (hp.contains("lambda")) params.lambda = hp.at("lambda").get<double>();
    if (params.epochs < 1) throw config_error("svm epochs must be >= 1");
    if (!(params.lambda > 0.0)) throw config_error("svm lambda must be > 0");

    const std::size_t n = view.rows.size();
    auto model = std::make_unique<LinearSvmModel>();
    model->weights_.assign(view.d, 0.0);
    model->bias_ = 0.0;

    // Pegasos-style per-sample subgradient steps over seeded shuffles.
    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t t = 0;
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t i : order) {
            ++t;
            const double eta = 1.0 / (params.lambda * static_cast<double>(t));
            const BoolRow& row = *view.rows[i];
            const double y = view.labels[i] == 1 ? 1.0 : -1.0;
            double margin = model->bias_;
            for (std::size_t f = 0; f < view.d; ++f) {
                if (row[f]) margin += model->weights_[f];
            }
            const double shrink = 1.0 - eta * params.lambda;
            for (double& w : model->weights_) w *= shrink;
            if (y * margin < 1.0) {
                for (std::size_t f = 0; f < view.d; ++f) {
                    if (row[f]) model->weights_[f] += eta * y;
                }
                model->bias_ += eta * y;  // bias is unregularized
            }
        }
    }

    double hinge = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = view.labels[i] == 1 ? 1.0 : -1.0;
        hinge += std::max(0.0, 1.0 - y * model->raw_score(*view.rows[i]));
    }
    FitResult res;
    res.final_loss = hinge / static_cast<double>(n);
    res.model = std::move(model);
    return res;
}

// --- random forest -----------------------------------------------------------

struct ForestParams {
    int n_trees = 60;
    int max_depth = 16;
    int min_samples_leaf = 1;
    int mtry = 0;  // 0 = floor(sqrt(d))
};

class CartBuilder {
  public:
    CartBuilder(const TrainView& view, const ForestParams& params, Rng& rng)
        : view_(view), params_(params), rng_(rng) {
        feature_pool_.resize(view.d);
        std::iota(feature_pool_.begin(), feature_pool_.end(), std::size_t{0});
    }

    Tree build(const std::vector<std::size_t>& idx) {
        Tree tree;
        grow(tree, idx, 0);
        return tree;
    }

  private:
    static double gini(std::size_t n1, std::size_t n) {
        if (n == 0) return 0.0;
        double p = static_cast<double>(n1) / static_cast<double>(n);
        return 2.0 * p * (1.0 - p);
    }

    int grow(Tree& tree, const std::vector<std::size_t>& idx, int depth) {
        std::size_t n = idx.size();
        std::size_t n1 = 0;
        for (std::size_t i : idx) n1 += static_cast<std::size_t>(view_.labels[i]);

        int best_feature = -1;
        double best_gain = 1e-12;
        if (depth < params_.max_depth && n1 != 0 && n1 != n &&
            n >= 2 * static_cast<std::size_t>(params_.min_samples_leaf)) {
            const std::size_t mtry = params_.mtry > 0
                ? static_cast<std::size_t>(params_.mtry)
                : static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(view_.d))));
            // partial Fisher-Yates draw of mtry candidate features
            for (std::size_t k = 0; k < mtry && k < view_.d; ++k) {
                std::size_t j = k + rng_.uniform_index(view_.d - k);
                std::swap(feature_pool_[k], feature_pool_[j]);
            }
            const double parent = gini(n1, n);
            for (std::size_t k = 0; k < mtry && k < view_.d; ++k) {
                std::size_t f = feature_pool_[k];
                std::size_t nr = 0, nr1 = 0;
                for (std::size_t i : idx) {
                    if ((*view_.rows[i])[f]) {
                        ++nr;
                        nr1 += static_cast<std::size_t>(view_.labels[i]);
                    }
                }
                std::size_t nl = n - nr, nl1 = n1 - nr1;
                if (nl < static_cast<std::size_t>(params_.min_samples_leaf) ||
                    nr < static_cast<std::size_t>(params_.min_samples_leaf)) {
                    continue;
                }
                double wl = static_cast<double>(nl) / static_cast<double>(n);
                double gain = parent - wl * gini(nl1, nl) - (1.0 - wl) * gini(nr1, nr);
                if (gain > best_gain ||
                    (gain == best_gain && best_feature >= 0 &&
                     static_cast<int>(f) < best_feature)) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                }
            }
        }
        if (best_feature < 0) {
            TreeNode leaf;
            leaf.value = 2 * n1 >= n ? 1.0 : 0.0;  // majority vote; tie counts malicious
            tree.nodes.push_back(leaf);
            return static_cast<int>(tree.nodes.size()) - 1;
        }
        std::vector<std::size_t> left, right;
        for (std::size_t i : idx) {
            ((*view_.rows[i])[static_cast<std::size_t>(best_feature)] ? right : left).push_back(i);
        }
        int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{best_feature, -1, -1, 0.0});
        int l = grow(tree, left, depth + 1);
        int r = grow(tree, right, depth + 1);
        tree.nodes[static_cast<std::size_t>(node_id)].left = l;
        tree.nodes[static_cast<std::size_t>(node_id)].right = r;
        return node_id;
    }

    const TrainView& view_;
    const ForestParams& params_;
    Rng& rng_;
    std::vector<std::size_t> feature_pool_;
};

FitResult fit_forest(const json& hp, const TrainView& view, std::uint64_t seed) {
    ForestParams params;
    if (hp.contains("n_trees")) params.n_trees = hp.at("n_trees").get<int>();
    if (hp.contains("max_depth")) params.max_depth = hp.at("max_depth").get<int>();
    if (hp.contains("min_samples_leaf"))
        params.min_samples_leaf = hp.at("min_samples_leaf").get<int>();
    if (hp.contains("mtry")) params.mtry = hp.at("mtry").get<int>();
    if (params.n_trees < 1 || params.n_trees > 1000) throw config_error("forest n_trees out of range");

    const std::size_t n = view.rows.size();
    auto model = std::make_unique<RandomForestModel>();
    model->n_features_ = view.d;
    model->trees_.resize(static_cast<std::size_t>(params.n_trees));

    // Each tree derives its own seed, so parallel and serial builds agree.
    parallel_for(static_cast<std::size_t>(params.n_trees), env_threads(), [&](std::size_t t) {
        Rng rng(derive_seed(seed, 1000 + t));
        std::vector<std::size_t> boot(n);
        for (std::size_t i = 0; i < n; ++i) boot[i] = rng.uniform_index(n);
        CartBuilder builder(view, params, rng);
        model->trees_[t] = builder.build(boot);
    });

    // out-of-bag style loss is not tracked; report training error rate
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (model->predict(*view.rows[i]).label != view.labels[i]) ++wrong;
    }
    FitResult res;
    res.final_loss = static_cast<double>(wrong) / static_cast<double>(n);
    res.model = std::move(model);
    return res;
}

// --- MLP ----------------------------------------------------------------------

struct MlpParams {
    std::vector<std::size_t> hidden = {64, 32, 16};
    int epochs = 40;
    int batch_size = 32;
    double learning_rate = 0.01;
};

FitResult fit_mlp(const json& hp, const TrainView& view, std::uint64_t seed) {
    MlpParams params;
    if (hp.contains("hidden")) params.hidden = hp.at("hidden").get<std::vector<std::size_t>>();
    if (hp.contains("epochs")) params.epochs = hp.at("epochs").get<int>();
    if (hp.contains("batch_size")) params.batch_size = hp.at("batch_size").get<int>();
    if (hp.contains("learning_rate")) params.learning_rate = hp.at("learning_rate").get<double>();
    if (params.hidden.size() != 3) throw config_error("mlp needs exactly 3 hidden layers");
    for (std::size_t w : params.hidden) {
        if (w == 0 || w > 64) throw config_error("mlp hidden widths must be in [1,64]");
    }
    if (params.epochs < 1 || params.batch_size < 1) throw config_error("mlp epochs/batch invalid");

    auto model = std::make_unique<MlpModel>();
    model->layer_sizes_ = {view.d, params.hidden[0], params.hidden[1], params.hidden[2], 1};
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < model->layer_sizes_.size(); ++l) {
        std::size_t n_in = model->layer_sizes_[l];
        std::size_t n_out = model->layer_sizes_[l + 1];
        std::vector<double> w(n_in * n_out);
        double scale = std::sqrt(2.0 / static_cast<double>(n_in));
        for (double& x : w) x = rng.normal() * scale;
        model->weights_.push_back(std::move(w));
        model->biases_.push_back(std::vector<double>(n_out, 0.0));
    }

    const std::size_t n = view.rows.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    // Adam on mini-batches; batches are formed from a seeded shuffle.
    std::vector<std::vector<double>> m_w(model->weights_.size()), v_w(model->weights_.size());
    std::vector<std::vector<double>> m_b(model->biases_.size()), v_b(model->biases_.size());
    for (std::size_t l = 0; l < model->weights_.size(); ++l) {
        m_w[l].assign(model->weights_[l].size(), 0.0);
        v_w[l].assign(model->weights_[l].size(), 0.0);
        m_b[l].assign(model->biases_[l].size(), 0.0);
        v_b[l].assign(model->biases_[l].size(), 0.0);
    }
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;
    double last_loss = 0.0;

    const std::size_t n_layers = model->weights_.size();
    std::vector<std::vector<double>> act(n_layers + 1), delta(n_layers + 1);

    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(params.batch_size)) {
            std::size_t end = std::min(n, start + static_cast<std::size_t>(params.batch_size));
            std::vector<std::vector<double>> gw(n_layers), gb(n_layers);
            for (std::size_t l = 0; l < n_layers; ++l) {
                gw[l].assign(model->weights_[l].size(), 0.0);
                gb[l].assign(model->biases_[l].size(), 0.0);
            }
            for (std::size_t k = start; k < end; ++k) {
                const BoolRow& row = *view.rows[order[k]];
                const double y = static_cast<double>(view.labels[order[k]]);
                // forward
                act[0].assign(row.begin(), row.end());
                for (std::size_t l = 0; l < n_layers; ++l) {
                    std::size_t n_in = model->layer_sizes_[l];
                    std::size_t n_out = model->layer_sizes_[l + 1];
                    act[l + 1].assign(n_out, 0.0);
                    for (std::size_t o = 0; o < n_out; ++o) {
                        double s = model->biases_[l][o];
                        const double* wrow = model->weights_[l].data() + o * n_in;
                        for (std::size_t i = 0; i < n_in; ++i) s += wrow[i] * act[l][i];
                        act[l + 1][o] = (l + 1 < n_layers) ? std::max(0.0, s) : s;
                    }
                }
                double z = act[n_layers][0];
                double p = sigmoid(z);
                epoch_loss += y == 1.0 ? std::log1p(std::exp(-std::abs(z))) + std::max(0.0, -z)
                                       : std::log1p(std::exp(-std::abs(z))) + std::max(0.0, z);
                // backward: dL/dz = p - y for sigmoid + cross-entropy
                delta[n_layers].assign(1, p - y);
                for (std::size_t l = n_layers; l-- > 0;) {
                    std::size_t n_in = model->layer_sizes_[l];
                    std::size_t n_out = model->layer_sizes_[l + 1];
                    delta[l].assign(n_in, 0.0);
                    for (std::size_t o = 0; o < n_out; ++o) {
                        double do_ = delta[l + 1][o];
                        if (do_ == 0.0) continue;
                        double* gwrow = gw[l].data() + o * n_in;
                        const double* wrow = model->weights_[l].data() + o * n_in;
                        for (std::size_t i = 0; i < n_in; ++i) {
                            gwrow[i] += do_ * act[l][i];
                            delta[l][i] += do_ * wrow[i];
                        }
                        gb[l][o] += do_;
                    }
                    if (l > 0) {
                        // ReLU derivative on the input side of this layer
                        for (std::size_t i = 0; i < n_in; ++i) {
                            if (act[l][i] <= 0.0) delta[l][i] = 0.0;
                        }
                    }
                }
            }
            // Adam update with batch-mean gradients
            ++step;
            double bsz = static_cast<double>(end - start);
            double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t l = 0; l < n_layers; ++l) {
                for (std::size_t i = 0; i < gw[l].size(); ++i) {
                    double g = gw[l][i] / bsz;
                    m_w[l][i] = beta1 * m_w[l][i] + (1.0 - beta1) * g;
                    v_w[l][i] = beta2 * v_w[l][i] + (1.0 - beta2) * g * g;
                    model->weights_[l][i] -= params.learning_rate * (m_w[l][i] / bc1) /
                                             (std::sqrt(v_w[l][i] / bc2) + eps);
                }
                for (std::size_t i = 0; i < gb[l].size(); ++i) {
                    double g = gb[l][i] / bsz;
                    m_b[l][i] = beta1 * m_b[l][i] + (1.0 - beta1) * g;
                    v_b[l][i] = beta2 * v_b[l][i] + (1.0 - beta2) * g * g;
                    model->biases_[l][i] -= params.learning_rate * (m_b[l][i] / bc1) /
                                            (std::sqrt(v_b[l][i] / bc2) + eps);
                }
            }
        }
        last_loss = epoch_loss / static_cast<double>(n);
    }

    FitResult res;
    res.final_loss = last_loss;
    res.model = std::move(model);
    return res;
}

}  // namespace

double MlpModel::loss_and_grad(std::span<const BoolRow> rows, std::span<const int> labels,
                               std::vector<double>* grad) const {
    const std::size_t n_layers = weights_.size();
    std::vector<std::vector<double>> gw(n_layers), gb(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        gw[l].assign(weights_[l].size(), 0.0);
        gb[l].assign(biases_[l].size(), 0.0);
    }
    std::vector<std::vector<double>> act(n_layers + 1), delta(n_layers + 1);
    double loss = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        act[0].assign(rows[k].begin(), rows[k].end());
        for (std::size_t l = 0; l < n_layers; ++l) {
            std::size_t n_in = layer_sizes_[l];
            std::size_t n_out = layer_sizes_[l + 1];
            act[l + 1].assign(n_out, 0.0);
            for (std::size_t o = 0; o < n_out; ++o) {
                double s = biases_[l][o];
                const double* wrow = weights_[l].data() + o * n_in;
                for (std::size_t i = 0; i < n_in; ++i) s += wrow[i] * act[l][i];
                act[l + 1][o] = (l + 1 < n_layers) ? std::max(0.0, s) : s;
            }
        }
        double z = act[n_layers][0];
        double p = sigmoid(z);
        double y = static_cast<double>(labels[k]);
        loss += y == 1.0 ? std::log1p(std::exp(-std::abs(z))) + std::max(0.0, -z)
                         : std::log1p(std::exp(-std::abs(z))) + std::max(0.0, z);
        delta[n_layers].assign(1, p - y);
        for (std::size_t l = n_layers; l-- > 0;) {
            std::size_t n_in = layer_sizes_[l];
            std::size_t n_out = layer_sizes_[l + 1];
            delta[l].assign(n_in, 0.0);
            for (std::size_t o = 0; o < n_out; ++o) {
                double do_ = delta[l + 1][o];
                if (do_ == 0.0) continue;
                double* gwrow = gw[l].data() + o * n_in;
                const double* wrow = weights_[l].data() + o * n_in;
                for (std::size_t i = 0; i < n_in; ++i) {
                    gwrow[i] += do_ * act[l][i];
                    delta[l][i] += do_ * wrow[i];
                }
                gb[l][o] += do_;
            }
            if (l > 0) {
                for (std::size_t i = 0; i < n_in; ++i) {
                    if (act[l][i] <= 0.0) delta[l][i] = 0.0;
                }
            }
        }
    }
    const double n = static_cast<double>(rows.size());
    if (grad != nullptr) {
        grad->clear();
        for (std::size_t l = 0; l < n_layers; ++l) {
            for (double g : gw[l]) grad->push_back(g / n);
            for (double g : gb[l]) grad->push_back(g / n);
        }
    }
    return loss / n;
}

std::vector<double> MlpModel::flat_params() const {
    std::vector<double> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.insert(out.end(), weights_[l].begin(), weights_[l].end());
        out.insert(out.end(), biases_[l].begin(), biases_[l].end());
    }
    return out;
}

void MlpModel::set_flat_params(std::span<const double> params) {
    std::size_t pos = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        for (double& w : weights_[l]) w = params[pos++];
        for (double& b : biases_[l]) b = params[pos++];
    }
    if (pos != params.size()) throw error("set_flat_params: size mismatch");
}

FitResult fit_detector(DetectorKind kind, const json& hyperparams, const LabeledDataset& data,
                       std::uint64_t seed) {
    TrainView view = collect_split(data, Split::train);
    require_two_classes(view);

    FitResult res;
    switch (kind) {
        case DetectorKind::gbdt: res = fit_gbdt(hyperparams, view, seed); break;
        case DetectorKind::linear_svm: res = fit_svm(hyperparams, view, seed); break;
        case DetectorKind::random_forest: res = fit_forest(hyperparams, view, seed); break;
        case DetectorKind::mlp: res = fit_mlp(hyperparams, view, seed); break;
    }
    res.train_accuracy = accuracy(*res.model, data, Split::train);
    res.val_accuracy = accuracy(*res.model, data, Split::val);
    return res;
}

}  // namespace evlab
