#include "evlab/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "evlab/sage.hpp"

namespace evlab {

using nlohmann::json;

std::string kind_name(DetectorKind k) {
    switch (k) {
        case DetectorKind::gbdt: return "gbdt";
        case DetectorKind::linear_svm: return "linear_svm";
        case DetectorKind::random_forest: return "random_forest";
        case DetectorKind::mlp: return "mlp";
    }
    return "gbdt";
}

DetectorKind kind_from_name(const std::string& name) {
    if (name == "gbdt") return DetectorKind::gbdt;
    if (name == "linear_svm") return DetectorKind::linear_svm;
    if (name == "random_forest") return DetectorKind::random_forest;
    if (name == "mlp") return DetectorKind::mlp;
    throw config_error("unknown detector kind '" + name + "'");
}

double LinearWeights::decision(std::span<const std::uint8_t> row) const {
    double s = bias;
    for (std::size_t j = 0; j < weights.size(); ++j) {
        if (row[j]) s += weights[j];
    }
    return s;
}

double Detector::probability_from_raw(double raw) const { return sigmoid(raw); }

Prediction Detector::predict(std::span<const std::uint8_t> row) const {
    if (row.size() != n_features()) {
        throw error("dimension mismatch: row has " + std::to_string(row.size()) +
                    " features, model expects " + std::to_string(n_features()));
    }
    Prediction p;
    p.raw_score = raw_score(row);
    p.probability = probability_from_raw(p.raw_score);
    p.label = p.probability >= 0.5 ? 1 : 0;
    return p;
}

std::string Detector::digest() const {
    Fnv1a h;
    h.update(to_json().dump());
    return h.hex();
}

double detection_rate(const Detector& model, std::span<const BoolRow> rows) {
    if (rows.empty()) throw error("detection_rate: empty sample set");
    std::size_t flagged = 0;
    for (const BoolRow& row : rows) {
        if (model.predict(row).label == 1) ++flagged;
    }
    return static_cast<double>(flagged) / static_cast<double>(rows.size());
}

double accuracy(const Detector& model, const LabeledDataset& data, Split split) {
    std::size_t total = 0, correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.split[i] != split) continue;
        ++total;
        if (model.predict(data.matrix.rows[i]).label == data.labels[i]) ++correct;
    }
    if (total == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(correct) / static_cast<double>(total);
}

LinearWeights linear_weights(const Detector& model) {
    if (model.kind() != DetectorKind::linear_svm) {
        throw error("linear_weights: model kind is " + kind_name(model.kind()) +
                    ", only linear_svm exposes weights");
    }
    const auto& svm = static_cast<const LinearSvmModel&>(model);
    LinearWeights w;
    w.weights = svm.weights_;
    w.bias = svm.bias_;
    return w;
}

// --- tree eval --------------------------------------------------------------

double Tree::eval(std::span<const std::uint8_t> row) const {
    int i = 0;
    while (nodes[i].feature >= 0) {
        i = row[static_cast<std::size_t>(nodes[i].feature)] ? nodes[i].right : nodes[i].left;
    }
    return nodes[i].value;
}

double GbdtModel::raw_score(std::span<const std::uint8_t> row) const {
    double s = base_score_;
    for (const Tree& t : trees_) s += learning_rate_ * t.eval(row);
    return s;
}

std::vector<double> GbdtModel::staged_scores(std::span<const std::uint8_t> row) const {
    std::vector<double> out;
    out.reserve(trees_.size() + 1);
    double s = base_score_;
    out.push_back(s);
    for (const Tree& t : trees_) {
        s += learning_rate_ * t.eval(row);
        out.push_back(s);
    }
    return out;
}

double LinearSvmModel::raw_score(std::span<const std::uint8_t> row) const {
    double s = bias_;
    for (std::size_t j = 0; j < weights_.size(); ++j) {
        if (row[j]) s += weights_[j];
    }
    return s;
}

double RandomForestModel::raw_score(std::span<const std::uint8_t> row) const {
    double votes = 0.0;
    for (const Tree& t : trees_) votes += t.eval(row);
    return votes / static_cast<double>(trees_.size()) - 0.5;
}

double MlpModel::raw_score(std::span<const std::uint8_t> row) const {
    std::vector<double> act(row.begin(), row.end());
    std::vector<double> next;
    const std::size_t n_layers = weights_.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t n_in = layer_sizes_[l];
        const std::size_t n_out = layer_sizes_[l + 1];
        next.assign(n_out, 0.0);
        const std::vector<double>& w = weights_[l];
        for (std::size_t o = 0; o < n_out; ++o) {
            double s = biases_[l][o];
            const double* wrow = w.data() + o * n_in;
            for (std::size_t i = 0; i < n_in; ++i) s += wrow[i] * act[i];
            next[o] = (l + 1 < n_layers) ? std::max(0.0, s) : s;  // ReLU on hidden, linear out
        }
        act.swap(next);
    }
    return act[0];
}

// --- serialization ----------------------------------------------------------

namespace {

constexpr const char* kModelFormat = "evlab-model/1";

json tree_to_json(const Tree& t) {
    json nodes = json::array();
    for (const TreeNode& n : t.nodes) {
        nodes.push_back(json::array({n.feature, n.left, n.right, format_double(n.value)}));
    }
    return nodes;
}

Tree tree_from_json(const json& nodes) {
    Tree t;
    for (const json& n : nodes) {
        TreeNode node;
        node.feature = n.at(0).get<int>();
        node.left = n.at(1).get<int>();
        node.right = n.at(2).get<int>();
        node.value = parse_double(n.at(3).get<std::string>());
        t.nodes.push_back(node);
    }
    if (t.nodes.empty()) throw parse_error("tree with no nodes");
    return t;
}

json doubles_to_json(const std::vector<double>& xs) {
    json arr = json::array();
    for (double x : xs) arr.push_back(format_double(x));
    return arr;
}

std::vector<double> doubles_from_json(const json& arr) {
    std::vector<double> out;
    out.reserve(arr.size());
    for (const json& x : arr) out.push_back(parse_double(x.get<std::string>()));
    return out;
}

}  // namespace

json GbdtModel::to_json() const {
    json trees = json::array();
    for (const Tree& t : trees_) trees.push_back(tree_to_json(t));
    return json{{"format", kModelFormat},
                {"kind", "gbdt"},
                {"n_features", n_features_},
                {"base_score", format_double(base_score_)},
                {"learning_rate", format_double(learning_rate_)},
                {"trees", std::move(trees)}};
}

json LinearSvmModel::to_json() const {
    return json{{"format", kModelFormat},
                {"kind", "linear_svm"},
                {"n_features", weights_.size()},
                {"weights", doubles_to_json(weights_)},
                {"bias", format_double(bias_)}};
}

json RandomForestModel::to_json() const {
    json trees = json::array();
    for (const Tree& t : trees_) trees.push_back(tree_to_json(t));
    return json{{"format", kModelFormat},
                {"kind", "random_forest"},
                {"n_features", n_features_},
                {"trees", std::move(trees)}};
}

json MlpModel::to_json() const {
    json ws = json::array();
    for (const auto& w : weights_) ws.push_back(doubles_to_json(w));
    json bs = json::array();
    for (const auto& b : biases_) bs.push_back(doubles_to_json(b));
    return json{{"format", kModelFormat},
                {"kind", "mlp"},
                {"layer_sizes", layer_sizes_},
                {"weights", std::move(ws)},
                {"biases", std::move(bs)}};
}

std::unique_ptr<Detector> model_from_json(const json& j) {
    if (!j.contains("format") || j.at("format").get<std::string>() != kModelFormat) {
        throw parse_error("unsupported model format (expected evlab-model/1)");
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gbdt") {
        auto m = std::make_unique<GbdtModel>();
        m->n_features_ = j.at("n_features").get<std::size_t>();
        m->base_score_ = parse_double(j.at("base_score").get<std::string>());
        m->learning_rate_ = parse_double(j.at("learning_rate").get<std::string>());
        for (const json& t : j.at("trees")) m->trees_.push_back(tree_from_json(t));
        return m;
    }
    if (kind == "linear_svm") {
        auto m = std::make_unique<LinearSvmModel>();
        m->weights_ = doubles_from_json(j.at("weights"));
        m->bias_ = parse_double(j.at("bias").get<std::string>());
        return m;
    }
    if (kind == "random_forest") {
        auto m = std::make_unique<RandomForestModel>();
        m->n_features_ = j.at("n_features").get<std::size_t>();
        for (const json& t : j.at("trees")) m->trees_.push_back(tree_from_json(t));
        if (m->trees_.empty()) throw parse_error("random_forest model with no trees");
        return m;
    }
    if (kind == "mlp") {
        auto m = std::make_unique<MlpModel>();
        m->layer_sizes_ = j.at("layer_sizes").get<std::vector<std::size_t>>();
        for (const json& w : j.at("weights")) m->weights_.push_back(doubles_from_json(w));
        for (const json& b : j.at("biases")) m->biases_.push_back(doubles_from_json(b));
        if (m->weights_.size() + 1 != m->layer_sizes_.size() ||
            m->biases_.size() != m->weights_.size()) {
            throw parse_error("mlp model: layer/weight shape mismatch");
        }
        return m;
    }
    if (kind == "reduced") return reduced_model_from_json(j);
    throw parse_error("unknown model kind '" + kind + "'");
}

void save_model(const Detector& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open '" + path + "' for writing");
    out << model.to_json().dump(2) << '\n';
    if (!out) throw error("failed writing '" + path + "'");
}

std::unique_ptr<Detector> load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open '" + path + "' for reading");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw parse_error("malformed model file '" + path + "': " + e.what());
    }
    return model_from_json(j);
}

std::unique_ptr<Detector> load_model(const std::string& path, DetectorKind expected) {
    std::unique_ptr<Detector> m = load_model(path);
    if (m->kind() != expected) {
        throw error("kind mismatch: '" + path + "' holds a " + kind_name(m->kind()) +
                    " model, expected " + kind_name(expected));
    }
    return m;
}

}  // namespace evlab
