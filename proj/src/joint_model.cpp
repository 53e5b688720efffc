#include "gpr/joint_model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace gpr {

using autodiff::Tape;

namespace {

constexpr int kSelfRelation = 4;  // after N, S, E, W

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

Matrix random_matrix(int rows, int cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

Matrix xavier(int rows, int cols, std::mt19937_64& rng) {
    return random_matrix(rows, cols, std::sqrt(2.0 / (rows + cols)), rng);
}

}  // namespace

GraphTensors GraphTensors::from_graph(const SceneGraph& graph, int vocab) {
    const int n = (int)graph.nodes.size();
    if (n == 0) throw EmptySceneError("cannot tensorize an empty graph");
    GraphTensors t;
    t.label_ids.reserve(n);
    for (const auto& node : graph.nodes)
        t.label_ids.push_back((int)(fnv1a(node.label) % (uint64_t)vocab));
    t.relation = Eigen::MatrixXi::Zero(n, n);
    t.neighbor_mask = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        t.relation(i, i) = kSelfRelation;
        t.neighbor_mask(i, i) = 1.0;
    }
    for (const auto& e : graph.edges) {
        t.relation(e.from, e.to) = (int)e.relation;
        t.relation(e.to, e.from) = (int)opposite(e.relation);
        t.neighbor_mask(e.from, e.to) = 1.0;
        t.neighbor_mask(e.to, e.from) = 1.0;
    }
    return t;
}

JointModel::JointModel(JointModelConfig config, uint64_t seed) : config_(config) {
    if (config_.hidden % config_.heads != 0)
        throw std::invalid_argument("hidden size must be divisible by head count");
    std::mt19937_64 rng(seed);
    const int h = config_.hidden;
    embed_ = random_matrix(config_.vocab, h, 1.0 / std::sqrt((double)h), rng);
    for (int l = 0; l < config_.layers; ++l) {
        LayerParams lp;
        lp.self_wq = xavier(h, h, rng);
        lp.self_wk = xavier(h, h, rng);
        lp.self_wv = xavier(h, h, rng);
        lp.self_wo = xavier(h, h, rng);
        lp.rel_key = random_matrix(5, h, 1.0 / std::sqrt((double)h), rng);
        lp.cross_wq = xavier(h, h, rng);
        lp.cross_wk = xavier(h, h, rng);
        lp.cross_wv = xavier(h, h, rng);
        lp.cross_wo = xavier(h, h, rng);
        layers_.push_back(std::move(lp));
    }
    head_w1 = xavier(2 * h, h, rng);
    head_b1 = Matrix::Zero(1, h);
    head_w2 = xavier(h, 1, rng);
    head_b2 = Matrix::Zero(1, 1);
}

std::vector<std::pair<std::string, Matrix*>> JointModel::parameters() {
    std::vector<std::pair<std::string, Matrix*>> out;
    out.emplace_back("embed", &embed_);
    for (int l = 0; l < (int)layers_.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        out.emplace_back(p + "self_wq", &layers_[l].self_wq);
        out.emplace_back(p + "self_wk", &layers_[l].self_wk);
        out.emplace_back(p + "self_wv", &layers_[l].self_wv);
        out.emplace_back(p + "self_wo", &layers_[l].self_wo);
        out.emplace_back(p + "rel_key", &layers_[l].rel_key);
        out.emplace_back(p + "cross_wq", &layers_[l].cross_wq);
        out.emplace_back(p + "cross_wk", &layers_[l].cross_wk);
        out.emplace_back(p + "cross_wv", &layers_[l].cross_wv);
        out.emplace_back(p + "cross_wo", &layers_[l].cross_wo);
    }
    out.emplace_back("head_w1", &head_w1);
    out.emplace_back("head_b1", &head_b1);
    out.emplace_back("head_w2", &head_w2);
    out.emplace_back("head_b2", &head_b2);
    return out;
}

std::vector<std::pair<std::string, const Matrix*>> JointModel::parameters() const {
    auto mut = const_cast<JointModel*>(this)->parameters();
    std::vector<std::pair<std::string, const Matrix*>> out;
    out.reserve(mut.size());
    for (auto& [name, p] : mut) out.emplace_back(name, p);
    return out;
}

namespace {

struct LayerIds {
    int self_wq, self_wk, self_wv, self_wo, rel_key;
    int cross_wq, cross_wk, cross_wv, cross_wo;
};

// Neighbor-masked multi-head self-attention with relation-typed key offsets,
// residual connection included.
int self_block(Tape& tape, int x, const GraphTensors& g, const LayerIds& ids,
               int heads, int hidden) {
    const int dh = hidden / heads;
    const double inv_sqrt = 1.0 / std::sqrt((double)dh);
    int q = tape.matmul(x, ids.self_wq);
    int k = tape.matmul(x, ids.self_wk);
    int v = tape.matmul(x, ids.self_wv);

    int concat = -1;
    for (int hIdx = 0; hIdx < heads; ++hIdx) {
        int qh = tape.slice_cols(q, hIdx * dh, dh);
        int kh = tape.slice_cols(k, hIdx * dh, dh);
        int vh = tape.slice_cols(v, hIdx * dh, dh);
        int rh = tape.slice_cols(ids.rel_key, hIdx * dh, dh);

        int scores = tape.matmul(qh, tape.transpose(kh));
        int rel_bias = tape.gather_cols(tape.matmul(qh, tape.transpose(rh)), g.relation);
        int s = tape.scale(tape.add(scores, rel_bias), inv_sqrt);
        int attn = tape.softmax_rows_masked(s, g.neighbor_mask);
        int oh = tape.matmul(attn, vh);
        concat = concat < 0 ? oh : tape.concat_cols(concat, oh);
    }
    return tape.add(x, tape.matmul(concat, ids.self_wo));
}

// Full cross-attention: queries from x, keys/values from y.
int cross_block(Tape& tape, int x, int y, const LayerIds& ids, int heads,
                int hidden) {
    const int dh = hidden / heads;
    const double inv_sqrt = 1.0 / std::sqrt((double)dh);
    int q = tape.matmul(x, ids.cross_wq);
    int k = tape.matmul(y, ids.cross_wk);
    int v = tape.matmul(y, ids.cross_wv);
    const Matrix ones =
        Matrix::Ones(tape.value(x).rows(), tape.value(y).rows());

    int concat = -1;
    for (int hIdx = 0; hIdx < heads; ++hIdx) {
        int qh = tape.slice_cols(q, hIdx * dh, dh);
        int kh = tape.slice_cols(k, hIdx * dh, dh);
        int vh = tape.slice_cols(v, hIdx * dh, dh);
        int s = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
        int attn = tape.softmax_rows_masked(s, ones);
        int oh = tape.matmul(attn, vh);
        concat = concat < 0 ? oh : tape.concat_cols(concat, oh);
    }
    return tape.add(x, tape.matmul(concat, ids.cross_wo));
}

EmbeddingVector to_embedding(const Matrix& row) {
    EmbeddingVector v;
    v.values.reserve(row.cols());
    for (int j = 0; j < row.cols(); ++j) v.values.push_back((float)row(0, j));
    return v;
}

}  // namespace

struct PairForward {
    Tape tape;
    int text_embedding = -1;
    int map_embedding = -1;
    int similarity = -1;
    int logit = -1;
};

namespace {

int pool(Tape& tape, int x, JointModelConfig::Pool mode) {
    return mode == JointModelConfig::Pool::Mean ? tape.mean_rows(x)
                                                : tape.max_rows(x);
}

}  // namespace

// Builds the whole pair forward pass on a fresh tape.
static PairForward forward_pair(const JointModel& model,
                                const std::vector<const Matrix*>& params,
                                const GraphTensors& text,
                                const GraphTensors& map) {
    const auto& cfg = model.config();
    PairForward f;
    Tape& tape = f.tape;

    // params come in declaration order: embed, layers x 9, head x 4
    std::size_t idx = 0;
    int embed = tape.param(params[idx++]);
    std::vector<LayerIds> layer_ids(cfg.layers);
    for (int l = 0; l < cfg.layers; ++l) {
        LayerIds& ids = layer_ids[l];
        ids.self_wq = tape.param(params[idx++]);
        ids.self_wk = tape.param(params[idx++]);
        ids.self_wv = tape.param(params[idx++]);
        ids.self_wo = tape.param(params[idx++]);
        ids.rel_key = tape.param(params[idx++]);
        ids.cross_wq = tape.param(params[idx++]);
        ids.cross_wk = tape.param(params[idx++]);
        ids.cross_wv = tape.param(params[idx++]);
        ids.cross_wo = tape.param(params[idx++]);
    }
    int head_w1 = tape.param(params[idx++]);
    int head_b1 = tape.param(params[idx++]);
    int head_w2 = tape.param(params[idx++]);
    int head_b2 = tape.param(params[idx++]);

    int xt = tape.gather_rows(embed, text.label_ids);
    int xm = tape.gather_rows(embed, map.label_ids);
    for (int l = 0; l < cfg.layers; ++l) {
        const LayerIds& ids = layer_ids[l];
        xt = self_block(tape, xt, text, ids, cfg.heads, cfg.hidden);
        xm = self_block(tape, xm, map, ids, cfg.heads, cfg.hidden);
        int xt2 = cross_block(tape, xt, xm, ids, cfg.heads, cfg.hidden);
        int xm2 = cross_block(tape, xm, xt, ids, cfg.heads, cfg.hidden);
        xt = xt2;
        xm = xm2;
    }

    f.text_embedding = tape.l2_normalize_row(pool(tape, xt, cfg.pool));
    f.map_embedding = tape.l2_normalize_row(pool(tape, xm, cfg.pool));
    f.similarity = tape.dot_rows(f.text_embedding, f.map_embedding);

    int cat = tape.concat_cols(f.text_embedding, f.map_embedding);
    int hidden = tape.tanh_op(tape.add_rowvec(tape.matmul(cat, head_w1), head_b1));
    f.logit = tape.add_rowvec(tape.matmul(hidden, head_w2), head_b2);
    return f;
}

static std::vector<const Matrix*> param_pointers(const JointModel& model) {
    std::vector<const Matrix*> out;
    for (const auto& [name, p] : model.parameters()) out.push_back(p);
    return out;
}

JointModel::PairOutput JointModel::joint_embed(const GraphTensors& text,
                                               const GraphTensors& map) const {
    PairForward f = forward_pair(*this, param_pointers(*this), text, map);
    PairOutput out;
    out.text_embedding = to_embedding(f.tape.value(f.text_embedding));
    out.map_embedding = to_embedding(f.tape.value(f.map_embedding));
    out.similarity = f.tape.value(f.similarity)(0, 0);
    out.match_probability = 1.0 / (1.0 + std::exp(-f.tape.value(f.logit)(0, 0)));
    return out;
}

JointModel::PairOutput JointModel::joint_embed(const SceneGraph& text_graph,
                                               const SceneGraph& map_graph) const {
    return joint_embed(GraphTensors::from_graph(text_graph, config_.vocab),
                       GraphTensors::from_graph(map_graph, config_.vocab));
}

namespace {

struct LossIds {
    int total, match_component, sim_component;
};

LossIds loss_nodes(Tape& tape, const PairForward& f, bool is_match) {
    LossIds ids;
    ids.match_component = tape.bce_with_logit(f.logit, is_match ? 1.0 : 0.0);
    ids.sim_component = is_match ? tape.one_minus(f.similarity)
                                 : tape.hinge(f.similarity, 0.2);
    ids.total = tape.add(ids.match_component, ids.sim_component);
    return ids;
}

}  // namespace

JointModel::LossValue JointModel::loss(const SceneGraph& text_graph,
                                       const SceneGraph& map_graph,
                                       bool is_match) const {
    PairForward f = forward_pair(*this, param_pointers(*this),
                                 GraphTensors::from_graph(text_graph, config_.vocab),
                                 GraphTensors::from_graph(map_graph, config_.vocab));
    LossIds ids = loss_nodes(f.tape, f, is_match);
    return {f.tape.value(ids.total)(0, 0), f.tape.value(ids.match_component)(0, 0),
            f.tape.value(ids.sim_component)(0, 0)};
}

JointModel::LossValue JointModel::loss_and_gradients(
    const SceneGraph& text_graph, const SceneGraph& map_graph, bool is_match,
    std::unordered_map<const Matrix*, Matrix>& grads) const {
    PairForward f = forward_pair(*this, param_pointers(*this),
                                 GraphTensors::from_graph(text_graph, config_.vocab),
                                 GraphTensors::from_graph(map_graph, config_.vocab));
    LossIds ids = loss_nodes(f.tape, f, is_match);
    f.tape.backward(ids.total);
    for (const auto& [p, g] : f.tape.param_grads()) {
        auto [it, inserted] = grads.try_emplace(p, g);
        if (!inserted) it->second += g;
    }
    return {f.tape.value(ids.total)(0, 0), f.tape.value(ids.match_component)(0, 0),
            f.tape.value(ids.sim_component)(0, 0)};
}

EmbeddingVector JointModel::embed_single(const SceneGraph& graph) const {
    GraphTensors g = GraphTensors::from_graph(graph, config_.vocab);
    Tape tape;
    int embed = tape.param(&embed_);
    int x = tape.gather_rows(embed, g.label_ids);
    for (const auto& lp : layers_) {
        LayerIds ids{};
        ids.self_wq = tape.param(&lp.self_wq);
        ids.self_wk = tape.param(&lp.self_wk);
        ids.self_wv = tape.param(&lp.self_wv);
        ids.self_wo = tape.param(&lp.self_wo);
        ids.rel_key = tape.param(&lp.rel_key);
        x = self_block(tape, x, g, ids, config_.heads, config_.hidden);
    }
    int out = tape.l2_normalize_row(pool(tape, x, config_.pool));
    return to_embedding(tape.value(out));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainReport train(JointModel& model, const std::vector<TrainingPair>& pairs,
                  int epochs, double learning_rate) {
    if (pairs.empty()) throw std::invalid_argument("no training pairs");
    bool has_pos = false, has_neg = false;
    for (const auto& p : pairs) (p.is_match ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw std::invalid_argument(
            "training needs at least one positive and one negative pair");

    auto params = model.parameters();
    TrainReport report;

    auto batch = [&](std::unordered_map<const Matrix*, Matrix>* grads) {
        double total = 0;
        for (const auto& p : pairs) {
            JointModel::LossValue lv =
                grads ? model.loss_and_gradients(p.text_graph, p.map_graph,
                                                 p.is_match, *grads)
                      : model.loss(p.text_graph, p.map_graph, p.is_match);
            total += lv.total;
        }
        return total / (double)pairs.size();
    };

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::unordered_map<const Matrix*, Matrix> grads;
        double mean_loss = batch(&grads);
        if (std::isnan(mean_loss)) throw TrainingDivergedError(epoch);
        report.loss_trace.push_back(mean_loss);
        const double step = learning_rate / (double)pairs.size();
        for (auto& [name, p] : params) {
            auto it = grads.find(p);
            if (it != grads.end()) *p -= step * it->second;
        }
    }
    double final_loss = batch(nullptr);
    if (std::isnan(final_loss)) throw TrainingDivergedError(epochs);
    report.loss_trace.push_back(final_loss);
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("truncated model checkpoint");
    return v;
}

}  // namespace

void JointModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out.write("GPRM", 4);
    put<uint8_t>(out, 1);
    put<uint32_t>(out, (uint32_t)config_.vocab);
    put<uint32_t>(out, (uint32_t)config_.hidden);
    put<uint32_t>(out, (uint32_t)config_.layers);
    put<uint32_t>(out, (uint32_t)config_.heads);
    put<uint8_t>(out, config_.pool == JointModelConfig::Pool::Mean ? 0 : 1);
    for (const auto& [name, p] : parameters()) {
        for (int i = 0; i < p->rows(); ++i)
            for (int j = 0; j < p->cols(); ++j) put<float>(out, (float)(*p)(i, j));
    }
}

JointModel JointModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "GPRM", 4) != 0)
        throw std::runtime_error("bad model checkpoint magic");
    if (get<uint8_t>(in) != 1)
        throw std::runtime_error("unsupported model checkpoint version");
    JointModelConfig cfg;
    cfg.vocab = (int)get<uint32_t>(in);
    cfg.hidden = (int)get<uint32_t>(in);
    cfg.layers = (int)get<uint32_t>(in);
    cfg.heads = (int)get<uint32_t>(in);
    cfg.pool = get<uint8_t>(in) == 0 ? JointModelConfig::Pool::Mean
                                     : JointModelConfig::Pool::Max;
    JointModel model(cfg, 0);
    for (auto& [name, p] : model.parameters()) {
        for (int i = 0; i < p->rows(); ++i)
            for (int j = 0; j < p->cols(); ++j) (*p)(i, j) = get<float>(in);
    }
    return model;
}

}  // namespace gpr
