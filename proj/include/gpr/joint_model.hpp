#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gpr/embed_index.hpp"
#include "gpr/scenegraph.hpp"
#include "gpr/tape.hpp"

namespace gpr {

using autodiff::Matrix;

struct JointModelConfig {
    int vocab = 512;   // label hash buckets
    int hidden = 64;   // embedding dim h
    int layers = 2;
    int heads = 4;
    enum class Pool { Mean, Max } pool = Pool::Mean;
};

// Tensorized graph: what the attention layers consume. Node order is
// arbitrary; the model output is order-invariant.
struct GraphTensors {
    std::vector<int> label_ids;   // rows into the embedding table
    Eigen::MatrixXi relation;     // oriented relation index, 4 = self
    Matrix neighbor_mask;         // 1 where attention is allowed

    static GraphTensors from_graph(const SceneGraph& graph, int vocab);
};

// Joint text/map graph encoder: per layer, neighbor-restricted multi-head
// self-attention with relation-typed key offsets, then cross-attention
// between the two graphs; mean (or max) pooled, L2-normalized, with an MLP
// match head on the concatenated graph embeddings.
class JointModel {
  public:
    struct LayerParams {
        Matrix self_wq, self_wk, self_wv, self_wo;
        Matrix rel_key;  // 5 x hidden: N, S, E, W, self
        Matrix cross_wq, cross_wk, cross_wv, cross_wo;
    };

    struct PairOutput {
        EmbeddingVector text_embedding;
        EmbeddingVector map_embedding;
        double similarity = 0.0;         // cosine of the two embeddings
        double match_probability = 0.0;  // MLP head, in (0, 1)
    };

    struct LossValue {
        double total = 0.0;
        double match_component = 0.0;
        double sim_component = 0.0;
    };

    JointModel(JointModelConfig config, uint64_t seed);

    const JointModelConfig& config() const { return config_; }

    // Named parameter groups, declaration order (also the checkpoint order).
    std::vector<std::pair<std::string, Matrix*>> parameters();
    std::vector<std::pair<std::string, const Matrix*>> parameters() const;

    PairOutput joint_embed(const SceneGraph& text_graph,
                           const SceneGraph& map_graph) const;
    PairOutput joint_embed(const GraphTensors& text, const GraphTensors& map) const;

    LossValue loss(const SceneGraph& text_graph, const SceneGraph& map_graph,
                   bool is_match) const;

    // Loss plus parameter gradients accumulated into `grads`.
    LossValue loss_and_gradients(
        const SceneGraph& text_graph, const SceneGraph& map_graph, bool is_match,
        std::unordered_map<const Matrix*, Matrix>& grads) const;

    // Single-graph embedding: self-attention layers only (no cross module),
    // pooled and normalized. Lets the model back the candidate index.
    EmbeddingVector embed_single(const SceneGraph& graph) const;

    // "GPRM" checkpoint, float32 little-endian tensors in parameter order.
    void save(const std::string& path) const;
    static JointModel load(const std::string& path);

  private:
    JointModelConfig config_;
    Matrix embed_;  // vocab x hidden
    std::vector<LayerParams> layers_;
    Matrix head_w1, head_b1, head_w2, head_b2;
};

struct TrainingPair {
    SceneGraph text_graph;
    SceneGraph map_graph;
    bool is_match = false;
};

struct TrainReport {
    // loss_trace[0] is the pre-training loss; one entry per epoch after it.
    std::vector<double> loss_trace;
};

class TrainingDivergedError : public std::runtime_error {
  public:
    TrainingDivergedError(int epoch)
        : std::runtime_error("training diverged (loss is NaN) at epoch " +
                             std::to_string(epoch)),
          epoch_(epoch) {}
    int epoch() const { return epoch_; }

  private:
    int epoch_;
};

// Full-batch gradient descent. Deterministic for a fixed model/pair set.
TrainReport train(JointModel& model, const std::vector<TrainingPair>& pairs,
                  int epochs, double learning_rate);

}  // namespace gpr
