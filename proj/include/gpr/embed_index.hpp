#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "gpr/scenegraph.hpp"

namespace gpr {

// Fixed-dimension unit-norm embedding.
struct EmbeddingVector {
    std::vector<float> values;

    int dim() const { return (int)values.size(); }
    double norm() const;
};

struct Candidate {
    std::string scene_id;
    double score = 0.0;
};
using CandidateSet = std::vector<Candidate>;

// Deterministic structural embedding: two Weisfeiler-Lehman refinement
// rounds over (label, relation-typed neighborhood) tokens, feature-hashed
// with signs into `dim` buckets and L2-normalized. Position-independent.
EmbeddingVector structural_embed(const SceneGraph& graph, int dim = 256);

// Dot product of unit vectors. Throws on dimension mismatch.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Flat exact cosine index over (scene_id, embedding) entries.
class VectorIndex {
  public:
    VectorIndex() = default;
    explicit VectorIndex(int dim) : dim_(dim) {}

    void add(const std::string& scene_id, EmbeddingVector embedding);

    int dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<std::pair<std::string, EmbeddingVector>>& entries() const {
        return entries_;
    }

    // Exact top-n by cosine similarity, ties broken by ascending scene_id.
    // n larger than the index returns everything.
    CandidateSet extract_candidates(const EmbeddingVector& query, int n) const;

    // "GPRV" store: version, u32 dim, u64 count, then u16-length-prefixed
    // scene ids with little-endian float32 vectors. Bit-exact round trip.
    void save(const std::string& path) const;
    static VectorIndex load(const std::string& path);

  private:
    int dim_ = 0;
    std::vector<std::pair<std::string, EmbeddingVector>> entries_;
    std::unordered_set<std::string> ids_;
};

}  // namespace gpr
