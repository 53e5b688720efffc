#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpr/ged.hpp"
#include "gpr/joint_model.hpp"
#include "gpr/scenegraph.hpp"

namespace gpr {

enum class RerankMode { Ged, Net, None };

struct RankedScene {
    std::string scene_id;
    double score = 0.0;  // ged: edit cost (ascending); net: similarity (descending)
};

struct RetrievalResult {
    std::vector<RankedScene> ranked;  // length <= k
    RerankMode mode = RerankMode::Ged;
    bool exact = true;  // false when any GED fell back to the beam bound
};

class ConfigurationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Orders candidates against the query graph and truncates to k. Ties break
// by ascending scene_id. Mode Net requires a model; mode None preserves the
// candidate order (plumbing for pipelines that skip reranking).
RetrievalResult rerank(const SceneGraph& query,
                       const std::vector<const SceneGraph*>& candidates,
                       RerankMode mode, int k,
                       const JointModel* model = nullptr,
                       const GedCosts& costs = GedCosts::subgraph());

}  // namespace gpr
