#include "gpr/retrieval.hpp"

#include <algorithm>

namespace gpr {

RetrievalResult rerank(const SceneGraph& query,
                       const std::vector<const SceneGraph*>& candidates,
                       RerankMode mode, int k, const JointModel* model,
                       const GedCosts& costs) {
    if (candidates.empty()) throw std::invalid_argument("no candidates to rerank");
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (mode == RerankMode::Net && model == nullptr)
        throw ConfigurationError("mode net requires a model");

    RetrievalResult out;
    out.mode = mode;
    out.ranked.reserve(candidates.size());

    if (mode == RerankMode::None) {
        for (const SceneGraph* g : candidates) out.ranked.push_back({g->scene_id, 0.0});
    } else if (mode == RerankMode::Ged) {
        for (const SceneGraph* g : candidates) {
            GedResult r = ged(query, *g, costs);
            out.exact = out.exact && r.exact;
            out.ranked.push_back({g->scene_id, r.cost});
        }
        std::sort(out.ranked.begin(), out.ranked.end(),
                  [](const RankedScene& a, const RankedScene& b) {
                      if (a.score != b.score) return a.score < b.score;
                      return a.scene_id < b.scene_id;
                  });
    } else {
        for (const SceneGraph* g : candidates) {
            auto pair = model->joint_embed(query, *g);
            out.ranked.push_back({g->scene_id, pair.similarity});
        }
        std::sort(out.ranked.begin(), out.ranked.end(),
                  [](const RankedScene& a, const RankedScene& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.scene_id < b.scene_id;
                  });
    }

    if ((int)out.ranked.size() > k) out.ranked.resize(k);
    return out;
}

}  // namespace gpr
