#pragma once

#include <map>
#include <string>
#include <vector>

#include "gpr/embed_index.hpp"
#include "gpr/joint_model.hpp"
#include "gpr/osm.hpp"
#include "gpr/retrieval.hpp"
#include "gpr/scenegraph.hpp"
#include "gpr/textio.hpp"

namespace gpr {

class EmptyDatabaseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct SceneDatabase {
    std::map<std::string, SceneGraph> scenes;  // keyed by scene id
    GeoPoint bbox_min, bbox_max;
    int cells = 0;
    double radius = 50.0;
    int min_nodes = 6;
};

// Near-square grid of `cells` centers over the bbox; each center's submap
// becomes one scene graph; centers with fewer than min_nodes elements are
// dropped. Throws EmptyDatabaseError when nothing survives.
SceneDatabase build_database(const OsmElementSet& osm, const GeoPoint& corner_a,
                             const GeoPoint& corner_b, int cells,
                             double radius = 50.0, int min_nodes = 6);

// JSON-lines format with a header line; byte-deterministic.
std::string save_database_string(const SceneDatabase& db);
void save_database(const SceneDatabase& db, const std::string& path);
SceneDatabase load_database(const std::string& path);

// Structural embeddings by default; with a model, its single-graph encoder
// backs the index instead.
VectorIndex build_index(const SceneDatabase& db, int dim = 256,
                        const JointModel* model = nullptr);

struct PipelineOptions {
    int n = 10;  // candidate count
    int k = 5;
    RerankMode mode = RerankMode::Ged;
    int dim = 256;
    const JointModel* model = nullptr;
    bool subgraph_costs = true;  // price candidate-side insertions at zero
    int max_sentences = 6;

    GedCosts ged_costs() const {
        return subgraph_costs ? GedCosts::subgraph() : GedCosts{};
    }
};

struct StageTimings {
    double parse_ms = 0;
    double embed_ms = 0;
    double candidates_ms = 0;
    double rerank_ms = 0;
};

struct QueryOutcome {
    RetrievalResult result;
    CandidateSet candidates;
    StageTimings timings;
};

// parse -> text graph -> embed -> extract candidates -> rerank.
QueryOutcome run_query(const SceneDatabase& db, const VectorIndex& index,
                       const Description& text, const PipelineOptions& opts);

struct QueryRecord {
    std::string query_id;
    std::string truth_scene_id;
    Description text;
};

std::vector<QueryRecord> load_queries(const std::string& path);
void save_queries(const std::vector<QueryRecord>& queries, const std::string& path);

// Closed-loop query generation: each scene's own description (optionally
// perturbed) becomes a query whose truth is that scene.
std::vector<QueryRecord> generate_queries(const SceneDatabase& db, int count,
                                          int drop_labels, int flip_relations,
                                          uint64_t seed, int max_sentences = 6);

struct TimingStats {
    double mean_ms = 0;
    double median_ms = 0;
    double std_ms = 0;
};

struct EvalReport {
    std::map<int, double> recall;  // k -> ratio
    struct PerQuery {
        std::string query_id;
        std::string truth_id;
        std::vector<std::string> ranked_ids;
        std::map<int, bool> hit;  // k -> truth in top-k
        bool config_error = false;
    };
    std::vector<PerQuery> queries;
    int config_errors = 0;
    std::map<std::string, TimingStats> stage_timing;  // parse/embed/candidates/rerank
    uint64_t db_size_bytes = 0;
};

EvalReport evaluate(const SceneDatabase& db, const VectorIndex& index,
                    const std::vector<QueryRecord>& queries,
                    const std::vector<int>& ks, const PipelineOptions& opts);

std::string report_to_json(const EvalReport& report);

struct BenchReport {
    struct Row {
        std::string name;  // candidates_only / candidates_and_rerank / rerank_only
        TimingStats stats;
    };
    std::vector<Row> rows;
};

// Per-query wall time for the three pipeline configurations. The first
// repetition is dropped as warm-up when repetitions > 3.
BenchReport bench(const SceneDatabase& db, const VectorIndex& index,
                  const std::vector<QueryRecord>& queries, int repetitions,
                  const PipelineOptions& opts);

}  // namespace gpr
