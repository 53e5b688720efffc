#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gpr/geo.hpp"
#include "gpr/joint_model.hpp"
#include "gpr/scenegraph.hpp"

namespace gpr::testsupport {

// Synthetic OSM extract: a rows x cols grid of clusters over the bbox, each
// cluster `per_cell` tagged nodes scattered within `scatter_m` meters of its
// center. Deterministic for a fixed seed.
std::string synth_osm_xml(const GeoPoint& bbox_min, const GeoPoint& bbox_max,
                          int rows, int cols, int per_cell, uint64_t seed,
                          double scatter_m = 30.0);

// Test-only inverse of gps_to_enu (iterative refinement); recovers the
// geodetic point from local ENU coordinates near `reference`.
GeoPoint enu_to_gps(const EnuPoint& enu, const GeoPoint& reference);

// Random positioned scene graph built through build_map_graph.
SceneGraph random_map_graph(std::mt19937_64& rng, int min_nodes, int max_nodes,
                            double extent_m = 80.0, double edge_threshold = 50.0);

// Random positionless graph with no isolated nodes (every node touches an
// edge), suitable for description round trips.
SceneGraph random_connected_text_graph(std::mt19937_64& rng, int max_edges);

struct GradCheckFailure {
    std::string parameter;
    int row = 0, col = 0;
    double analytic = 0, numeric = 0, rel_error = 0;
};

// Central finite differences (step 1e-4) on `samples` random entries of
// every parameter group vs the tape gradients. Returns failures with
// relative error above `tol`.
std::vector<GradCheckFailure> gradient_check(JointModel& model,
                                             const SceneGraph& text_graph,
                                             const SceneGraph& map_graph,
                                             bool is_match, int samples,
                                             double tol, std::mt19937_64& rng);

}  // namespace gpr::testsupport
