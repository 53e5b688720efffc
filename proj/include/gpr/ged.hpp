#pragma once

#include <cstddef>
#include <stdexcept>

#include "gpr/scenegraph.hpp"

namespace gpr {

struct GedCosts {
    double node_insert = 1.0;
    double node_delete = 1.0;
    double node_substitute = 1.0;  // label mismatch
    double edge_insert = 1.0;
    double edge_delete = 1.0;
    double edge_substitute = 1.0;  // relation mismatch

    // Insertions (candidate-side surplus) priced at zero; treats the query
    // as a potential subgraph of the candidate.
    static GedCosts subgraph() {
        GedCosts c;
        c.node_insert = 0.0;
        c.edge_insert = 0.0;
        return c;
    }
};

struct GedResult {
    double cost = 0.0;
    bool exact = true;  // false when the beam fallback produced an upper bound
};

// Edit distance from `a` to `b`. Exact A* with an unmatched-label lower
// bound when max(|N_a|, |N_b|) <= 8 and the expansion budget holds; beam
// search (width 64) otherwise, flagged inexact.
GedResult ged(const SceneGraph& a, const SceneGraph& b,
              const GedCosts& costs = {}, std::size_t budget = 200000);

}  // namespace gpr
