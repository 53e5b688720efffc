#include "gpr/ged.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <queue>
#include <vector>

namespace gpr {

namespace {

constexpr int kNoEdge = -1;
constexpr int kDeleted = -1;  // A node mapped to nothing
constexpr int kExactNodeLimit = 8;
constexpr std::size_t kBeamWidth = 64;

// Oriented relation matrix: rel[i][j] is the stored relation read from i
// towards j, kNoEdge when the pair is unconnected.
std::vector<std::vector<int>> relation_matrix(const SceneGraph& g) {
    const int n = (int)g.nodes.size();
    std::vector<std::vector<int>> rel(n, std::vector<int>(n, kNoEdge));
    for (const auto& e : g.edges) {
        rel[e.from][e.to] = (int)e.relation;
        rel[e.to][e.from] = (int)opposite(e.relation);
    }
    return rel;
}

struct Problem {
    int na = 0, nb = 0;
    std::vector<int> label_a, label_b;  // interned label ids
    std::vector<std::vector<int>> rel_a, rel_b;
    GedCosts costs;
    int label_count = 0;
    // suffix_count[t][l]: occurrences of label l among A nodes t..na-1
    std::vector<std::vector<int>> suffix_count;

    double edge_pair_cost(int ra, int rb) const {
        if (ra == kNoEdge && rb == kNoEdge) return 0.0;
        if (ra == kNoEdge) return costs.edge_insert;
        if (rb == kNoEdge) return costs.edge_delete;
        return ra == rb ? 0.0 : costs.edge_substitute;
    }
};

struct State {
    double g = 0.0;
    double f = 0.0;
    int depth = 0;               // A nodes 0..depth-1 assigned
    std::vector<int> assigned;   // B index or kDeleted, length depth
    std::vector<char> used;      // B usage flags
    int used_count = 0;
};

Problem make_problem(const SceneGraph& a, const SceneGraph& b, const GedCosts& costs) {
    Problem p;
    p.na = (int)a.nodes.size();
    p.nb = (int)b.nodes.size();
    p.costs = costs;

    std::map<std::string, int> intern;
    auto id_of = [&](const std::string& s) {
        auto [it, _] = intern.emplace(s, (int)intern.size());
        return it->second;
    };
    for (const auto& n : a.nodes) p.label_a.push_back(id_of(n.label));
    for (const auto& n : b.nodes) p.label_b.push_back(id_of(n.label));
    p.label_count = (int)intern.size();

    p.rel_a = relation_matrix(a);
    p.rel_b = relation_matrix(b);

    p.suffix_count.assign(p.na + 1, std::vector<int>(p.label_count, 0));
    for (int t = p.na - 1; t >= 0; --t) {
        p.suffix_count[t] = p.suffix_count[t + 1];
        p.suffix_count[t][p.label_a[t]]++;
    }
    return p;
}

// Admissible lower bound from the label multisets of unassigned nodes.
double heuristic(const Problem& p, const State& s) {
    const int ra = p.na - s.depth;
    const int rb = p.nb - s.used_count;
    if (ra == 0 && rb == 0) return 0.0;

    std::vector<int> b_count(p.label_count, 0);
    for (int u = 0; u < p.nb; ++u)
        if (!s.used[u]) b_count[p.label_b[u]]++;

    int common = 0;
    for (int l = 0; l < p.label_count; ++l)
        common += std::min(p.suffix_count[s.depth][l], b_count[l]);

    double h = (std::min(ra, rb) - common) * p.costs.node_substitute;
    if (ra > rb) h += (ra - rb) * p.costs.node_delete;
    if (rb > ra) h += (rb - ra) * p.costs.node_insert;
    return h;
}

// Cost of finishing a state in which every A node is assigned: insert the
// unused B nodes and every B edge touching them.
double completion_cost(const Problem& p, const State& s) {
    double c = 0.0;
    for (int u = 0; u < p.nb; ++u)
        if (!s.used[u]) c += p.costs.node_insert;
    if (p.costs.edge_insert != 0.0) {
        for (int u = 0; u < p.nb; ++u) {
            for (int v = u + 1; v < p.nb; ++v) {
                if (p.rel_b[u][v] == kNoEdge) continue;
                if (!s.used[u] || !s.used[v]) c += p.costs.edge_insert;
            }
        }
    }
    return c;
}

// Incremental cost of assigning A node s.depth to B node `u`
// (u == kDeleted for deletion).
double transition_cost(const Problem& p, const State& s, int u) {
    const int t = s.depth;
    double c;
    if (u == kDeleted) {
        c = p.costs.node_delete;
        for (int j = 0; j < t; ++j)
            if (p.rel_a[j][t] != kNoEdge) c += p.costs.edge_delete;
    } else {
        c = p.label_a[t] == p.label_b[u] ? 0.0 : p.costs.node_substitute;
        for (int j = 0; j < t; ++j) {
            const int ra = p.rel_a[j][t];
            const int v = s.assigned[j];
            if (v == kDeleted) {
                if (ra != kNoEdge) c += p.costs.edge_delete;
            } else {
                c += p.edge_pair_cost(ra, p.rel_b[v][u]);
            }
        }
    }
    return c;
}

State child_state(const Problem& p, const State& s, int u, double step_cost) {
    State c = s;
    c.g += step_cost;
    c.depth += 1;
    c.assigned.push_back(u);
    if (u != kDeleted) {
        c.used[u] = 1;
        c.used_count += 1;
    }
    if (c.depth == p.na) {
        c.g += completion_cost(p, c);
        c.f = c.g;
    } else {
        c.f = c.g + heuristic(p, c);
    }
    return c;
}

GedResult beam_search(const Problem& p) {
    std::vector<State> frontier;
    State root;
    root.used.assign(p.nb, 0);
    root.f = heuristic(p, root);
    frontier.push_back(std::move(root));

    auto state_less = [](const State& a, const State& b) {
        if (a.f != b.f) return a.f < b.f;
        return a.assigned < b.assigned;
    };

    for (int t = 0; t < p.na; ++t) {
        std::vector<State> next;
        next.reserve(frontier.size() * (std::size_t)(p.nb + 1));
        for (const State& s : frontier) {
            for (int u = 0; u < p.nb; ++u) {
                if (s.used[u]) continue;
                next.push_back(child_state(p, s, u, transition_cost(p, s, u)));
            }
            next.push_back(child_state(p, s, kDeleted, transition_cost(p, s, kDeleted)));
        }
        std::sort(next.begin(), next.end(), state_less);
        if (next.size() > kBeamWidth) next.resize(kBeamWidth);
        frontier = std::move(next);
    }

    double best = std::numeric_limits<double>::infinity();
    for (const State& s : frontier) best = std::min(best, s.g);  // completion included
    return {best, false};
}

}  // namespace

GedResult ged(const SceneGraph& a, const SceneGraph& b, const GedCosts& costs,
              std::size_t budget) {
    if (a.nodes.empty() || b.nodes.empty())
        throw EmptySceneError("graph edit distance requires non-empty graphs");

    Problem p = make_problem(a, b, costs);
    if (std::max(p.na, p.nb) > kExactNodeLimit) return beam_search(p);

    auto worse = [](const State& x, const State& y) {
        if (x.f != y.f) return x.f > y.f;
        return x.depth < y.depth;  // prefer deeper states on equal f
    };
    std::priority_queue<State, std::vector<State>, decltype(worse)> open(worse);

    State root;
    root.used.assign(p.nb, 0);
    root.f = heuristic(p, root);
    open.push(std::move(root));

    std::size_t expansions = 0;
    while (!open.empty()) {
        State s = open.top();
        open.pop();
        if (s.depth == p.na) {
            return {s.g, true};
        }
        if (++expansions > budget) return beam_search(p);

        for (int u = 0; u < p.nb; ++u) {
            if (s.used[u]) continue;
            open.push(child_state(p, s, u, transition_cost(p, s, u)));
        }
        open.push(child_state(p, s, kDeleted, transition_cost(p, s, kDeleted)));
    }
    return beam_search(p);  // unreachable for well-formed inputs
}

}  // namespace gpr
