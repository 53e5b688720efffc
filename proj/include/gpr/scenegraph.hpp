#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gpr/geo.hpp"

namespace gpr {

enum class Relation { North, South, East, West };

Relation opposite(Relation r);
char relation_letter(Relation r);               // 'N', 'S', 'E', 'W'
std::optional<Relation> relation_from_letter(char c);
const char* relation_word(Relation r);          // "north", ...
std::optional<Relation> relation_from_word(const std::string& w);

// Four-way direction split on a planar offset. Ties (|dx| == |dy|,
// including the zero vector) are undefined and yield nullopt.
std::optional<Relation> direction_relation(double dx, double dy);

struct SceneNode {
    std::string label;
    int ordinal = 1;  // distinguishes duplicate labels, >= 1
    std::optional<EnuPoint> position;
};

struct SceneEdge {
    int from = 0;
    int to = 0;
    Relation relation = Relation::North;
};

// Canonical form: nodes sorted by (label, ordinal); each edge stored once
// with from < to (flipping the relation when reoriented); edges sorted by
// (from, to).
struct SceneGraph {
    std::string scene_id;
    std::optional<GeoPoint> center;
    std::vector<SceneNode> nodes;
    std::vector<SceneEdge> edges;

    bool operator==(const SceneGraph& other) const;
};

struct ParsedRelation {
    std::string subject;
    int subject_ordinal = 1;
    Relation relation = Relation::North;
    std::string object;
    int object_ordinal = 1;
};

// Extracted label set and spatial-relation set of a text description.
struct ParsedDescription {
    std::vector<std::pair<std::string, int>> labels;  // (label, ordinal)
    std::vector<ParsedRelation> relations;
};

class EmptySceneError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InconsistentDescriptionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// One node per element (duplicate labels get ordinals 2, 3, ... in input
// order); one edge per pair closer than edge_threshold with a defined
// direction. Throws EmptySceneError on empty input.
SceneGraph build_map_graph(
    const std::vector<std::pair<std::string, EnuPoint>>& elements,
    double edge_threshold, const std::string& scene_id,
    std::optional<GeoPoint> center);

// Graph from parsed text: positionless nodes, one edge per relation.
// Throws InconsistentDescriptionError when a relation references a label
// missing from the label set.
SceneGraph build_text_graph(const ParsedDescription& parsed,
                            const std::string& scene_id);

// Sorts nodes/edges into canonical form and normalizes edge orientation.
void canonicalize(SceneGraph& graph);

// One-line JSON serialization with fixed field order and 1e-3 m float
// precision; byte-deterministic.
std::string serialize_scene(const SceneGraph& graph);
SceneGraph parse_scene(const std::string& line);

}  // namespace gpr
