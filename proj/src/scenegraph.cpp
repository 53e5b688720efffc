#include "gpr/scenegraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>

#include <json.hpp>

namespace gpr {

Relation opposite(Relation r) {
    switch (r) {
        case Relation::North: return Relation::South;
        case Relation::South: return Relation::North;
        case Relation::East: return Relation::West;
        case Relation::West: return Relation::East;
    }
    return Relation::North;
}

char relation_letter(Relation r) {
    switch (r) {
        case Relation::North: return 'N';
        case Relation::South: return 'S';
        case Relation::East: return 'E';
        case Relation::West: return 'W';
    }
    return '?';
}

std::optional<Relation> relation_from_letter(char c) {
    switch (c) {
        case 'N': return Relation::North;
        case 'S': return Relation::South;
        case 'E': return Relation::East;
        case 'W': return Relation::West;
    }
    return std::nullopt;
}

const char* relation_word(Relation r) {
    switch (r) {
        case Relation::North: return "north";
        case Relation::South: return "south";
        case Relation::East: return "east";
        case Relation::West: return "west";
    }
    return "?";
}

std::optional<Relation> relation_from_word(const std::string& w) {
    if (w == "north") return Relation::North;
    if (w == "south") return Relation::South;
    if (w == "east") return Relation::East;
    if (w == "west") return Relation::West;
    return std::nullopt;
}

std::optional<Relation> direction_relation(double dx, double dy) {
    const double ax = std::fabs(dx);
    const double ay = std::fabs(dy);
    if (ax < ay && dy > 0) return Relation::North;
    if (ax < ay && dy < 0) return Relation::South;
    if (ax > ay && dx > 0) return Relation::East;
    if (ax > ay && dx < 0) return Relation::West;
    return std::nullopt;  // |dx| == |dy|, including the zero vector
}

namespace {

bool node_less(const SceneNode& a, const SceneNode& b) {
    if (a.label != b.label) return a.label < b.label;
    return a.ordinal < b.ordinal;
}

bool enu_equal(const std::optional<EnuPoint>& a, const std::optional<EnuPoint>& b) {
    if (a.has_value() != b.has_value()) return false;
    if (!a) return true;
    return a->x == b->x && a->y == b->y && a->z == b->z;
}

}  // namespace

bool SceneGraph::operator==(const SceneGraph& other) const {
    if (scene_id != other.scene_id) return false;
    if (center.has_value() != other.center.has_value()) return false;
    if (center && (center->lat != other.center->lat || center->lon != other.center->lon))
        return false;
    if (nodes.size() != other.nodes.size() || edges.size() != other.edges.size())
        return false;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].label != other.nodes[i].label ||
            nodes[i].ordinal != other.nodes[i].ordinal ||
            !enu_equal(nodes[i].position, other.nodes[i].position))
            return false;
    }
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (edges[i].from != other.edges[i].from || edges[i].to != other.edges[i].to ||
            edges[i].relation != other.edges[i].relation)
            return false;
    }
    return true;
}

void canonicalize(SceneGraph& graph) {
    std::vector<int> order(graph.nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = (int)i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return node_less(graph.nodes[a], graph.nodes[b]);
    });
    std::vector<int> remap(order.size());
    std::vector<SceneNode> nodes;
    nodes.reserve(order.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        remap[order[pos]] = (int)pos;
        nodes.push_back(graph.nodes[order[pos]]);
    }
    graph.nodes = std::move(nodes);

    for (auto& e : graph.edges) {
        e.from = remap[e.from];
        e.to = remap[e.to];
        if (e.from > e.to) {
            std::swap(e.from, e.to);
            e.relation = opposite(e.relation);
        }
    }
    std::sort(graph.edges.begin(), graph.edges.end(),
              [](const SceneEdge& a, const SceneEdge& b) {
                  if (a.from != b.from) return a.from < b.from;
                  if (a.to != b.to) return a.to < b.to;
                  return a.relation < b.relation;
              });
    graph.edges.erase(std::unique(graph.edges.begin(), graph.edges.end(),
                                  [](const SceneEdge& a, const SceneEdge& b) {
                                      return a.from == b.from && a.to == b.to;
                                  }),
                      graph.edges.end());
}

SceneGraph build_map_graph(
    const std::vector<std::pair<std::string, EnuPoint>>& elements,
    double edge_threshold, const std::string& scene_id,
    std::optional<GeoPoint> center) {
    if (elements.empty()) throw EmptySceneError("cannot build a graph from zero elements");
    if (edge_threshold <= 0) throw std::invalid_argument("edge_threshold must be positive");

    SceneGraph g;
    g.scene_id = scene_id;
    g.center = center;

    std::map<std::string, int> seen;
    for (const auto& [label, pos] : elements) {
        SceneNode n;
        n.label = label;
        n.ordinal = ++seen[label];
        n.position = pos;
        g.nodes.push_back(std::move(n));
    }
    canonicalize(g);  // sort nodes before pairing so edge indices are canonical

    for (int i = 0; i < (int)g.nodes.size(); ++i) {
        for (int j = i + 1; j < (int)g.nodes.size(); ++j) {
            const EnuPoint& pi = *g.nodes[i].position;
            const EnuPoint& pj = *g.nodes[j].position;
            if (enu_distance(pi, pj) >= edge_threshold) continue;
            auto rel = direction_relation(pj.x - pi.x, pj.y - pi.y);
            if (!rel) continue;
            g.edges.push_back({i, j, *rel});
        }
    }
    return g;  // edges already emitted in sorted (from, to) order
}

SceneGraph build_text_graph(const ParsedDescription& parsed,
                            const std::string& scene_id) {
    if (parsed.labels.empty())
        throw EmptySceneError("description yielded no labels");

    SceneGraph g;
    g.scene_id = scene_id;
    std::map<std::pair<std::string, int>, int> index;
    for (const auto& [label, ord] : parsed.labels) {
        auto key = std::make_pair(label, ord);
        if (index.count(key)) continue;
        index[key] = (int)g.nodes.size();
        g.nodes.push_back({label, ord, std::nullopt});
    }
    for (const auto& r : parsed.relations) {
        auto s = index.find({r.subject, r.subject_ordinal});
        auto o = index.find({r.object, r.object_ordinal});
        if (s == index.end() || o == index.end())
            throw InconsistentDescriptionError(
                "relation references a label absent from the description: " +
                (s == index.end() ? r.subject : r.object));
        if (s->second == o->second) continue;  // self relation carries nothing
        g.edges.push_back({s->second, o->second, r.relation});
    }
    canonicalize(g);
    return g;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

void append_escaped(std::string& out, const std::string& s) {
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if ((unsigned char)c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
}

void append_fixed(std::string& out, double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    // normalize -0.000 to 0.000 so serialization stays byte-deterministic
    if (buf[0] == '-' && std::strtod(buf, nullptr) == 0.0) {
        out += buf + 1;
    } else {
        out += buf;
    }
}

}  // namespace

std::string serialize_scene(const SceneGraph& graph) {
    std::string out = "{\"id\":\"";
    append_escaped(out, graph.scene_id);
    out += "\",\"center\":";
    if (graph.center) {
        out += '[';
        append_fixed(out, graph.center->lat, 7);
        out += ',';
        append_fixed(out, graph.center->lon, 7);
        out += ']';
    } else {
        out += "null";
    }
    out += ",\"nodes\":[";
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        if (i) out += ',';
        const SceneNode& n = graph.nodes[i];
        out += "{\"label\":\"";
        append_escaped(out, n.label);
        out += "\",\"ord\":" + std::to_string(n.ordinal) + ",\"xy\":";
        if (n.position) {
            out += '[';
            append_fixed(out, n.position->x, 3);
            out += ',';
            append_fixed(out, n.position->y, 3);
            out += ']';
        } else {
            out += "null";
        }
        out += '}';
    }
    out += "],\"edges\":[";
    for (std::size_t i = 0; i < graph.edges.size(); ++i) {
        if (i) out += ',';
        const SceneEdge& e = graph.edges[i];
        out += '[' + std::to_string(e.from) + ',' + std::to_string(e.to) + ",\"";
        out += relation_letter(e.relation);
        out += "\"]";
    }
    out += "]}";
    return out;
}

SceneGraph parse_scene(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    SceneGraph g;
    g.scene_id = j.at("id").get<std::string>();
    if (!j.at("center").is_null()) {
        g.center = GeoPoint{j["center"][0].get<double>(), j["center"][1].get<double>()};
    }
    for (const auto& jn : j.at("nodes")) {
        SceneNode n;
        n.label = jn.at("label").get<std::string>();
        n.ordinal = jn.at("ord").get<int>();
        if (!jn.at("xy").is_null()) {
            n.position = EnuPoint{jn["xy"][0].get<double>(), jn["xy"][1].get<double>(), 0.0};
        }
        g.nodes.push_back(std::move(n));
    }
    for (const auto& je : j.at("edges")) {
        SceneEdge e;
        e.from = je[0].get<int>();
        e.to = je[1].get<int>();
        std::string rel = je[2].get<std::string>();
        auto r = relation_from_letter(rel.empty() ? '?' : rel[0]);
        if (!r) throw std::runtime_error("bad relation letter in scene line");
        e.relation = *r;
        g.edges.push_back(e);
    }
    for (const auto& e : g.edges) {
        if (e.from < 0 || e.to < 0 || e.from >= (int)g.nodes.size() ||
            e.to >= (int)g.nodes.size())
            throw std::runtime_error("dangling edge index in scene line");
    }
    return g;
}

}  // namespace gpr
