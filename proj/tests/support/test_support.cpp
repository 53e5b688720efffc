#include "support/test_support.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace gpr::testsupport {

namespace {

const char* kVocab[] = {
    "bench",      "bakery",    "cafe",       "parking",    "fountain",
    "school",     "pharmacy",  "restaurant", "playground", "hospital",
    "library",    "cinema",    "church",     "townhall",   "marketplace",
    "kiosk",      "hotel",     "garage",     "stadium",    "museum",
    "gallery",    "butcher",   "florist",    "hairdresser", "supermarket",
    "greengrocer", "newsagent", "optician",   "jeweller",   "bookshop",
    "park",       "pitch",     "garden",     "pool",       "track",
    "meadow",     "orchard",   "vineyard",   "quarry",     "forest",
    "pond",       "stream",    "canal",      "dock",       "weir",
    "hedge",      "fence",     "wall",       "gate",       "bollard",
    "tower",      "chapel",    "shed",       "barn",       "silo",
    "mill",       "kennel",    "stable",     "forge",      "brewery",
};
constexpr int kVocabSize = (int)(sizeof(kVocab) / sizeof(kVocab[0]));

constexpr double kMetersPerDegLat = 110574.0;

}  // namespace

std::string synth_osm_xml(const GeoPoint& bbox_min, const GeoPoint& bbox_max,
                          int rows, int cols, int per_cell, uint64_t seed,
                          double scatter_m) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    const double dlat = (bbox_max.lat - bbox_min.lat) / rows;
    const double dlon = (bbox_max.lon - bbox_min.lon) / cols;

    std::ostringstream xml;
    xml << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\">\n";
    int64_t next_id = 1;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double clat = bbox_min.lat + (r + 0.5) * dlat;
            const double clon = bbox_min.lon + (c + 0.5) * dlon;
            const double m_per_deg_lon =
                111320.0 * std::cos(clat * 3.14159265358979323846 / 180.0);
            for (int i = 0; i < per_cell; ++i) {
                const double off_n = unit(rng) * scatter_m;
                const double off_e = unit(rng) * scatter_m;
                const double lat = clat + off_n / kMetersPerDegLat;
                const double lon = clon + off_e / m_per_deg_lon;
                const char* word = kVocab[rng() % kVocabSize];
                xml << "  <node id=\"" << next_id++ << "\" lat=\"" << lat
                    << "\" lon=\"" << lon << "\">\n"
                    << "    <tag k=\"amenity\" v=\"" << word << "\"/>\n"
                    << "  </node>\n";
            }
        }
    }
    xml << "</osm>\n";
    return xml.str();
}

GeoPoint enu_to_gps(const EnuPoint& enu, const GeoPoint& reference) {
    GeoPoint guess = reference;
    for (int iter = 0; iter < 8; ++iter) {
        EnuPoint cur = gps_to_enu(guess, reference);
        const double err_e = enu.x - cur.x;
        const double err_n = enu.y - cur.y;
        if (std::fabs(err_e) < 1e-9 && std::fabs(err_n) < 1e-9) break;
        const double m_per_deg_lon =
            111320.0 * std::cos(guess.lat * 3.14159265358979323846 / 180.0);
        guess.lat += err_n / kMetersPerDegLat;
        guess.lon += err_e / m_per_deg_lon;
    }
    return guess;
}

SceneGraph random_map_graph(std::mt19937_64& rng, int min_nodes, int max_nodes,
                            double extent_m, double edge_threshold) {
    std::uniform_int_distribution<int> n_dist(min_nodes, max_nodes);
    std::uniform_real_distribution<double> pos(-extent_m, extent_m);
    const int n = n_dist(rng);
    std::vector<std::pair<std::string, EnuPoint>> elements;
    for (int i = 0; i < n; ++i) {
        elements.emplace_back(kVocab[rng() % kVocabSize],
                              EnuPoint{pos(rng), pos(rng), 0.0});
    }
    return build_map_graph(elements, edge_threshold, "random", std::nullopt);
}

SceneGraph random_connected_text_graph(std::mt19937_64& rng, int max_edges) {
    const int n_edges = 1 + (int)(rng() % (uint64_t)max_edges);
    ParsedDescription parsed;
    std::set<std::pair<std::string, int>> labels;
    std::set<std::pair<int, int>> used_pairs;

    // small pool so duplicate-label ordinals get exercised
    std::vector<std::pair<std::string, int>> pool;
    for (int i = 0; i < 8; ++i) {
        pool.emplace_back(kVocab[rng() % 16], 1 + (int)(rng() % 2));
    }
    static const Relation kAll[] = {Relation::North, Relation::South,
                                    Relation::East, Relation::West};
    int attempts = 0;
    while ((int)parsed.relations.size() < n_edges && attempts++ < 100) {
        int a = (int)(rng() % pool.size());
        int b = (int)(rng() % pool.size());
        if (pool[a] == pool[b]) continue;
        auto key = std::minmax(a, b);
        if (!used_pairs.insert({key.first, key.second}).second) continue;
        if (labels.insert(pool[a]).second) parsed.labels.push_back(pool[a]);
        if (labels.insert(pool[b]).second) parsed.labels.push_back(pool[b]);
        parsed.relations.push_back({pool[a].first, pool[a].second,
                                    kAll[rng() % 4], pool[b].first,
                                    pool[b].second});
    }
    if (parsed.relations.empty()) {
        parsed.labels = {{"bench", 1}, {"cafe", 1}};
        parsed.relations.push_back({"bench", 1, Relation::North, "cafe", 1});
    }
    return build_text_graph(parsed, "random_text");
}

std::vector<GradCheckFailure> gradient_check(JointModel& model,
                                             const SceneGraph& text_graph,
                                             const SceneGraph& map_graph,
                                             bool is_match, int samples,
                                             double tol, std::mt19937_64& rng) {
    std::unordered_map<const Matrix*, Matrix> grads;
    model.loss_and_gradients(text_graph, map_graph, is_match, grads);

    constexpr double kStep = 1e-4;
    std::vector<GradCheckFailure> failures;
    for (auto& [name, p] : model.parameters()) {
        auto git = grads.find(p);
        for (int s = 0; s < samples; ++s) {
            const int i = (int)(rng() % (uint64_t)p->rows());
            const int j = (int)(rng() % (uint64_t)p->cols());
            const double orig = (*p)(i, j);
            (*p)(i, j) = orig + kStep;
            const double up = model.loss(text_graph, map_graph, is_match).total;
            (*p)(i, j) = orig - kStep;
            const double down = model.loss(text_graph, map_graph, is_match).total;
            (*p)(i, j) = orig;

            const double numeric = (up - down) / (2.0 * kStep);
            const double analytic = git == grads.end() ? 0.0 : git->second(i, j);
            const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
            const double rel = std::fabs(numeric - analytic) / denom;
            if (rel > tol) {
                failures.push_back({name, i, j, analytic, numeric, rel});
            }
        }
    }
    return failures;
}

}  // namespace gpr::testsupport
