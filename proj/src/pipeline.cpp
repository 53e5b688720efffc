#include "gpr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace gpr {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

TimingStats stats_of(std::vector<double> samples) {
    TimingStats s;
    if (samples.empty()) return s;
    const double n = (double)samples.size();
    s.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double var = 0;
    for (double v : samples) var += (v - s.mean_ms) * (v - s.mean_ms);
    s.std_ms = samples.size() > 1 ? std::sqrt(var / (n - 1)) : 0.0;
    std::sort(samples.begin(), samples.end());
    const std::size_t mid = samples.size() / 2;
    s.median_ms = samples.size() % 2 ? samples[mid]
                                     : 0.5 * (samples[mid - 1] + samples[mid]);
    return s;
}

}  // namespace

SceneDatabase build_database(const OsmElementSet& osm, const GeoPoint& corner_a,
                             const GeoPoint& corner_b, int cells, double radius,
                             int min_nodes) {
    if (cells < 1) throw std::invalid_argument("cells must be >= 1");
    if (!is_valid(corner_a) || !is_valid(corner_b))
        throw InvalidCoordinateError("bbox corner out of range");

    SceneDatabase db;
    db.bbox_min = {std::min(corner_a.lat, corner_b.lat),
                   std::min(corner_a.lon, corner_b.lon)};
    db.bbox_max = {std::max(corner_a.lat, corner_b.lat),
                   std::max(corner_a.lon, corner_b.lon)};
    db.cells = cells;
    db.radius = radius;
    db.min_nodes = min_nodes;

    const int grid_rows = std::max(1, (int)std::llround(std::sqrt((double)cells)));
    const int grid_cols = (cells + grid_rows - 1) / grid_rows;
    const int used_rows = (cells + grid_cols - 1) / grid_cols;
    const double dlat = (db.bbox_max.lat - db.bbox_min.lat) / used_rows;
    const double dlon = (db.bbox_max.lon - db.bbox_min.lon) / grid_cols;

    for (int idx = 0; idx < cells; ++idx) {
        const int row = idx / grid_cols;
        const int col = idx % grid_cols;
        GeoPoint center{db.bbox_min.lat + (row + 0.5) * dlat,
                        db.bbox_min.lon + (col + 0.5) * dlon};
        auto nearby = osm.elements_within(center, radius);
        if ((int)nearby.size() < min_nodes) continue;

        std::vector<std::pair<std::string, EnuPoint>> elements;
        elements.reserve(nearby.size());
        for (const auto& [e, p] : nearby) elements.emplace_back(e->label, p);

        const std::string id =
            "cell_" + std::to_string(row) + "_" + std::to_string(col);
        db.scenes.emplace(id, build_map_graph(elements, radius, id, center));
    }
    if (db.scenes.empty())
        throw EmptyDatabaseError("no grid cell yielded enough elements");
    return db;
}

std::string save_database_string(const SceneDatabase& db) {
    std::string out = "{\"format\":\"gpr-db\",\"version\":1,\"bbox\":[";
    out += fixed(db.bbox_min.lat, 7) + ',' + fixed(db.bbox_min.lon, 7) + ',' +
           fixed(db.bbox_max.lat, 7) + ',' + fixed(db.bbox_max.lon, 7);
    out += "],\"cells\":" + std::to_string(db.cells);
    out += ",\"radius\":" + fixed(db.radius, 3);
    out += ",\"min_nodes\":" + std::to_string(db.min_nodes);
    out += ",\"count\":" + std::to_string(db.scenes.size()) + "}\n";
    for (const auto& [id, scene] : db.scenes) {
        out += serialize_scene(scene);
        out += '\n';
    }
    return out;
}

void save_database(const SceneDatabase& db, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << save_database_string(db);
}

SceneDatabase load_database(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open database: " + path);
    std::string header;
    if (!std::getline(in, header) || header.empty())
        throw std::runtime_error("empty or unreadable database file");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception&) {
        throw std::runtime_error("malformed database header");
    }
    if (j.value("format", "") != "gpr-db")
        throw std::runtime_error("not a scene database file");
    if (j.value("version", 0) != 1)
        throw std::runtime_error("unsupported database version");

    SceneDatabase db;
    db.bbox_min = {j["bbox"][0].get<double>(), j["bbox"][1].get<double>()};
    db.bbox_max = {j["bbox"][2].get<double>(), j["bbox"][3].get<double>()};
    db.cells = j["cells"].get<int>();
    db.radius = j["radius"].get<double>();
    db.min_nodes = j["min_nodes"].get<int>();
    const std::size_t count = j["count"].get<std::size_t>();

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        SceneGraph g = parse_scene(line);
        db.scenes.emplace(g.scene_id, std::move(g));
    }
    if (db.scenes.size() != count)
        throw std::runtime_error("truncated database: expected " +
                                 std::to_string(count) + " scenes, found " +
                                 std::to_string(db.scenes.size()));
    return db;
}

VectorIndex build_index(const SceneDatabase& db, int dim, const JointModel* model) {
    VectorIndex index(model ? model->config().hidden : dim);
    for (const auto& [id, scene] : db.scenes) {
        index.add(id, model ? model->embed_single(scene)
                            : structural_embed(scene, dim));
    }
    return index;
}

QueryOutcome run_query(const SceneDatabase& db, const VectorIndex& index,
                       const Description& text, const PipelineOptions& opts) {
    if (index.size() != db.scenes.size())
        throw ConfigurationError("index does not match the database");

    QueryOutcome out;

    auto t0 = Clock::now();
    ParsedDescription parsed = parse_description(text);
    SceneGraph query_graph = build_text_graph(parsed, "query");
    out.timings.parse_ms = ms_since(t0);

    t0 = Clock::now();
    EmbeddingVector embedding =
        opts.model ? opts.model->embed_single(query_graph)
                   : structural_embed(query_graph, index.dim());
    out.timings.embed_ms = ms_since(t0);

    t0 = Clock::now();
    out.candidates = index.extract_candidates(embedding, opts.n);
    out.timings.candidates_ms = ms_since(t0);

    t0 = Clock::now();
    if (opts.mode == RerankMode::None) {
        out.result.mode = RerankMode::None;
        for (const auto& c : out.candidates) {
            if ((int)out.result.ranked.size() >= opts.k) break;
            out.result.ranked.push_back({c.scene_id, c.score});
        }
    } else {
        std::vector<const SceneGraph*> graphs;
        graphs.reserve(out.candidates.size());
        for (const auto& c : out.candidates) graphs.push_back(&db.scenes.at(c.scene_id));
        out.result = rerank(query_graph, graphs, opts.mode, opts.k, opts.model,
                            opts.ged_costs());
    }
    out.timings.rerank_ms = ms_since(t0);
    return out;
}

// ---------------------------------------------------------------------------
// Query batches
// ---------------------------------------------------------------------------

std::vector<QueryRecord> load_queries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open query batch: " + path);
    std::vector<QueryRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        QueryRecord q;
        q.query_id = j.at("query_id").get<std::string>();
        q.truth_scene_id = j.at("truth_scene_id").get<std::string>();
        for (const auto& s : j.at("sentences"))
            q.text.sentences.push_back(s.get<std::string>());
        out.push_back(std::move(q));
    }
    return out;
}

void save_queries(const std::vector<QueryRecord>& queries, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    for (const auto& q : queries) {
        nlohmann::ordered_json j;
        j["query_id"] = q.query_id;
        j["truth_scene_id"] = q.truth_scene_id;
        j["sentences"] = q.text.sentences;
        out << j.dump() << '\n';
    }
}

std::vector<QueryRecord> generate_queries(const SceneDatabase& db, int count,
                                          int drop_labels, int flip_relations,
                                          uint64_t seed, int max_sentences) {
    std::vector<QueryRecord> out;
    int made = 0;
    for (const auto& [id, scene] : db.scenes) {
        if (count >= 0 && made >= count) break;
        Description text = generate_description(scene, max_sentences);
        if (text.sentences.empty()) continue;  // edgeless scene, nothing to say
        if (drop_labels > 0 || flip_relations > 0) {
            ParsedDescription parsed = parse_description(text);
            if (drop_labels >= (int)parsed.labels.size()) continue;
            ParsedDescription perturbed = perturb_description(
                parsed, drop_labels, flip_relations, seed + (uint64_t)made);
            if (perturbed.labels.empty()) continue;
            SceneGraph g = build_text_graph(perturbed, id);
            text = generate_description(g, max_sentences);
            if (text.sentences.empty()) continue;
        }
        QueryRecord q;
        q.query_id = "q_" + std::to_string(made);
        q.truth_scene_id = id;
        q.text = std::move(text);
        out.push_back(std::move(q));
        ++made;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalReport evaluate(const SceneDatabase& db, const VectorIndex& index,
                    const std::vector<QueryRecord>& queries,
                    const std::vector<int>& ks, const PipelineOptions& opts) {
    if (ks.empty()) throw std::invalid_argument("no recall levels requested");
    const int max_k = *std::max_element(ks.begin(), ks.end());

    EvalReport report;
    report.db_size_bytes = save_database_string(db).size();

    std::map<int, int> hits;
    int valid = 0;
    std::vector<double> t_parse, t_embed, t_cand, t_rerank;

    PipelineOptions q_opts = opts;
    q_opts.k = max_k;

    for (const auto& q : queries) {
        EvalReport::PerQuery rec;
        rec.query_id = q.query_id;
        rec.truth_id = q.truth_scene_id;
        if (!db.scenes.count(q.truth_scene_id)) {
            rec.config_error = true;
            report.config_errors++;
            report.queries.push_back(std::move(rec));
            continue;
        }
        QueryOutcome outcome = run_query(db, index, q.text, q_opts);
        for (const auto& r : outcome.result.ranked) rec.ranked_ids.push_back(r.scene_id);
        ++valid;
        for (int k : ks) {
            bool hit = false;
            for (int i = 0; i < (int)rec.ranked_ids.size() && i < k; ++i)
                hit = hit || rec.ranked_ids[i] == q.truth_scene_id;
            rec.hit[k] = hit;
            if (hit) hits[k]++;
        }
        t_parse.push_back(outcome.timings.parse_ms);
        t_embed.push_back(outcome.timings.embed_ms);
        t_cand.push_back(outcome.timings.candidates_ms);
        t_rerank.push_back(outcome.timings.rerank_ms);
        report.queries.push_back(std::move(rec));
    }

    for (int k : ks)
        report.recall[k] = valid > 0 ? (double)hits[k] / valid : 0.0;
    report.stage_timing["parse"] = stats_of(t_parse);
    report.stage_timing["embed"] = stats_of(t_embed);
    report.stage_timing["candidates"] = stats_of(t_cand);
    report.stage_timing["rerank"] = stats_of(t_rerank);

    std::sort(report.queries.begin(), report.queries.end(),
              [](const EvalReport::PerQuery& a, const EvalReport::PerQuery& b) {
                  return a.query_id < b.query_id;
              });
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    for (const auto& [k, r] : report.recall) j["recall"]["@" + std::to_string(k)] = r;
    j["config_errors"] = report.config_errors;
    j["db_size_bytes"] = report.db_size_bytes;
    for (const auto& [stage, s] : report.stage_timing) {
        j["timing_ms"][stage] = {{"mean", s.mean_ms},
                                 {"median", s.median_ms},
                                 {"std", s.std_ms}};
    }
    j["queries"] = nlohmann::ordered_json::array();
    for (const auto& q : report.queries) {
        nlohmann::ordered_json jq;
        jq["query_id"] = q.query_id;
        jq["truth_id"] = q.truth_id;
        jq["ranked_ids"] = q.ranked_ids;
        if (q.config_error) {
            jq["config_error"] = true;
        } else {
            for (const auto& [k, hit] : q.hit) jq["hit"]["@" + std::to_string(k)] = hit;
        }
        j["queries"].push_back(std::move(jq));
    }
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Benchmarking
// ---------------------------------------------------------------------------

BenchReport bench(const SceneDatabase& db, const VectorIndex& index,
                  const std::vector<QueryRecord>& queries, int repetitions,
                  const PipelineOptions& opts) {
    if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
    if (queries.empty()) throw std::invalid_argument("no queries to benchmark");

    std::vector<const SceneGraph*> all_scenes;
    all_scenes.reserve(db.scenes.size());
    for (const auto& [id, scene] : db.scenes) all_scenes.push_back(&scene);

    std::vector<double> cand_only, cand_rerank, rerank_only;
    const int warmup = repetitions > 3 ? 1 : 0;

    for (int rep = 0; rep < repetitions; ++rep) {
        for (const auto& q : queries) {
            ParsedDescription parsed = parse_description(q.text);
            SceneGraph query_graph = build_text_graph(parsed, "query");
            EmbeddingVector embedding =
                opts.model ? opts.model->embed_single(query_graph)
                           : structural_embed(query_graph, index.dim());

            auto t0 = Clock::now();
            CandidateSet candidates = index.extract_candidates(embedding, opts.n);
            double t_cand = ms_since(t0);

            t0 = Clock::now();
            std::vector<const SceneGraph*> graphs;
            for (const auto& c : candidates) graphs.push_back(&db.scenes.at(c.scene_id));
            rerank(query_graph, graphs, opts.mode, opts.k, opts.model, opts.ged_costs());
            double t_both = t_cand + ms_since(t0);

            t0 = Clock::now();
            rerank(query_graph, all_scenes, opts.mode, opts.k, opts.model,
                   opts.ged_costs());
            double t_full = ms_since(t0);

            if (rep >= warmup) {
                cand_only.push_back(t_cand);
                cand_rerank.push_back(t_both);
                rerank_only.push_back(t_full);
            }
        }
    }

    BenchReport report;
    report.rows.push_back({"candidates_only", stats_of(cand_only)});
    report.rows.push_back({"candidates_and_rerank", stats_of(cand_rerank)});
    report.rows.push_back({"rerank_only", stats_of(rerank_only)});
    return report;
}

}  // namespace gpr
