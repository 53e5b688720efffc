#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpr/pipeline.hpp"

namespace {

gpr::GeoPoint parse_latlon(const std::string& s, std::size_t& pos) {
    std::size_t comma = s.find(',', pos);
    if (comma == std::string::npos) throw std::runtime_error("bad bbox format");
    gpr::GeoPoint p;
    p.lat = std::stod(s.substr(pos, comma - pos));
    std::size_t next = s.find(',', comma + 1);
    p.lon = std::stod(s.substr(comma + 1, next == std::string::npos
                                              ? std::string::npos
                                              : next - comma - 1));
    pos = next == std::string::npos ? s.size() : next + 1;
    return p;
}

gpr::RerankMode parse_mode(const std::string& mode) {
    if (mode == "ged") return gpr::RerankMode::Ged;
    if (mode == "net") return gpr::RerankMode::Net;
    if (mode == "none") return gpr::RerankMode::None;
    throw std::runtime_error("unknown mode: " + mode + " (expected ged|net|none)");
}

gpr::OsmElementSet load_elements(const std::string& path) {
    if (path.size() > 4 && path.substr(path.size() - 4) == ".bin")
        return gpr::OsmElementSet::load(path);
    return gpr::OsmElementSet::parse_file(path);
}

std::vector<int> parse_ks(const std::string& s) {
    std::vector<int> ks;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) ks.push_back(std::stoi(item));
    if (ks.empty()) throw std::runtime_error("empty k list");
    return ks;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Text-based outdoor place recognition over OSM scene graphs"};
    app.require_subcommand(1);

    // ingest
    std::string ingest_osm, ingest_out;
    auto* ingest = app.add_subcommand("ingest", "Parse OSM XML into an element store");
    ingest->add_option("osm", ingest_osm, "OSM XML file")->required();
    ingest->add_option("--out", ingest_out, "output elements.bin")->required();

    // build-db
    std::string bdb_osm, bdb_bbox, bdb_out;
    int bdb_cells = 1, bdb_min_nodes = 6;
    double bdb_radius = 50.0;
    auto* bdb = app.add_subcommand("build-db", "Build the scene graph database");
    bdb->add_option("--osm", bdb_osm, "OSM XML or elements.bin")->required();
    bdb->add_option("--bbox", bdb_bbox, "lat1,lon1,lat2,lon2")->required();
    bdb->add_option("--cells", bdb_cells, "grid cell count")->required();
    bdb->add_option("--radius", bdb_radius, "query radius in meters");
    bdb->add_option("--min-nodes", bdb_min_nodes, "minimum elements per scene");
    bdb->add_option("--out", bdb_out, "output db.jsonl")->required();

    // index
    std::string idx_db, idx_out, idx_model;
    int idx_dim = 256;
    auto* idx = app.add_subcommand("index", "Embed every scene into a vector index");
    idx->add_option("--db", idx_db)->required();
    idx->add_option("--dim", idx_dim, "embedding dimension");
    idx->add_option("--model", idx_model, "model checkpoint (net embeddings)");
    idx->add_option("--out", idx_out, "output emb.gprv")->required();

    // gen-queries
    std::string gq_db, gq_out;
    int gq_count = -1, gq_drop = 0, gq_flip = 0;
    uint64_t gq_seed = 0;
    auto* gq = app.add_subcommand("gen-queries", "Generate closed-loop queries");
    gq->add_option("--db", gq_db)->required();
    gq->add_option("--count", gq_count, "query count (-1 = one per scene)");
    gq->add_option("--drop-labels", gq_drop);
    gq->add_option("--flip-relations", gq_flip);
    gq->add_option("--seed", gq_seed);
    gq->add_option("--out", gq_out)->required();

    // query
    std::string q_db, q_index, q_text, q_mode = "ged", q_model;
    int q_n = 10, q_k = 5;
    auto* q = app.add_subcommand("query", "Run one text query");
    q->add_option("--db", q_db)->required();
    q->add_option("--index", q_index)->required();
    q->add_option("--text", q_text, "description file, one sentence per line")->required();
    q->add_option("--n", q_n, "candidate count");
    q->add_option("--k", q_k, "result count");
    q->add_option("--mode", q_mode, "ged|net|none");
    q->add_option("--model", q_model, "model checkpoint (mode net)");

    // eval
    std::string e_db, e_index, e_queries, e_ks = "1,3,5", e_mode = "ged", e_model,
                e_report;
    int e_n = 10;
    auto* ev = app.add_subcommand("eval", "Evaluate recall over a query batch");
    ev->add_option("--db", e_db)->required();
    ev->add_option("--index", e_index)->required();
    ev->add_option("--queries", e_queries)->required();
    ev->add_option("--ks", e_ks, "comma-separated k values");
    ev->add_option("--n", e_n, "candidate count");
    ev->add_option("--mode", e_mode, "ged|net|none");
    ev->add_option("--model", e_model);
    ev->add_option("--report", e_report, "output report JSON");

    // bench
    std::string b_db, b_index, b_queries, b_mode = "ged", b_model;
    int b_reps = 20, b_n = 10, b_k = 5;
    auto* be = app.add_subcommand("bench", "Time the pipeline configurations");
    be->add_option("--db", b_db)->required();
    be->add_option("--index", b_index)->required();
    be->add_option("--queries", b_queries)->required();
    be->add_option("--reps", b_reps);
    be->add_option("--n", b_n);
    be->add_option("--k", b_k);
    be->add_option("--mode", b_mode, "ged|net");
    be->add_option("--model", b_model);

    // train
    std::string t_db, t_out;
    int t_pairs = 50, t_epochs = 500;
    double t_lr = 0.05;
    uint64_t t_seed = 7;
    auto* tr = app.add_subcommand("train", "Train the joint embedding model");
    tr->add_option("--db", t_db)->required();
    tr->add_option("--pairs", t_pairs, "training pair count");
    tr->add_option("--epochs", t_epochs);
    tr->add_option("--lr", t_lr);
    tr->add_option("--seed", t_seed);
    tr->add_option("--out", t_out, "output model.gprm")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            gpr::OsmElementSet set = gpr::OsmElementSet::parse_file(ingest_osm);
            set.save(ingest_out);
            std::cout << "elements: " << set.size()
                      << " dropped_ways: " << set.dropped_way_count() << "\n";
        } else if (*bdb) {
            gpr::OsmElementSet set = load_elements(bdb_osm);
            std::size_t pos = 0;
            gpr::GeoPoint a = parse_latlon(bdb_bbox, pos);
            gpr::GeoPoint b = parse_latlon(bdb_bbox, pos);
            gpr::SceneDatabase db = gpr::build_database(set, a, b, bdb_cells,
                                                        bdb_radius, bdb_min_nodes);
            gpr::save_database(db, bdb_out);
            std::cout << "scenes: " << db.scenes.size() << " / " << bdb_cells
                      << " cells\n";
        } else if (*idx) {
            gpr::SceneDatabase db = gpr::load_database(idx_db);
            std::optional<gpr::JointModel> model;
            if (!idx_model.empty()) model = gpr::JointModel::load(idx_model);
            gpr::VectorIndex index =
                gpr::build_index(db, idx_dim, model ? &*model : nullptr);
            index.save(idx_out);
            std::cout << "indexed: " << index.size() << " scenes, dim "
                      << index.dim() << "\n";
        } else if (*gq) {
            gpr::SceneDatabase db = gpr::load_database(gq_db);
            auto queries = gpr::generate_queries(db, gq_count, gq_drop, gq_flip, gq_seed);
            gpr::save_queries(queries, gq_out);
            std::cout << "queries: " << queries.size() << "\n";
        } else if (*q) {
            gpr::SceneDatabase db = gpr::load_database(q_db);
            gpr::VectorIndex index = gpr::VectorIndex::load(q_index);
            gpr::Description text;
            std::ifstream in(q_text);
            if (!in) throw std::runtime_error("cannot open text file: " + q_text);
            std::string line;
            while (std::getline(in, line))
                if (!line.empty()) text.sentences.push_back(line);
            gpr::PipelineOptions opts;
            opts.n = q_n;
            opts.k = q_k;
            opts.mode = parse_mode(q_mode);
            std::optional<gpr::JointModel> model;
            if (!q_model.empty()) {
                model = gpr::JointModel::load(q_model);
                opts.model = &*model;
            }
            gpr::QueryOutcome outcome = gpr::run_query(db, index, text, opts);
            nlohmann::ordered_json j;
            j["ranked"] = nlohmann::ordered_json::array();
            for (const auto& r : outcome.result.ranked)
                j["ranked"].push_back({{"scene_id", r.scene_id}, {"score", r.score}});
            j["timing_ms"] = {{"parse", outcome.timings.parse_ms},
                              {"embed", outcome.timings.embed_ms},
                              {"candidates", outcome.timings.candidates_ms},
                              {"rerank", outcome.timings.rerank_ms}};
            std::cout << j.dump(2) << "\n";
        } else if (*ev) {
            gpr::SceneDatabase db = gpr::load_database(e_db);
            gpr::VectorIndex index = gpr::VectorIndex::load(e_index);
            auto queries = gpr::load_queries(e_queries);
            gpr::PipelineOptions opts;
            opts.n = e_n;
            opts.mode = parse_mode(e_mode);
            std::optional<gpr::JointModel> model;
            if (!e_model.empty()) {
                model = gpr::JointModel::load(e_model);
                opts.model = &*model;
            }
            gpr::EvalReport report =
                gpr::evaluate(db, index, queries, parse_ks(e_ks), opts);
            std::string json = gpr::report_to_json(report);
            if (!e_report.empty()) {
                std::ofstream out(e_report);
                if (!out) throw std::runtime_error("cannot write report: " + e_report);
                out << json << "\n";
            }
            for (const auto& [k, r] : report.recall)
                std::cout << "recall@" << k << ": " << r << "\n";
        } else if (*be) {
            gpr::SceneDatabase db = gpr::load_database(b_db);
            gpr::VectorIndex index = gpr::VectorIndex::load(b_index);
            auto queries = gpr::load_queries(b_queries);
            gpr::PipelineOptions opts;
            opts.n = b_n;
            opts.k = b_k;
            opts.mode = parse_mode(b_mode);
            std::optional<gpr::JointModel> model;
            if (!b_model.empty()) {
                model = gpr::JointModel::load(b_model);
                opts.model = &*model;
            }
            gpr::BenchReport report = gpr::bench(db, index, queries, b_reps, opts);
            for (const auto& row : report.rows) {
                std::printf("%-22s %10.3f ms +- %.3f (median %.3f)\n",
                            row.name.c_str(), row.stats.mean_ms, row.stats.std_ms,
                            row.stats.median_ms);
            }
        } else if (*tr) {
            gpr::SceneDatabase db = gpr::load_database(t_db);
            std::vector<const gpr::SceneGraph*> scenes;
            for (const auto& [id, s] : db.scenes)
                if (!s.edges.empty()) scenes.push_back(&s);
            if (scenes.size() < 2)
                throw std::runtime_error("need at least two scenes with edges to train");

            std::mt19937_64 rng(t_seed);
            std::vector<gpr::TrainingPair> pairs;
            for (int i = 0; i < t_pairs; ++i) {
                const gpr::SceneGraph* scene = scenes[i % scenes.size()];
                gpr::SceneGraph text_graph = gpr::build_text_graph(
                    gpr::parse_description(gpr::generate_description(*scene)),
                    scene->scene_id);
                if (i % 2 == 0) {
                    pairs.push_back({text_graph, *scene, true});
                } else {
                    const gpr::SceneGraph* other;
                    do {
                        other = scenes[rng() % scenes.size()];
                    } while (other == scene);
                    pairs.push_back({text_graph, *other, false});
                }
            }
            gpr::JointModel model(gpr::JointModelConfig{}, t_seed);
            gpr::TrainReport report = gpr::train(model, pairs, t_epochs, t_lr);
            model.save(t_out);
            std::cout << "loss: " << report.loss_trace.front() << " -> "
                      << report.loss_trace.back() << " over " << t_epochs
                      << " epochs\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
