#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "gpr/pipeline.hpp"
#include "support/test_support.hpp"

using namespace gpr;

namespace {

// 4x4 cluster grid, 8 elements per cluster, clusters far enough apart that
// every 50 m submap sees exactly one cluster.
SceneDatabase small_database(uint64_t seed = 7, int cells = 16) {
    std::string xml = gpr::testsupport::synth_osm_xml(
        {48.95, 8.46}, {48.97, 8.49}, 4, 4, 8, seed);
    OsmElementSet osm = OsmElementSet::parse_string(xml);
    return build_database(osm, {48.95, 8.46}, {48.97, 8.49}, cells);
}

}  // namespace

TEST_CASE("build_database over an empty region throws") {
    OsmElementSet osm = OsmElementSet::parse_string("<osm></osm>");
    CHECK_THROWS_AS(build_database(osm, {48.95, 8.46}, {48.97, 8.49}, 4),
                    EmptyDatabaseError);
}

TEST_CASE("build_database single cell keeps a six-element scene") {
    std::string xml = gpr::testsupport::synth_osm_xml(
        {48.9599, 8.4699}, {48.9601, 8.4701}, 1, 1, 6, 3, 20.0);
    OsmElementSet osm = OsmElementSet::parse_string(xml);
    SceneDatabase db =
        build_database(osm, {48.9599, 8.4699}, {48.9601, 8.4701}, 1);
    REQUIRE(db.scenes.size() == 1);
    const SceneGraph& g = db.scenes.begin()->second;
    CHECK(g.nodes.size() == 6);
    CHECK(g.scene_id == "cell_0_0");
    CHECK(g.center.has_value());
}

TEST_CASE("build_database drops sparse cells") {
    // clusters of 3 elements never reach the 6-node minimum
    std::string xml = gpr::testsupport::synth_osm_xml(
        {48.95, 8.46}, {48.97, 8.49}, 4, 4, 3, 5);
    OsmElementSet osm = OsmElementSet::parse_string(xml);
    CHECK_THROWS_AS(build_database(osm, {48.95, 8.46}, {48.97, 8.49}, 16),
                    EmptyDatabaseError);
}

TEST_CASE("build_database is deterministic byte for byte") {
    SceneDatabase a = small_database();
    SceneDatabase b = small_database();
    CHECK(save_database_string(a) == save_database_string(b));
    CHECK(a.scenes.size() == 16);
}

TEST_CASE("database save/load round trip") {
    SceneDatabase db = small_database();
    save_database(db, "/tmp/gpr_test_db.jsonl");
    SceneDatabase loaded = load_database("/tmp/gpr_test_db.jsonl");
    CHECK(save_database_string(loaded) == save_database_string(db));
    REQUIRE(loaded.scenes.size() == db.scenes.size());
    for (const auto& [id, g] : db.scenes) {
        REQUIRE(loaded.scenes.count(id) == 1);
        CHECK(loaded.scenes.at(id).nodes.size() == g.nodes.size());
        CHECK(loaded.scenes.at(id).edges.size() == g.edges.size());
    }
    CHECK(loaded.cells == db.cells);
    CHECK(loaded.radius == db.radius);
}

TEST_CASE("database load rejects empty and corrupted files") {
    { std::ofstream("/tmp/gpr_test_empty.jsonl"); }
    CHECK_THROWS(load_database("/tmp/gpr_test_empty.jsonl"));

    SceneDatabase db = small_database();
    std::string text = save_database_string(db);
    {
        std::ofstream out("/tmp/gpr_test_trunc.jsonl");
        out << text.substr(0, text.size() / 2);
        // cut mid-line: either a truncated-count or parse failure
    }
    CHECK_THROWS(load_database("/tmp/gpr_test_trunc.jsonl"));

    {
        std::ofstream out("/tmp/gpr_test_badver.jsonl");
        std::string mangled = text;
        auto pos = mangled.find("\"version\":1");
        REQUIRE(pos != std::string::npos);
        mangled.replace(pos, 11, "\"version\":9");
        out << mangled;
    }
    CHECK_THROWS(load_database("/tmp/gpr_test_badver.jsonl"));
}

TEST_CASE("closed-loop query ranks the truth scene first under ged") {
    SceneDatabase db = small_database();
    VectorIndex index = build_index(db);
    auto queries = generate_queries(db, 8, 0, 0, 21);
    REQUIRE(queries.size() == 8);

    PipelineOptions opts;
    for (const auto& q : queries) {
        QueryOutcome out = run_query(db, index, q.text, opts);
        REQUIRE(!out.result.ranked.empty());
        CHECK(out.result.ranked[0].scene_id == q.truth_scene_id);
        CHECK(out.result.ranked[0].score == doctest::Approx(0.0));
    }
}

TEST_CASE("k larger than the database truncates to the database size") {
    SceneDatabase db = small_database();
    // keep only three scenes
    SceneDatabase small = db;
    while (small.scenes.size() > 3) small.scenes.erase(small.scenes.begin());
    VectorIndex index = build_index(small);
    auto queries = generate_queries(small, 1, 0, 0, 2);
    PipelineOptions opts;
    opts.k = 5;
    opts.n = 10;
    QueryOutcome out = run_query(small, index, queries[0].text, opts);
    CHECK(out.result.ranked.size() == 3);
}

TEST_CASE("mode none returns the candidate head unchanged") {
    SceneDatabase db = small_database();
    VectorIndex index = build_index(db);
    auto queries = generate_queries(db, 4, 0, 0, 9);
    PipelineOptions opts;
    opts.mode = RerankMode::None;
    opts.n = (int)db.scenes.size();
    for (const auto& q : queries) {
        QueryOutcome out = run_query(db, index, q.text, opts);
        REQUIRE((int)out.candidates.size() == (int)db.scenes.size());
        REQUIRE(out.result.ranked.size() == (std::size_t)opts.k);
        for (int i = 0; i < opts.k; ++i) {
            CHECK(out.result.ranked[i].scene_id == out.candidates[i].scene_id);
            CHECK(out.result.ranked[i].score == out.candidates[i].score);
        }
    }
}

TEST_CASE("superset equivalence: n = |db| equals rerank over everything") {
    SceneDatabase db = small_database();
    VectorIndex index = build_index(db);
    auto queries = generate_queries(db, 10, 1, 1, 33);

    PipelineOptions full;
    full.n = (int)db.scenes.size();

    for (const auto& q : queries) {
        QueryOutcome via_pipeline = run_query(db, index, q.text, full);

        // oracle: rerank the whole database directly
        ParsedDescription parsed = parse_description(q.text);
        SceneGraph tg = build_text_graph(parsed, "query");
        std::vector<const SceneGraph*> all;
        for (const auto& [id, g] : db.scenes) all.push_back(&g);
        RetrievalResult direct = rerank(tg, all, RerankMode::Ged, full.k,
                                        nullptr, full.ged_costs());
        REQUIRE(via_pipeline.result.ranked.size() == direct.ranked.size());
        for (std::size_t i = 0; i < direct.ranked.size(); ++i) {
            CHECK(via_pipeline.result.ranked[i].scene_id == direct.ranked[i].scene_id);
            CHECK(via_pipeline.result.ranked[i].score ==
                  doctest::Approx(direct.ranked[i].score));
        }
    }
}

TEST_CASE("evaluate: recall monotone, perfect on unperturbed queries") {
    SceneDatabase db = small_database();
    VectorIndex index = build_index(db);
    auto queries = generate_queries(db, 12, 0, 0, 55);
    PipelineOptions opts;
    EvalReport report = evaluate(db, index, queries, {1, 3, 5}, opts);

    CHECK(report.recall.at(1) <= report.recall.at(3));
    CHECK(report.recall.at(3) <= report.recall.at(5));
    CHECK(report.recall.at(1) == doctest::Approx(1.0));
    CHECK(report.config_errors == 0);
    CHECK(report.queries.size() == queries.size());
    CHECK(report.db_size_bytes > 0);
    CHECK(report.stage_timing.count("candidates") == 1);

    // determinism apart from timing
    EvalReport again = evaluate(db, index, queries, {1, 3, 5}, opts);
    CHECK(again.recall == report.recall);
    for (std::size_t i = 0; i < report.queries.size(); ++i) {
        CHECK(again.queries[i].ranked_ids == report.queries[i].ranked_ids);
    }
}

TEST_CASE("evaluate counts missing truth ids as config errors, not misses") {
    SceneDatabase db = small_database();
    VectorIndex index = build_index(db);
    auto queries = generate_queries(db, 4, 0, 0, 12);
    queries[1].truth_scene_id = "cell_99_99";
    PipelineOptions opts;
    EvalReport report = evaluate(db, index, queries, {1}, opts);
    CHECK(report.config_errors == 1);
    CHECK(report.recall.at(1) == doctest::Approx(1.0));  // over valid queries
    int flagged = 0;
    for (const auto& q : report.queries) flagged += q.config_error ? 1 : 0;
    CHECK(flagged == 1);
}

TEST_CASE("report_to_json carries the headline fields") {
    SceneDatabase db = small_database();
    VectorIndex index = build_index(db);
    auto queries = generate_queries(db, 3, 0, 0, 81);
    PipelineOptions opts;
    EvalReport report = evaluate(db, index, queries, {1, 3}, opts);
    nlohmann::json j = nlohmann::json::parse(report_to_json(report));
    CHECK(j.contains("recall"));
    CHECK(j["recall"].contains("@1"));
    CHECK(j.contains("timing_ms"));
    CHECK(j.contains("db_size_bytes"));
    CHECK(j["queries"].size() == 3);
}

TEST_CASE("query records save/load round trip") {
    SceneDatabase db = small_database();
    auto queries = generate_queries(db, 5, 1, 0, 66);
    save_queries(queries, "/tmp/gpr_test_queries.jsonl");
    auto loaded = load_queries("/tmp/gpr_test_queries.jsonl");
    REQUIRE(loaded.size() == queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        CHECK(loaded[i].query_id == queries[i].query_id);
        CHECK(loaded[i].truth_scene_id == queries[i].truth_scene_id);
        CHECK(loaded[i].text.sentences == queries[i].text.sentences);
    }
}

TEST_CASE("generate_queries is seeded and reproducible") {
    SceneDatabase db = small_database();
    auto a = generate_queries(db, 6, 1, 1, 17);
    auto b = generate_queries(db, 6, 1, 1, 17);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].query_id == b[i].query_id);
        CHECK(a[i].truth_scene_id == b[i].truth_scene_id);
        CHECK(a[i].text.sentences == b[i].text.sentences);
    }
}

TEST_CASE("bench reports the three configurations") {
    SceneDatabase db = small_database();
    VectorIndex index = build_index(db);
    auto queries = generate_queries(db, 3, 0, 0, 44);
    PipelineOptions opts;

    BenchReport report = bench(db, index, queries, 2, opts);
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].name == "candidates_only");
    CHECK(report.rows[1].name == "candidates_and_rerank");
    CHECK(report.rows[2].name == "rerank_only");
    for (const auto& row : report.rows) {
        CHECK(row.stats.mean_ms >= 0.0);
        CHECK(row.stats.median_ms >= 0.0);
        CHECK(row.stats.std_ms >= 0.0);
    }

    // single repetition: degenerate statistics, std over one sample per query
    BenchReport single = bench(db, index, {queries[0]}, 1, opts);
    for (const auto& row : single.rows) CHECK(row.stats.std_ms == 0.0);
}

TEST_CASE("run_query rejects an index that does not match the database") {
    SceneDatabase db = small_database();
    VectorIndex index = build_index(db);
    SceneDatabase smaller = db;
    smaller.scenes.erase(smaller.scenes.begin());
    auto queries = generate_queries(db, 1, 0, 0, 3);
    PipelineOptions opts;
    CHECK_THROWS_AS(run_query(smaller, index, queries[0].text, opts),
                    ConfigurationError);
}
