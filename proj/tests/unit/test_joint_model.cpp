#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gpr/joint_model.hpp"
#include "support/test_support.hpp"

using namespace gpr;

namespace {

JointModelConfig small_config() {
    JointModelConfig c;
    c.vocab = 64;
    c.hidden = 16;
    c.layers = 2;
    c.heads = 2;
    return c;
}

// Applies a node permutation to precomputed tensors; the model must not care.
GraphTensors permute(const GraphTensors& t, const std::vector<int>& perm) {
    const int n = (int)t.label_ids.size();
    GraphTensors out;
    out.label_ids.resize(n);
    out.relation.resize(n, n);
    out.neighbor_mask.resize(n, n);
    for (int i = 0; i < n; ++i) {
        out.label_ids[perm[i]] = t.label_ids[i];
        for (int j = 0; j < n; ++j) {
            out.relation(perm[i], perm[j]) = t.relation(i, j);
            out.neighbor_mask(perm[i], perm[j]) = t.neighbor_mask(i, j);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("GraphTensors reflect oriented relations and self loops") {
    ParsedDescription p;
    p.labels = {{"house", 1}, {"tree", 1}};
    p.relations = {{"tree", 1, Relation::North, "house", 1}};
    SceneGraph g = build_text_graph(p, "t");
    GraphTensors t = GraphTensors::from_graph(g, 64);
    REQUIRE(t.label_ids.size() == 2);
    CHECK(t.relation(0, 0) == 4);
    CHECK(t.relation(1, 1) == 4);
    // "tree north of house" canonicalizes to the edge house->tree South
    CHECK(t.relation(0, 1) == (int)Relation::South);
    CHECK(t.relation(1, 0) == (int)Relation::North);
    CHECK(t.neighbor_mask(0, 1) == 1.0);
    CHECK(t.neighbor_mask(0, 0) == 1.0);
}

TEST_CASE("same seed gives identical models, different seeds differ") {
    JointModel a(small_config(), 5);
    JointModel b(small_config(), 5);
    JointModel c(small_config(), 6);
    auto pa = a.parameters();
    auto pb = b.parameters();
    auto pc = c.parameters();
    REQUIRE(pa.size() == pb.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].first == pb[i].first);
        CHECK(*pa[i].second == *pb[i].second);
        if (*pa[i].second != *pc[i].second) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("joint_embed is deterministic and outputs unit embeddings") {
    std::mt19937_64 rng(151);
    JointModel model(small_config(), 1);
    SceneGraph text = gpr::testsupport::random_connected_text_graph(rng, 4);
    SceneGraph map = gpr::testsupport::random_map_graph(rng, 3, 6);

    auto out1 = model.joint_embed(text, map);
    auto out2 = model.joint_embed(text, map);
    CHECK(out1.text_embedding.values == out2.text_embedding.values);
    CHECK(out1.map_embedding.values == out2.map_embedding.values);
    CHECK(out1.similarity == out2.similarity);
    CHECK(out1.match_probability == out2.match_probability);

    CHECK(std::fabs(out1.text_embedding.norm() - 1.0) < 1e-6);
    CHECK(std::fabs(out1.map_embedding.norm() - 1.0) < 1e-6);
    CHECK(out1.similarity >= -1.0);
    CHECK(out1.similarity <= 1.0);
    CHECK(out1.match_probability > 0.0);
    CHECK(out1.match_probability < 1.0);
}

TEST_CASE("joint_embed is invariant to node permutation") {
    std::mt19937_64 rng(157);
    JointModel model(small_config(), 2);
    for (int trial = 0; trial < 10; ++trial) {
        SceneGraph text = gpr::testsupport::random_connected_text_graph(rng, 5);
        SceneGraph map = gpr::testsupport::random_map_graph(rng, 4, 7);
        GraphTensors tt = GraphTensors::from_graph(text, model.config().vocab);
        GraphTensors tm = GraphTensors::from_graph(map, model.config().vocab);

        std::vector<int> perm((std::size_t)tm.label_ids.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (int)i;
        std::shuffle(perm.begin(), perm.end(), rng);

        auto base = model.joint_embed(tt, tm);
        auto shuf = model.joint_embed(tt, permute(tm, perm));
        CHECK(std::fabs(base.similarity - shuf.similarity) < 1e-6);
        CHECK(std::fabs(base.match_probability - shuf.match_probability) < 1e-6);
        for (int i = 0; i < base.map_embedding.dim(); ++i) {
            CHECK(std::fabs(base.map_embedding.values[i] -
                            shuf.map_embedding.values[i]) < 1e-6);
        }
    }
}

TEST_CASE("loss is lower for the label it is told to fit") {
    std::mt19937_64 rng(163);
    JointModel model(small_config(), 3);
    SceneGraph text = gpr::testsupport::random_connected_text_graph(rng, 4);
    SceneGraph map = gpr::testsupport::random_map_graph(rng, 3, 6);
    auto lm = model.loss(text, map, true);
    auto ln = model.loss(text, map, false);
    CHECK(lm.total > 0.0);
    CHECK(ln.total > 0.0);
    CHECK(lm.total != ln.total);
    // match/sim components decompose the total
    CHECK(lm.total == doctest::Approx(lm.match_component + lm.sim_component));
    CHECK(ln.total == doctest::Approx(ln.match_component + ln.sim_component));
}

TEST_CASE("gradient check against central differences") {
    std::mt19937_64 rng(167);
    JointModel model(small_config(), 7);
    SceneGraph text = gpr::testsupport::random_connected_text_graph(rng, 4);
    SceneGraph map = gpr::testsupport::random_map_graph(rng, 3, 6);
    for (bool is_match : {true, false}) {
        auto failures = gpr::testsupport::gradient_check(model, text, map,
                                                         is_match, 4, 1e-4, rng);
        for (const auto& f : failures) {
            CAPTURE(f.parameter);
            CAPTURE(f.analytic);
            CAPTURE(f.numeric);
            CHECK(f.rel_error <= 1e-4);
        }
        CHECK(failures.empty());
    }
}

TEST_CASE("train for zero epochs leaves parameters untouched") {
    std::mt19937_64 rng(173);
    JointModel model(small_config(), 9);
    JointModel reference(small_config(), 9);
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 4; ++i) {
        pairs.push_back({gpr::testsupport::random_connected_text_graph(rng, 4),
                         gpr::testsupport::random_map_graph(rng, 3, 6),
                         i % 2 == 0});
    }
    TrainReport report = train(model, pairs, 0, 0.05);
    REQUIRE(report.loss_trace.size() == 1);
    auto pm = model.parameters();
    auto pr = reference.parameters();
    for (std::size_t i = 0; i < pm.size(); ++i) {
        CHECK(*pm[i].second == *pr[i].second);
    }
}

TEST_CASE("training is deterministic and reduces the loss") {
    std::mt19937_64 rng(179);
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 6; ++i) {
        SceneGraph text = gpr::testsupport::random_connected_text_graph(rng, 4);
        SceneGraph map = gpr::testsupport::random_map_graph(rng, 3, 6);
        pairs.push_back({text, map, i % 2 == 0});
    }

    JointModel m1(small_config(), 11);
    JointModel m2(small_config(), 11);
    TrainReport r1 = train(m1, pairs, 40, 0.05);
    TrainReport r2 = train(m2, pairs, 40, 0.05);
    CHECK(r1.loss_trace == r2.loss_trace);
    REQUIRE(r1.loss_trace.size() == 41);
    CHECK(r1.loss_trace.back() < r1.loss_trace.front());
}

TEST_CASE("checkpoint round trip preserves behavior bit for bit") {
    std::mt19937_64 rng(181);
    JointModel model(small_config(), 13);
    std::vector<TrainingPair> pairs = {
        {gpr::testsupport::random_connected_text_graph(rng, 4),
         gpr::testsupport::random_map_graph(rng, 3, 6), true},
        {gpr::testsupport::random_connected_text_graph(rng, 4),
         gpr::testsupport::random_map_graph(rng, 3, 6), false}};
    train(model, pairs, 5, 0.05);

    model.save("/tmp/gpr_test_model.gprm");
    JointModel loaded = JointModel::load("/tmp/gpr_test_model.gprm");
    CHECK(loaded.config().hidden == model.config().hidden);
    CHECK(loaded.config().layers == model.config().layers);

    SceneGraph text = gpr::testsupport::random_connected_text_graph(rng, 4);
    SceneGraph map = gpr::testsupport::random_map_graph(rng, 3, 6);
    auto a = model.joint_embed(text, map);
    auto b = loaded.joint_embed(text, map);
    // checkpoints quantize parameters to float32; outputs agree to that
    // precision
    REQUIRE(a.text_embedding.dim() == b.text_embedding.dim());
    for (int i = 0; i < a.text_embedding.dim(); ++i) {
        CHECK(std::fabs(a.text_embedding.values[i] - b.text_embedding.values[i]) < 1e-4);
        CHECK(std::fabs(a.map_embedding.values[i] - b.map_embedding.values[i]) < 1e-4);
    }
    CHECK(std::fabs(a.similarity - b.similarity) < 1e-4);
    CHECK(std::fabs(a.match_probability - b.match_probability) < 1e-4);
}

TEST_CASE("embed_single is deterministic, unit norm, and index compatible") {
    std::mt19937_64 rng(191);
    JointModel model(small_config(), 17);
    SceneGraph g = gpr::testsupport::random_map_graph(rng, 3, 6);
    EmbeddingVector v = model.embed_single(g);
    CHECK(v.dim() == model.config().hidden);
    CHECK(std::fabs(v.norm() - 1.0) < 1e-6);
    CHECK(model.embed_single(g).values == v.values);

    VectorIndex index(model.config().hidden);
    index.add("g", v);
    auto top = index.extract_candidates(v, 1);
    REQUIRE(top.size() == 1);
    CHECK(top[0].scene_id == "g");
}
