#include "gpr/textio.hpp"

#include <algorithm>
#include <random>
#include <regex>
#include <set>

namespace gpr {

namespace {

// "house 2" -> ("house", 2); "house" -> ("house", 1)
std::pair<std::string, int> split_ordinal(const std::string& phrase) {
    auto sp = phrase.rfind(' ');
    if (sp != std::string::npos && sp + 1 < phrase.size()) {
        const std::string tail = phrase.substr(sp + 1);
        if (std::all_of(tail.begin(), tail.end(),
                        [](char c) { return c >= '0' && c <= '9'; })) {
            int ord = std::atoi(tail.c_str());
            if (ord >= 1) return {phrase.substr(0, sp), ord};
        }
    }
    return {phrase, 1};
}

std::string render_label(const std::string& label, int ordinal) {
    if (ordinal > 1) return label + ' ' + std::to_string(ordinal);
    return label;
}

const std::regex kSentenceRe(
    R"(^\s*The (.+) is (north|south|east|west) of the (.+)\.\s*$)");

}  // namespace

ParsedDescription parse_description(const Description& text) {
    ParsedDescription out;
    std::set<std::pair<std::string, int>> seen;
    auto add_label = [&](const std::pair<std::string, int>& l) {
        if (seen.insert(l).second) out.labels.push_back(l);
    };

    for (int i = 0; i < (int)text.sentences.size(); ++i) {
        const std::string& sentence = text.sentences[i];
        if (sentence.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::smatch m;
        if (!std::regex_match(sentence, m, kSentenceRe)) {
            throw UnparseableSentenceError("sentence does not match the grammar", i);
        }
        auto subj = split_ordinal(m[1].str());
        auto obj = split_ordinal(m[3].str());
        auto rel = relation_from_word(m[2].str());
        add_label(subj);
        add_label(obj);
        out.relations.push_back(
            {subj.first, subj.second, *rel, obj.first, obj.second});
    }
    return out;
}

Description generate_description(const SceneGraph& graph, int max_sentences) {
    Description out;
    int count = 0;
    for (const auto& e : graph.edges) {
        if (count >= max_sentences) break;
        const SceneNode& from = graph.nodes[e.from];
        const SceneNode& to = graph.nodes[e.to];
        out.sentences.push_back("The " + render_label(from.label, from.ordinal) +
                                " is " + relation_word(e.relation) + " of the " +
                                render_label(to.label, to.ordinal) + ".");
        ++count;
    }
    return out;
}

ParsedDescription perturb_description(const ParsedDescription& parsed,
                                      int drop_labels, int flip_relations,
                                      uint64_t seed) {
    if (drop_labels >= (int)parsed.labels.size())
        throw std::invalid_argument("drop_labels must be less than the label count");

    std::mt19937_64 rng(seed);
    ParsedDescription out = parsed;

    if (drop_labels > 0) {
        std::vector<int> order(out.labels.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = (int)i;
        std::shuffle(order.begin(), order.end(), rng);
        std::set<std::pair<std::string, int>> dropped;
        for (int i = 0; i < drop_labels; ++i) dropped.insert(out.labels[order[i]]);

        std::vector<std::pair<std::string, int>> kept;
        for (const auto& l : out.labels)
            if (!dropped.count(l)) kept.push_back(l);
        out.labels = std::move(kept);

        std::vector<ParsedRelation> rels;
        for (const auto& r : out.relations) {
            if (dropped.count({r.subject, r.subject_ordinal})) continue;
            if (dropped.count({r.object, r.object_ordinal})) continue;
            rels.push_back(r);
        }
        out.relations = std::move(rels);
    }

    if (flip_relations > 0 && !out.relations.empty()) {
        std::vector<int> order(out.relations.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = (int)i;
        std::shuffle(order.begin(), order.end(), rng);
        const int flips = std::min<int>(flip_relations, (int)out.relations.size());
        static const Relation kAll[] = {Relation::North, Relation::South,
                                        Relation::East, Relation::West};
        for (int i = 0; i < flips; ++i) {
            ParsedRelation& r = out.relations[order[i]];
            Relation candidates[3];
            int n = 0;
            for (Relation c : kAll)
                if (c != r.relation) candidates[n++] = c;
            r.relation = candidates[rng() % 3];
        }
    }
    return out;
}

}  // namespace gpr
