#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpr/scenegraph.hpp"

namespace gpr {

// A text description in the controlled grammar, one sentence per entry.
struct Description {
    std::vector<std::string> sentences;
};

class UnparseableSentenceError : public std::runtime_error {
  public:
    UnparseableSentenceError(const std::string& what, int sentence_index)
        : std::runtime_error(what + " (sentence " + std::to_string(sentence_index) + ")"),
          sentence_index_(sentence_index) {}
    int sentence_index() const { return sentence_index_; }

  private:
    int sentence_index_;
};

// Grammar: "The <label>[ <ordinal>] is <north|south|east|west> of the
// <label>[ <ordinal>]." Trailing integers are stripped into ordinals.
ParsedDescription parse_description(const Description& text);

// One sentence per edge in canonical order, capped at max_sentences.
// A graph with zero edges yields an empty description.
Description generate_description(const SceneGraph& graph, int max_sentences = 6);

// Controlled degradation: removes `drop_labels` random labels (with their
// incident relations) and rewrites `flip_relations` random relations to a
// different direction. Seeded and reproducible.
ParsedDescription perturb_description(const ParsedDescription& parsed,
                                      int drop_labels, int flip_relations,
                                      uint64_t seed);

}  // namespace gpr
