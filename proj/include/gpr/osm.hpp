#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gpr/geo.hpp"

namespace gpr {

class OsmParseError : public std::runtime_error {
  public:
    OsmParseError(const std::string& what, int line)
        : std::runtime_error(what + " (line " + std::to_string(line) + ")"),
          line_(line) {}
    int line() const { return line_; }

  private:
    int line_;
};

struct OsmElement {
    enum class Kind { Node, Way };

    int64_t id = 0;
    Kind kind = Kind::Node;
    std::string label;
    std::vector<GeoPoint> geometry;  // length 1 for nodes, >= 2 for ways
    std::map<std::string, std::string> tags;
};

// Tag -> display label resolution. Priority keys are scanned in a fixed
// order; vague values ("yes", "true") fall back to "<key>:use" or the key
// name itself. Returns nullopt when no semantic key is present.
std::optional<std::string> label_for_element(
    const std::map<std::string, std::string>& tags);

// Immutable after parse. Radius queries go through a uniform lat/lon grid
// over element bounding boxes; results are identical to a brute-force scan.
class OsmElementSet {
  public:
    OsmElementSet() = default;
    explicit OsmElementSet(std::vector<OsmElement> elements);

    // Parses the <node>/<way>/<nd>/<tag> subset of OSM XML. <relation>
    // elements are consumed and ignored. Throws OsmParseError with a line
    // number on malformed input.
    static OsmElementSet parse(std::istream& in);
    static OsmElementSet parse_string(const std::string& xml);
    static OsmElementSet parse_file(const std::string& path);

    const std::vector<OsmElement>& elements() const { return elements_; }
    std::size_t size() const { return elements_.size(); }
    bool empty() const { return elements_.empty(); }

    // Ways dropped for referencing a missing node.
    int dropped_way_count() const { return dropped_ways_; }

    // Every element whose nearest geometry vertex lies within `radius`
    // meters of `center`, with that vertex in the center's ENU frame.
    // Ordered by ascending element id.
    std::vector<std::pair<const OsmElement*, EnuPoint>> elements_within(
        const GeoPoint& center, double radius) const;

    // Same contract without the spatial index; test oracle and fallback.
    std::vector<std::pair<const OsmElement*, EnuPoint>> elements_within_scan(
        const GeoPoint& center, double radius) const;

    void save(const std::string& path) const;
    static OsmElementSet load(const std::string& path);

  private:
    void build_index();

    std::vector<OsmElement> elements_;  // sorted by id
    int dropped_ways_ = 0;

    // Uniform grid over the lat/lon bounding box of all geometry.
    double grid_min_lat_ = 0, grid_min_lon_ = 0;
    double grid_cell_lat_ = 1, grid_cell_lon_ = 1;
    int grid_rows_ = 0, grid_cols_ = 0;
    std::vector<std::vector<int>> grid_;  // element indices per cell
};

}  // namespace gpr
