#include "gpr/osm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace gpr {

namespace {

// ---------------------------------------------------------------------------
// Minimal XML scanner for the OSM subset. Tracks line numbers for errors.
// ---------------------------------------------------------------------------

struct XmlTag {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attrs;
    bool closing = false;       // </name>
    bool self_closing = false;  // <name ... />
};

std::string decode_entities(const std::string& s) {
    if (s.find('&') == std::string::npos) return s;
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        if (s[i] != '&') {
            out += s[i++];
            continue;
        }
        std::size_t semi = s.find(';', i);
        if (semi == std::string::npos) {
            out += s[i++];
            continue;
        }
        std::string ent = s.substr(i + 1, semi - i - 1);
        if (ent == "amp") out += '&';
        else if (ent == "lt") out += '<';
        else if (ent == "gt") out += '>';
        else if (ent == "quot") out += '"';
        else if (ent == "apos") out += '\'';
        else if (!ent.empty() && ent[0] == '#') {
            int code = std::atoi(ent.c_str() + (ent[1] == 'x' ? 2 : 1));
            if (ent[1] == 'x') code = static_cast<int>(std::strtol(ent.c_str() + 2, nullptr, 16));
            if (code > 0 && code < 128) out += static_cast<char>(code);
        } else {
            out += s.substr(i, semi - i + 1);
        }
        i = semi + 1;
    }
    return out;
}

class XmlScanner {
  public:
    explicit XmlScanner(std::istream& in) : in_(in) {
        std::ostringstream ss;
        ss << in_.rdbuf();
        text_ = ss.str();
    }

    // Returns false at end of document.
    bool next(XmlTag& tag) {
        for (;;) {
            while (pos_ < text_.size() && text_[pos_] != '<') advance();
            if (pos_ >= text_.size()) return false;
            if (text_.compare(pos_, 4, "<!--") == 0) {
                std::size_t end = text_.find("-->", pos_);
                if (end == std::string::npos) fail("unterminated comment");
                skip_to(end + 3);
                continue;
            }
            if (text_.compare(pos_, 2, "<?") == 0 ||
                text_.compare(pos_, 2, "<!") == 0) {
                std::size_t end = text_.find('>', pos_);
                if (end == std::string::npos) fail("unterminated declaration");
                skip_to(end + 1);
                continue;
            }
            return parse_tag(tag);
        }
    }

    int line() const { return line_; }

  private:
    void advance() {
        if (text_[pos_] == '\n') ++line_;
        ++pos_;
    }

    void skip_to(std::size_t target) {
        while (pos_ < target && pos_ < text_.size()) advance();
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw OsmParseError(msg, line_);
    }

    bool parse_tag(XmlTag& tag) {
        tag = XmlTag{};
        advance();  // '<'
        if (pos_ < text_.size() && text_[pos_] == '/') {
            tag.closing = true;
            advance();
        }
        std::size_t start = pos_;
        while (pos_ < text_.size() && !std::isspace((unsigned char)text_[pos_]) &&
               text_[pos_] != '>' && text_[pos_] != '/')
            advance();
        if (pos_ >= text_.size()) fail("unterminated tag");
        tag.name = text_.substr(start, pos_ - start);
        if (tag.name.empty()) fail("empty tag name");

        for (;;) {
            while (pos_ < text_.size() && std::isspace((unsigned char)text_[pos_])) advance();
            if (pos_ >= text_.size()) fail("unterminated tag");
            if (text_[pos_] == '>') {
                advance();
                return true;
            }
            if (text_[pos_] == '/') {
                advance();
                if (pos_ >= text_.size() || text_[pos_] != '>') fail("malformed tag end");
                advance();
                tag.self_closing = true;
                return true;
            }
            // attribute
            std::size_t astart = pos_;
            while (pos_ < text_.size() && text_[pos_] != '=' &&
                   !std::isspace((unsigned char)text_[pos_]) && text_[pos_] != '>')
                advance();
            if (pos_ >= text_.size() || text_[pos_] != '=')
                fail("attribute without value");
            std::string key = text_.substr(astart, pos_ - astart);
            advance();  // '='
            if (pos_ >= text_.size() || (text_[pos_] != '"' && text_[pos_] != '\''))
                fail("attribute value not quoted");
            char quote = text_[pos_];
            advance();
            std::size_t vstart = pos_;
            while (pos_ < text_.size() && text_[pos_] != quote) advance();
            if (pos_ >= text_.size()) fail("unterminated attribute value");
            tag.attrs.emplace_back(key,
                                   decode_entities(text_.substr(vstart, pos_ - vstart)));
            advance();  // closing quote
        }
    }

    std::istream& in_;
    std::string text_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

const std::string* find_attr(const XmlTag& tag, const char* key) {
    for (const auto& [k, v] : tag.attrs)
        if (k == key) return &v;
    return nullptr;
}

std::string title_case(const std::string& value) {
    std::string out;
    out.reserve(value.size());
    bool at_word = true;
    for (char c : value) {
        if (c == '_' || c == ' ') {
            out += ' ';
            at_word = true;
        } else if (at_word) {
            out += static_cast<char>(std::toupper((unsigned char)c));
            at_word = false;
        } else {
            out += c;
        }
    }
    return out;
}

bool is_vague(const std::string& v) { return v == "yes" || v == "true"; }

}  // namespace

std::optional<std::string> label_for_element(
    const std::map<std::string, std::string>& tags) {
    static const char* kPriorityKeys[] = {"amenity", "shop",    "leisure",
                                          "highway", "natural", "landuse",
                                          "building", "barrier", "waterway"};
    for (const char* key : kPriorityKeys) {
        auto it = tags.find(key);
        if (it == tags.end()) continue;
        std::string value = it->second;
        if (is_vague(value)) {
            auto use = tags.find(std::string(key) + ":use");
            if (use != tags.end() && !is_vague(use->second)) {
                value = use->second;
            } else {
                value = key;  // capitalized below
            }
        }
        if (value.empty()) continue;
        return title_case(value);
    }
    return std::nullopt;
}

OsmElementSet::OsmElementSet(std::vector<OsmElement> elements)
    : elements_(std::move(elements)) {
    std::sort(elements_.begin(), elements_.end(),
              [](const OsmElement& a, const OsmElement& b) { return a.id < b.id; });
    build_index();
}

OsmElementSet OsmElementSet::parse_string(const std::string& xml) {
    std::istringstream ss(xml);
    return parse(ss);
}

OsmElementSet OsmElementSet::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open OSM file: " + path);
    return parse(in);
}

OsmElementSet OsmElementSet::parse(std::istream& in) {
    XmlScanner scanner(in);

    struct RawWay {
        int64_t id;
        std::vector<int64_t> refs;
        std::map<std::string, std::string> tags;
    };

    std::unordered_map<int64_t, GeoPoint> node_coords;
    std::vector<std::pair<int64_t, std::map<std::string, std::string>>> tagged_nodes;
    std::vector<RawWay> ways;

    enum class Ctx { None, Node, Way, Relation };
    Ctx ctx = Ctx::None;
    int64_t cur_id = 0;
    std::map<std::string, std::string> cur_tags;
    std::vector<int64_t> cur_refs;
    int relation_depth = 0;

    XmlTag tag;
    while (scanner.next(tag)) {
        if (tag.closing) {
            if (tag.name == "node" && ctx == Ctx::Node) {
                if (!cur_tags.empty()) tagged_nodes.emplace_back(cur_id, cur_tags);
                ctx = Ctx::None;
            } else if (tag.name == "way" && ctx == Ctx::Way) {
                ways.push_back({cur_id, cur_refs, cur_tags});
                ctx = Ctx::None;
            } else if (tag.name == "relation") {
                if (relation_depth > 0) --relation_depth;
                if (relation_depth == 0 && ctx == Ctx::Relation) ctx = Ctx::None;
            }
            continue;
        }

        if (ctx == Ctx::Relation && !tag.self_closing && tag.name == "relation")
            ++relation_depth;
        if (ctx == Ctx::Relation) continue;  // relations are skipped entirely

        if (tag.name == "node") {
            const std::string* id = find_attr(tag, "id");
            const std::string* lat = find_attr(tag, "lat");
            const std::string* lon = find_attr(tag, "lon");
            if (!id || !lat || !lon)
                throw OsmParseError("node missing id/lat/lon", scanner.line());
            GeoPoint p{std::atof(lat->c_str()), std::atof(lon->c_str())};
            if (!is_valid(p))
                throw OsmParseError("node coordinate out of range", scanner.line());
            int64_t nid = std::strtoll(id->c_str(), nullptr, 10);
            node_coords[nid] = p;
            if (tag.self_closing) continue;
            ctx = Ctx::Node;
            cur_id = nid;
            cur_tags.clear();
        } else if (tag.name == "way") {
            const std::string* id = find_attr(tag, "id");
            if (!id) throw OsmParseError("way missing id", scanner.line());
            if (tag.self_closing) continue;
            ctx = Ctx::Way;
            cur_id = std::strtoll(id->c_str(), nullptr, 10);
            cur_tags.clear();
            cur_refs.clear();
        } else if (tag.name == "relation") {
            if (!tag.self_closing) {
                ctx = Ctx::Relation;
                relation_depth = 1;
            }
        } else if (tag.name == "tag") {
            if (ctx == Ctx::Node || ctx == Ctx::Way) {
                const std::string* k = find_attr(tag, "k");
                const std::string* v = find_attr(tag, "v");
                if (!k || !v) throw OsmParseError("tag missing k/v", scanner.line());
                cur_tags[*k] = *v;
            }
        } else if (tag.name == "nd") {
            if (ctx == Ctx::Way) {
                const std::string* ref = find_attr(tag, "ref");
                if (!ref) throw OsmParseError("nd missing ref", scanner.line());
                cur_refs.push_back(std::strtoll(ref->c_str(), nullptr, 10));
            }
        }
        // unknown tags (osm, bounds, member, ...) are ignored
    }

    std::vector<OsmElement> out;
    for (const auto& [nid, tags] : tagged_nodes) {
        auto label = label_for_element(tags);
        if (!label) continue;
        OsmElement e;
        e.id = nid;
        e.kind = OsmElement::Kind::Node;
        e.label = *label;
        e.geometry = {node_coords.at(nid)};
        e.tags = tags;
        out.push_back(std::move(e));
    }

    int dropped = 0;
    for (const auto& w : ways) {
        if (w.tags.empty()) continue;
        auto label = label_for_element(w.tags);
        if (!label) continue;
        if (w.refs.size() < 2) {
            ++dropped;
            continue;
        }
        OsmElement e;
        e.id = w.id;
        e.kind = OsmElement::Kind::Way;
        e.label = *label;
        e.tags = w.tags;
        bool ok = true;
        for (int64_t ref : w.refs) {
            auto it = node_coords.find(ref);
            if (it == node_coords.end()) {
                ok = false;
                break;
            }
            e.geometry.push_back(it->second);
        }
        if (!ok) {
            ++dropped;
            continue;
        }
        out.push_back(std::move(e));
    }

    OsmElementSet set(std::move(out));
    set.dropped_ways_ = dropped;
    return set;
}

void OsmElementSet::build_index() {
    grid_.clear();
    grid_rows_ = grid_cols_ = 0;
    if (elements_.empty()) return;

    double min_lat = 90, max_lat = -90, min_lon = 180, max_lon = -180;
    for (const auto& e : elements_) {
        for (const auto& g : e.geometry) {
            min_lat = std::min(min_lat, g.lat);
            max_lat = std::max(max_lat, g.lat);
            min_lon = std::min(min_lon, g.lon);
            max_lon = std::max(max_lon, g.lon);
        }
    }
    const int dim = std::max(1, (int)std::sqrt((double)elements_.size()));
    grid_rows_ = grid_cols_ = dim;
    grid_min_lat_ = min_lat;
    grid_min_lon_ = min_lon;
    grid_cell_lat_ = std::max((max_lat - min_lat) / dim, 1e-9);
    grid_cell_lon_ = std::max((max_lon - min_lon) / dim, 1e-9);
    grid_.assign((std::size_t)grid_rows_ * grid_cols_, {});

    auto cell_of = [&](double lat, double lon) {
        int r = std::clamp((int)((lat - grid_min_lat_) / grid_cell_lat_), 0, grid_rows_ - 1);
        int c = std::clamp((int)((lon - grid_min_lon_) / grid_cell_lon_), 0, grid_cols_ - 1);
        return std::pair<int, int>{r, c};
    };

    for (int i = 0; i < (int)elements_.size(); ++i) {
        double e_min_lat = 90, e_max_lat = -90, e_min_lon = 180, e_max_lon = -180;
        for (const auto& g : elements_[i].geometry) {
            e_min_lat = std::min(e_min_lat, g.lat);
            e_max_lat = std::max(e_max_lat, g.lat);
            e_min_lon = std::min(e_min_lon, g.lon);
            e_max_lon = std::max(e_max_lon, g.lon);
        }
        auto [r0, c0] = cell_of(e_min_lat, e_min_lon);
        auto [r1, c1] = cell_of(e_max_lat, e_max_lon);
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c)
                grid_[(std::size_t)r * grid_cols_ + c].push_back(i);
    }
}

namespace {

// Nearest geometry vertex of `e` to the query origin, in the query ENU frame.
std::optional<EnuPoint> nearest_vertex_within(const OsmElement& e,
                                              const GeoPoint& center,
                                              double radius) {
    std::optional<EnuPoint> best;
    double best_d = radius;
    for (const auto& g : e.geometry) {
        EnuPoint p = gps_to_enu(g, center);
        double d = enu_distance(p, EnuPoint{});
        if (d <= best_d) {
            best_d = d;
            best = p;
        }
    }
    return best;
}

}  // namespace

std::vector<std::pair<const OsmElement*, EnuPoint>>
OsmElementSet::elements_within_scan(const GeoPoint& center, double radius) const {
    std::vector<std::pair<const OsmElement*, EnuPoint>> out;
    for (const auto& e : elements_) {
        if (auto p = nearest_vertex_within(e, center, radius)) {
            out.emplace_back(&e, *p);
        }
    }
    return out;  // elements_ is id-sorted, so results are too
}

std::vector<std::pair<const OsmElement*, EnuPoint>> OsmElementSet::elements_within(
    const GeoPoint& center, double radius) const {
    if (radius <= 0) throw std::invalid_argument("radius must be positive");
    if (grid_.empty()) return {};

    // Conservative lat/lon half-extents for the radius; the exact ENU check
    // below decides membership.
    const double dlat = radius / 110574.0 * 1.5 + 1e-9;
    const double cos_lat = std::max(std::cos(center.lat * 3.14159265358979323846 / 180.0), 0.01);
    const double dlon = radius / (111320.0 * cos_lat) * 1.5 + 1e-9;

    auto clamp_cell = [&](double lat, double lon) {
        int r = std::clamp((int)((lat - grid_min_lat_) / grid_cell_lat_), 0, grid_rows_ - 1);
        int c = std::clamp((int)((lon - grid_min_lon_) / grid_cell_lon_), 0, grid_cols_ - 1);
        return std::pair<int, int>{r, c};
    };
    auto [r0, c0] = clamp_cell(center.lat - dlat, center.lon - dlon);
    auto [r1, c1] = clamp_cell(center.lat + dlat, center.lon + dlon);

    std::vector<int> candidates;
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
            for (int idx : grid_[(std::size_t)r * grid_cols_ + c])
                candidates.push_back(idx);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()),
                     candidates.end());

    std::vector<std::pair<const OsmElement*, EnuPoint>> out;
    for (int idx : candidates) {
        if (auto p = nearest_vertex_within(elements_[idx], center, radius)) {
            out.emplace_back(&elements_[idx], *p);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary serialization: magic "GPRE", version 1.
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("truncated element file");
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put<uint32_t>(out, (uint32_t)s.size());
    out.write(s.data(), (std::streamsize)s.size());
}

std::string get_string(std::istream& in) {
    uint32_t n = get<uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw std::runtime_error("truncated element file");
    return s;
}

}  // namespace

void OsmElementSet::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out.write("GPRE", 4);
    put<uint8_t>(out, 1);
    put<uint64_t>(out, elements_.size());
    for (const auto& e : elements_) {
        put<int64_t>(out, e.id);
        put<uint8_t>(out, e.kind == OsmElement::Kind::Node ? 0 : 1);
        put_string(out, e.label);
        put<uint32_t>(out, (uint32_t)e.geometry.size());
        for (const auto& g : e.geometry) {
            put<double>(out, g.lat);
            put<double>(out, g.lon);
        }
        put<uint32_t>(out, (uint32_t)e.tags.size());
        for (const auto& [k, v] : e.tags) {
            put_string(out, k);
            put_string(out, v);
        }
    }
}

OsmElementSet OsmElementSet::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open element file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "GPRE", 4) != 0)
        throw std::runtime_error("bad element file magic");
    if (get<uint8_t>(in) != 1) throw std::runtime_error("unsupported element file version");
    uint64_t count = get<uint64_t>(in);
    std::vector<OsmElement> elements;
    elements.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        OsmElement e;
        e.id = get<int64_t>(in);
        e.kind = get<uint8_t>(in) == 0 ? OsmElement::Kind::Node : OsmElement::Kind::Way;
        e.label = get_string(in);
        uint32_t ng = get<uint32_t>(in);
        for (uint32_t j = 0; j < ng; ++j) {
            GeoPoint g;
            g.lat = get<double>(in);
            g.lon = get<double>(in);
            e.geometry.push_back(g);
        }
        uint32_t nt = get<uint32_t>(in);
        for (uint32_t j = 0; j < nt; ++j) {
            std::string k = get_string(in);
            e.tags[k] = get_string(in);
        }
        elements.push_back(std::move(e));
    }
    return OsmElementSet(std::move(elements));
}

}  // namespace gpr
