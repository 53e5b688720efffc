#include "gpr/embed_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>
#include <stdexcept>

namespace gpr {

namespace {

uint64_t fnv1a(const void* data, std::size_t len, uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t hash_string(const std::string& s) { return fnv1a(s.data(), s.size()); }

uint64_t hash_combine(uint64_t a, uint64_t b) {
    return fnv1a(&b, sizeof(b), fnv1a(&a, sizeof(a)));
}

// FNV's low bits mix poorly (strings differing in a trailing digit produce
// strongly correlated low bytes), so bucket/sign extraction goes through a
// full-avalanche finalizer.
uint64_t mix64(uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdull;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ull;
    x ^= x >> 33;
    return x;
}

}  // namespace

double EmbeddingVector::norm() const {
    double s = 0;
    for (float v : values) s += (double)v * v;
    return std::sqrt(s);
}

EmbeddingVector structural_embed(const SceneGraph& graph, int dim) {
    if (graph.nodes.empty()) throw EmptySceneError("cannot embed an empty graph");
    if (dim < 2) throw std::invalid_argument("embedding dimension too small");

    const int n = (int)graph.nodes.size();

    // oriented neighborhoods: (relation as seen from the node, neighbor)
    std::vector<std::vector<std::pair<int, int>>> nbrs(n);
    for (const auto& e : graph.edges) {
        nbrs[e.from].emplace_back((int)e.relation, e.to);
        nbrs[e.to].emplace_back((int)opposite(e.relation), e.from);
    }

    std::vector<double> acc(dim, 0.0);
    // two independent bucket draws per token keep the per-collision mass
    // small, tightening the near-orthogonality of unrelated graphs
    auto scatter = [&](uint64_t token) {
        for (uint64_t salt : {0ull, 0xa0761d6478bd642full}) {
            const uint64_t mixed = mix64(token ^ salt);
            const int bucket = (int)(mixed % (uint64_t)dim);
            const double sign = ((mixed >> 32) & 1) ? 1.0 : -1.0;
            acc[bucket] += sign;
        }
    };

    std::vector<uint64_t> tokens(n);
    for (int i = 0; i < n; ++i) tokens[i] = hash_string(graph.nodes[i].label);
    for (uint64_t t : tokens) scatter(t);

    constexpr int kRounds = 2;
    for (int round = 0; round < kRounds; ++round) {
        std::vector<uint64_t> next(n);
        for (int i = 0; i < n; ++i) {
            std::vector<std::pair<int, uint64_t>> sig;
            sig.reserve(nbrs[i].size());
            for (const auto& [rel, j] : nbrs[i]) sig.emplace_back(rel, tokens[j]);
            std::sort(sig.begin(), sig.end());
            uint64_t h = hash_combine(tokens[i], 0x9e3779b97f4a7c15ull);
            for (const auto& [rel, t] : sig) h = hash_combine(h, hash_combine((uint64_t)rel, t));
            next[i] = h;
        }
        tokens = std::move(next);
        for (uint64_t t : tokens) scatter(t);
    }

    double norm = 0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0) {
        // all buckets cancelled; fall back to a deterministic unit vector
        acc[0] = 1.0;
        norm = 1.0;
    }
    EmbeddingVector out;
    out.values.resize(dim);
    for (int i = 0; i < dim; ++i) out.values[i] = (float)(acc[i] / norm);
    return out;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("embedding dimension mismatch");
    double s = 0;
    for (int i = 0; i < a.dim(); ++i) s += (double)a.values[i] * b.values[i];
    return std::clamp(s, -1.0, 1.0);
}

void VectorIndex::add(const std::string& scene_id, EmbeddingVector embedding) {
    if (dim_ == 0) dim_ = embedding.dim();
    if (embedding.dim() != dim_)
        throw std::invalid_argument("embedding dimension mismatch");
    if (std::fabs(embedding.norm() - 1.0) > 1e-5)
        throw std::invalid_argument("embedding is not unit-norm");
    if (!ids_.insert(scene_id).second)
        throw std::invalid_argument("duplicate scene id: " + scene_id);
    entries_.emplace_back(scene_id, std::move(embedding));
}

CandidateSet VectorIndex::extract_candidates(const EmbeddingVector& query,
                                             int n) const {
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    if (entries_.empty()) throw std::invalid_argument("index is empty");

    // ranking order; the heap's "greatest" element is then the worst kept
    // candidate, i.e. the eviction point
    auto better = [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.scene_id < b.scene_id;
    };

    std::priority_queue<Candidate, std::vector<Candidate>, decltype(better)> heap(better);
    for (const auto& [id, vec] : entries_) {
        Candidate c{id, cosine_similarity(query, vec)};
        if ((int)heap.size() < n) {
            heap.push(std::move(c));
        } else if (better(c, heap.top())) {
            heap.pop();
            heap.push(std::move(c));
        }
    }

    CandidateSet out(heap.size());
    for (auto it = out.rbegin(); it != out.rend(); ++it) {
        *it = heap.top();
        heap.pop();
    }
    return out;
}

namespace {

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("truncated embedding store");
    return v;
}

}  // namespace

void VectorIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out.write("GPRV", 4);
    put<uint8_t>(out, 1);
    put<uint32_t>(out, (uint32_t)dim_);
    put<uint64_t>(out, entries_.size());
    for (const auto& [id, vec] : entries_) {
        put<uint16_t>(out, (uint16_t)id.size());
        out.write(id.data(), (std::streamsize)id.size());
        out.write(reinterpret_cast<const char*>(vec.values.data()),
                  (std::streamsize)(sizeof(float) * vec.values.size()));
    }
}

VectorIndex VectorIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open embedding store: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "GPRV", 4) != 0)
        throw std::runtime_error("bad embedding store magic");
    if (get<uint8_t>(in) != 1)
        throw std::runtime_error("unsupported embedding store version");
    VectorIndex index((int)get<uint32_t>(in));
    uint64_t count = get<uint64_t>(in);
    for (uint64_t i = 0; i < count; ++i) {
        uint16_t len = get<uint16_t>(in);
        std::string id(len, '\0');
        in.read(id.data(), len);
        EmbeddingVector vec;
        vec.values.resize(index.dim_);
        in.read(reinterpret_cast<char*>(vec.values.data()),
                (std::streamsize)(sizeof(float) * vec.values.size()));
        if (!in) throw std::runtime_error("truncated embedding store");
        index.ids_.insert(id);
        index.entries_.emplace_back(std::move(id), std::move(vec));
    }
    return index;
}

}  // namespace gpr
