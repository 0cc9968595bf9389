#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hilnas/candidate.hpp"
#include "hilnas/evolution.hpp"
#include "hilnas/graph.hpp"
#include "hilnas/region.hpp"

namespace hilnas {

// `count` distinct valid masks drawn under uniform path probabilities. Ids are
// positions in the sample (0..count-1), not search candidate ids.
std::vector<CandidateRecord> sample_search_space(const TemplateNetwork& network, std::size_t count,
                                                 std::uint64_t seed);

inline constexpr int kExactGedCap = 12;

struct GedResult {
    double distance = 0.0;
    bool exact = false;
};

// Uniform-cost graph edit distance. Exact branch and bound when both graphs
// have at most `size_cap` vertices, otherwise a greedy assignment followed by
// swap descent, which only ever overestimates.
GedResult graph_edit_distance(const LabeledGraph& g1, const LabeledGraph& g2, int size_cap = kExactGedCap);

// Cost of the edit path induced by a vertex assignment; map[u] is the image
// of g1 vertex u in g2, or -1 for deletion. Unused g2 vertices are inserted.
int assignment_cost(const LabeledGraph& g1, const LabeledGraph& g2, const std::vector<int>& map);

enum class DistanceMethod { Exact, Approx };

struct DistanceMatrix {
    std::size_t n = 0;
    std::vector<double> values;  // row-major n*n
    DistanceMethod method = DistanceMethod::Exact;

    double at(std::size_t i, std::size_t j) const { return values.at(i * n + j); }
    std::string digest() const;
};

DistanceMatrix build_distance_matrix(const std::vector<LabeledGraph>& graphs, int size_cap = kExactGedCap);

enum class EmbedMethod { TSNE, MDS };

const char* embed_method_name(EmbedMethod method) noexcept;

struct Embedding {
    std::vector<CandidateId> ids;
    std::vector<Mask> masks;                   // empty when embedding a bare matrix
    std::vector<Point2> coords;
    std::vector<std::optional<double>> colors;  // accuracy, or nullopt when unevaluated
    std::uint64_t seed = 0;
    EmbedMethod method = EmbedMethod::TSNE;
    std::string matrix_digest;

    // Digest of ids, masks, coordinates, seed and method. Colors are left out
    // so a region stays valid across recoloring.
    std::string digest() const;

    friend bool operator==(const Embedding&, const Embedding&) = default;
};

// Exact t-SNE on the given distances; classical MDS when n < 10 or when MDS
// is requested. Coordinates are centered at the origin.
Embedding embed_2d(const DistanceMatrix& matrix, std::uint64_t seed, EmbedMethod method = EmbedMethod::TSNE);

double tsne_perplexity(std::size_t n) noexcept;

// Colors embedded candidates by the latest accuracy recorded for their mask.
Embedding recolor(Embedding embedding, const SearchState& state);

// Sample, distance matrix, embedding and colors in one go.
Embedding project_search_space(const TemplateNetwork& network, const SearchState& state, std::size_t count,
                               std::uint64_t seed);

nlohmann::json embedding_to_json(const Embedding& embedding);
Embedding embedding_from_json(const nlohmann::json& doc);

} // namespace hilnas
