#pragma once

#include <string>
#include <utility>
#include <vector>

namespace hilnas {

// Directed graph with string vertex labels. Edges are kept sorted and unique.
struct LabeledGraph {
    std::vector<std::string> labels;
    std::vector<std::pair<int, int>> edges;

    int size() const noexcept { return static_cast<int>(labels.size()); }
    int add_vertex(std::string label);
    void add_edge(int from, int to);
    bool has_edge(int from, int to) const noexcept;
    bool is_acyclic() const;

    friend bool operator==(const LabeledGraph&, const LabeledGraph&) = default;
};

// Canonical form under label-preserving vertex permutations. Two graphs have
// the same canonical form iff they are label-isomorphic. Exponential in the
// size of the largest label class; intended for small graphs.
std::string canonical_form(const LabeledGraph& graph);

} // namespace hilnas
