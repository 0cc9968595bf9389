#include "hilnas/graph.hpp"

#include <algorithm>
#include <functional>
#include <map>

namespace hilnas {

int LabeledGraph::add_vertex(std::string label) {
    labels.push_back(std::move(label));
    return size() - 1;
}

void LabeledGraph::add_edge(int from, int to) {
    const std::pair<int, int> e{from, to};
    auto it = std::lower_bound(edges.begin(), edges.end(), e);
    if (it == edges.end() || *it != e) edges.insert(it, e);
}

bool LabeledGraph::has_edge(int from, int to) const noexcept {
    return std::binary_search(edges.begin(), edges.end(), std::pair<int, int>{from, to});
}

bool LabeledGraph::is_acyclic() const {
    std::vector<int> indegree(labels.size(), 0);
    for (const auto& [u, v] : edges) ++indegree[static_cast<std::size_t>(v)];
    std::vector<int> ready;
    for (int v = 0; v < size(); ++v)
        if (indegree[static_cast<std::size_t>(v)] == 0) ready.push_back(v);
    int seen = 0;
    while (!ready.empty()) {
        const int u = ready.back();
        ready.pop_back();
        ++seen;
        for (const auto& [a, b] : edges)
            if (a == u && --indegree[static_cast<std::size_t>(b)] == 0) ready.push_back(b);
    }
    return seen == size();
}

std::string canonical_form(const LabeledGraph& graph) {
    const int n = graph.size();
    // Positions are assigned label class by label class (classes in sorted
    // label order), so only permutations within a class are explored.
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return graph.labels[static_cast<std::size_t>(a)] < graph.labels[static_cast<std::size_t>(b)];
    });

    std::string header;
    for (int v : order) header += graph.labels[static_cast<std::size_t>(v)] + ";";

    std::string best;
    bool have_best = false;
    std::vector<int> perm;  // perm[position] = vertex
    std::vector<bool> used(static_cast<std::size_t>(n), false);

    std::function<void()> search = [&]() {
        const std::size_t pos = perm.size();
        if (pos == static_cast<std::size_t>(n)) {
            std::string bits(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), '0');
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (graph.has_edge(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]))
                        bits[static_cast<std::size_t>(i * n + j)] = '1';
            if (!have_best || bits < best) {
                best = bits;
                have_best = true;
            }
            return;
        }
        const std::string& label = graph.labels[static_cast<std::size_t>(order[pos])];
        for (int v = 0; v < n; ++v) {
            if (used[static_cast<std::size_t>(v)] || graph.labels[static_cast<std::size_t>(v)] != label) continue;
            used[static_cast<std::size_t>(v)] = true;
            perm.push_back(v);
            search();
            perm.pop_back();
            used[static_cast<std::size_t>(v)] = false;
        }
    };
    search();
    return header + "|" + best;
}

} // namespace hilnas
