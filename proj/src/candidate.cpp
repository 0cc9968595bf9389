#include "hilnas/candidate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hilnas/error.hpp"
#include "hilnas/rng.hpp"

namespace hilnas {

std::size_t Mask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true));
}

std::vector<PathIndex> Mask::active() const {
    std::vector<PathIndex> out;
    for (PathIndex p = 0; p < bits_.size(); ++p)
        if (bits_[p]) out.push_back(p);
    return out;
}

std::string Mask::to_hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out((bits_.size() + 3) / 4, '0');
    for (std::size_t i = 0; i < bits_.size(); ++i)
        if (bits_[i]) {
            const auto digit = static_cast<std::size_t>(out[i / 4] <= '9' ? out[i / 4] - '0' : out[i / 4] - 'a' + 10);
            out[i / 4] = kDigits[digit | (8u >> (i % 4))];
        }
    return out;
}

Mask Mask::from_hex(std::string_view hex, std::size_t bits, std::uint64_t template_version) {
    if (hex.size() != (bits + 3) / 4) fail_validation("mask hex length does not match bit length", "mask.hex");
    Mask m(bits, template_version);
    for (std::size_t d = 0; d < hex.size(); ++d) {
        const char c = hex[d];
        unsigned v;
        if (c >= '0' && c <= '9') v = static_cast<unsigned>(c - '0');
        else if (c >= 'a' && c <= 'f') v = static_cast<unsigned>(c - 'a' + 10);
        else fail_validation("mask hex contains a non-hex digit", "mask.hex");
        for (unsigned b = 0; b < 4; ++b) {
            const std::size_t i = d * 4 + b;
            const bool on = (v & (8u >> b)) != 0;
            if (i >= bits) {
                if (on) fail_validation("mask hex sets bits past its length", "mask.hex");
                continue;
            }
            m.bits_[i] = on;
        }
    }
    return m;
}

namespace {

void check_shape(const TemplateNetwork& network, const Mask& mask) {
    if (mask.size() != network.path_count())
        fail_validation("mask length " + std::to_string(mask.size()) + " does not match template path count " +
                            std::to_string(network.path_count()),
                        "mask");
    if (mask.template_version() != network.version())
        throw Error(ErrorKind::StaleState, "mask was built for template version " +
                                               std::to_string(mask.template_version()) + ", current is " +
                                               std::to_string(network.version()));
}

void check_probabilities(const TemplateNetwork& network, std::span<const double> probs) {
    if (probs.size() != network.path_count())
        fail_validation("path probability table has the wrong length", "path_probabilities");
    for (double p : probs)
        if (!(p >= 0.0) || !std::isfinite(p)) fail_validation("path probabilities must be finite and non-negative",
                                                              "path_probabilities");
}

// Draws paths into `chosen` until the node has two, each from a source not
// yet used, weighted by probability. Pruned and zero-probability paths are
// never drawn.
void fill_node(const TemplateNetwork& network, const NodeGroup& group, std::vector<PathIndex>& chosen,
               std::span<const double> probs, const PathConstraints& constraints, Rng& rng) {
    std::vector<double> weights(group.paths.size());
    while (chosen.size() < 2) {
        for (PathIndex p = group.paths.begin; p < group.paths.end; ++p) {
            double w = probs[p];
            if (constraints.pruned.count(p)) w = 0.0;
            for (PathIndex c : chosen)
                if (network.path(c).source == network.path(p).source) w = 0.0;
            weights[p - group.paths.begin] = w;
        }
        const std::size_t pick = rng.pick_weighted(weights);
        if (pick == weights.size())
            fail_validation("cell " + std::to_string(group.cell) + " node " + std::to_string(group.node) +
                                " has fewer than two distinct sources with nonzero probability",
                            "path_probabilities");
        chosen.push_back(group.paths.begin + pick);
    }
}

std::vector<PathIndex> fixed_in(const NodeGroup& group, const PathConstraints& constraints) {
    std::vector<PathIndex> out;
    for (auto it = constraints.fixed.lower_bound(group.paths.begin);
         it != constraints.fixed.end() && *it < group.paths.end; ++it)
        out.push_back(*it);
    return out;
}

} // namespace

bool is_valid(const TemplateNetwork& network, const Mask& mask) {
    if (mask.size() != network.path_count()) return false;
    for (const NodeGroup& g : network.node_groups()) {
        std::vector<Source> sources;
        for (PathIndex p = g.paths.begin; p < g.paths.end; ++p)
            if (mask.test(p)) sources.push_back(network.path(p).source);
        if (sources.size() != 2 || sources[0] == sources[1]) return false;
    }
    return true;
}

std::vector<double> uniform_probabilities(const TemplateNetwork& network) {
    return std::vector<double>(network.path_count(), 1.0);
}

Mask sample_mask(const TemplateNetwork& network, std::span<const double> probs, std::uint64_t seed,
                 const PathConstraints& constraints) {
    check_probabilities(network, probs);
    Rng rng(seed);
    Mask mask(network.path_count(), network.version());
    for (const NodeGroup& g : network.node_groups()) {
        std::vector<PathIndex> chosen = fixed_in(g, constraints);
        fill_node(network, g, chosen, probs, constraints, rng);
        for (PathIndex p : chosen) mask.set(p);
    }
    return mask;
}

Mask repair_mask(const TemplateNetwork& network, const Mask& mask, std::span<const double> probs,
                 std::uint64_t seed, const PathConstraints& constraints) {
    check_shape(network, mask);
    check_probabilities(network, probs);
    Rng rng(seed);
    Mask out(network.path_count(), network.version());
    for (const NodeGroup& g : network.node_groups()) {
        std::vector<PathIndex> chosen = fixed_in(g, constraints);
        std::vector<PathIndex> active;
        for (PathIndex p = g.paths.begin; p < g.paths.end; ++p)
            if (mask.test(p) && !constraints.pruned.count(p) && !constraints.fixed.count(p)) active.push_back(p);
        std::stable_sort(active.begin(), active.end(), [&](PathIndex a, PathIndex b) { return probs[a] > probs[b]; });
        for (PathIndex p : active) {
            if (chosen.size() >= 2) break;
            const bool clash = std::any_of(chosen.begin(), chosen.end(), [&](PathIndex c) {
                return network.path(c).source == network.path(p).source;
            });
            if (!clash) chosen.push_back(p);
        }
        if (chosen.size() < 2) fill_node(network, g, chosen, probs, constraints, rng);
        for (PathIndex p : chosen) out.set(p);
    }
    return out;
}

LabeledGraph mask_to_subgraph(const TemplateNetwork& network, const Mask& mask) {
    check_shape(network, mask);
    if (!is_valid(network, mask)) fail_validation("mask is not a valid candidate", "mask");

    LabeledGraph g;
    const int in0 = g.add_vertex("I");
    const int in1 = g.add_vertex("I");
    // Vertices carrying each cell's output, and each node's two paths.
    std::vector<std::vector<int>> cell_out(network.cells().size());
    std::vector<std::vector<std::vector<int>>> node_vertices(network.cells().size());
    for (std::size_t c = 0; c < network.cells().size(); ++c)
        node_vertices[c].resize(network.cells()[c].nodes.size());

    auto cell_input = [&](std::size_t c, int which) -> std::vector<int> {
        // input1 reads cell c-1, input0 reads cell c-2.
        const long back = which == 1 ? 1 : 2;
        const long src = static_cast<long>(c) - back;
        if (src >= 0) return cell_out[static_cast<std::size_t>(src)];
        return {src == -1 ? in1 : in0};
    };

    for (PathIndex p = 0; p < network.path_count(); ++p) {
        if (!mask.test(p)) continue;
        const PathInfo& info = network.path(p);
        const int v = g.add_vertex(network.op_of(p).label());
        const std::vector<int> from = info.source.is_input()
                                          ? cell_input(info.cell, info.source.input_index())
                                          : node_vertices[info.cell][static_cast<std::size_t>(info.source.node_index())];
        for (int u : from) g.add_edge(u, v);
        node_vertices[info.cell][static_cast<std::size_t>(info.dst_node)].push_back(v);
        cell_out[info.cell].push_back(v);
    }
    return g;
}

std::uint64_t count_valid_masks(const TemplateNetwork& network) {
    constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t total = 1;
    for (const NodeGroup& g : network.node_groups()) {
        // Unordered pairs of distinct sources, times ops per source.
        const std::size_t sources = network.cells()[g.cell].nodes[static_cast<std::size_t>(g.node)].allowed_inputs.size();
        const std::uint64_t ops = network.cells()[g.cell].ops.size();
        const std::uint64_t per_node = sources * (sources - 1) / 2 * ops * ops;
        if (per_node != 0 && total > kMax / per_node) return kMax;
        total *= per_node;
    }
    return total;
}

nlohmann::json mask_to_json(const Mask& mask) {
    return {{"bits", mask.size()}, {"hex", mask.to_hex()}, {"template_version", mask.template_version()}};
}

Mask mask_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("bits") || !doc.contains("hex") || !doc.contains("template_version"))
        fail_validation("mask needs bits, hex and template_version", "mask");
    try {
        return Mask::from_hex(doc["hex"].get<std::string>(), doc["bits"].get<std::size_t>(),
                              doc["template_version"].get<std::uint64_t>());
    } catch (const nlohmann::json::exception&) {
        fail_validation("mask fields have the wrong type", "mask");
    }
}

nlohmann::json candidate_to_json(const CandidateRecord& record) {
    nlohmann::json j{{"id", record.id}, {"mask", mask_to_json(record.mask)}};
    j["accuracy"] = record.accuracy ? nlohmann::json(*record.accuracy) : nlohmann::json();
    j["iteration_evaluated"] =
        record.iteration_evaluated ? nlohmann::json(*record.iteration_evaluated) : nlohmann::json();
    return j;
}

CandidateRecord candidate_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("id") || !doc.contains("mask"))
        fail_validation("candidate needs id and mask", "candidate");
    CandidateRecord r;
    r.id = doc["id"].get<CandidateId>();
    r.mask = mask_from_json(doc["mask"]);
    if (doc.contains("accuracy") && !doc["accuracy"].is_null()) r.accuracy = doc["accuracy"].get<double>();
    if (doc.contains("iteration_evaluated") && !doc["iteration_evaluated"].is_null())
        r.iteration_evaluated = doc["iteration_evaluated"].get<std::uint64_t>();
    if (r.accuracy.has_value() != r.iteration_evaluated.has_value())
        fail_validation("accuracy and iteration_evaluated must be set together", "candidate");
    return r;
}

} // namespace hilnas
