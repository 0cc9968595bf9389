#include <gtest/gtest.h>

#include <set>

#include "hilnas/candidate.hpp"
#include "hilnas/error.hpp"
#include "hilnas/graph.hpp"

using namespace hilnas;

namespace {

TemplateNetwork tiny() { return build_template("toy", 1, 0, 1); }

Mask mask_of(const TemplateNetwork& net, std::initializer_list<PathIndex> bits) {
    Mask m(net.path_count(), net.version());
    for (PathIndex p : bits) m.set(p);
    return m;
}

// Independent validity check from PathInfo alone.
bool valid_by_hand(const TemplateNetwork& net, const Mask& m) {
    std::map<std::pair<std::size_t, int>, std::vector<Source>> incoming;
    for (const auto& g : net.node_groups()) incoming[{g.cell, g.node}];
    for (PathIndex p = 0; p < net.path_count(); ++p)
        if (m.test(p)) incoming[{net.path(p).cell, net.path(p).dst_node}].push_back(net.path(p).source);
    for (const auto& [key, sources] : incoming)
        if (sources.size() != 2 || sources[0] == sources[1]) return false;
    return true;
}

} // namespace

TEST(Mask, HexRoundTrip) {
    const auto net = build_template("toy", 1, 1, 2);
    Mask m(net.path_count(), 3);
    for (PathIndex p : {0u, 7u, 31u, 59u}) m.set(p);
    EXPECT_EQ(Mask::from_hex(m.to_hex(), m.size(), 3), m);
    EXPECT_EQ(mask_from_json(mask_to_json(m)), m);
    EXPECT_EQ(m.count(), 4u);
    EXPECT_EQ(m.active(), (std::vector<PathIndex>{0, 7, 31, 59}));
}

TEST(Validity, MatchesBruteForceOnTwelvePaths) {
    const auto net = tiny();
    std::size_t valid = 0;
    for (unsigned bits = 0; bits < (1u << 12); ++bits) {
        Mask m(12, net.version());
        for (PathIndex p = 0; p < 12; ++p) m.set(p, (bits >> p) & 1u);
        const bool expect = valid_by_hand(net, m);
        EXPECT_EQ(is_valid(net, m), expect) << m.to_hex();
        valid += expect;
    }
    EXPECT_EQ(valid, 36u);
    EXPECT_EQ(count_valid_masks(net), 36u);
}

TEST(Validity, CountMatchesPerNodeEnumeration) {
    const auto net = build_template("toy", 1, 1, 2);
    std::uint64_t total = 1;
    for (const auto& g : net.node_groups()) {
        // Enumerate subsets of this node's paths only.
        const std::size_t n = g.paths.size();
        std::uint64_t ok = 0;
        for (std::uint64_t bits = 0; bits < (1ull << n); ++bits) {
            if (__builtin_popcountll(bits) != 2) continue;
            std::vector<Source> src;
            for (std::size_t i = 0; i < n; ++i)
                if ((bits >> i) & 1u) src.push_back(net.path(g.paths.begin + i).source);
            ok += src[0] != src[1];
        }
        total *= ok;
    }
    EXPECT_EQ(count_valid_masks(net), total);
}

TEST(Sample, UniformGivesTwoDistinctSources) {
    const auto net = tiny();
    const auto probs = uniform_probabilities(net);
    for (std::uint64_t s = 0; s < 200; ++s) {
        const Mask m = sample_mask(net, probs, s);
        EXPECT_EQ(m.count(), 2u);
        EXPECT_TRUE(valid_by_hand(net, m));
    }
}

TEST(Sample, DegenerateDistribution) {
    const auto net = tiny();
    std::vector<double> probs(12, 0.0);
    probs[3] = probs[9] = 1.0;
    for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(sample_mask(net, probs, s), mask_of(net, {3, 9}));
}

TEST(Sample, SameSeedSameMask) {
    const auto net = build_template("toy");
    const auto probs = uniform_probabilities(net);
    EXPECT_EQ(sample_mask(net, probs, 42), sample_mask(net, probs, 42));
    EXPECT_NE(sample_mask(net, probs, 42), sample_mask(net, probs, 43));
}

TEST(Sample, RespectsConstraints) {
    const auto net = build_template("toy", 1, 0, 2);
    PathConstraints c;
    c.fixed = {3};
    c.pruned = {6, 7, 8, 9, 10};
    const auto probs = uniform_probabilities(net);
    for (std::uint64_t s = 0; s < 300; ++s) {
        const Mask m = sample_mask(net, probs, s, c);
        EXPECT_TRUE(is_valid(net, m));
        EXPECT_TRUE(m.test(3));
        EXPECT_TRUE(m.test(11));
        for (PathIndex p : c.pruned) EXPECT_FALSE(m.test(p));
    }
}

TEST(Repair, ValidMaskUnchanged) {
    const auto net = build_template("toy", 1, 1, 2);
    const auto probs = uniform_probabilities(net);
    const Mask m = sample_mask(net, probs, 5);
    EXPECT_EQ(repair_mask(net, m, probs, 99), m);
}

TEST(Repair, DropsLowestProbabilityExtra) {
    // One node with three inputs: paths from input0, input1 and node0.
    const auto net = build_template("toy", 1, 0, 2);
    const NodeGroup& g = net.node_groups()[1];
    const PathIndex a = g.paths.begin + 0;   // input0 max_pool
    const PathIndex b = g.paths.begin + 6;   // input1 max_pool
    const PathIndex c = g.paths.begin + 12;  // node0 max_pool
    std::vector<double> probs(net.path_count(), 0.01);
    probs[a] = 0.5;
    probs[b] = 0.3;
    probs[c] = 0.2;
    Mask m = mask_of(net, {0, 6, a, b, c});
    const Mask fixed = repair_mask(net, m, probs, 1);
    EXPECT_TRUE(fixed.test(a));
    EXPECT_TRUE(fixed.test(b));
    EXPECT_FALSE(fixed.test(c));
    EXPECT_TRUE(is_valid(net, fixed));
}

TEST(Repair, EmptyMaskEqualsFreshSample) {
    const auto net = build_template("toy");
    const auto probs = uniform_probabilities(net);
    for (std::uint64_t s : {0u, 7u, 123u})
        EXPECT_EQ(repair_mask(net, Mask(net.path_count(), net.version()), probs, s), sample_mask(net, probs, s));
}

TEST(Repair, RejectsWrongSize) {
    const auto net = tiny();
    EXPECT_THROW(repair_mask(net, Mask(5, 0), uniform_probabilities(net), 0), Error);
}

TEST(Subgraph, OneNodeCellDrawnByHand) {
    const auto net = tiny();
    // skip from input0 (path 2) and sep_conv_3x3 from input1 (path 9)
    const LabeledGraph g = mask_to_subgraph(net, mask_of(net, {2, 9}));
    LabeledGraph expect;
    expect.add_vertex("I");
    expect.add_vertex("I");
    expect.add_vertex("S");
    expect.add_vertex("C3");
    expect.add_edge(0, 2);
    expect.add_edge(1, 3);
    EXPECT_EQ(g.size(), 4);
    EXPECT_EQ(canonical_form(g), canonical_form(expect));
    EXPECT_TRUE(g.is_acyclic());
}

TEST(Subgraph, IdenticalMasksSameCanonicalForm) {
    const auto net = build_template("toy", 1, 1, 2);
    const Mask m = sample_mask(net, uniform_probabilities(net), 3);
    EXPECT_EQ(canonical_form(mask_to_subgraph(net, m)), canonical_form(mask_to_subgraph(net, m)));
}

TEST(Subgraph, OneOpChangeChangesOneLabel) {
    const auto net = tiny();
    const LabeledGraph a = mask_to_subgraph(net, mask_of(net, {2, 9}));
    const LabeledGraph b = mask_to_subgraph(net, mask_of(net, {2, 10}));
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(a.edges, b.edges);
    int diff = 0;
    for (int v = 0; v < a.size(); ++v) diff += a.labels[v] != b.labels[v];
    EXPECT_EQ(diff, 1);
}

TEST(Subgraph, RejectsInvalidMask) {
    const auto net = tiny();
    EXPECT_THROW(mask_to_subgraph(net, mask_of(net, {0, 1})), Error);
}

TEST(Graph, CanonicalFormDistinguishesNonIsomorphic) {
    LabeledGraph a, b;
    for (auto* g : {&a, &b}) {
        g->add_vertex("x");
        g->add_vertex("x");
        g->add_vertex("y");
    }
    a.add_edge(0, 2);
    b.add_edge(2, 0);
    EXPECT_NE(canonical_form(a), canonical_form(b));
    LabeledGraph c = a;
    c.labels = {"x", "x", "y"};
    c.edges = {{1, 2}};
    EXPECT_EQ(canonical_form(a), canonical_form(c));
}

TEST(CandidateJson, RoundTrip) {
    const auto net = tiny();
    CandidateRecord r{7, mask_of(net, {2, 9}), 0.75, 3};
    EXPECT_EQ(candidate_from_json(candidate_to_json(r)), r);
    CandidateRecord u{8, mask_of(net, {0, 6}), std::nullopt, std::nullopt};
    EXPECT_EQ(candidate_from_json(candidate_to_json(u)), u);
}
