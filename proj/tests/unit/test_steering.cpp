#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "hilnas/error.hpp"
#include "hilnas/evaluation.hpp"
#include "hilnas/rng.hpp"
#include "hilnas/steering.hpp"

using namespace hilnas;

namespace {

Mask mask_of(const TemplateNetwork& net, std::initializer_list<PathIndex> bits) {
    Mask m(net.path_count(), net.version());
    for (PathIndex p : bits) m.set(p);
    return m;
}

// Embedding over `count` sampled masks laid out on a line: point i at (i, 0).
Embedding line_embedding(const TemplateNetwork& net, std::size_t count, std::uint64_t seed) {
    Embedding e;
    for (const auto& c : sample_search_space(net, count, seed)) {
        e.ids.push_back(c.id);
        e.masks.push_back(c.mask);
        e.coords.push_back({static_cast<double>(c.id), 0.0});
        e.colors.push_back(std::nullopt);
    }
    e.seed = seed;
    return e;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::Corrupt;
}

std::vector<PathIndex> bits(const Mask& m) { return m.active(); }

} // namespace

TEST(Region, ResolvesMembersInsideShape) {
    const auto net = build_template("toy", 1, 0, 2);
    const auto e = line_embedding(net, 10, 1);
    const auto r = resolve_region(e, Rect{1.5, -1.0, 6.5, 1.0});
    EXPECT_EQ(r.member_ids, (std::vector<CandidateId>{2, 3, 4, 5, 6}));
    EXPECT_EQ(r.embedding_digest, e.digest());
    const auto tri = resolve_region(e, Polygon{{{-0.5, -1.0}, {3.0, -1.0}, {1.0, 2.0}}});
    EXPECT_EQ(tri.member_ids, (std::vector<CandidateId>{0, 1, 2}));
}

TEST(Region, NewCandidatesStayInsideForFiftyIterations) {
    const auto net = build_template("toy", 1, 1, 2);
    const auto oracle = TabularOracle::generate(net, {});
    SearchState state = run_search(make_search_state(net, 0.5, 3), oracle, 2);
    const auto e = line_embedding(net, 20, 4);
    state = set_region(state, e, Rect{4.5, -1.0, 9.5, 1.0}, e.digest());
    ASSERT_EQ(state.region->member_ids.size(), 5u);
    const std::set<Mask> members(state.region->member_masks.begin(), state.region->member_masks.end());
    std::size_t created = 0;
    SearchHooks hooks;
    hooks.on_step = [&](const SearchState&, const IterationReport& rep) {
        for (const auto& c : rep.created) {
            EXPECT_TRUE(members.count(c.mask)) << "iteration " << rep.iteration;
            ++created;
        }
    };
    state = run_search(state, oracle, 50, hooks);
    EXPECT_GT(created, 50u);
}

TEST(Region, ClearRestoresFitnessSampling) {
    const auto net = build_template("toy", 1, 0, 2);
    const auto oracle = TabularOracle::generate(net, {});
    const SearchState base = run_search(make_search_state(net, 0.5, 0), oracle, 2);
    const auto e = line_embedding(net, 10, 1);
    SearchState state = set_region(base, e, Rect{-1, -1, 3.5, 1});
    ASSERT_TRUE(state.region);
    state = clear_region(state);
    EXPECT_FALSE(state.region);
    EXPECT_EQ(state, base);
    // Same next step as a run that never had a region.
    EXPECT_EQ(evolve(state, oracle, std::nullopt, step_seed(state)).state,
              evolve(base, oracle, std::nullopt, step_seed(base)).state);
}

TEST(Region, RejectsSingletonAndStaleDigest) {
    const auto net = build_template("toy", 1, 0, 2);
    const auto e = line_embedding(net, 10, 1);
    const auto state = make_search_state(net, 0.5, 0);
    EXPECT_EQ(kind_of([&] { set_region(state, e, Rect{2.5, -1, 3.5, 1}); }), ErrorKind::Validation);
    EXPECT_EQ(kind_of([&] { set_region(state, e, Rect{-1, -1, 5, 1}, std::string("0000")); }), ErrorKind::StaleState);
}

TEST(SetOps, ExampleSets) {
    const auto net = build_template("toy", 1, 0, 1);
    RegionConstraint r;
    r.member_ids = {0, 1};
    r.member_masks = {mask_of(net, {1, 2}), mask_of(net, {2, 3})};
    EXPECT_EQ(set_operation(net, SetOp::Union, r).paths, (std::vector<PathIndex>{1, 2, 3}));
    EXPECT_EQ(set_operation(net, SetOp::Intersection, r).paths, (std::vector<PathIndex>{2}));
    EXPECT_EQ(set_operation(net, SetOp::Complement, r).paths, (std::vector<PathIndex>{0, 4, 5, 6, 7, 8, 9, 10, 11}));
    r.member_ids = {0};
    r.member_masks = {mask_of(net, {1, 2})};
    EXPECT_EQ(set_operation(net, SetOp::Union, r).paths, set_operation(net, SetOp::Intersection, r).paths);
}

TEST(SetOps, MatchBruteForceSetAlgebra) {
    const auto net = build_template("toy", 1, 1, 2);
    const auto e = line_embedding(net, 30, 9);
    Rng rng(12);
    for (int t = 0; t < 100; ++t) {
        const double lo = static_cast<double>(rng.below(30));
        const double hi = lo + static_cast<double>(rng.below(8));
        const auto region = resolve_region(e, Rect{lo - 0.5, -1, hi + 0.5, 1});
        std::set<PathIndex> uni, inter, all;
        for (PathIndex p = 0; p < net.path_count(); ++p) all.insert(p);
        inter = all;
        for (const auto& m : region.member_masks) {
            const auto b = bits(m);
            const std::set<PathIndex> s(b.begin(), b.end());
            uni.insert(s.begin(), s.end());
            std::set<PathIndex> keep;
            std::set_intersection(inter.begin(), inter.end(), s.begin(), s.end(), std::inserter(keep, keep.end()));
            inter = keep;
        }
        std::set<PathIndex> comp;
        std::set_difference(all.begin(), all.end(), uni.begin(), uni.end(), std::inserter(comp, comp.end()));
        auto as_vec = [](const std::set<PathIndex>& s) { return std::vector<PathIndex>(s.begin(), s.end()); };
        EXPECT_EQ(set_operation(net, SetOp::Union, region).paths, as_vec(uni));
        EXPECT_EQ(set_operation(net, SetOp::Intersection, region).paths, as_vec(inter));
        EXPECT_EQ(set_operation(net, SetOp::Complement, region).paths, as_vec(comp));
    }
}

TEST(SetOps, NamesAndEmptyRegion) {
    EXPECT_EQ(set_op_from_name(set_op_name(SetOp::Complement)), SetOp::Complement);
    EXPECT_THROW(set_op_from_name("xor"), Error);
    EXPECT_THROW(set_operation(build_template("toy", 1, 0, 1), SetOp::Union, RegionConstraint{}), Error);
}

TEST(Prune, PrunedPathNeverSampled) {
    const auto net = build_template("toy", 1, 0, 1);
    const std::vector<PathIndex> ids{2};
    const SearchState state = prune_paths(make_search_state(net, 0.5, 0), net, ids);
    EXPECT_EQ(state.fitness.fitness[2], 0.0);
    for (std::uint64_t s = 0; s < 10000; ++s) {
        const Mask m = sample_mask(net, state.fitness.probabilities(), s, state.constraints);
        ASSERT_FALSE(m.test(2)) << s;
    }
}

TEST(Prune, RejectsUnsatisfiableNode) {
    const auto net = build_template("toy", 1, 0, 1);
    const std::vector<PathIndex> all_input0{0, 1, 2, 3, 4, 5};
    EXPECT_EQ(kind_of([&] { prune_paths(make_search_state(net, 0.5, 0), net, all_input0); }), ErrorKind::Validation);
    const std::vector<PathIndex> bad{12};
    EXPECT_THROW(prune_paths(make_search_state(net, 0.5, 0), net, bad), Error);
}

TEST(Prune, EvolveReplacesStaleMembers) {
    const auto net = build_template("toy", 1, 0, 2);
    const auto oracle = TabularOracle::generate(net, {});
    SearchState state = run_search(make_search_state(net, 0.5, 5), oracle, 3);
    const std::vector<PathIndex> ids{state.population.front().mask.active().front()};
    state = prune_paths(state, net, ids);
    EXPECT_TRUE(state.is_stale(state.population.front()));
    state = evolve(state, oracle, std::nullopt, step_seed(state)).state;
    for (const auto& m : state.population) EXPECT_FALSE(state.is_stale(m));
}

TEST(Fix, FixedPathsAlwaysPresent) {
    const auto net = build_template("toy", 1, 0, 2);
    const std::vector<PathIndex> ids{3, 9};
    const SearchState state = fix_paths(make_search_state(net, 0.5, 0), net, ids);
    for (std::uint64_t s = 0; s < 2000; ++s) {
        const Mask m = sample_mask(net, state.fitness.probabilities(), s, state.constraints);
        ASSERT_TRUE(m.test(3) && m.test(9));
    }
    Mask broken = mask_of(net, {0, 6});
    const Mask repaired = repair_mask(net, broken, state.fitness.probabilities(), 1, state.constraints);
    EXPECT_TRUE(repaired.test(3) && repaired.test(9));
}

TEST(Fix, RejectsConflicts) {
    const auto net = build_template("toy", 1, 0, 2);
    const auto fresh = make_search_state(net, 0.5, 0);
    const std::vector<PathIndex> three{12, 18, 24};
    EXPECT_EQ(kind_of([&] { fix_paths(fresh, net, three); }), ErrorKind::Validation);
    const std::vector<PathIndex> one{3};
    const auto fixed = fix_paths(fresh, net, one);
    EXPECT_THROW(prune_paths(fixed, net, one), Error);
    const auto pruned = prune_paths(fresh, net, one);
    EXPECT_THROW(fix_paths(pruned, net, one), Error);
}

TEST(Steering, ConstraintsSurviveJson) {
    const auto net = build_template("toy", 1, 0, 2);
    const std::vector<PathIndex> f{3}, p{7, 20};
    const SearchState state = prune_paths(fix_paths(make_search_state(net, 0.5, 0), net, f), net, p);
    const SearchState back = search_state_from_json(search_state_to_json(state));
    EXPECT_EQ(back.constraints, state.constraints);
    EXPECT_EQ(back.fitness, state.fitness);
    for (PathIndex x : back.constraints.fixed) EXPECT_FALSE(back.constraints.pruned.count(x));
    const auto e = line_embedding(net, 10, 2);
    const SearchState with_region = set_region(make_search_state(net, 0.5, 0), e, Rect{-1, -1, 9.5, 1});
    EXPECT_EQ(search_state_from_json(search_state_to_json(with_region)).region, with_region.region);
}
