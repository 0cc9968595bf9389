#include <gtest/gtest.h>

#include "hilnas/error.hpp"
#include "hilnas/rng.hpp"
#include "hilnas/session.hpp"

using namespace hilnas;

namespace {

SessionConfig small_config(std::uint64_t seed = 1) {
    SessionConfig c;
    c.num_normal = 1;
    c.num_reduction = 1;
    c.nodes_per_cell = 2;
    c.seed = seed;
    c.embedding_count = 12;
    return c;
}

std::size_t count_kind(const Session& s, const std::string& kind, std::uint64_t from = 0) {
    std::size_t n = 0;
    for (const auto& e : s.events())
        if (e.seq >= from && e.kind == kind) ++n;
    return n;
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

} // namespace

TEST(Session, PhaseMachine) {
    Session s("a", small_config());
    EXPECT_EQ(s.phase(), Phase::Configuring);
    EXPECT_EQ(kind_of([&] { s.step(); }), ErrorKind::Conflict);
    EXPECT_EQ(kind_of([&] { s.pause(); }), ErrorKind::Conflict);
    s.train(1);
    EXPECT_EQ(s.phase(), Phase::Searching);
    s.pause();
    EXPECT_EQ(s.phase(), Phase::Paused);
    EXPECT_EQ(kind_of([&] { s.step(); }), ErrorKind::Conflict);
    s.begin_search();
    s.step();
    s.finalize(1);
    EXPECT_EQ(s.phase(), Phase::Finalized);
    EXPECT_EQ(kind_of([&] { s.begin_search(); }), ErrorKind::Conflict);
    EXPECT_EQ(kind_of([&] { s.edit_template(edit::AddNode{0}); }), ErrorKind::Conflict);
}

TEST(Session, SupernetMustTrainBeforeSearch) {
    SessionConfig c = small_config();
    c.evaluator.kind = EvaluatorKind::Supernet;
    Session s("b", c);
    EXPECT_EQ(kind_of([&] { s.begin_search(); }), ErrorKind::Conflict);
    s.train(2);
    EXPECT_EQ(count_kind(s, "loss_tick"), 2u);
    EXPECT_EQ(s.train_curve().size(), 2u);
}

TEST(Session, TenIterationsTenEventsNoGaps) {
    Session s("c", small_config());
    s.begin_search();
    s.step();  // initial population
    const std::uint64_t from = s.next_seq();
    const std::uint64_t it0 = s.state().iteration;
    for (int i = 0; i < 10; ++i) s.step();
    EXPECT_EQ(count_kind(s, "iteration_done", from), 10u);
    EXPECT_EQ(s.state().iteration - it0, 10u);
    for (std::size_t i = 0; i < s.events().size(); ++i) EXPECT_EQ(s.events()[i].seq, i);
}

TEST(Session, ReplayMatchesReadModel) {
    Session s("d", small_config(4));
    s.begin_search();
    for (int i = 0; i < 6; ++i) s.step();
    s.compute_embedding();
    const std::vector<PathIndex> p{1};
    s.prune(p);
    s.step();
    s.pause();
    EXPECT_EQ(replay_events(s.events()), s.read_model());
    EXPECT_EQ(hex_digest(replay_events(s.events()).dump()), s.read_model_digest());
}

TEST(Session, ReplayMatchesAfterSupernetTraining) {
    SessionConfig c = small_config();
    c.evaluator.kind = EvaluatorKind::Supernet;
    Session s("e", c);
    s.train(2);
    s.step();
    s.step();
    EXPECT_EQ(replay_events(s.events()), s.read_model());
}

TEST(Session, TemplateEditPausesAndResets) {
    Session s("f", small_config());
    s.begin_search();
    for (int i = 0; i < 3; ++i) s.step();
    s.compute_embedding();
    const std::uint64_t from = s.next_seq();
    const auto before = s.state().iteration;
    s.edit_template(edit::RemoveOp{std::nullopt, "skip_connect"});
    EXPECT_EQ(s.phase(), Phase::Paused);
    bool saw = false;
    for (const auto& e : s.events())
        if (e.seq >= from && e.kind == "phase_changed") {
            EXPECT_EQ(e.payload["to"], "paused");
            EXPECT_EQ(e.payload["reason"], "template_edited");
            saw = true;
        }
    EXPECT_TRUE(saw);
    EXPECT_FALSE(s.state().initialized());
    EXPECT_FALSE(s.embedding());
    EXPECT_EQ(s.state().iteration, before);
    EXPECT_EQ(s.state().template_version, s.network().version());
    EXPECT_EQ(replay_events(s.events()), s.read_model());
}

TEST(Session, RegionThroughSession) {
    Session s("g", small_config(2));
    s.begin_search();
    s.step();
    EXPECT_EQ(kind_of([&] { s.set_region(Rect{-1e9, -1e9, 1e9, 1e9}, std::nullopt); }), ErrorKind::Conflict);
    const auto& e = s.compute_embedding();
    const std::string digest = e.digest();
    s.set_region(Rect{-1e9, -1e9, 1e9, 1e9}, digest);
    ASSERT_TRUE(s.state().region);
    EXPECT_EQ(s.state().region->member_ids.size(), 12u);
    const auto res = s.set_operation(SetOp::Union, std::nullopt, digest);
    EXPECT_FALSE(res.paths.empty());
    EXPECT_EQ(kind_of([&] { s.set_region(Rect{-1e9, -1e9, 1e9, 1e9}, std::string("stale")); }), ErrorKind::StaleState);
    s.step();
    s.clear_region();
    EXPECT_FALSE(s.state().region);
}

TEST(Session, CandidateLookupAndExport) {
    Session s("h", small_config());
    s.begin_search();
    s.step();
    const auto doc = s.candidate(0);
    EXPECT_EQ(doc["candidate"]["id"], 0);
    EXPECT_EQ(kind_of([&] { s.candidate(999); }), ErrorKind::NotFound);
    const auto best = s.export_best();
    EXPECT_EQ(best["accuracy"], *s.state().best->accuracy);
    EXPECT_TRUE(best["final"].is_null());
    EXPECT_FALSE(s.export_best(3)["final"].is_null());
}

TEST(Session, ExportNeedsEvaluations) {
    Session s("i", small_config());
    EXPECT_EQ(kind_of([&] { s.export_best(); }), ErrorKind::Conflict);
}

TEST(Session, ConfigJsonRoundTrip) {
    SessionConfig c = small_config(9);
    c.alpha = kReferenceAlpha;
    c.population_size = 6;
    const auto back = session_config_from_json(session_config_to_json(c));
    EXPECT_EQ(session_config_to_json(back), session_config_to_json(c));
    auto bad = session_config_to_json(c);
    bad["alpha"] = "x";
    EXPECT_THROW(session_config_from_json(bad), Error);
}

TEST(Session, EventJsonRoundTrip) {
    Session s("j", small_config());
    for (const auto& e : s.events()) {
        const Event back = event_from_json(event_to_json(e));
        EXPECT_EQ(back.seq, e.seq);
        EXPECT_EQ(back.kind, e.kind);
        EXPECT_EQ(back.payload, e.payload);
    }
}
