#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "hilnas/error.hpp"
#include "hilnas/headless.hpp"
#include "hilnas/persistence.hpp"

namespace fs = std::filesystem;
using namespace hilnas;

namespace {

SessionConfig small_config(std::uint64_t seed = 1) {
    SessionConfig c;
    c.num_normal = 1;
    c.num_reduction = 1;
    c.nodes_per_cell = 2;
    c.seed = seed;
    c.evaluator.seed = seed;
    c.embedding_count = 12;
    return c;
}

class Archive : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        root_ = fs::temp_directory_path() / ("hilnas-test-" + std::string(info->name()));
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override { fs::remove_all(root_); }
    fs::path dir(const std::string& name) const { return root_ / name; }

    fs::path root_;
};

std::map<std::string, std::string> files_of(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) out[entry.path().filename().string()] = read_text_file(entry.path());
    return out;
}

Session searched(const SessionConfig& c, int steps) {
    Session s("s", c);
    if (c.evaluator.kind == EvaluatorKind::Supernet) s.train(2);
    s.begin_search();
    for (int i = 0; i < steps; ++i) s.step();
    return s;
}

ErrorKind kind_of(const std::function<void()>& f, std::string* message = nullptr) {
    try {
        f();
    } catch (const Error& e) {
        if (message) *message = e.what();
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::Validation;
}

} // namespace

TEST_F(Archive, SaveLoadSaveIsByteIdentical) {
    Session s = searched(small_config(), 4);
    s.compute_embedding();
    const std::vector<PathIndex> p{5};
    s.prune(p);
    save_session(s, dir("a"));
    const Session back = load_session(dir("a"));
    save_session(back, dir("b"));
    EXPECT_EQ(files_of(dir("a")), files_of(dir("b")));
    EXPECT_TRUE(fs::exists(dir("a") / "oracle.json"));
    EXPECT_TRUE(fs::exists(dir("a") / "embedding.json"));
    EXPECT_EQ(back.state(), s.state());
    EXPECT_EQ(back.phase(), s.phase());
}

TEST_F(Archive, SupernetRoundTrip) {
    SessionConfig c = small_config();
    c.evaluator.kind = EvaluatorKind::Supernet;
    save_session(searched(c, 2), dir("a"));
    save_session(load_session(dir("a")), dir("b"));
    EXPECT_EQ(files_of(dir("a")), files_of(dir("b")));
    EXPECT_TRUE(fs::exists(dir("a") / "supernet.json"));
}

TEST_F(Archive, TruncatedRunlogNamesLine) {
    save_session(searched(small_config(), 3), dir("a"));
    const fs::path log = dir("a") / "runlog.jsonl";
    std::string text = read_text_file(log);
    const std::size_t lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
    text.resize(text.size() - 10);
    write_text_file(log, text);
    std::string msg;
    EXPECT_EQ(kind_of([&] { load_session(dir("a")); }, &msg), ErrorKind::Corrupt);
    EXPECT_NE(msg.find("line " + std::to_string(lines)), std::string::npos) << msg;
}

TEST_F(Archive, GarbageLineNamesLine) {
    EXPECT_NO_THROW(parse_runlog("{\"type\":\"a\"}\n{\"type\":\"b\"}\n"));
    std::string msg;
    EXPECT_EQ(kind_of([&] { parse_runlog("{\"type\":\"a\"}\nnot json\n{\"type\":\"b\"}\n"); }, &msg), ErrorKind::Corrupt);
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
}

TEST_F(Archive, SchemaBumpGivesMigrationHint) {
    save_session(searched(small_config(), 1), dir("a"));
    auto manifest = nlohmann::json::parse(read_text_file(dir("a") / "manifest.json"));
    manifest["schema_version"] = kSchemaVersion + 1;
    write_text_file(dir("a") / "manifest.json", manifest.dump());
    std::string msg;
    kind_of([&] { load_session(dir("a")); }, &msg);
    EXPECT_NE(msg.find("not supported"), std::string::npos) << msg;
    EXPECT_NE(msg.find("re-save"), std::string::npos) << msg;
}

TEST_F(Archive, CorruptStateFailsWithoutPartialSession) {
    save_session(searched(small_config(), 1), dir("a"));
    write_text_file(dir("a") / "state.json", "{\"template_version\": 0}");
    EXPECT_EQ(kind_of([&] { load_session(dir("a")); }), ErrorKind::Corrupt);
    EXPECT_EQ(kind_of([&] { load_session(dir("missing")); }), ErrorKind::NotFound);
}

TEST_F(Archive, ResumeMatchesUninterruptedRun) {
    for (EvaluatorKind kind : {EvaluatorKind::Tabular, EvaluatorKind::Supernet}) {
        SessionConfig c = small_config(3);
        c.evaluator.kind = kind;
        Session full = searched(c, 10);
        save_session(searched(c, 5), dir("mid"));
        Session resumed = load_session(dir("mid"));
        for (int i = 0; i < 5; ++i) resumed.step();
        EXPECT_EQ(resumed.runlog(), full.runlog());
        EXPECT_EQ(resumed.state(), full.state());
    }
}

TEST_F(Archive, ResumeAfterSteeringMatches) {
    auto steer = [](Session& s) {
        s.compute_embedding();
        s.set_region(Rect{-1e9, -1e9, 1e9, 1e9}, std::nullopt);
    };
    Session full = searched(small_config(6), 3);
    steer(full);
    for (int i = 0; i < 6; ++i) full.step();
    Session half = searched(small_config(6), 3);
    steer(half);
    for (int i = 0; i < 2; ++i) half.step();
    save_session(half, dir("mid"));
    Session resumed = load_session(dir("mid"));
    for (int i = 0; i < 4; ++i) resumed.step();
    EXPECT_EQ(resumed.runlog(), full.runlog());
}

TEST(Verify, RecomputesEveryDigest) {
    Session s = searched(small_config(2), 8);
    const std::vector<PathIndex> p{3};
    s.prune(p);
    s.step();
    s.edit_template(edit::AddNode{0});
    s.begin_search();
    s.step();
    s.step();
    const auto records = parse_runlog(format_runlog(s.runlog()));
    const VerifyReport r = verify_runlog(records);
    EXPECT_TRUE(r.ok) << r.message;
    EXPECT_EQ(r.digests_checked, records.size() - 1);
    EXPECT_GT(r.accuracies_checked, 0u);
}

TEST(Verify, DetectsTampering) {
    Session s = searched(small_config(2), 4);
    auto records = parse_runlog(format_runlog(s.runlog()));
    records[3]["created"][0]["accuracy"] = 0.123;
    EXPECT_FALSE(verify_runlog(records).ok);
    records = parse_runlog(format_runlog(s.runlog()));
    records[2]["fitness_digest"] = "00";
    const VerifyReport r = verify_runlog(records);
    EXPECT_FALSE(r.ok);
    EXPECT_NE(r.message.find("record 3"), std::string::npos) << r.message;
}

TEST(Headless, SameSeedSameSummary) {
    RunConfig c;
    c.session = small_config();
    c.seeds = {4, 5};
    c.iterations = 20;
    EXPECT_EQ(summary_to_json(run_headless(c)), summary_to_json(run_headless(c)));
    const SeedRun a = run_seed(c, 4), b = run_seed(c, 4);
    EXPECT_EQ(a.runlog, b.runlog);
    EXPECT_EQ(a.trajectory.size(), 21u);
}

TEST(Headless, RandomUsesTheSameBudget) {
    RunConfig c;
    c.session = small_config();
    c.iterations = 30;
    const SeedRun ea = run_seed(c, 1);
    c.strategy = Strategy::RandomSampling;
    const SeedRun rnd = run_seed(c, 1);
    EXPECT_EQ(ea.evaluations, rnd.evaluations);
    EXPECT_EQ(ea.trajectory.size(), rnd.trajectory.size());
    for (std::size_t i = 1; i < rnd.trajectory.size(); ++i) EXPECT_GE(rnd.trajectory[i], rnd.trajectory[i - 1]);
}

TEST(Headless, RejectsZeroIterations) {
    EXPECT_THROW(run_config_from_json({{"iterations", 0}}), Error);
    EXPECT_THROW(run_config_from_json({{"strategy", "greedy"}}), Error);
    RunConfig c;
    c.iterations = 0;
    EXPECT_THROW(run_seed(c, 0), Error);
    EXPECT_EQ(run_config_from_json(run_config_to_json(RunConfig{})).iterations, 100u);
}

TEST(Export, AfterOneIteration) {
    Session s = searched(small_config(), 2);
    const auto doc = s.export_best();
    EXPECT_EQ(doc["candidate"]["id"], s.state().best->id);
    const Mask m = mask_from_json(doc["candidate"]["mask"]);
    EXPECT_EQ(s.evaluator().evaluate(m, 0), doc["accuracy"].get<double>());
    EXPECT_EQ(doc["cells"].size(), s.network().cells().size());
    EXPECT_EQ(doc["parameter_count"], m.count());
}

TEST(Export, TieKeepsLowerId) {
    SessionConfig c = small_config();
    c.evaluator.weight_scale = 0.0;
    c.evaluator.interaction_scale = 0.0;
    Session s = searched(c, 3);
    const auto doc = s.export_best();
    EXPECT_EQ(doc["candidate"]["id"], 0);
    EXPECT_TRUE(doc["tie"].get<bool>());
    EXPECT_GT(doc["tied_ids"].size(), 1u);
}
