#include "hilnas/headless.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include "hilnas/error.hpp"
#include "hilnas/rng.hpp"

namespace hilnas {

const char* strategy_name(Strategy s) noexcept { return s == Strategy::EA ? "ea" : "random"; }

Strategy strategy_from_name(std::string_view name) {
    if (name == "ea") return Strategy::EA;
    if (name == "random") return Strategy::RandomSampling;
    fail_validation("strategy must be 'ea' or 'random', got '" + std::string(name) + "'", "strategy");
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) fail_validation("run config must be an object", "config");
    RunConfig c;
    try {
        c.session = session_config_from_json(doc.value("session", nlohmann::json::object()));
        if (doc.contains("strategy")) c.strategy = strategy_from_name(doc["strategy"].get<std::string>());
        if (doc.contains("seeds") && doc.contains("seed_count"))
            fail_validation("give either seeds or seed_count", "seeds");
        if (doc.contains("seeds")) c.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
        if (doc.contains("seed_count")) {
            c.seeds.resize(doc["seed_count"].get<std::size_t>());
            std::iota(c.seeds.begin(), c.seeds.end(), std::uint64_t{0});
        }
        if (doc.contains("iterations")) {
            if (!doc["iterations"].is_number_integer() || doc["iterations"].get<long long>() < 0)
                fail_validation("iterations must be a non-negative integer", "iterations");
            c.iterations = doc["iterations"].get<std::uint64_t>();
        }
        c.train_epochs = doc.value("train_epochs", c.train_epochs);
    } catch (const nlohmann::json::exception& e) {
        fail_validation(std::string("run config has a field of the wrong type: ") + e.what(), "config");
    }
    if (c.iterations < 1) fail_validation("iterations must be at least 1", "iterations");
    if (c.seeds.empty()) fail_validation("at least one seed is required", "seeds");
    if (c.train_epochs < 1) fail_validation("train_epochs must be at least 1", "train_epochs");
    return c;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
    return {{"schema_version", kSchemaVersion},
            {"session", session_config_to_json(c.session)},
            {"strategy", strategy_name(c.strategy)},
            {"seeds", c.seeds},
            {"iterations", c.iterations},
            {"train_epochs", c.train_epochs}};
}

SessionConfig config_for_seed(const SessionConfig& base, std::uint64_t seed) {
    SessionConfig c = base;
    c.seed = seed;
    c.evaluator.seed = seed;
    return c;
}

namespace {

std::optional<double> oracle_optimum(const Evaluator& evaluator) {
    const auto* oracle = dynamic_cast<const TabularOracle*>(&evaluator);
    if (!oracle) return std::nullopt;
    const auto best = oracle->optimum();
    if (!best) return std::nullopt;
    return oracle->accuracy(*best);
}

void finish(SeedRun& run) {
    run.best = run.trajectory.empty() ? 0.0 : run.trajectory.back();
    run.hit_optimum = run.optimum && run.best >= *run.optimum;
}

} // namespace

SeedRun run_seed(const RunConfig& config, std::uint64_t seed) {
    if (config.iterations < 1) fail_validation("iterations must be at least 1", "iterations");
    Session session("headless", config_for_seed(config.session, seed));
    if (dynamic_cast<const Supernet*>(&session.evaluator())) session.train(config.train_epochs);
    session.begin_search();

    SeedRun run;
    run.seed = seed;
    run.optimum = oracle_optimum(session.evaluator());

    if (config.strategy == Strategy::EA) {
        for (std::uint64_t i = 0; i <= config.iterations; ++i) {
            session.step();
            run.trajectory.push_back(*session.state().best->accuracy);
        }
        run.evaluations = session.state().evaluations;
        run.runlog = session.runlog();
    } else {
        // Same per-iteration evaluation budget as the EA: a full population
        // first, then one slot per non-elite member, all uniformly sampled.
        const std::size_t n = session.state().population_size;
        const std::size_t per_iteration = n - (n + 2) / 3;
        const auto& net = session.network();
        const auto uniform = uniform_probabilities(net);
        double best = -1.0;
        for (std::uint64_t i = 0; i <= config.iterations; ++i) {
            const std::size_t budget = i == 0 ? n : per_iteration;
            for (std::size_t slot = 0; slot < budget; ++slot) {
                const Mask m = sample_mask(net, uniform, derive_seed(seed, "random-sample", i, slot));
                best = std::max(best, session.evaluator().evaluate(m, derive_seed(seed, "random-evaluate", i, slot)));
                ++run.evaluations;
            }
            run.trajectory.push_back(best);
        }
    }
    finish(run);
    return run;
}

RunSummary run_headless(const RunConfig& config) {
    RunSummary s;
    s.strategy = config.strategy;
    s.iterations = config.iterations;
    std::size_t hits = 0;
    for (std::uint64_t seed : config.seeds) {
        s.runs.push_back(run_seed(config, seed));
        s.mean_best += s.runs.back().best;
        hits += s.runs.back().hit_optimum;
    }
    s.mean_best /= static_cast<double>(s.runs.size());
    s.hit_rate = static_cast<double>(hits) / static_cast<double>(s.runs.size());
    return s;
}

nlohmann::json summary_to_json(const RunSummary& s) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : s.runs)
        runs.push_back({{"seed", r.seed},
                        {"best", r.best},
                        {"evaluations", r.evaluations},
                        {"optimum", r.optimum ? nlohmann::json(*r.optimum) : nlohmann::json()},
                        {"hit_optimum", r.hit_optimum},
                        {"trajectory", r.trajectory}});
    return {{"schema_version", kSchemaVersion},
            {"strategy", strategy_name(s.strategy)},
            {"iterations", s.iterations},
            {"mean_best", s.mean_best},
            {"hit_rate", s.hit_rate},
            {"runs", runs}};
}

BenchReport run_bench(RunConfig config) {
    BenchReport b;
    config.strategy = Strategy::EA;
    b.ea = run_headless(config);
    config.strategy = Strategy::RandomSampling;
    b.random = run_headless(config);
    for (std::size_t i = 0; i < b.ea.runs.size(); ++i) {
        const double e = b.ea.runs[i].best, r = b.random.runs[i].best;
        if (e > r) ++b.ea_wins;
        else if (e < r) ++b.random_wins;
        else ++b.ties;
    }
    return b;
}

nlohmann::json bench_to_json(const BenchReport& b) {
    return {{"schema_version", kSchemaVersion},
            {"ea", summary_to_json(b.ea)},
            {"random", summary_to_json(b.random)},
            {"paired",
             {{"seeds", b.ea.runs.size()},
              {"mean_best_ea", b.ea.mean_best},
              {"mean_best_random", b.random.mean_best},
              {"hit_rate_ea", b.ea.hit_rate},
              {"hit_rate_random", b.random.hit_rate},
              {"ea_wins", b.ea_wins},
              {"ties", b.ties},
              {"random_wins", b.random_wins}}}};
}

std::string bench_to_text(const BenchReport& b) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%8s  %12s  %12s  %8s  %8s\n", "seed", "ea_best", "random_best", "ea_opt", "rnd_opt");
    out << line;
    for (std::size_t i = 0; i < b.ea.runs.size(); ++i) {
        const auto& e = b.ea.runs[i];
        const auto& r = b.random.runs[i];
        std::snprintf(line, sizeof line, "%8llu  %12.6f  %12.6f  %8s  %8s\n", static_cast<unsigned long long>(e.seed),
                      e.best, r.best, e.hit_optimum ? "yes" : "no", r.hit_optimum ? "yes" : "no");
        out << line;
    }
    std::snprintf(line, sizeof line, "%8s  %12.6f  %12.6f  %7.0f%%  %7.0f%%\n", "mean", b.ea.mean_best, b.random.mean_best,
                  100.0 * b.ea.hit_rate, 100.0 * b.random.hit_rate);
    out << line;
    std::snprintf(line, sizeof line, "paired: ea wins %zu, ties %zu, random wins %zu\n", b.ea_wins, b.ties, b.random_wins);
    out << line;
    return out.str();
}

} // namespace hilnas
