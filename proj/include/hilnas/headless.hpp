#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hilnas/session.hpp"

namespace hilnas {

enum class Strategy { EA, RandomSampling };

const char* strategy_name(Strategy s) noexcept;
Strategy strategy_from_name(std::string_view name);

struct RunConfig {
    SessionConfig session;
    Strategy strategy = Strategy::EA;
    std::vector<std::uint64_t> seeds{0};
    std::uint64_t iterations = 100;
    int train_epochs = 10;  // supernet sessions only
};

RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json run_config_to_json(const RunConfig& config);

struct SeedRun {
    std::uint64_t seed = 0;
    // Best accuracy found so far after the first population and after
    // every iteration.
    std::vector<double> trajectory;
    double best = 0.0;
    std::uint64_t evaluations = 0;
    std::optional<double> optimum;  // tabular oracle with an enumerable space
    bool hit_optimum = false;
    std::vector<std::string> runlog;  // EA only
};

struct RunSummary {
    Strategy strategy = Strategy::EA;
    std::uint64_t iterations = 0;
    std::vector<SeedRun> runs;
    double mean_best = 0.0;
    double hit_rate = 0.0;
};

// The session config's seed and evaluator seed are replaced by `seed`.
SessionConfig config_for_seed(const SessionConfig& base, std::uint64_t seed);

SeedRun run_seed(const RunConfig& config, std::uint64_t seed);
RunSummary run_headless(const RunConfig& config);
nlohmann::json summary_to_json(const RunSummary& summary);

struct BenchReport {
    RunSummary ea;
    RunSummary random;
    std::size_t ea_wins = 0;
    std::size_t ties = 0;
    std::size_t random_wins = 0;
};

BenchReport run_bench(RunConfig config);
nlohmann::json bench_to_json(const BenchReport& report);
std::string bench_to_text(const BenchReport& report);

} // namespace hilnas
