#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hilnas/candidate.hpp"
#include "hilnas/evaluator.hpp"
#include "hilnas/region.hpp"
#include "hilnas/supergraph.hpp"

namespace hilnas {

inline constexpr double kFitnessFloor = 1e-6;
inline constexpr double kDefaultMutationRate = 0.05;
// Accuracy threshold used for the reported large-scale runs.
inline constexpr double kReferenceAlpha = 0.68;
// Threshold for desk-scale runs, where accuracies sit lower.
inline constexpr double kDefaultAlpha = 0.5;

// Per-path fitness scores and evaluation counts. Within each cell the
// fitness of non-pruned paths sums to one; the table doubles as the path
// sampling distribution.
struct FitnessTable {
    double alpha = kDefaultAlpha;
    std::uint64_t template_version = 0;
    std::vector<PathRange> cells;
    std::vector<double> fitness;
    std::vector<std::uint64_t> frequency;
    std::vector<bool> pruned;

    std::span<const double> probabilities() const noexcept { return fitness; }
    std::string digest() const;
    void normalize();

    friend bool operator==(const FitnessTable&, const FitnessTable&) = default;
};

FitnessTable init_fitness(const TemplateNetwork& network, double alpha);

// Adds (accuracy - alpha) to every active path, clamps at kFitnessFloor,
// renormalizes per cell and counts the evaluation.
FitnessTable update_fitness(FitnessTable table, const CandidateRecord& candidate);

// Zeroes and excludes the given paths, then renormalizes.
FitnessTable prune_fitness(FitnessTable table, std::span<const PathIndex> paths);

struct ParentPair {
    std::size_t father = 0;
    std::size_t mother = 0;
};

// Two distinct evaluated members drawn without replacement with weight
// (accuracy - min accuracy + 1e-6). Indices refer to `population`.
ParentPair choose_parents(std::span<const CandidateRecord> population, std::uint64_t seed);

// child[i] = father[i] where selector[i] == 0, mother[i] where selector[i] == 1.
Mask cross_over(const Mask& father, const Mask& mother, const Mask& selector);
Mask cross_over(const Mask& father, const Mask& mother, std::uint64_t seed);

// Flips bit i iff draws[i] <= rate; draws lie in (0, 1].
Mask mutate(const Mask& mask, double rate, std::span<const double> draws);
Mask mutate(const Mask& mask, double rate, std::uint64_t seed);

struct LossPoint {
    std::uint64_t iteration = 0;
    double max = 0.0;
    double mean = 0.0;
    double min = 0.0;
    friend bool operator==(const LossPoint&, const LossPoint&) = default;
};

struct EvaluatedEntry {
    CandidateId id = 0;
    double accuracy = 0.0;
    std::uint64_t iteration = 0;
    friend bool operator==(const EvaluatedEntry&, const EvaluatedEntry&) = default;
};

struct SearchState {
    std::uint64_t template_version = 0;
    std::uint64_t seed = 0;
    std::size_t population_size = 4;
    double mutation_rate = kDefaultMutationRate;
    std::vector<CandidateRecord> population;
    FitnessTable fitness;
    std::uint64_t iteration = 0;
    std::vector<LossPoint> loss_history;
    std::optional<RegionConstraint> region;
    PathConstraints constraints;
    CandidateId next_id = 0;
    std::uint64_t evaluations = 0;
    // Latest evaluation of every distinct mask seen so far.
    std::map<Mask, EvaluatedEntry> evaluated;
    std::optional<CandidateRecord> best;
    bool best_tied = false;

    bool initialized() const noexcept { return !population.empty(); }
    bool is_stale(const CandidateRecord& member) const;

    friend bool operator==(const SearchState&, const SearchState&) = default;
};

// max(4, ceil(1.5 * number of cells))
std::size_t population_size_for(const TemplateNetwork& network);

SearchState make_search_state(const TemplateNetwork& network, double alpha, std::uint64_t seed);

// What one search step did; the unit of the run log.
struct IterationReport {
    std::string kind;  // "init" or "iteration"
    std::uint64_t iteration = 0;
    std::uint64_t rng_seed = 0;
    std::vector<CandidateRecord> created;
    std::optional<LossPoint> loss;
    std::string fitness_digest;
};

struct StepResult {
    SearchState state;
    IterationReport report;
};

// Seed of the step that will produce iteration `state.iteration + 1`.
std::uint64_t step_seed(const SearchState& state);

// Samples and evaluates the first population.
StepResult initialize_population(const SearchState& state, const Evaluator& evaluator);

// One generation: keep the top k, fill the rest with repaired, mutated
// crossover children (or region members while a region is active), evaluate
// them and update the fitness table. `k` defaults to ceil(N / 3).
StepResult evolve(const SearchState& state, const Evaluator& evaluator, std::optional<std::size_t> k,
                  std::uint64_t seed);

struct SearchHooks {
    std::function<bool()> should_stop;
    // Runs before every step; steering commands are applied here.
    std::function<void(SearchState&)> between_iterations;
    std::function<void(const SearchState&, const IterationReport&)> on_step;
};

// Runs `iterations` generations (initialising the population first when
// needed). Stops early, with a resumable state, when should_stop() is true.
SearchState run_search(SearchState state, const Evaluator& evaluator, std::uint64_t iterations,
                       const SearchHooks& hooks = {});

nlohmann::json fitness_to_json(const FitnessTable& table);
FitnessTable fitness_from_json(const nlohmann::json& doc);
nlohmann::json search_state_to_json(const SearchState& state);
SearchState search_state_from_json(const nlohmann::json& doc);
nlohmann::json report_to_json(const IterationReport& report);
IterationReport report_from_json(const nlohmann::json& doc);

} // namespace hilnas
