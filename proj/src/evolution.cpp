#include "hilnas/evolution.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "hilnas/error.hpp"
#include "hilnas/rng.hpp"

namespace hilnas {

namespace {

void append_bytes(std::vector<unsigned char>& out, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    out.insert(out.end(), p, p + n);
}

double accuracy_of(const CandidateRecord& r) {
    if (!r.accuracy) fail_validation("candidate " + std::to_string(r.id) + " has not been evaluated", "candidate");
    return *r.accuracy;
}

void check_same_shape(const Mask& a, const Mask& b) {
    if (a.size() != b.size()) fail_validation("mask lengths differ", "mask");
    if (a.template_version() != b.template_version())
        throw Error(ErrorKind::StaleState, "masks belong to different template versions");
}

std::size_t hamming(const Mask& a, const Mask& b) {
    std::size_t d = 0;
    for (PathIndex p = 0; p < a.size(); ++p) d += a.test(p) != b.test(p);
    return d;
}

bool compatible(const Mask& m, const PathConstraints& constraints) {
    for (PathIndex p : constraints.pruned)
        if (m.test(p)) return false;
    for (PathIndex p : constraints.fixed)
        if (!m.test(p)) return false;
    return true;
}

void record_evaluation(SearchState& state, const CandidateRecord& record) {
    state.fitness = update_fitness(std::move(state.fitness), record);
    state.evaluated[record.mask] = EvaluatedEntry{record.id, *record.accuracy, *record.iteration_evaluated};
    ++state.evaluations;
    if (!state.best || *record.accuracy > *state.best->accuracy) {
        state.best = record;
        state.best_tied = false;
    } else if (*record.accuracy == *state.best->accuracy) {
        state.best_tied = true;  // the earlier (lower id) record stays
    }
}

Mask crossover_selector(const TemplateNetwork& net, std::span<const double> probs, std::uint64_t seed) {
    // A fresh candidate drawn from the fitness table; its set bits take the
    // mother's bits, so well-scoring paths decide where she contributes.
    return sample_mask(net, probs, seed);
}

// Produces `count` new evaluated candidates from the parent pool.
std::vector<CandidateRecord> breed(SearchState& state, const Evaluator& evaluator,
                                   const std::vector<CandidateRecord>& pool, std::size_t count,
                                   std::size_t fresh_slots, std::uint64_t seed, std::uint64_t iteration) {
    const TemplateNetwork& net = evaluator.network();
    std::vector<CandidateRecord> created;

    std::vector<std::size_t> region_members;
    if (state.region) {
        for (std::size_t i = 0; i < state.region->member_masks.size(); ++i)
            if (compatible(state.region->member_masks[i], state.constraints)) region_members.push_back(i);
        if (region_members.empty())
            throw Error(ErrorKind::Conflict, "no region member satisfies the current prune/fix constraints");
    }

    for (std::size_t slot = 0; slot < count; ++slot) {
        // The fitness table is read fresh for every slot; it already reflects
        // the candidates evaluated earlier in this step.
        const std::vector<double> probs(state.fitness.fitness.begin(), state.fitness.fitness.end());
        Mask mask;
        if (state.region) {
            const RegionConstraint& region = *state.region;
            std::vector<CandidateRecord> evaluated_members;
            std::vector<std::size_t> unevaluated;
            for (std::size_t i : region_members) {
                auto it = state.evaluated.find(region.member_masks[i]);
                if (it == state.evaluated.end()) {
                    unevaluated.push_back(i);
                } else {
                    evaluated_members.push_back(CandidateRecord{region.member_ids[i], region.member_masks[i],
                                                                it->second.accuracy, it->second.iteration});
                }
            }
            if (evaluated_members.size() >= 2 && slot >= fresh_slots) {
                const ParentPair pp = choose_parents(evaluated_members, derive_seed(seed, "parents", slot));
                Mask child = cross_over(evaluated_members[pp.father].mask, evaluated_members[pp.mother].mask,
                                        crossover_selector(net, probs, derive_seed(seed, "crossover", slot)));
                child = mutate(child, state.mutation_rate, derive_seed(seed, "mutation", slot));
                // Children are snapped to the closest region member.
                std::size_t best = region_members.front();
                std::size_t best_d = hamming(child, region.member_masks[best]);
                for (std::size_t i : region_members) {
                    const std::size_t d = hamming(child, region.member_masks[i]);
                    if (d < best_d) {
                        best = i;
                        best_d = d;
                    }
                }
                mask = region.member_masks[best];
            } else {
                const auto& from = unevaluated.empty() ? region_members : unevaluated;
                Rng rng(derive_seed(seed, "region", slot));
                mask = region.member_masks[from[rng.below(from.size())]];
            }
        } else if (slot < fresh_slots || pool.size() < 2) {
            mask = sample_mask(net, probs, derive_seed(seed, "fresh", slot), state.constraints);
        } else {
            const ParentPair pp = choose_parents(pool, derive_seed(seed, "parents", slot));
            Mask child = cross_over(pool[pp.father].mask, pool[pp.mother].mask,
                                    crossover_selector(net, probs, derive_seed(seed, "crossover", slot)));
            child = mutate(child, state.mutation_rate, derive_seed(seed, "mutation", slot));
            mask = repair_mask(net, child, probs, derive_seed(seed, "repair", slot), state.constraints);
        }

        const double accuracy = evaluator.evaluate(mask, derive_seed(seed, "evaluate", slot));
        if (!std::isfinite(accuracy) || accuracy < 0.0 || accuracy > 1.0)
            throw Error(ErrorKind::Evaluation, "evaluator returned accuracy outside [0, 1]");
        CandidateRecord record{state.next_id++, std::move(mask), accuracy, iteration};
        record_evaluation(state, record);
        created.push_back(std::move(record));
    }
    return created;
}

void check_evaluator(const SearchState& state, const Evaluator& evaluator) {
    if (evaluator.network().version() != state.template_version)
        throw Error(ErrorKind::StaleState, "template changed: search state is for version " +
                                               std::to_string(state.template_version) + ", evaluator for " +
                                               std::to_string(evaluator.network().version()));
}

LossPoint population_loss(const std::vector<CandidateRecord>& population, std::uint64_t iteration) {
    LossPoint lp{iteration, 0.0, 0.0, 0.0};
    double sum = 0.0;
    lp.min = 1.0;
    for (const auto& m : population) {
        const double loss = 1.0 - accuracy_of(m);
        lp.max = std::max(lp.max, loss);
        lp.min = std::min(lp.min, loss);
        sum += loss;
    }
    lp.mean = sum / static_cast<double>(population.size());
    return lp;
}

} // namespace

std::string FitnessTable::digest() const {
    std::vector<unsigned char> bytes;
    append_bytes(bytes, &template_version, sizeof template_version);
    append_bytes(bytes, &alpha, sizeof alpha);
    for (double f : fitness) append_bytes(bytes, &f, sizeof f);
    for (std::uint64_t n : frequency) append_bytes(bytes, &n, sizeof n);
    for (bool b : pruned) bytes.push_back(b ? 1 : 0);
    return hex_digest(bytes);
}

void FitnessTable::normalize() {
    for (const PathRange& r : cells) {
        double sum = 0.0;
        for (PathIndex p = r.begin; p < r.end; ++p)
            if (!pruned[p]) sum += fitness[p];
        for (PathIndex p = r.begin; p < r.end; ++p) fitness[p] = pruned[p] ? 0.0 : fitness[p] / sum;
    }
}

FitnessTable init_fitness(const TemplateNetwork& network, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) fail_validation("alpha must lie in (0, 1)", "alpha");
    FitnessTable t;
    t.alpha = alpha;
    t.template_version = network.version();
    t.cells.assign(network.cell_ranges().begin(), network.cell_ranges().end());
    t.fitness.assign(network.path_count(), 0.0);
    t.frequency.assign(network.path_count(), 0);
    t.pruned.assign(network.path_count(), false);
    for (const PathRange& r : t.cells)
        for (PathIndex p = r.begin; p < r.end; ++p) t.fitness[p] = 1.0 / static_cast<double>(r.size());
    return t;
}

FitnessTable update_fitness(FitnessTable table, const CandidateRecord& candidate) {
    const double accuracy = accuracy_of(candidate);
    if (candidate.mask.template_version() != table.template_version)
        throw Error(ErrorKind::StaleState, "candidate mask belongs to template version " +
                                               std::to_string(candidate.mask.template_version()));
    if (candidate.mask.size() != table.fitness.size()) fail_validation("mask length mismatch", "mask");
    const double delta = accuracy - table.alpha;
    for (PathIndex p = 0; p < table.fitness.size(); ++p) {
        if (!candidate.mask.test(p)) continue;
        ++table.frequency[p];
        if (table.pruned[p]) continue;
        table.fitness[p] = std::max(table.fitness[p] + delta, kFitnessFloor);
    }
    table.normalize();
    return table;
}

FitnessTable prune_fitness(FitnessTable table, std::span<const PathIndex> paths) {
    for (PathIndex p : paths) {
        if (p >= table.fitness.size()) fail_validation("path id out of range", "path_ids");
        table.pruned[p] = true;
        table.fitness[p] = 0.0;
    }
    table.normalize();
    return table;
}

ParentPair choose_parents(std::span<const CandidateRecord> population, std::uint64_t seed) {
    std::vector<std::size_t> evaluated;
    for (std::size_t i = 0; i < population.size(); ++i)
        if (population[i].evaluated()) evaluated.push_back(i);
    if (evaluated.size() < 2) fail_validation("choosing parents needs at least two evaluated members", "population");

    double lowest = *population[evaluated.front()].accuracy;
    for (std::size_t i : evaluated) lowest = std::min(lowest, *population[i].accuracy);
    std::vector<double> weights(population.size(), 0.0);
    for (std::size_t i : evaluated) weights[i] = *population[i].accuracy - lowest + 1e-6;

    Rng rng(seed);
    ParentPair pair;
    pair.father = rng.pick_weighted(weights);
    weights[pair.father] = 0.0;
    pair.mother = rng.pick_weighted(weights);
    return pair;
}

Mask cross_over(const Mask& father, const Mask& mother, const Mask& selector) {
    check_same_shape(father, mother);
    if (selector.size() != father.size()) fail_validation("selector length mismatch", "selector");
    Mask child(father.size(), father.template_version());
    for (PathIndex p = 0; p < father.size(); ++p) child.set(p, selector.test(p) ? mother.test(p) : father.test(p));
    return child;
}

Mask cross_over(const Mask& father, const Mask& mother, std::uint64_t seed) {
    check_same_shape(father, mother);
    Rng rng(seed);
    Mask selector(father.size(), father.template_version());
    for (PathIndex p = 0; p < father.size(); ++p) selector.set(p, (rng() >> 63) != 0);
    return cross_over(father, mother, selector);
}

Mask mutate(const Mask& mask, double rate, std::span<const double> draws) {
    if (!(rate >= 0.0 && rate < 1.0)) fail_validation("mutation rate must lie in [0, 1)", "mutation_rate");
    if (draws.size() != mask.size()) fail_validation("one draw per bit required", "draws");
    Mask out = mask;
    for (PathIndex p = 0; p < mask.size(); ++p)
        if (draws[p] <= rate) out.set(p, !mask.test(p));
    return out;
}

Mask mutate(const Mask& mask, double rate, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> draws(mask.size());
    // (0, 1]: a zero rate never flips.
    for (double& d : draws) d = static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
    return mutate(mask, rate, draws);
}

bool SearchState::is_stale(const CandidateRecord& member) const {
    for (PathIndex p : constraints.pruned)
        if (member.mask.test(p)) return true;
    return false;
}

std::size_t population_size_for(const TemplateNetwork& network) {
    const auto cells = network.cells().size();
    return std::max<std::size_t>(4, (3 * cells + 1) / 2);
}

SearchState make_search_state(const TemplateNetwork& network, double alpha, std::uint64_t seed) {
    SearchState s;
    s.template_version = network.version();
    s.seed = seed;
    s.population_size = population_size_for(network);
    s.fitness = init_fitness(network, alpha);
    return s;
}

std::uint64_t step_seed(const SearchState& state) {
    return derive_seed(state.seed, "step", state.iteration, state.initialized() ? 1 : 0);
}

StepResult initialize_population(const SearchState& state, const Evaluator& evaluator) {
    check_evaluator(state, evaluator);
    if (state.initialized()) throw Error(ErrorKind::Conflict, "population already initialised");
    StepResult out{state, {}};
    const std::uint64_t seed = step_seed(state);
    out.state.population = breed(out.state, evaluator, {}, state.population_size, 0, seed, state.iteration);
    out.report.kind = "init";
    out.report.iteration = state.iteration;
    out.report.rng_seed = seed;
    out.report.created = out.state.population;
    out.report.fitness_digest = out.state.fitness.digest();
    return out;
}

StepResult evolve(const SearchState& state, const Evaluator& evaluator, std::optional<std::size_t> k,
                  std::uint64_t seed) {
    check_evaluator(state, evaluator);
    const std::size_t n = state.population.size();
    if (n == 0) throw Error(ErrorKind::Conflict, "population is not initialised");
    for (const auto& m : state.population)
        if (!m.evaluated()) fail_validation("population member " + std::to_string(m.id) + " is not evaluated",
                                            "population");
    const std::size_t keep = k.value_or((n + 2) / 3);
    if (keep < 1 || keep >= n) fail_validation("k must satisfy 1 <= k < population size", "k");

    StepResult out{state, {}};
    SearchState& next = out.state;

    std::vector<CandidateRecord> eligible;
    for (const auto& m : state.population)
        if (!state.is_stale(m)) eligible.push_back(m);
    std::stable_sort(eligible.begin(), eligible.end(), [](const CandidateRecord& a, const CandidateRecord& b) {
        if (*a.accuracy != *b.accuracy) return *a.accuracy > *b.accuracy;
        return a.id < b.id;
    });
    std::vector<CandidateRecord> survivors(eligible.begin(),
                                           eligible.begin() + static_cast<std::ptrdiff_t>(std::min(keep, eligible.size())));
    const std::size_t slots = n - survivors.size();
    const std::size_t fresh = std::min(n - eligible.size(), slots);

    const std::uint64_t iteration = state.iteration + 1;
    auto created = breed(next, evaluator, eligible, slots, fresh, seed, iteration);

    next.population = survivors;
    next.population.insert(next.population.end(), created.begin(), created.end());
    next.iteration = iteration;
    const LossPoint loss = population_loss(next.population, iteration);
    next.loss_history.push_back(loss);

    out.report.kind = "iteration";
    out.report.iteration = iteration;
    out.report.rng_seed = seed;
    out.report.created = std::move(created);
    out.report.loss = loss;
    out.report.fitness_digest = next.fitness.digest();
    return out;
}

SearchState run_search(SearchState state, const Evaluator& evaluator, std::uint64_t iterations,
                       const SearchHooks& hooks) {
    if (iterations < 1) fail_validation("iterations must be at least 1", "iterations");
    auto stop = [&] { return hooks.should_stop && hooks.should_stop(); };
    if (!state.initialized()) {
        if (hooks.between_iterations) hooks.between_iterations(state);
        if (stop()) return state;
        StepResult r = initialize_population(state, evaluator);
        state = std::move(r.state);
        if (hooks.on_step) hooks.on_step(state, r.report);
    }
    for (std::uint64_t i = 0; i < iterations; ++i) {
        if (hooks.between_iterations) hooks.between_iterations(state);
        if (stop()) break;
        StepResult r = evolve(state, evaluator, std::nullopt, step_seed(state));
        state = std::move(r.state);
        if (hooks.on_step) hooks.on_step(state, r.report);
    }
    return state;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json loss_to_json(const LossPoint& l) {
    return nlohmann::json::array({l.iteration, l.max, l.mean, l.min});
}

LossPoint loss_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) fail_validation("loss point must be [iteration, max, mean, min]", "loss");
    return LossPoint{j[0].get<std::uint64_t>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

template <class T>
T get_field(const nlohmann::json& j, const char* key, const char* where) {
    if (!j.is_object() || !j.contains(key))
        fail_validation(std::string("missing field '") + key + "'", std::string(where) + "." + key);
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail_validation(std::string("field '") + key + "' has the wrong type", std::string(where) + "." + key);
    }
}

} // namespace

nlohmann::json fitness_to_json(const FitnessTable& t) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& r : t.cells) cells.push_back({r.begin, r.end});
    std::vector<PathIndex> pruned;
    for (PathIndex p = 0; p < t.pruned.size(); ++p)
        if (t.pruned[p]) pruned.push_back(p);
    return {{"alpha", t.alpha},         {"template_version", t.template_version},
            {"cells", cells},           {"fitness", t.fitness},
            {"frequency", t.frequency}, {"pruned", pruned}};
}

FitnessTable fitness_from_json(const nlohmann::json& doc) {
    FitnessTable t;
    t.alpha = get_field<double>(doc, "alpha", "fitness");
    t.template_version = get_field<std::uint64_t>(doc, "template_version", "fitness");
    for (const auto& r : get_field<std::vector<std::vector<std::size_t>>>(doc, "cells", "fitness")) {
        if (r.size() != 2 || r[0] > r[1]) fail_validation("bad cell range", "fitness.cells");
        t.cells.push_back(PathRange{r[0], r[1]});
    }
    t.fitness = get_field<std::vector<double>>(doc, "fitness", "fitness");
    t.frequency = get_field<std::vector<std::uint64_t>>(doc, "frequency", "fitness");
    if (t.frequency.size() != t.fitness.size()) fail_validation("fitness/frequency length mismatch", "fitness");
    t.pruned.assign(t.fitness.size(), false);
    for (auto p : get_field<std::vector<std::size_t>>(doc, "pruned", "fitness")) {
        if (p >= t.pruned.size()) fail_validation("pruned path out of range", "fitness.pruned");
        t.pruned[p] = true;
    }
    return t;
}

nlohmann::json search_state_to_json(const SearchState& s) {
    nlohmann::json population = nlohmann::json::array();
    for (const auto& m : s.population) population.push_back(candidate_to_json(m));
    nlohmann::json losses = nlohmann::json::array();
    for (const auto& l : s.loss_history) losses.push_back(loss_to_json(l));
    nlohmann::json evaluated = nlohmann::json::array();
    for (const auto& [mask, e] : s.evaluated)
        evaluated.push_back({{"mask", mask_to_json(mask)}, {"id", e.id}, {"accuracy", e.accuracy}, {"iteration", e.iteration}});
    return {{"template_version", s.template_version},
            {"seed", s.seed},
            {"population_size", s.population_size},
            {"mutation_rate", s.mutation_rate},
            {"population", population},
            {"fitness", fitness_to_json(s.fitness)},
            {"iteration", s.iteration},
            {"loss_history", losses},
            {"region", s.region ? region_to_json(*s.region) : nlohmann::json()},
            {"fixed", s.constraints.fixed},
            {"pruned", s.constraints.pruned},
            {"next_id", s.next_id},
            {"evaluations", s.evaluations},
            {"evaluated", evaluated},
            {"best", s.best ? candidate_to_json(*s.best) : nlohmann::json()},
            {"best_tied", s.best_tied}};
}

SearchState search_state_from_json(const nlohmann::json& doc) {
    constexpr const char* kWhere = "state";
    SearchState s;
    s.template_version = get_field<std::uint64_t>(doc, "template_version", kWhere);
    s.seed = get_field<std::uint64_t>(doc, "seed", kWhere);
    s.population_size = get_field<std::size_t>(doc, "population_size", kWhere);
    s.mutation_rate = get_field<double>(doc, "mutation_rate", kWhere);
    for (const auto& m : get_field<nlohmann::json>(doc, "population", kWhere)) s.population.push_back(candidate_from_json(m));
    s.fitness = fitness_from_json(get_field<nlohmann::json>(doc, "fitness", kWhere));
    s.iteration = get_field<std::uint64_t>(doc, "iteration", kWhere);
    for (const auto& l : get_field<nlohmann::json>(doc, "loss_history", kWhere)) s.loss_history.push_back(loss_from_json(l));
    if (doc.contains("region") && !doc["region"].is_null()) s.region = region_from_json(doc["region"]);
    s.constraints.fixed = get_field<std::set<PathIndex>>(doc, "fixed", kWhere);
    s.constraints.pruned = get_field<std::set<PathIndex>>(doc, "pruned", kWhere);
    s.next_id = get_field<CandidateId>(doc, "next_id", kWhere);
    s.evaluations = get_field<std::uint64_t>(doc, "evaluations", kWhere);
    for (const auto& e : get_field<nlohmann::json>(doc, "evaluated", kWhere)) {
        s.evaluated[mask_from_json(e.at("mask"))] =
            EvaluatedEntry{e.at("id").get<CandidateId>(), e.at("accuracy").get<double>(), e.at("iteration").get<std::uint64_t>()};
    }
    if (doc.contains("best") && !doc["best"].is_null()) s.best = candidate_from_json(doc["best"]);
    s.best_tied = get_field<bool>(doc, "best_tied", kWhere);
    return s;
}

nlohmann::json report_to_json(const IterationReport& r) {
    nlohmann::json created = nlohmann::json::array();
    for (const auto& c : r.created) created.push_back(candidate_to_json(c));
    return {{"kind", r.kind},
            {"iteration", r.iteration},
            {"rng_seed", r.rng_seed},
            {"created", created},
            {"loss", r.loss ? loss_to_json(*r.loss) : nlohmann::json()},
            {"fitness_digest", r.fitness_digest}};
}

IterationReport report_from_json(const nlohmann::json& doc) {
    constexpr const char* kWhere = "record";
    IterationReport r;
    r.kind = get_field<std::string>(doc, "kind", kWhere);
    r.iteration = get_field<std::uint64_t>(doc, "iteration", kWhere);
    r.rng_seed = get_field<std::uint64_t>(doc, "rng_seed", kWhere);
    for (const auto& c : get_field<nlohmann::json>(doc, "created", kWhere)) r.created.push_back(candidate_from_json(c));
    if (doc.contains("loss") && !doc["loss"].is_null()) r.loss = loss_from_json(doc["loss"]);
    r.fitness_digest = get_field<std::string>(doc, "fitness_digest", kWhere);
    return r;
}

} // namespace hilnas
