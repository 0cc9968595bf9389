#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hilnas/evaluation.hpp"
#include "hilnas/evolution.hpp"
#include "hilnas/projection.hpp"
#include "hilnas/steering.hpp"
#include "hilnas/supergraph.hpp"

namespace hilnas {

inline constexpr int kSchemaVersion = 1;

enum class Phase { Configuring, TrainingTemplate, Searching, Paused, Finalized };

const char* phase_name(Phase phase) noexcept;
Phase phase_from_name(std::string_view name);

struct SessionConfig {
    std::string dataset_tag = "toy";
    std::optional<int> num_normal;
    std::optional<int> num_reduction;
    std::optional<int> nodes_per_cell;
    std::optional<nlohmann::json> template_doc;  // overrides the built-in plan when set
    std::uint64_t seed = 0;
    double alpha = kDefaultAlpha;
    std::optional<std::size_t> population_size;
    double mutation_rate = kDefaultMutationRate;
    std::size_t embedding_count = 50;
    EvaluatorSpec evaluator;
};

nlohmann::json session_config_to_json(const SessionConfig& config);
SessionConfig session_config_from_json(const nlohmann::json& doc);

struct Event {
    std::uint64_t seq = 0;
    std::string kind;  // loss_tick, iteration_done, fitness_updated, embedding_ready,
                       // constraint_changed, phase_changed, error
    nlohmann::json payload;
};

nlohmann::json event_to_json(const Event& event);
Event event_from_json(const nlohmann::json& doc);

// Raw contents of a saved session, before any file handling.
struct SessionArchive {
    nlohmann::json manifest;
    nlohmann::json template_doc;
    nlohmann::json evaluator_doc;
    nlohmann::json evaluator_state;  // oracle or supernet parameters
    nlohmann::json state;
    std::vector<std::string> runlog;
    std::optional<nlohmann::json> embedding;
};

// One search session: template, evaluator, search state, embedding and the
// phase machine. Not thread-safe; the service wraps it in a worker.
class Session {
public:
    Session(std::string id, SessionConfig config);

    const std::string& id() const noexcept { return id_; }
    const SessionConfig& config() const noexcept { return config_; }
    Phase phase() const noexcept { return phase_; }
    const TemplateNetwork& network() const noexcept { return evaluator_->network(); }
    const Evaluator& evaluator() const noexcept { return *evaluator_; }
    const SearchState& state() const noexcept { return state_; }
    const std::optional<Embedding>& embedding() const noexcept { return embedding_; }
    const std::vector<LossSample>& train_curve() const noexcept { return train_curve_; }
    const std::vector<std::string>& runlog() const noexcept { return runlog_; }
    const std::vector<Event>& events() const noexcept { return events_; }
    std::uint64_t next_seq() const noexcept { return next_seq_; }

    // Everything a client can observe, in the shape event replay rebuilds.
    nlohmann::json read_model() const;
    std::string read_model_digest() const;

    // Template. Edits during a search pause it and reset the population,
    // fitness table, constraints, embedding and region.
    void replace_template(const TemplateNetwork& network);
    void edit_template(const TemplateEdit& change);

    // Shared-parameter training (a no-op for the tabular evaluator).
    TrainReport train(int epochs, const std::function<bool()>& should_stop = {});

    // Moves to Searching; a supernet must have been trained first.
    void begin_search();
    void pause();
    bool can_step() const noexcept { return phase_ == Phase::Searching; }
    // Initialises the population if needed, else runs one generation.
    IterationReport step();

    const Embedding& compute_embedding(std::optional<std::size_t> count = {}, std::optional<std::uint64_t> seed = {});

    void set_region(const RegionShape& shape, const std::optional<std::string>& expected_digest);
    void clear_region();
    SetOpResult set_operation(SetOp op, const std::optional<RegionShape>& shape,
                              const std::optional<std::string>& expected_digest);
    void prune(const std::vector<PathIndex>& paths);
    void fix(const std::vector<PathIndex>& paths);

    nlohmann::json candidate(CandidateId id) const;

    // Best candidate document; with a budget the candidate is also retrained
    // from scratch. finalize() additionally ends the session.
    nlohmann::json export_best(std::optional<int> budget_epochs = {}) const;
    nlohmann::json finalize(int budget_epochs);

    void emit_error(const std::string& command, const std::exception& error);

    SessionArchive to_archive() const;
    static Session from_archive(std::string id, const SessionArchive& archive);

private:
    Session() = default;
    void emit(std::string kind, nlohmann::json payload);
    void log(nlohmann::json record);
    void set_phase(Phase to, const std::string& reason, bool snapshot = false);
    void adopt_template(const TemplateNetwork& next, const std::vector<std::optional<PathIndex>>& path_map,
                        nlohmann::json edit_doc);
    void require(bool ok, const std::string& what) const;
    void emit_constraints(const std::string& action);
    std::string fitness_digest() const { return state_.fitness.digest(); }

    std::string id_;
    SessionConfig config_;
    Phase phase_ = Phase::Configuring;
    std::unique_ptr<Evaluator> evaluator_;
    SearchState state_;
    std::optional<Embedding> embedding_;
    std::vector<LossSample> train_curve_;
    bool trained_ = false;
    std::vector<std::string> runlog_;
    std::vector<Event> events_;
    std::uint64_t next_seq_ = 0;
};

TemplateNetwork template_for(const SessionConfig& config);

// Per-cell (node, source, op) listing of a mask.
nlohmann::json describe_mask(const TemplateNetwork& network, const Mask& mask);

// Rebuilds a read model from an event sequence.
nlohmann::json replay_events(const std::vector<Event>& events);

} // namespace hilnas
