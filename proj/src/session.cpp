#include "hilnas/session.hpp"

#include <algorithm>

#include "hilnas/error.hpp"
#include "hilnas/rng.hpp"

namespace hilnas {

const char* phase_name(Phase phase) noexcept {
    switch (phase) {
        case Phase::Configuring: return "configuring";
        case Phase::TrainingTemplate: return "training_template";
        case Phase::Searching: return "searching";
        case Phase::Paused: return "paused";
        case Phase::Finalized: return "finalized";
    }
    return "configuring";
}

Phase phase_from_name(std::string_view name) {
    for (Phase p : {Phase::Configuring, Phase::TrainingTemplate, Phase::Searching, Phase::Paused, Phase::Finalized})
        if (name == phase_name(p)) return p;
    fail_validation("unknown phase '" + std::string(name) + "'", "phase");
}

namespace {

template <class T>
nlohmann::json opt_json(const std::optional<T>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json();
}

template <class T>
std::optional<T> opt_field(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
    try {
        return doc[key].get<T>();
    } catch (const nlohmann::json::exception&) {
        fail_validation(std::string("field '") + key + "' has the wrong type", std::string("config.") + key);
    }
}

nlohmann::json population_json(const std::vector<CandidateRecord>& population) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& c : population) out.push_back(candidate_to_json(c));
    return out;
}

nlohmann::json curve_json(const std::vector<LossSample>& curve) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : curve) out.push_back({s.epoch, s.train_loss, s.val_loss});
    return out;
}

nlohmann::json loss_point_json(const LossPoint& l) { return nlohmann::json::array({l.iteration, l.max, l.mean, l.min}); }

nlohmann::json best_id(const SearchState& s) { return s.best ? nlohmann::json(s.best->id) : nlohmann::json(); }

nlohmann::json region_ids(const SearchState& s) { return s.region ? nlohmann::json(s.region->member_ids) : nlohmann::json(); }

} // namespace

nlohmann::json session_config_to_json(const SessionConfig& c) {
    return {{"schema_version", kSchemaVersion},
            {"dataset_tag", c.dataset_tag},
            {"num_normal", opt_json(c.num_normal)},
            {"num_reduction", opt_json(c.num_reduction)},
            {"nodes_per_cell", opt_json(c.nodes_per_cell)},
            {"template", c.template_doc ? *c.template_doc : nlohmann::json()},
            {"seed", c.seed},
            {"alpha", c.alpha},
            {"population_size", opt_json(c.population_size)},
            {"mutation_rate", c.mutation_rate},
            {"embedding_count", c.embedding_count},
            {"evaluator", evaluator_spec_to_json(c.evaluator)}};
}

SessionConfig session_config_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) fail_validation("session config must be an object", "config");
    if (doc.contains("schema_version") && doc["schema_version"] != kSchemaVersion)
        fail_validation("unsupported config schema_version", "config.schema_version");
    SessionConfig c;
    c.dataset_tag = opt_field<std::string>(doc, "dataset_tag").value_or(c.dataset_tag);
    c.num_normal = opt_field<int>(doc, "num_normal");
    c.num_reduction = opt_field<int>(doc, "num_reduction");
    c.nodes_per_cell = opt_field<int>(doc, "nodes_per_cell");
    if (doc.contains("template") && !doc["template"].is_null()) c.template_doc = doc["template"];
    c.seed = opt_field<std::uint64_t>(doc, "seed").value_or(c.seed);
    c.alpha = opt_field<double>(doc, "alpha").value_or(c.alpha);
    c.population_size = opt_field<std::size_t>(doc, "population_size");
    c.mutation_rate = opt_field<double>(doc, "mutation_rate").value_or(c.mutation_rate);
    c.embedding_count = opt_field<std::size_t>(doc, "embedding_count").value_or(c.embedding_count);
    if (doc.contains("evaluator")) {
        nlohmann::json ev = doc["evaluator"];
        // The evaluator inherits the session seed unless it names its own.
        if (ev.is_object() && !ev.contains("seed")) ev["seed"] = c.seed;
        c.evaluator = evaluator_spec_from_json(ev);
    } else {
        c.evaluator.seed = c.seed;
    }
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) fail_validation("alpha must lie in (0, 1)", "config.alpha");
    if (!(c.mutation_rate >= 0.0 && c.mutation_rate < 1.0))
        fail_validation("mutation_rate must lie in [0, 1)", "config.mutation_rate");
    if (c.population_size && *c.population_size < 2)
        fail_validation("population_size must be at least 2", "config.population_size");
    if (c.embedding_count < 2) fail_validation("embedding_count must be at least 2", "config.embedding_count");
    return c;
}

nlohmann::json event_to_json(const Event& e) {
    return {{"schema_version", kSchemaVersion}, {"seq", e.seq}, {"kind", e.kind}, {"payload", e.payload}};
}

Event event_from_json(const nlohmann::json& doc) {
    try {
        return Event{doc.at("seq").get<std::uint64_t>(), doc.at("kind").get<std::string>(), doc.at("payload")};
    } catch (const nlohmann::json::exception& e) {
        fail_validation(std::string("malformed event: ") + e.what(), "event");
    }
}

TemplateNetwork template_for(const SessionConfig& config) {
    if (config.template_doc) return template_from_json(*config.template_doc);
    return build_template(config.dataset_tag, config.num_normal, config.num_reduction, config.nodes_per_cell);
}

nlohmann::json describe_mask(const TemplateNetwork& network, const Mask& mask) {
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t c = 0; c < network.cells().size(); ++c) {
        const CellSpec& spec = network.cells()[c];
        nlohmann::json nodes = nlohmann::json::array();
        for (const NodeGroup& g : network.node_groups()) {
            if (g.cell != c) continue;
            nlohmann::json inputs = nlohmann::json::array();
            for (PathIndex p = g.paths.begin; p < g.paths.end; ++p)
                if (mask.test(p))
                    inputs.push_back({{"path", p},
                                      {"source", network.path(p).source.to_string()},
                                      {"op", network.op_of(p).name}});
            nodes.push_back({{"node", g.node}, {"inputs", inputs}});
        }
        cells.push_back({{"cell_id", spec.cell_id}, {"kind", cell_kind_name(spec.kind)}, {"nodes", nodes}});
    }
    return cells;
}

// ---------------------------------------------------------------------------

Session::Session(std::string id, SessionConfig config) : id_(std::move(id)), config_(std::move(config)) {
    const TemplateNetwork network = template_for(config_);
    evaluator_ = make_evaluator(network, config_.evaluator);
    state_ = make_search_state(network, config_.alpha, config_.seed);
    if (config_.population_size) state_.population_size = *config_.population_size;
    state_.mutation_rate = config_.mutation_rate;
    log({{"type", "header"},
         {"schema_version", kSchemaVersion},
         {"config", session_config_to_json(config_)},
         {"template", template_to_json(network)}});
    set_phase(Phase::Configuring, "created", true);
}

void Session::emit(std::string kind, nlohmann::json payload) {
    events_.push_back(Event{next_seq_++, std::move(kind), std::move(payload)});
}

void Session::log(nlohmann::json record) { runlog_.push_back(record.dump()); }

void Session::require(bool ok, const std::string& what) const {
    if (!ok)
        throw Error(ErrorKind::Conflict, what + " is not allowed in phase " + std::string(phase_name(phase_)), "phase");
}

void Session::set_phase(Phase to, const std::string& reason, bool snapshot) {
    const Phase from = phase_;
    phase_ = to;
    nlohmann::json payload{{"from", phase_name(from)}, {"to", phase_name(to)}, {"reason", reason}};
    if (snapshot) payload["snapshot"] = read_model();
    emit("phase_changed", std::move(payload));
}

nlohmann::json Session::read_model() const {
    return {{"schema_version", kSchemaVersion},
            {"phase", phase_name(phase_)},
            {"template_version", state_.template_version},
            {"iteration", state_.iteration},
            {"evaluations", state_.evaluations},
            {"population", population_json(state_.population)},
            {"fitness", fitness_to_json(state_.fitness)},
            {"loss_history", [&] {
                 nlohmann::json out = nlohmann::json::array();
                 for (const auto& l : state_.loss_history) out.push_back(loss_point_json(l));
                 return out;
             }()},
            {"pruned", state_.constraints.pruned},
            {"fixed", state_.constraints.fixed},
            {"region_ids", region_ids(state_)},
            {"embedding_digest", embedding_ ? nlohmann::json(embedding_->digest()) : nlohmann::json()},
            {"best_id", best_id(state_)},
            {"best_tied", state_.best_tied},
            {"train_curve", curve_json(train_curve_)}};
}

std::string Session::read_model_digest() const { return hex_digest(read_model().dump()); }

nlohmann::json replay_events(const std::vector<Event>& events) {
    nlohmann::json model;
    for (const Event& e : events) {
        const auto& p = e.payload;
        if (e.kind == "phase_changed") {
            if (p.contains("snapshot")) model = p["snapshot"];
            model["phase"] = p["to"];
        } else if (e.kind == "loss_tick") {
            model["train_curve"].push_back({p["epoch"], p["train_loss"], p["val_loss"]});
        } else if (e.kind == "iteration_done") {
            for (const char* key : {"iteration", "population", "evaluations", "best_id", "best_tied"}) model[key] = p[key];
            model["loss_history"].push_back(p["loss"]);
        } else if (e.kind == "fitness_updated") {
            for (const char* key : {"fitness", "population", "evaluations", "best_id", "best_tied", "iteration"})
                if (p.contains(key)) model[key] = p[key];
        } else if (e.kind == "constraint_changed") {
            for (const char* key : {"pruned", "fixed", "region_ids"}) model[key] = p[key];
        } else if (e.kind == "embedding_ready") {
            model["embedding_digest"] = p["digest"];
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// Template

void Session::adopt_template(const TemplateNetwork& next, const std::vector<std::optional<PathIndex>>& path_map,
                             nlohmann::json edit_doc) {
    std::unique_ptr<Evaluator> evaluator;
    if (const auto* old = dynamic_cast<const Supernet*>(evaluator_.get())) {
        auto fresh = std::make_unique<Supernet>(next, config_.evaluator);
        fresh->adopt_parameters(*old, path_map);
        evaluator = std::move(fresh);
    } else {
        evaluator = make_evaluator(next, config_.evaluator);
    }
    evaluator_ = std::move(evaluator);

    SearchState s = make_search_state(next, config_.alpha, config_.seed);
    if (config_.population_size) s.population_size = *config_.population_size;
    s.mutation_rate = state_.mutation_rate;
    s.iteration = state_.iteration;
    s.loss_history = state_.loss_history;
    s.next_id = state_.next_id;
    s.evaluations = state_.evaluations;
    state_ = std::move(s);
    embedding_.reset();

    log({{"type", "template_edit"}, {"edit", std::move(edit_doc)}, {"template", template_to_json(next)},
         {"fitness_digest", fitness_digest()}});
    const Phase to = phase_ == Phase::Configuring ? Phase::Configuring : Phase::Paused;
    set_phase(to, "template_edited", true);
}

void Session::edit_template(const TemplateEdit& change) {
    require(phase_ != Phase::TrainingTemplate && phase_ != Phase::Finalized, "template edit");
    EditResult r = hilnas::edit_template(network(), change);
    adopt_template(r.network, r.path_map, edit_to_json(change));
}

void Session::replace_template(const TemplateNetwork& network) {
    require(phase_ != Phase::TrainingTemplate && phase_ != Phase::Finalized, "template replacement");
    const TemplateNetwork next(network.dataset_tag(), network.cells(), this->network().version() + 1);
    adopt_template(next, match_paths(this->network(), next), {{"type", "replace"}});
}

// ---------------------------------------------------------------------------
// Training and search

TrainReport Session::train(int epochs, const std::function<bool()>& should_stop) {
    require(phase_ == Phase::Configuring || phase_ == Phase::Paused, "template training");
    if (epochs < 1) fail_validation("epochs must be at least 1", "epochs");
    set_phase(Phase::TrainingTemplate, "training_started");
    TrainReport report;
    if (auto* net = dynamic_cast<Supernet*>(evaluator_.get())) {
        report = net->train(epochs, should_stop, [&](const LossSample& s) {
            train_curve_.push_back(s);
            emit("loss_tick", {{"epoch", s.epoch}, {"train_loss", s.train_loss}, {"val_loss", s.val_loss}});
        });
        if (report.diagnostic) emit("error", {{"command", "train"}, {"kind", "evaluation"}, {"message", *report.diagnostic},
                                              {"field", nlohmann::json()}});
    }
    trained_ = true;
    log({{"type", "train"},
         {"requested", epochs},
         {"curve", curve_json(report.curve)},
         {"stopped", report.stopped},
         {"diagnostic", opt_json(report.diagnostic)}});
    set_phase(Phase::Searching, report.stopped ? "training_stopped" : "training_done");
    return report;
}

void Session::begin_search() {
    switch (phase_) {
        case Phase::Searching: return;
        case Phase::Configuring:
            if (dynamic_cast<const Supernet*>(evaluator_.get()) && !trained_)
                throw Error(ErrorKind::Conflict, "train the template network before searching", "phase");
            [[fallthrough]];
        case Phase::Paused: set_phase(Phase::Searching, "search_started"); return;
        default: require(false, "starting a search");
    }
}

void Session::pause() {
    if (phase_ == Phase::Paused) return;
    require(phase_ == Phase::Searching, "pausing");
    set_phase(Phase::Paused, "paused");
}

IterationReport Session::step() {
    require(phase_ == Phase::Searching, "a search step");
    StepResult r = state_.initialized() ? evolve(state_, *evaluator_, std::nullopt, step_seed(state_))
                                        : initialize_population(state_, *evaluator_);
    state_ = std::move(r.state);
    nlohmann::json record = report_to_json(r.report);
    record["type"] = "step";
    log(std::move(record));
    if (r.report.kind == "init") {
        emit("fitness_updated", {{"reason", "init"},
                                 {"fitness", fitness_to_json(state_.fitness)},
                                 {"population", population_json(state_.population)},
                                 {"evaluations", state_.evaluations},
                                 {"iteration", state_.iteration},
                                 {"best_id", best_id(state_)},
                                 {"best_tied", state_.best_tied}});
    } else {
        emit("iteration_done", {{"iteration", state_.iteration},
                                {"created", population_json(r.report.created)},
                                {"population", population_json(state_.population)},
                                {"loss", loss_point_json(*r.report.loss)},
                                {"evaluations", state_.evaluations},
                                {"best_id", best_id(state_)},
                                {"best_tied", state_.best_tied}});
        emit("fitness_updated", {{"reason", "iteration"}, {"fitness", fitness_to_json(state_.fitness)}});
    }
    return r.report;
}

// ---------------------------------------------------------------------------
// Projection and steering

const Embedding& Session::compute_embedding(std::optional<std::size_t> count, std::optional<std::uint64_t> seed) {
    require(phase_ != Phase::TrainingTemplate, "embedding");
    std::size_t n = count.value_or(config_.embedding_count);
    if (n < 2) fail_validation("count must be at least 2", "count");
    if (!count) n = static_cast<std::size_t>(std::min<std::uint64_t>(n, count_valid_masks(network())));
    const std::uint64_t s = seed.value_or(derive_seed(config_.seed, "embedding", network().version()));
    Embedding e = project_search_space(network(), state_, n, s);
    e.colors.assign(e.ids.size(), std::nullopt);
    embedding_ = std::move(e);
    if (state_.region && state_.region->embedding_digest != embedding_->digest()) {
        state_ = hilnas::clear_region(std::move(state_));
        log({{"type", "steer"}, {"action", "clear_region"}, {"reason", "embedding_changed"},
             {"fitness_digest", fitness_digest()}});
        emit_constraints("region_invalidated");
    }
    emit("embedding_ready", {{"digest", embedding_->digest()}, {"embedding", embedding_to_json(recolor(*embedding_, state_))}});
    return *embedding_;
}

void Session::emit_constraints(const std::string& action) {
    emit("constraint_changed", {{"action", action},
                                {"pruned", state_.constraints.pruned},
                                {"fixed", state_.constraints.fixed},
                                {"region_ids", region_ids(state_)}});
}

void Session::set_region(const RegionShape& shape, const std::optional<std::string>& expected_digest) {
    require(phase_ != Phase::TrainingTemplate && phase_ != Phase::Finalized, "setting a region");
    if (!embedding_) throw Error(ErrorKind::Conflict, "compute an embedding before drawing a region", "embedding");
    state_ = hilnas::set_region(state_, *embedding_, shape, expected_digest);
    log({{"type", "steer"}, {"action", "set_region"}, {"region", region_to_json(*state_.region)},
         {"fitness_digest", fitness_digest()}});
    emit_constraints("set_region");
}

void Session::clear_region() {
    require(phase_ != Phase::TrainingTemplate && phase_ != Phase::Finalized, "clearing a region");
    state_ = hilnas::clear_region(std::move(state_));
    log({{"type", "steer"}, {"action", "clear_region"}, {"fitness_digest", fitness_digest()}});
    emit_constraints("clear_region");
}

SetOpResult Session::set_operation(SetOp op, const std::optional<RegionShape>& shape,
                                   const std::optional<std::string>& expected_digest) {
    if (!shape) {
        if (!state_.region) throw Error(ErrorKind::Conflict, "no active region and no shape given", "region");
        if (expected_digest && *expected_digest != state_.region->embedding_digest)
            throw Error(ErrorKind::StaleState, "region was resolved against another embedding", "embedding_digest");
        return hilnas::set_operation(network(), op, *state_.region);
    }
    if (!embedding_) throw Error(ErrorKind::Conflict, "compute an embedding before querying a region", "embedding");
    if (expected_digest && *expected_digest != embedding_->digest())
        throw Error(ErrorKind::StaleState, "region was drawn on an embedding that is no longer current",
                    "embedding_digest");
    const RegionConstraint region = resolve_region(*embedding_, *shape);
    if (region.member_ids.empty()) fail_validation("region contains no candidates", "shape");
    return hilnas::set_operation(network(), op, region);
}

void Session::prune(const std::vector<PathIndex>& paths) {
    require(phase_ != Phase::TrainingTemplate && phase_ != Phase::Finalized, "pruning");
    state_ = prune_paths(state_, network(), paths);
    log({{"type", "steer"}, {"action", "prune"}, {"paths", paths}, {"fitness_digest", fitness_digest()}});
    emit_constraints("prune");
    emit("fitness_updated", {{"reason", "prune"}, {"fitness", fitness_to_json(state_.fitness)}});
}

void Session::fix(const std::vector<PathIndex>& paths) {
    require(phase_ != Phase::TrainingTemplate && phase_ != Phase::Finalized, "fixing");
    state_ = fix_paths(state_, network(), paths);
    log({{"type", "steer"}, {"action", "fix"}, {"paths", paths}, {"fitness_digest", fitness_digest()}});
    emit_constraints("fix");
}

// ---------------------------------------------------------------------------
// Reads and export

nlohmann::json Session::candidate(CandidateId id) const {
    std::optional<CandidateRecord> found;
    for (const auto& c : state_.population)
        if (c.id == id) found = c;
    if (!found && state_.best && state_.best->id == id) found = state_.best;
    if (!found)
        for (const auto& [mask, e] : state_.evaluated)
            if (e.id == id) found = CandidateRecord{e.id, mask, e.accuracy, e.iteration};
    if (!found) throw Error(ErrorKind::NotFound, "no candidate with id " + std::to_string(id), "id");
    return {{"schema_version", kSchemaVersion},
            {"candidate", candidate_to_json(*found)},
            {"stale", state_.is_stale(*found)},
            {"in_population", std::any_of(state_.population.begin(), state_.population.end(),
                                          [&](const CandidateRecord& c) { return c.id == id; })},
            {"cells", describe_mask(network(), found->mask)},
            {"parameter_count", evaluator_->parameter_count(found->mask)}};
}

nlohmann::json Session::export_best(std::optional<int> budget_epochs) const {
    if (!state_.best) throw Error(ErrorKind::Conflict, "no evaluated candidates to export", "state");
    const CandidateRecord& best = *state_.best;
    std::vector<CandidateId> tied;
    for (const auto& [mask, e] : state_.evaluated)
        if (e.accuracy == *best.accuracy) tied.push_back(e.id);
    std::sort(tied.begin(), tied.end());
    nlohmann::json doc{{"schema_version", kSchemaVersion},
                       {"template_version", network().version()},
                       {"candidate", candidate_to_json(best)},
                       {"accuracy", *best.accuracy},
                       {"tie", state_.best_tied},
                       {"tied_ids", tied},
                       {"cells", describe_mask(network(), best.mask)},
                       {"parameter_count", evaluator_->parameter_count(best.mask)},
                       {"final", nullptr}};
    if (budget_epochs) {
        const FinalReport f = evaluator_->finalize(best.mask, *budget_epochs, derive_seed(config_.seed, "finalize"));
        doc["final"] = {{"accuracy", f.accuracy}, {"parameter_count", f.parameter_count}, {"epochs", f.epochs}};
    }
    return doc;
}

nlohmann::json Session::finalize(int budget_epochs) {
    require(phase_ == Phase::Searching || phase_ == Phase::Paused, "finalizing");
    nlohmann::json doc = export_best(budget_epochs);
    log({{"type", "finalize"}, {"candidate_id", doc["candidate"]["id"]}, {"final", doc["final"]}});
    set_phase(Phase::Finalized, "finalized");
    return doc;
}

void Session::emit_error(const std::string& command, const std::exception& error) {
    nlohmann::json payload{{"command", command}, {"message", error.what()}};
    if (const auto* e = dynamic_cast<const Error*>(&error)) {
        payload["kind"] = error_kind_name(e->kind());
        payload["field"] = e->field().empty() ? nlohmann::json() : nlohmann::json(e->field());
    } else {
        payload["kind"] = "internal";
        payload["field"] = nullptr;
    }
    emit("error", std::move(payload));
}

// ---------------------------------------------------------------------------
// Archive

SessionArchive Session::to_archive() const {
    SessionArchive a;
    a.manifest = {{"schema_version", kSchemaVersion},
                  {"format", "hilnas-session"},
                  {"phase", phase_name(phase_)},
                  {"trained", trained_},
                  {"config", session_config_to_json(config_)},
                  {"train_curve", curve_json(train_curve_)}};
    a.template_doc = template_to_json(network());
    a.evaluator_doc = evaluator_spec_to_json(config_.evaluator);
    if (const auto* net = dynamic_cast<const Supernet*>(evaluator_.get())) {
        a.evaluator_state = net->to_json();
    } else {
        a.evaluator_state = dynamic_cast<const TabularOracle&>(*evaluator_).to_json();
    }
    a.state = search_state_to_json(state_);
    a.runlog = runlog_;
    if (embedding_) a.embedding = embedding_to_json(*embedding_);
    return a;
}

Session Session::from_archive(std::string id, const SessionArchive& a) {
    Session s;
    s.id_ = std::move(id);
    s.config_ = session_config_from_json(a.manifest.at("config"));
    s.phase_ = phase_from_name(a.manifest.at("phase").get<std::string>());
    s.trained_ = a.manifest.at("trained").get<bool>();
    for (const auto& p : a.manifest.at("train_curve"))
        s.train_curve_.push_back(LossSample{p.at(0).get<std::uint64_t>(), p.at(1).get<double>(), p.at(2).get<double>()});
    const TemplateNetwork network = template_from_json(a.template_doc);
    const EvaluatorSpec spec = evaluator_spec_from_json(a.evaluator_doc);
    if (!(spec == s.config_.evaluator)) fail_validation("evaluator config disagrees with the manifest", "evaluator");
    if (spec.kind == EvaluatorKind::Supernet)
        s.evaluator_ = std::make_unique<Supernet>(Supernet::from_json(network, a.evaluator_state));
    else
        s.evaluator_ = std::make_unique<TabularOracle>(TabularOracle::from_json(network, a.evaluator_state));
    s.state_ = search_state_from_json(a.state);
    if (s.state_.template_version != network.version())
        fail_validation("search state and template disagree on the template version", "state.template_version");
    if (s.state_.fitness.fitness.size() != network.path_count())
        fail_validation("fitness table does not match the template", "state.fitness");
    if (a.embedding) s.embedding_ = embedding_from_json(*a.embedding);
    s.runlog_ = a.runlog;
    const Phase phase = s.phase_;
    s.set_phase(phase, "loaded", true);
    return s;
}

} // namespace hilnas
