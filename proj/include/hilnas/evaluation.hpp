#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hilnas/evaluator.hpp"

namespace hilnas {

enum class EvaluatorKind { Tabular, Supernet };

inline constexpr double kDefaultDropout = 0.1;

struct EvaluatorSpec {
    EvaluatorKind kind = EvaluatorKind::Tabular;
    std::uint64_t seed = 0;
    double dropout_prob = kDefaultDropout;

    // Tabular oracle: accuracy = logistic(base + sum of path weights +
    // sum of same-cell pair interactions).
    double base = 1.0;
    double weight_scale = 0.35;
    double interaction_scale = 0.05;

    // Supernet: generated classification task and optimiser settings.
    std::string dataset = "moons";  // "moons", "blobs" or "digits"
    std::size_t samples = 400;
    double noise = 0.25;
    double validation_fraction = 0.25;
    std::size_t width = 8;
    double learning_rate = 0.01;
    std::size_t batch_size = 32;

    friend bool operator==(const EvaluatorSpec&, const EvaluatorSpec&) = default;
};

void validate(const EvaluatorSpec& spec);
nlohmann::json evaluator_spec_to_json(const EvaluatorSpec& spec);
EvaluatorSpec evaluator_spec_from_json(const nlohmann::json& doc);

// Desk-scale stand-in for validation accuracy. Path weights and pair
// interactions are hashed from (seed, path identity), so paths that survive
// a template edit keep their values.
class TabularOracle final : public Evaluator {
public:
    static TabularOracle generate(const TemplateNetwork& network, const EvaluatorSpec& spec);

    const TemplateNetwork& network() const override { return network_; }
    double evaluate(const Mask& mask, std::uint64_t seed) const override;
    FinalReport finalize(const Mask& mask, int budget_epochs, std::uint64_t seed) const override;
    std::size_t parameter_count(const Mask& mask) const override;

    double accuracy(const Mask& mask) const;
    double base() const noexcept { return base_; }
    std::span<const double> weights() const noexcept { return weights_; }
    double& weight(PathIndex p) { return weights_.at(p); }
    // Effective seed; differs from the requested one if a tie forced a redraw.
    std::uint64_t seed() const noexcept { return seed_; }

    // Best valid mask by per-cell enumeration, when every cell has at most
    // `limit` valid configurations.
    std::optional<Mask> optimum(std::uint64_t limit = 2'000'000) const;

    nlohmann::json to_json() const;
    static TabularOracle from_json(const TemplateNetwork& network, const nlohmann::json& doc);

private:
    TabularOracle(TemplateNetwork network) : network_(std::move(network)) {}
    double score(const Mask& mask) const;
    std::optional<Mask> best_masks(std::uint64_t limit, bool& tied) const;

    TemplateNetwork network_;
    std::uint64_t seed_ = 0;
    double base_ = 0.0;
    std::vector<double> weights_;
    // interactions_[c] is a dense |cell|x|cell| upper-triangular table
    std::vector<std::vector<double>> interactions_;
};

// Generated classification data, split into train and validation.
struct Dataset {
    std::size_t input_dim = 0;
    std::size_t classes = 0;
    std::vector<double> train_x, val_x;  // row-major
    std::vector<int> train_y, val_y;

    std::size_t train_size() const noexcept { return train_y.size(); }
    std::size_t val_size() const noexcept { return val_y.size(); }
};

Dataset make_dataset(const EvaluatorSpec& spec);

// Shared parameters: stem, classifier head and one block per path.
struct ParameterStore {
    std::vector<double> stem;
    std::vector<double> head;
    std::vector<std::vector<double>> paths;

    friend bool operator==(const ParameterStore&, const ParameterStore&) = default;
};

struct LossSample {
    std::uint64_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainReport {
    std::vector<LossSample> curve;
    bool stopped = false;
    std::optional<std::string> diagnostic;  // set when training halted on a non-finite loss
};

// Weight-sharing template network on desk-scale dense blocks. Every cell
// follows the template DAG; each node sums its two active incoming paths.
class Supernet final : public Evaluator {
public:
    Supernet(TemplateNetwork network, EvaluatorSpec spec);

    const TemplateNetwork& network() const override { return network_; }
    double evaluate(const Mask& mask, std::uint64_t seed) const override;
    FinalReport finalize(const Mask& mask, int budget_epochs, std::uint64_t seed) const override;
    std::size_t parameter_count(const Mask& mask) const override;

    const EvaluatorSpec& spec() const noexcept { return spec_; }
    const Dataset& data() const noexcept { return data_; }
    const ParameterStore& parameters() const noexcept { return params_; }
    ParameterStore& parameters() noexcept { return params_; }
    std::uint64_t epochs_trained() const noexcept { return epochs_trained_; }

    // Shared-parameter training: one uniformly sampled valid mask per batch.
    // `on_epoch` fires after each epoch; `should_stop` is polled between epochs.
    TrainReport train(int epochs, const std::function<bool()>& should_stop = {},
                      const std::function<void(const LossSample&)>& on_epoch = {});

    // Mean cross-entropy and its gradient over the given rows for one mask,
    // without dropout. Used by training and by gradient checks.
    double loss_and_gradient(const Mask& mask, std::span<const std::size_t> rows, bool validation,
                             ParameterStore* gradient) const;

    // Forward pass accuracy on the validation split; `drop` marks paths
    // switched off in addition to the mask.
    double validation_accuracy(const Mask& mask, const std::vector<bool>& drop) const;

    // Move parameters of surviving paths over from a supernet built for an
    // earlier template version.
    void adopt_parameters(const Supernet& previous, const std::vector<std::optional<PathIndex>>& path_map);

    nlohmann::json to_json() const;
    static Supernet from_json(const TemplateNetwork& network, const nlohmann::json& doc);

private:
    void train_epoch(const Mask* fixed_mask, std::uint64_t epoch_seed, double& mean_loss);
    double validation_loss() const;

    TemplateNetwork network_;
    EvaluatorSpec spec_;
    Dataset data_;
    ParameterStore params_;
    ParameterStore adam_m_, adam_v_;
    std::uint64_t adam_steps_ = 0;
    std::uint64_t epochs_trained_ = 0;
};

std::size_t path_block_size(const OpKind& op, std::size_t width);

std::unique_ptr<Evaluator> make_evaluator(const TemplateNetwork& network, const EvaluatorSpec& spec);

} // namespace hilnas
