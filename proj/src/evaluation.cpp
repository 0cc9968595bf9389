#include "hilnas/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hilnas/error.hpp"
#include "hilnas/rng.hpp"

namespace hilnas {

namespace {

constexpr double kTieTolerance = 1e-12;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_mask(const TemplateNetwork& network, const Mask& mask) {
    if (mask.template_version() != network.version())
        throw Error(ErrorKind::StaleState, "mask was built for template version " +
                                               std::to_string(mask.template_version()) + ", evaluator is at " +
                                               std::to_string(network.version()));
    if (!is_valid(network, mask)) fail_validation("mask is not a valid candidate", "mask");
}

std::uint64_t key_hash(const TemplateNetwork& network, PathIndex p) {
    return fnv1a64(path_key(network, p));
}

} // namespace

void validate(const EvaluatorSpec& spec) {
    if (!(spec.dropout_prob >= 0.0 && spec.dropout_prob < 1.0))
        fail_validation("dropout_prob must lie in [0, 1)", "evaluator.dropout_prob");
    if (spec.kind == EvaluatorKind::Supernet) {
        if (spec.dataset != "moons" && spec.dataset != "blobs" && spec.dataset != "digits")
            fail_validation("unknown dataset '" + spec.dataset + "'", "evaluator.dataset");
        if (spec.samples < 20) fail_validation("samples must be at least 20", "evaluator.samples");
        if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0))
            fail_validation("validation_fraction must lie in (0, 1)", "evaluator.validation_fraction");
        if (spec.width < 1) fail_validation("width must be positive", "evaluator.width");
        if (!(spec.learning_rate > 0.0)) fail_validation("learning_rate must be positive", "evaluator.learning_rate");
        if (spec.batch_size < 1) fail_validation("batch_size must be positive", "evaluator.batch_size");
    }
}

nlohmann::json evaluator_spec_to_json(const EvaluatorSpec& s) {
    return {{"kind", s.kind == EvaluatorKind::Tabular ? "tabular" : "supernet"},
            {"seed", s.seed},
            {"dropout_prob", s.dropout_prob},
            {"base", s.base},
            {"weight_scale", s.weight_scale},
            {"interaction_scale", s.interaction_scale},
            {"dataset", s.dataset},
            {"samples", s.samples},
            {"noise", s.noise},
            {"validation_fraction", s.validation_fraction},
            {"width", s.width},
            {"learning_rate", s.learning_rate},
            {"batch_size", s.batch_size}};
}

EvaluatorSpec evaluator_spec_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) fail_validation("evaluator config must be an object", "evaluator");
    EvaluatorSpec s;
    try {
        const auto kind = doc.value("kind", std::string("tabular"));
        if (kind == "tabular") s.kind = EvaluatorKind::Tabular;
        else if (kind == "supernet") s.kind = EvaluatorKind::Supernet;
        else fail_validation("unknown evaluator kind '" + kind + "'", "evaluator.kind");
        s.seed = doc.value("seed", s.seed);
        s.dropout_prob = doc.value("dropout_prob", s.dropout_prob);
        s.base = doc.value("base", s.base);
        s.weight_scale = doc.value("weight_scale", s.weight_scale);
        s.interaction_scale = doc.value("interaction_scale", s.interaction_scale);
        s.dataset = doc.value("dataset", s.dataset);
        s.samples = doc.value("samples", s.samples);
        s.noise = doc.value("noise", s.noise);
        s.validation_fraction = doc.value("validation_fraction", s.validation_fraction);
        s.width = doc.value("width", s.width);
        s.learning_rate = doc.value("learning_rate", s.learning_rate);
        s.batch_size = doc.value("batch_size", s.batch_size);
    } catch (const nlohmann::json::exception& e) {
        fail_validation(std::string("evaluator config has a field of the wrong type: ") + e.what(), "evaluator");
    }
    validate(s);
    return s;
}

// ---------------------------------------------------------------------------
// Tabular oracle

TabularOracle TabularOracle::generate(const TemplateNetwork& network, const EvaluatorSpec& spec) {
    validate(spec);
    TabularOracle oracle(network);
    oracle.base_ = spec.base;
    std::vector<std::uint64_t> keys(network.path_count());
    for (PathIndex p = 0; p < network.path_count(); ++p) keys[p] = key_hash(network, p);

    for (std::uint64_t attempt = 0; attempt < 16; ++attempt) {
        oracle.seed_ = spec.seed + attempt;
        oracle.weights_.assign(network.path_count(), 0.0);
        for (PathIndex p = 0; p < network.path_count(); ++p) {
            Rng rng(derive_seed(oracle.seed_, "weight", keys[p]));
            oracle.weights_[p] = spec.weight_scale * rng.normal();
        }
        oracle.interactions_.clear();
        for (const PathRange& r : network.cell_ranges()) {
            std::vector<double> table(r.size() * r.size(), 0.0);
            for (PathIndex p = r.begin; p < r.end; ++p)
                for (PathIndex q = p + 1; q < r.end; ++q) {
                    Rng rng(derive_seed(oracle.seed_, "pair", std::min(keys[p], keys[q]), std::max(keys[p], keys[q])));
                    table[(p - r.begin) * r.size() + (q - r.begin)] = spec.interaction_scale * rng.normal();
                }
            oracle.interactions_.push_back(std::move(table));
        }
        bool tied = false;
        oracle.best_masks(2'000'000, tied);
        if (!tied) break;
    }
    return oracle;
}

double TabularOracle::score(const Mask& mask) const {
    double s = base_;
    const auto ranges = network_.cell_ranges();
    for (std::size_t c = 0; c < ranges.size(); ++c) {
        const PathRange& r = ranges[c];
        std::vector<PathIndex> on;
        for (PathIndex p = r.begin; p < r.end; ++p)
            if (mask.test(p)) on.push_back(p);
        for (std::size_t i = 0; i < on.size(); ++i) {
            s += weights_[on[i]];
            for (std::size_t j = i + 1; j < on.size(); ++j)
                s += interactions_[c][(on[i] - r.begin) * r.size() + (on[j] - r.begin)];
        }
    }
    return s;
}

double TabularOracle::accuracy(const Mask& mask) const {
    check_mask(network_, mask);
    return logistic(score(mask));
}

double TabularOracle::evaluate(const Mask& mask, std::uint64_t) const { return accuracy(mask); }

FinalReport TabularOracle::finalize(const Mask& mask, int budget_epochs, std::uint64_t) const {
    return FinalReport{accuracy(mask), parameter_count(mask), budget_epochs};
}

std::size_t TabularOracle::parameter_count(const Mask& mask) const { return mask.count(); }

std::optional<Mask> TabularOracle::best_masks(std::uint64_t limit, bool& tied) const {
    tied = false;
    Mask best(network_.path_count(), network_.version());
    const auto ranges = network_.cell_ranges();
    for (std::size_t c = 0; c < ranges.size(); ++c) {
        const PathRange& r = ranges[c];
        std::vector<const NodeGroup*> groups;
        std::uint64_t configs = 1;
        for (const NodeGroup& g : network_.node_groups()) {
            if (g.cell != c) continue;
            groups.push_back(&g);
            const std::size_t sources =
                network_.cells()[c].nodes[static_cast<std::size_t>(g.node)].allowed_inputs.size();
            const std::size_t ops = network_.cells()[c].ops.size();
            configs *= sources * (sources - 1) / 2 * ops * ops;
            if (configs > limit) return std::nullopt;
        }
        // Depth-first over nodes; each node picks two paths with distinct sources.
        std::vector<PathIndex> chosen;
        std::vector<PathIndex> best_cell;
        double best_score = -INFINITY;
        bool cell_tied = false;
        auto cell_score = [&]() {
            double s = 0.0;
            for (std::size_t i = 0; i < chosen.size(); ++i) {
                s += weights_[chosen[i]];
                for (std::size_t j = i + 1; j < chosen.size(); ++j) {
                    const PathIndex a = std::min(chosen[i], chosen[j]);
                    const PathIndex b = std::max(chosen[i], chosen[j]);
                    s += interactions_[c][(a - r.begin) * r.size() + (b - r.begin)];
                }
            }
            return s;
        };
        std::function<void(std::size_t)> walk = [&](std::size_t gi) {
            if (gi == groups.size()) {
                const double s = cell_score();
                if (s > best_score + kTieTolerance) {
                    best_score = s;
                    best_cell = chosen;
                    cell_tied = false;
                } else if (std::abs(s - best_score) <= kTieTolerance) {
                    cell_tied = true;
                }
                return;
            }
            const PathRange& pr = groups[gi]->paths;
            for (PathIndex a = pr.begin; a < pr.end; ++a)
                for (PathIndex b = a + 1; b < pr.end; ++b) {
                    if (network_.path(a).source == network_.path(b).source) continue;
                    chosen.push_back(a);
                    chosen.push_back(b);
                    walk(gi + 1);
                    chosen.pop_back();
                    chosen.pop_back();
                }
        };
        walk(0);
        tied = tied || cell_tied;
        for (PathIndex p : best_cell) best.set(p);
    }
    return best;
}

std::optional<Mask> TabularOracle::optimum(std::uint64_t limit) const {
    bool tied = false;
    return best_masks(limit, tied);
}

nlohmann::json TabularOracle::to_json() const {
    return {{"kind", "tabular"},
            {"template_version", network_.version()},
            {"seed", seed_},
            {"base", base_},
            {"weights", weights_},
            {"interactions", interactions_}};
}

TabularOracle TabularOracle::from_json(const TemplateNetwork& network, const nlohmann::json& doc) {
    TabularOracle oracle(network);
    try {
        if (doc.at("kind").get<std::string>() != "tabular") fail_validation("not a tabular oracle", "oracle.kind");
        if (doc.at("template_version").get<std::uint64_t>() != network.version())
            throw Error(ErrorKind::StaleState, "oracle belongs to a different template version");
        oracle.seed_ = doc.at("seed").get<std::uint64_t>();
        oracle.base_ = doc.at("base").get<double>();
        oracle.weights_ = doc.at("weights").get<std::vector<double>>();
        oracle.interactions_ = doc.at("interactions").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
        fail_validation(std::string("malformed oracle: ") + e.what(), "oracle");
    }
    if (oracle.weights_.size() != network.path_count() || oracle.interactions_.size() != network.cell_ranges().size())
        fail_validation("oracle does not match the template shape", "oracle");
    for (std::size_t c = 0; c < oracle.interactions_.size(); ++c) {
        const auto n = network.cell_ranges()[c].size();
        if (oracle.interactions_[c].size() != n * n) fail_validation("oracle interaction table has the wrong size", "oracle");
    }
    return oracle;
}

// ---------------------------------------------------------------------------
// Datasets

Dataset make_dataset(const EvaluatorSpec& spec) {
    validate(spec);
    Rng rng(derive_seed(spec.seed, "dataset"));
    Dataset d;
    std::vector<double> xs;
    std::vector<int> ys;
    const std::size_t n = spec.samples;
    if (spec.dataset == "moons") {
        d.input_dim = 2;
        d.classes = 2;
        for (std::size_t i = 0; i < n; ++i) {
            const int label = static_cast<int>(i % 2);
            const double t = 3.141592653589793 * rng.uniform();
            double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
            double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
            xs.push_back(x + spec.noise * rng.normal());
            xs.push_back(y + spec.noise * rng.normal());
            ys.push_back(label);
        }
    } else if (spec.dataset == "blobs") {
        d.input_dim = 2;
        d.classes = 3;
        const double centers[3][2] = {{0.0, 0.0}, {1.5, 0.8}, {0.2, 1.7}};
        for (std::size_t i = 0; i < n; ++i) {
            const int label = static_cast<int>(i % 3);
            xs.push_back(centers[label][0] + (0.5 + spec.noise) * rng.normal());
            xs.push_back(centers[label][1] + (0.5 + spec.noise) * rng.normal());
            ys.push_back(label);
        }
    } else {
        // 8x8 prototypes, one per class, with pixel flips and Gaussian noise.
        d.input_dim = 64;
        d.classes = 10;
        std::vector<std::vector<double>> prototypes(10, std::vector<double>(64));
        Rng proto(derive_seed(spec.seed, "digits"));
        for (auto& p : prototypes)
            for (double& v : p) v = proto.uniform() < 0.35 ? 1.0 : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const int label = static_cast<int>(i % 10);
            for (double v : prototypes[static_cast<std::size_t>(label)]) {
                const double flipped = rng.uniform() < 0.1 ? 1.0 - v : v;
                xs.push_back(flipped + spec.noise * rng.normal());
            }
            ys.push_back(label);
        }
    }
    // Seeded shuffle, then split.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(spec.validation_fraction * n)));
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[k];
        const bool val = k < n_val;
        auto& X = val ? d.val_x : d.train_x;
        (val ? d.val_y : d.train_y).push_back(ys[i]);
        X.insert(X.end(), xs.begin() + static_cast<std::ptrdiff_t>(i * d.input_dim),
                 xs.begin() + static_cast<std::ptrdiff_t>((i + 1) * d.input_dim));
    }
    return d;
}

// ---------------------------------------------------------------------------
// Supernet

namespace {

std::size_t custom_width(const OpKind& op, std::size_t width) {
    auto it = op.params.find("width");
    if (it == op.params.end()) return width;
    return static_cast<std::size_t>(std::max(1.0, std::round(it->second)));
}

int taps_of(OpTag tag) { return tag == OpTag::SepConv5x5 ? 5 : 3; }

// Per-path activations kept for the backward pass.
struct PathCache {
    std::vector<double> x;       // op input
    std::vector<double> hidden;  // tanh activations (conv and dense ops)
    std::vector<double> pooled;  // pooled values (pool ops)
    std::vector<int> argmax;     // max-pool winners
};

std::size_t wrap(long i, std::size_t d) {
    const long n = static_cast<long>(d);
    return static_cast<std::size_t>(((i % n) + n) % n);
}

void op_forward(const OpKind& op, std::size_t d, std::span<const double> w, std::span<const double> x,
                std::span<double> y, PathCache& cache) {
    cache.x.assign(x.begin(), x.end());
    switch (op.tag) {
        case OpTag::Skip:
            for (std::size_t i = 0; i < d; ++i) y[i] += w[i] * x[i];
            break;
        case OpTag::AvgPool3x3:
            cache.pooled.assign(d, 0.0);
            for (std::size_t i = 0; i < d; ++i) {
                const double m = (x[wrap(static_cast<long>(i) - 1, d)] + x[i] + x[wrap(static_cast<long>(i) + 1, d)]) / 3.0;
                cache.pooled[i] = m;
                y[i] += w[i] * m;
            }
            break;
        case OpTag::MaxPool3x3:
            cache.pooled.assign(d, 0.0);
            cache.argmax.assign(d, 0);
            for (std::size_t i = 0; i < d; ++i) {
                std::size_t best = wrap(static_cast<long>(i) - 1, d);
                for (long t = 0; t <= 1; ++t) {
                    const std::size_t j = wrap(static_cast<long>(i) + t, d);
                    if (x[j] > x[best]) best = j;
                }
                cache.argmax[i] = static_cast<int>(best);
                cache.pooled[i] = x[best];
                y[i] += w[i] * x[best];
            }
            break;
        case OpTag::SepConv3x3:
        case OpTag::SepConv5x5: {
            const int taps = taps_of(op.tag);
            const long r = taps / 2;
            const auto k = w.subspan(0, d * static_cast<std::size_t>(taps));
            const auto W = w.subspan(d * static_cast<std::size_t>(taps), d * d);
            const auto b = w.subspan(d * static_cast<std::size_t>(taps) + d * d, d);
            cache.hidden.assign(d, 0.0);
            for (std::size_t i = 0; i < d; ++i) {
                double z = 0.0;
                for (int t = 0; t < taps; ++t)
                    z += k[i * static_cast<std::size_t>(taps) + static_cast<std::size_t>(t)] *
                         x[wrap(static_cast<long>(i) + t - r, d)];
                cache.hidden[i] = std::tanh(z);
            }
            for (std::size_t o = 0; o < d; ++o) {
                double acc = b[o];
                for (std::size_t i = 0; i < d; ++i) acc += W[o * d + i] * cache.hidden[i];
                y[o] += acc;
            }
            break;
        }
        case OpTag::Conv1x3_3x1:
        case OpTag::Custom: {
            const std::size_t h = op.tag == OpTag::Custom ? custom_width(op, d) : d;
            const auto A = w.subspan(0, h * d);
            const auto a = w.subspan(h * d, h);
            const auto B = w.subspan(h * d + h, d * h);
            const auto b = w.subspan(h * d + h + d * h, d);
            cache.hidden.assign(h, 0.0);
            for (std::size_t j = 0; j < h; ++j) {
                double z = a[j];
                for (std::size_t i = 0; i < d; ++i) z += A[j * d + i] * x[i];
                cache.hidden[j] = std::tanh(z);
            }
            for (std::size_t o = 0; o < d; ++o) {
                double acc = b[o];
                for (std::size_t j = 0; j < h; ++j) acc += B[o * h + j] * cache.hidden[j];
                y[o] += acc;
            }
            break;
        }
    }
}

// Accumulates parameter gradients into gw and input gradients into dx.
void op_backward(const OpKind& op, std::size_t d, std::span<const double> w, const PathCache& cache,
                 std::span<const double> dy, std::span<double> gw, std::span<double> dx) {
    const auto& x = cache.x;
    switch (op.tag) {
        case OpTag::Skip:
            for (std::size_t i = 0; i < d; ++i) {
                gw[i] += dy[i] * x[i];
                dx[i] += dy[i] * w[i];
            }
            break;
        case OpTag::AvgPool3x3:
            for (std::size_t i = 0; i < d; ++i) {
                gw[i] += dy[i] * cache.pooled[i];
                const double dm = dy[i] * w[i] / 3.0;
                dx[wrap(static_cast<long>(i) - 1, d)] += dm;
                dx[i] += dm;
                dx[wrap(static_cast<long>(i) + 1, d)] += dm;
            }
            break;
        case OpTag::MaxPool3x3:
            for (std::size_t i = 0; i < d; ++i) {
                gw[i] += dy[i] * cache.pooled[i];
                dx[static_cast<std::size_t>(cache.argmax[i])] += dy[i] * w[i];
            }
            break;
        case OpTag::SepConv3x3:
        case OpTag::SepConv5x5: {
            const int taps = taps_of(op.tag);
            const long r = taps / 2;
            const std::size_t nk = d * static_cast<std::size_t>(taps);
            const auto k = w.subspan(0, nk);
            const auto W = w.subspan(nk, d * d);
            std::vector<double> dz(d, 0.0);
            for (std::size_t o = 0; o < d; ++o) {
                gw[nk + d * d + o] += dy[o];
                for (std::size_t i = 0; i < d; ++i) {
                    gw[nk + o * d + i] += dy[o] * cache.hidden[i];
                    dz[i] += W[o * d + i] * dy[o];
                }
            }
            for (std::size_t i = 0; i < d; ++i) {
                dz[i] *= 1.0 - cache.hidden[i] * cache.hidden[i];
                for (int t = 0; t < taps; ++t) {
                    const std::size_t j = wrap(static_cast<long>(i) + t - r, d);
                    const std::size_t ki = i * static_cast<std::size_t>(taps) + static_cast<std::size_t>(t);
                    gw[ki] += dz[i] * x[j];
                    dx[j] += dz[i] * k[ki];
                }
            }
            break;
        }
        case OpTag::Conv1x3_3x1:
        case OpTag::Custom: {
            const std::size_t h = cache.hidden.size();
            const auto A = w.subspan(0, h * d);
            const auto B = w.subspan(h * d + h, d * h);
            const std::size_t off_a = h * d, off_B = h * d + h, off_b = h * d + h + d * h;
            std::vector<double> dz(h, 0.0);
            for (std::size_t o = 0; o < d; ++o) {
                gw[off_b + o] += dy[o];
                for (std::size_t j = 0; j < h; ++j) {
                    gw[off_B + o * h + j] += dy[o] * cache.hidden[j];
                    dz[j] += B[o * h + j] * dy[o];
                }
            }
            for (std::size_t j = 0; j < h; ++j) {
                dz[j] *= 1.0 - cache.hidden[j] * cache.hidden[j];
                gw[off_a + j] += dz[j];
                for (std::size_t i = 0; i < d; ++i) {
                    gw[j * d + i] += dz[j] * x[i];
                    dx[i] += dz[j] * A[j * d + i];
                }
            }
            break;
        }
    }
}

std::vector<double> init_block(const OpKind& op, std::size_t d, Rng& rng) {
    std::vector<double> w(path_block_size(op, d), 0.0);
    switch (op.tag) {
        case OpTag::Skip:
        case OpTag::AvgPool3x3:
        case OpTag::MaxPool3x3:
            for (double& v : w) v = 1.0 + 0.1 * rng.normal();
            break;
        case OpTag::SepConv3x3:
        case OpTag::SepConv5x5: {
            const std::size_t taps = static_cast<std::size_t>(taps_of(op.tag));
            for (std::size_t i = 0; i < d * taps; ++i) w[i] = rng.normal() / std::sqrt(static_cast<double>(taps));
            for (std::size_t i = 0; i < d * d; ++i) w[d * taps + i] = rng.normal() / std::sqrt(static_cast<double>(d));
            break;
        }
        case OpTag::Conv1x3_3x1:
        case OpTag::Custom: {
            const std::size_t h = op.tag == OpTag::Custom ? custom_width(op, d) : d;
            for (std::size_t i = 0; i < h * d; ++i) w[i] = rng.normal() / std::sqrt(static_cast<double>(d));
            for (std::size_t i = 0; i < d * h; ++i) w[h * d + h + i] = rng.normal() / std::sqrt(static_cast<double>(h));
            break;
        }
    }
    return w;
}

ParameterStore zeros_like(const ParameterStore& p) {
    ParameterStore z;
    z.stem.assign(p.stem.size(), 0.0);
    z.head.assign(p.head.size(), 0.0);
    for (const auto& b : p.paths) z.paths.emplace_back(b.size(), 0.0);
    return z;
}

ParameterStore init_parameters(const TemplateNetwork& network, const EvaluatorSpec& spec, std::size_t input_dim,
                               std::size_t classes, std::uint64_t seed) {
    const std::size_t d = spec.width;
    ParameterStore p;
    Rng stem(derive_seed(seed, "stem"));
    p.stem.assign(d * input_dim + d, 0.0);
    for (std::size_t i = 0; i < d * input_dim; ++i) p.stem[i] = stem.normal() / std::sqrt(static_cast<double>(input_dim));
    Rng head(derive_seed(seed, "head"));
    p.head.assign(classes * d + classes, 0.0);
    for (std::size_t i = 0; i < classes * d; ++i) p.head[i] = head.normal() / std::sqrt(static_cast<double>(d));
    for (PathIndex q = 0; q < network.path_count(); ++q) {
        Rng rng(derive_seed(seed, "path", key_hash(network, q)));
        p.paths.push_back(init_block(network.op_of(q), d, rng));
    }
    return p;
}

// Forward/backward of the whole network for one sample.
struct Forward {
    std::vector<double> stem_out;
    std::vector<std::vector<double>> cell_out;
    std::vector<double> logits;
    std::vector<PathCache> caches;  // indexed by path id, only active ones filled
};

} // namespace

std::size_t path_block_size(const OpKind& op, std::size_t width) {
    const std::size_t d = width;
    switch (op.tag) {
        case OpTag::Skip:
        case OpTag::AvgPool3x3:
        case OpTag::MaxPool3x3: return d;
        case OpTag::SepConv3x3: return 3 * d + d * d + d;
        case OpTag::SepConv5x5: return 5 * d + d * d + d;
        case OpTag::Conv1x3_3x1: return 2 * d * d + 2 * d;
        case OpTag::Custom: {
            const std::size_t h = custom_width(op, d);
            return 2 * h * d + h + d;
        }
    }
    return 0;
}

Supernet::Supernet(TemplateNetwork network, EvaluatorSpec spec)
    : network_(std::move(network)), spec_(std::move(spec)) {
    spec_.kind = EvaluatorKind::Supernet;
    validate(spec_);
    data_ = make_dataset(spec_);
    params_ = init_parameters(network_, spec_, data_.input_dim, data_.classes, spec_.seed);
    adam_m_ = zeros_like(params_);
    adam_v_ = zeros_like(params_);
}

std::size_t Supernet::parameter_count(const Mask& mask) const {
    std::size_t total = 0;
    for (PathIndex p : mask.active()) total += params_.paths.at(p).size();
    return total;
}

namespace {

void run_forward(const TemplateNetwork& net, const ParameterStore& params, std::size_t d, std::size_t input_dim,
                 std::size_t classes, std::span<const double> x, const Mask& mask, const std::vector<bool>* drop,
                 Forward& f) {
    f.stem_out.assign(d, 0.0);
    for (std::size_t o = 0; o < d; ++o) {
        double z = params.stem[d * input_dim + o];
        for (std::size_t i = 0; i < input_dim; ++i) z += params.stem[o * input_dim + i] * x[i];
        f.stem_out[o] = z;
    }
    const auto& cells = net.cells();
    f.cell_out.assign(cells.size(), std::vector<double>(d, 0.0));
    f.caches.resize(net.path_count());
    std::vector<std::vector<double>> node_out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const std::vector<double>& in1 = c >= 1 ? f.cell_out[c - 1] : f.stem_out;
        const std::vector<double>& in0 = c >= 2 ? f.cell_out[c - 2] : f.stem_out;
        node_out.assign(cells[c].nodes.size(), std::vector<double>(d, 0.0));
        const PathRange r = net.cell_ranges()[c];
        for (PathIndex p = r.begin; p < r.end; ++p) {
            if (!mask.test(p) || (drop && (*drop)[p])) continue;
            const PathInfo& info = net.path(p);
            const std::vector<double>& src =
                info.source.is_input() ? (info.source.input_index() == 0 ? in0 : in1)
                                       : node_out[static_cast<std::size_t>(info.source.node_index())];
            op_forward(net.op_of(p), d, params.paths[p], src, node_out[static_cast<std::size_t>(info.dst_node)],
                       f.caches[p]);
        }
        const double inv = 1.0 / static_cast<double>(node_out.size());
        for (const auto& n : node_out)
            for (std::size_t i = 0; i < d; ++i) f.cell_out[c][i] += n[i] * inv;
    }
    const std::vector<double>& last = f.cell_out.back();
    f.logits.assign(classes, 0.0);
    for (std::size_t k = 0; k < classes; ++k) {
        double z = params.head[classes * d + k];
        for (std::size_t i = 0; i < d; ++i) z += params.head[k * d + i] * last[i];
        f.logits[k] = z;
    }
}

// Cross-entropy of one sample; fills probabilities into `prob`.
double cross_entropy(const std::vector<double>& logits, int label, std::vector<double>& prob) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    prob.resize(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) sum += (prob[k] = std::exp(logits[k] - peak));
    for (double& v : prob) v /= sum;
    return -(logits[static_cast<std::size_t>(label)] - peak - std::log(sum));
}

void run_backward(const TemplateNetwork& net, const ParameterStore& params, std::size_t d, std::size_t input_dim,
                  std::size_t classes, std::span<const double> x, const Mask& mask, const Forward& f,
                  const std::vector<double>& dlogits, ParameterStore& grad) {
    const auto& cells = net.cells();
    std::vector<std::vector<double>> d_cell(cells.size(), std::vector<double>(d, 0.0));
    std::vector<double> d_stem(d, 0.0);
    const std::vector<double>& last = f.cell_out.back();
    for (std::size_t k = 0; k < classes; ++k) {
        grad.head[classes * d + k] += dlogits[k];
        for (std::size_t i = 0; i < d; ++i) {
            grad.head[k * d + i] += dlogits[k] * last[i];
            d_cell.back()[i] += params.head[k * d + i] * dlogits[k];
        }
    }
    for (std::size_t c = cells.size(); c-- > 0;) {
        const double inv = 1.0 / static_cast<double>(cells[c].nodes.size());
        std::vector<std::vector<double>> d_node(cells[c].nodes.size(), std::vector<double>(d, 0.0));
        for (auto& dn : d_node)
            for (std::size_t i = 0; i < d; ++i) dn[i] = d_cell[c][i] * inv;
        std::vector<double>& d_in1 = c >= 1 ? d_cell[c - 1] : d_stem;
        std::vector<double>& d_in0 = c >= 2 ? d_cell[c - 2] : d_stem;
        const PathRange r = net.cell_ranges()[c];
        for (PathIndex p = r.end; p-- > r.begin;) {
            if (!mask.test(p) || f.caches[p].x.empty()) continue;
            const PathInfo& info = net.path(p);
            std::vector<double>& d_src = info.source.is_input()
                                             ? (info.source.input_index() == 0 ? d_in0 : d_in1)
                                             : d_node[static_cast<std::size_t>(info.source.node_index())];
            op_backward(net.op_of(p), d, params.paths[p], f.caches[p], d_node[static_cast<std::size_t>(info.dst_node)],
                        grad.paths[p], d_src);
        }
    }
    for (std::size_t o = 0; o < d; ++o) {
        const double dz = d_stem[o];
        grad.stem[d * input_dim + o] += dz;
        for (std::size_t i = 0; i < input_dim; ++i) grad.stem[o * input_dim + i] += dz * x[i];
    }
}

} // namespace

double Supernet::loss_and_gradient(const Mask& mask, std::span<const std::size_t> rows, bool validation,
                                   ParameterStore* gradient) const {
    check_mask(network_, mask);
    const auto& X = validation ? data_.val_x : data_.train_x;
    const auto& Y = validation ? data_.val_y : data_.train_y;
    const std::size_t in = data_.input_dim;
    if (gradient) *gradient = zeros_like(params_);
    Forward f;
    std::vector<double> prob;
    double total = 0.0;
    const double scale = 1.0 / static_cast<double>(rows.size());
    for (std::size_t row : rows) {
        const std::span<const double> x(X.data() + row * in, in);
        run_forward(network_, params_, spec_.width, in, data_.classes, x, mask, nullptr, f);
        total += cross_entropy(f.logits, Y[row], prob);
        if (gradient) {
            prob[static_cast<std::size_t>(Y[row])] -= 1.0;
            for (double& v : prob) v *= scale;
            run_backward(network_, params_, spec_.width, in, data_.classes, x, mask, f, prob, *gradient);
        }
        for (auto& cache : f.caches) cache.x.clear();
    }
    return total * scale;
}

double Supernet::validation_accuracy(const Mask& mask, const std::vector<bool>& drop) const {
    check_mask(network_, mask);
    const std::size_t in = data_.input_dim;
    Forward f;
    std::size_t correct = 0;
    for (std::size_t row = 0; row < data_.val_size(); ++row) {
        run_forward(network_, params_, spec_.width, in, data_.classes,
                    std::span<const double>(data_.val_x.data() + row * in, in), mask, &drop, f);
        const auto pred = std::max_element(f.logits.begin(), f.logits.end()) - f.logits.begin();
        correct += pred == data_.val_y[row];
    }
    return static_cast<double>(correct) / static_cast<double>(data_.val_size());
}

double Supernet::evaluate(const Mask& mask, std::uint64_t seed) const {
    std::vector<bool> drop(network_.path_count(), false);
    if (spec_.dropout_prob > 0.0) {
        Rng rng(seed);
        for (PathIndex p = 0; p < drop.size(); ++p)
            if (mask.test(p)) drop[p] = rng.uniform() < spec_.dropout_prob;
    }
    return validation_accuracy(mask, drop);
}

void Supernet::train_epoch(const Mask* fixed_mask, std::uint64_t epoch_seed, double& mean_loss) {
    const std::size_t n = data_.train_size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed(epoch_seed, "shuffle"));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    const auto uniform = uniform_probabilities(network_);
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    double total = 0.0;
    std::size_t batches = 0;
    ParameterStore grad;
    for (std::size_t start = 0, b = 0; start < n; start += spec_.batch_size, ++b) {
        const std::size_t end = std::min(n, start + spec_.batch_size);
        const Mask mask =
            fixed_mask ? *fixed_mask : sample_mask(network_, uniform, derive_seed(epoch_seed, "mask", b));
        total += loss_and_gradient(mask, std::span<const std::size_t>(order.data() + start, end - start), false, &grad);
        ++batches;

        ++adam_steps_;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_steps_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_steps_));
        auto step = [&](std::vector<double>& w, const std::vector<double>& g, std::vector<double>& m,
                        std::vector<double>& v) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
                v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
                w[i] -= spec_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
            }
        };
        step(params_.stem, grad.stem, adam_m_.stem, adam_v_.stem);
        step(params_.head, grad.head, adam_m_.head, adam_v_.head);
        // Only paths in the sampled subnetwork are touched.
        for (PathIndex p : mask.active()) step(params_.paths[p], grad.paths[p], adam_m_.paths[p], adam_v_.paths[p]);
    }
    mean_loss = total / static_cast<double>(batches);
}

double Supernet::validation_loss() const {
    // Averaged over a fixed panel of uniformly sampled candidates.
    constexpr std::uint64_t kPanel = 4;
    const auto uniform = uniform_probabilities(network_);
    std::vector<std::size_t> rows(data_.val_size());
    std::iota(rows.begin(), rows.end(), 0);
    double total = 0.0;
    for (std::uint64_t i = 0; i < kPanel; ++i) {
        const Mask m = sample_mask(network_, uniform, derive_seed(spec_.seed, "validation-panel", i));
        total += loss_and_gradient(m, rows, true, nullptr);
    }
    return total / static_cast<double>(kPanel);
}

TrainReport Supernet::train(int epochs, const std::function<bool()>& should_stop,
                            const std::function<void(const LossSample&)>& on_epoch) {
    if (epochs < 1) fail_validation("epochs must be at least 1", "epochs");
    TrainReport report;
    for (int e = 0; e < epochs; ++e) {
        if (should_stop && should_stop()) {
            report.stopped = true;
            break;
        }
        const ParameterStore snapshot = params_, m = adam_m_, v = adam_v_;
        const std::uint64_t steps = adam_steps_;
        double train_loss = 0.0;
        train_epoch(nullptr, derive_seed(spec_.seed, "train", epochs_trained_), train_loss);
        const double val_loss = validation_loss();
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
            params_ = snapshot;
            adam_m_ = m;
            adam_v_ = v;
            adam_steps_ = steps;
            report.diagnostic = "non-finite loss at epoch " + std::to_string(epochs_trained_ + 1) +
                                "; parameters rolled back to the last finite epoch";
            break;
        }
        ++epochs_trained_;
        LossSample sample{epochs_trained_, train_loss, val_loss};
        report.curve.push_back(sample);
        if (on_epoch) on_epoch(sample);
    }
    return report;
}

FinalReport Supernet::finalize(const Mask& mask, int budget_epochs, std::uint64_t seed) const {
    check_mask(network_, mask);
    if (budget_epochs < 1) fail_validation("budget_epochs must be at least 1", "budget_epochs");
    EvaluatorSpec fresh_spec = spec_;
    Supernet standalone(network_, fresh_spec);
    standalone.params_ = init_parameters(network_, spec_, data_.input_dim, data_.classes, derive_seed(seed, "final"));
    for (int e = 0; e < budget_epochs; ++e) {
        double loss = 0.0;
        standalone.train_epoch(&mask, derive_seed(seed, "final-epoch", static_cast<std::uint64_t>(e)), loss);
        if (!std::isfinite(loss)) throw Error(ErrorKind::Evaluation, "non-finite loss while retraining candidate");
    }
    const std::vector<bool> no_drop(network_.path_count(), false);
    return FinalReport{standalone.validation_accuracy(mask, no_drop), parameter_count(mask), budget_epochs};
}

void Supernet::adopt_parameters(const Supernet& previous, const std::vector<std::optional<PathIndex>>& path_map) {
    if (previous.params_.stem.size() == params_.stem.size()) params_.stem = previous.params_.stem;
    if (previous.params_.head.size() == params_.head.size()) params_.head = previous.params_.head;
    for (PathIndex p = 0; p < path_map.size() && p < previous.params_.paths.size(); ++p) {
        if (!path_map[p]) continue;
        auto& dst = params_.paths.at(*path_map[p]);
        if (dst.size() == previous.params_.paths[p].size()) dst = previous.params_.paths[p];
    }
    epochs_trained_ = previous.epochs_trained_;
}

nlohmann::json Supernet::to_json() const {
    auto store = [](const ParameterStore& p) {
        return nlohmann::json{{"stem", p.stem}, {"head", p.head}, {"paths", p.paths}};
    };
    return {{"kind", "supernet"},
            {"spec", evaluator_spec_to_json(spec_)},
            {"template_version", network_.version()},
            {"epochs_trained", epochs_trained_},
            {"adam_steps", adam_steps_},
            {"params", store(params_)},
            {"adam_m", store(adam_m_)},
            {"adam_v", store(adam_v_)}};
}

Supernet Supernet::from_json(const TemplateNetwork& network, const nlohmann::json& doc) {
    Supernet net(network, evaluator_spec_from_json(doc.at("spec")));
    auto load = [&](const nlohmann::json& j, ParameterStore& p) {
        ParameterStore q;
        q.stem = j.at("stem").get<std::vector<double>>();
        q.head = j.at("head").get<std::vector<double>>();
        q.paths = j.at("paths").get<std::vector<std::vector<double>>>();
        if (q.stem.size() != p.stem.size() || q.head.size() != p.head.size() || q.paths.size() != p.paths.size())
            fail_validation("supernet parameters do not match the template", "supernet.params");
        for (std::size_t i = 0; i < q.paths.size(); ++i)
            if (q.paths[i].size() != p.paths[i].size())
                fail_validation("supernet parameter block has the wrong size", "supernet.params");
        p = std::move(q);
    };
    try {
        if (doc.at("template_version").get<std::uint64_t>() != network.version())
            throw Error(ErrorKind::StaleState, "supernet belongs to a different template version");
        net.epochs_trained_ = doc.at("epochs_trained").get<std::uint64_t>();
        net.adam_steps_ = doc.at("adam_steps").get<std::uint64_t>();
        load(doc.at("params"), net.params_);
        load(doc.at("adam_m"), net.adam_m_);
        load(doc.at("adam_v"), net.adam_v_);
    } catch (const nlohmann::json::exception& e) {
        fail_validation(std::string("malformed supernet: ") + e.what(), "supernet");
    }
    return net;
}

std::unique_ptr<Evaluator> make_evaluator(const TemplateNetwork& network, const EvaluatorSpec& spec) {
    if (spec.kind == EvaluatorKind::Tabular) return std::make_unique<TabularOracle>(TabularOracle::generate(network, spec));
    return std::make_unique<Supernet>(network, spec);
}

} // namespace hilnas
