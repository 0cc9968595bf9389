#include "hilnas/projection.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "hilnas/error.hpp"
#include "hilnas/rng.hpp"

namespace hilnas {

std::vector<CandidateRecord> sample_search_space(const TemplateNetwork& network, std::size_t count,
                                                 std::uint64_t seed) {
    if (count < 2) fail_validation("sample count must be at least 2", "count");
    const std::uint64_t total = count_valid_masks(network);
    if (total < count)
        fail_validation("template has only " + std::to_string(total) + " valid candidates, fewer than the requested " +
                            std::to_string(count),
                        "count");
    const auto probs = uniform_probabilities(network);
    std::set<Mask> seen;
    std::vector<CandidateRecord> out;
    const std::uint64_t max_attempts = 50 * count + 1000;
    for (std::uint64_t attempt = 0; out.size() < count; ++attempt) {
        if (attempt >= max_attempts)
            fail_validation("could not draw " + std::to_string(count) + " distinct candidates", "count");
        Mask m = sample_mask(network, probs, derive_seed(seed, "space", attempt));
        if (!seen.insert(m).second) continue;
        CandidateRecord r;
        r.id = out.size();
        r.mask = std::move(m);
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph edit distance

namespace {

struct Adjacency {
    int n = 0;
    std::vector<char> bits;
    bool operator()(int a, int b) const { return bits[static_cast<std::size_t>(a * n + b)] != 0; }
};

Adjacency adjacency(const LabeledGraph& g) {
    Adjacency a;
    a.n = g.size();
    a.bits.assign(static_cast<std::size_t>(a.n * a.n), 0);
    for (auto [u, v] : g.edges) a.bits[static_cast<std::size_t>(u * a.n + v)] = 1;
    return a;
}

// Edge cost added by assigning g1 vertex u to v, against the already
// assigned vertices in `done`.
int edge_increment(const Adjacency& a1, const Adjacency& a2, const std::vector<int>& map,
                   const std::vector<int>& done, int u, int v) {
    int cost = 0;
    for (int w : done) {
        const int vw = map[static_cast<std::size_t>(w)];
        const bool mapped = v >= 0 && vw >= 0;
        cost += a1(u, w) != (mapped && a2(v, vw));
        cost += a1(w, u) != (mapped && a2(vw, v));
    }
    return cost;
}

std::vector<int> greedy_assignment(const LabeledGraph& g1, const LabeledGraph& g2, const Adjacency& a1,
                                   const Adjacency& a2) {
    std::vector<int> map(static_cast<std::size_t>(g1.size()), -1);
    std::vector<char> used(static_cast<std::size_t>(g2.size()), 0);
    std::vector<int> done;
    for (int u = 0; u < g1.size(); ++u) {
        int best_v = -1;
        int best = 1 + edge_increment(a1, a2, map, done, u, -1);
        for (int v = 0; v < g2.size(); ++v) {
            if (used[static_cast<std::size_t>(v)]) continue;
            const int c = (g1.labels[static_cast<std::size_t>(u)] != g2.labels[static_cast<std::size_t>(v)]) +
                          edge_increment(a1, a2, map, done, u, v);
            if (c < best) {
                best = c;
                best_v = v;
            }
        }
        map[static_cast<std::size_t>(u)] = best_v;
        if (best_v >= 0) used[static_cast<std::size_t>(best_v)] = 1;
        done.push_back(u);
    }
    return map;
}

// First-improvement descent over swaps of two images and moves to unused
// g2 vertices.
int improve_assignment(const LabeledGraph& g1, const LabeledGraph& g2, std::vector<int>& map, int passes) {
    int cost = assignment_cost(g1, g2, map);
    for (int pass = 0; pass < passes; ++pass) {
        bool improved = false;
        for (std::size_t a = 0; a < map.size(); ++a) {
            for (std::size_t b = a + 1; b < map.size(); ++b) {
                if (map[a] == map[b]) continue;
                std::swap(map[a], map[b]);
                const int c = assignment_cost(g1, g2, map);
                if (c < cost) {
                    cost = c;
                    improved = true;
                } else {
                    std::swap(map[a], map[b]);
                }
            }
            std::vector<char> used(static_cast<std::size_t>(g2.size()), 0);
            for (int v : map)
                if (v >= 0) used[static_cast<std::size_t>(v)] = 1;
            for (int v = -1; v < g2.size(); ++v) {
                if (v >= 0 && used[static_cast<std::size_t>(v)]) continue;
                if (v == map[a]) continue;
                const int old = map[a];
                map[a] = v;
                const int c = assignment_cost(g1, g2, map);
                if (c < cost) {
                    cost = c;
                    improved = true;
                    if (old >= 0) used[static_cast<std::size_t>(old)] = 0;
                    if (v >= 0) used[static_cast<std::size_t>(v)] = 1;
                } else {
                    map[a] = old;
                }
            }
        }
        if (!improved) break;
    }
    return cost;
}

class ExactGed {
public:
    ExactGed(const LabeledGraph& g1, const LabeledGraph& g2, int upper_bound)
        : g1_(g1), g2_(g2), a1_(adjacency(g1)), a2_(adjacency(g2)), best_(upper_bound) {
        order_.resize(static_cast<std::size_t>(g1.size()));
        std::iota(order_.begin(), order_.end(), 0);
        std::vector<int> degree(order_.size(), 0);
        for (auto [u, v] : g1.edges) {
            ++degree[static_cast<std::size_t>(u)];
            ++degree[static_cast<std::size_t>(v)];
        }
        std::stable_sort(order_.begin(), order_.end(),
                         [&](int a, int b) { return degree[static_cast<std::size_t>(a)] > degree[static_cast<std::size_t>(b)]; });
        map_.assign(order_.size(), -2);
        used_.assign(static_cast<std::size_t>(g2.size()), 0);
    }

    int solve() {
        search(0, 0);
        return best_;
    }

private:
    int lower_bound(std::size_t depth) const {
        // Vertices: unmatched labels on either side.
        std::map<std::string, int> remaining;
        int r1 = 0, r2 = 0;
        for (std::size_t i = depth; i < order_.size(); ++i) {
            ++remaining[g1_.labels[static_cast<std::size_t>(order_[i])]];
            ++r1;
        }
        int common = 0;
        for (int v = 0; v < g2_.size(); ++v) {
            if (used_[static_cast<std::size_t>(v)]) continue;
            ++r2;
            auto it = remaining.find(g2_.labels[static_cast<std::size_t>(v)]);
            if (it != remaining.end() && it->second > 0) {
                --it->second;
                ++common;
            }
        }
        // Edges: undecided edges can pair up at best one to one.
        int e1 = 0, e2 = 0;
        for (auto [u, v] : g1_.edges)
            if (map_[static_cast<std::size_t>(u)] == -2 || map_[static_cast<std::size_t>(v)] == -2) ++e1;
        for (auto [u, v] : g2_.edges)
            if (!used_[static_cast<std::size_t>(u)] || !used_[static_cast<std::size_t>(v)]) ++e2;
        return std::max(r1, r2) - common + std::abs(e1 - e2);
    }

    void search(std::size_t depth, int cost) {
        if (depth == order_.size()) {
            int extra = 0;
            for (int v = 0; v < g2_.size(); ++v) extra += !used_[static_cast<std::size_t>(v)];
            for (auto [u, v] : g2_.edges)
                extra += !used_[static_cast<std::size_t>(u)] || !used_[static_cast<std::size_t>(v)];
            best_ = std::min(best_, cost + extra);
            return;
        }
        const int u = order_[depth];
        std::vector<int> done(order_.begin(), order_.begin() + static_cast<std::ptrdiff_t>(depth));
        // Same-label images first so good bounds are found early.
        std::vector<std::pair<int, int>> options;
        for (int v = 0; v < g2_.size(); ++v) {
            if (used_[static_cast<std::size_t>(v)]) continue;
            const int c = (g1_.labels[static_cast<std::size_t>(u)] != g2_.labels[static_cast<std::size_t>(v)]) +
                          edge_increment(a1_, a2_, map_, done, u, v);
            options.emplace_back(c, v);
        }
        options.emplace_back(1 + edge_increment(a1_, a2_, map_, done, u, -1), -1);
        std::stable_sort(options.begin(), options.end());
        for (auto [c, v] : options) {
            if (cost + c >= best_) continue;
            map_[static_cast<std::size_t>(u)] = v;
            if (v >= 0) used_[static_cast<std::size_t>(v)] = 1;
            if (cost + c + lower_bound(depth + 1) < best_) search(depth + 1, cost + c);
            if (v >= 0) used_[static_cast<std::size_t>(v)] = 0;
            map_[static_cast<std::size_t>(u)] = -2;
        }
    }

    const LabeledGraph& g1_;
    const LabeledGraph& g2_;
    Adjacency a1_, a2_;
    std::vector<int> order_;
    std::vector<int> map_;  // -2 unassigned, -1 deleted
    std::vector<char> used_;
    int best_;
};

} // namespace

int assignment_cost(const LabeledGraph& g1, const LabeledGraph& g2, const std::vector<int>& map) {
    int cost = 0;
    std::vector<char> used(static_cast<std::size_t>(g2.size()), 0);
    for (int u = 0; u < g1.size(); ++u) {
        const int v = map[static_cast<std::size_t>(u)];
        if (v < 0) {
            ++cost;
            continue;
        }
        used[static_cast<std::size_t>(v)] = 1;
        cost += g1.labels[static_cast<std::size_t>(u)] != g2.labels[static_cast<std::size_t>(v)];
    }
    cost += static_cast<int>(std::count(used.begin(), used.end(), 0));
    int matched = 0;
    for (auto [a, b] : g1.edges) {
        const int va = map[static_cast<std::size_t>(a)], vb = map[static_cast<std::size_t>(b)];
        if (va >= 0 && vb >= 0 && g2.has_edge(va, vb)) ++matched;
    }
    return cost + static_cast<int>(g1.edges.size() + g2.edges.size()) - 2 * matched;
}

GedResult graph_edit_distance(const LabeledGraph& g1, const LabeledGraph& g2, int size_cap) {
    if (g1 == g2) return {0.0, true};
    const Adjacency a1 = adjacency(g1), a2 = adjacency(g2);
    std::vector<int> map = greedy_assignment(g1, g2, a1, a2);
    const int upper = improve_assignment(g1, g2, map, 4);
    if (g1.size() > size_cap || g2.size() > size_cap) return {static_cast<double>(upper), false};
    // The search only accepts strictly better costs, so seed it one above.
    ExactGed exact(g1, g2, upper + 1);
    return {static_cast<double>(exact.solve()), true};
}

std::string DistanceMatrix::digest() const {
    return hex_digest(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(values.data()),
                                                     values.size() * sizeof(double)));
}

DistanceMatrix build_distance_matrix(const std::vector<LabeledGraph>& graphs, int size_cap) {
    if (graphs.size() < 2) fail_validation("need at least two graphs", "graphs");
    DistanceMatrix m;
    m.n = graphs.size();
    m.values.assign(m.n * m.n, 0.0);
    for (std::size_t i = 0; i < m.n; ++i)
        for (std::size_t j = i + 1; j < m.n; ++j) {
            const GedResult r = graph_edit_distance(graphs[i], graphs[j], size_cap);
            if (!r.exact) m.method = DistanceMethod::Approx;
            m.values[i * m.n + j] = m.values[j * m.n + i] = r.distance;
        }
    return m;
}

// ---------------------------------------------------------------------------
// Embedding

const char* embed_method_name(EmbedMethod method) noexcept { return method == EmbedMethod::TSNE ? "tsne" : "mds"; }

double tsne_perplexity(std::size_t n) noexcept {
    return std::min(5.0, std::floor((static_cast<double>(n) - 1.0) / 3.0));
}

namespace {

void center(std::vector<Point2>& pts) {
    double mx = 0.0, my = 0.0;
    for (const auto& p : pts) {
        mx += p.x;
        my += p.y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    for (auto& p : pts) {
        p.x -= mx;
        p.y -= my;
    }
}

std::vector<Point2> classical_mds(const DistanceMatrix& m) {
    const auto n = static_cast<Eigen::Index>(m.n);
    Eigen::MatrixXd d2(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = m.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            d2(i, j) = d * d;
        }
    const Eigen::MatrixXd J =
        Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    const Eigen::MatrixXd B = -0.5 * J * d2 * J;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(B);
    std::vector<Point2> pts(m.n);
    for (int axis = 0; axis < 2 && axis < n; ++axis) {
        const Eigen::Index col = n - 1 - axis;
        const double lambda = std::max(0.0, solver.eigenvalues()(col));
        Eigen::VectorXd v = solver.eigenvectors().col(col);
        // Eigenvectors are defined up to sign; make the largest entry positive.
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double c = v(i) * std::sqrt(lambda);
            (axis == 0 ? pts[static_cast<std::size_t>(i)].x : pts[static_cast<std::size_t>(i)].y) = c;
        }
    }
    return pts;
}

std::vector<double> input_affinities(const DistanceMatrix& m, double perplexity) {
    const std::size_t n = m.n;
    const double target = std::log(perplexity);
    std::vector<double> cond(n * n, 0.0);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        double dmin = INFINITY;
        for (std::size_t j = 0; j < n; ++j) {
            d2[j] = m.at(i, j) * m.at(i, j);
            if (j != i) dmin = std::min(dmin, d2[j]);
        }
        double beta = 1.0, lo = 0.0, hi = INFINITY;
        for (int iter = 0; iter < 100; ++iter) {
            double sum = 0.0, weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double p = std::exp(-beta * (d2[j] - dmin));
                cond[i * n + j] = p;
                sum += p;
                weighted += (d2[j] - dmin) * p;
            }
            const double entropy = std::log(sum) + beta * weighted / sum;
            for (std::size_t j = 0; j < n; ++j) cond[i * n + j] /= sum;
            const double diff = entropy - target;
            if (std::abs(diff) < 1e-5) break;
            if (diff > 0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
    }
    std::vector<double> P(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            P[i * n + j] = std::max((cond[i * n + j] + cond[j * n + i]) / (2.0 * static_cast<double>(n)), 1e-12);
    return P;
}

std::vector<Point2> tsne(const DistanceMatrix& m, std::uint64_t seed) {
    constexpr int kIterations = 1000;
    constexpr int kExaggerationStop = 100;
    constexpr int kMomentumSwitch = 250;
    constexpr double kExaggeration = 4.0;
    constexpr double kLearningRate = 50.0;
    const std::size_t n = m.n;
    const std::vector<double> P = input_affinities(m, tsne_perplexity(n));

    // Start from the MDS layout scaled down to std 1e-4; a random start can
    // strand a point behind a foreign cluster. The seeded jitter separates
    // points that MDS puts on top of each other.
    Rng rng(derive_seed(seed, "tsne-init"));
    std::vector<double> Y(2 * n), dY(2 * n, 0.0), iY(2 * n, 0.0), gains(2 * n, 1.0);
    const std::vector<Point2> start = classical_mds(m);
    double var = 0.0;
    for (const auto& p : start) var += p.x * p.x + p.y * p.y;
    const double scale = var > 0.0 ? 1e-4 / std::sqrt(var / static_cast<double>(2 * n)) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Y[2 * i] = scale * start[i].x + 1e-6 * rng.normal();
        Y[2 * i + 1] = scale * start[i].y + 1e-6 * rng.normal();
    }
    std::vector<double> num(n * n, 0.0);
    for (int it = 0; it < kIterations; ++it) {
        const double exaggeration = it < kExaggerationStop ? kExaggeration : 1.0;
        const double momentum = it < kMomentumSwitch ? 0.5 : 0.8;
        double qsum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = Y[2 * i] - Y[2 * j], dy = Y[2 * i + 1] - Y[2 * j + 1];
                const double q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = num[j * n + i] = q;
                qsum += 2.0 * q;
            }
        for (std::size_t i = 0; i < n; ++i) {
            double gx = 0.0, gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double q = num[i * n + j];
                const double mult = (exaggeration * P[i * n + j] - std::max(q / qsum, 1e-12)) * q;
                gx += mult * (Y[2 * i] - Y[2 * j]);
                gy += mult * (Y[2 * i + 1] - Y[2 * j + 1]);
            }
            dY[2 * i] = 4.0 * gx;
            dY[2 * i + 1] = 4.0 * gy;
        }
        for (std::size_t k = 0; k < 2 * n; ++k) {
            gains[k] = (dY[k] > 0.0) != (iY[k] > 0.0) ? gains[k] + 0.2 : gains[k] * 0.8;
            gains[k] = std::max(gains[k], 0.01);
            iY[k] = momentum * iY[k] - kLearningRate * gains[k] * dY[k];
            Y[k] += iY[k];
        }
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += Y[2 * i];
            my += Y[2 * i + 1];
        }
        for (std::size_t i = 0; i < n; ++i) {
            Y[2 * i] -= mx / static_cast<double>(n);
            Y[2 * i + 1] -= my / static_cast<double>(n);
        }
    }
    std::vector<Point2> pts(n);
    for (std::size_t i = 0; i < n; ++i) pts[i] = {Y[2 * i], Y[2 * i + 1]};
    return pts;
}

void check_matrix(const DistanceMatrix& m) {
    if (m.n < 2) fail_validation("embedding needs at least two points", "matrix");
    if (m.values.size() != m.n * m.n) fail_validation("distance matrix has the wrong size", "matrix");
    for (std::size_t i = 0; i < m.n; ++i) {
        if (m.at(i, i) != 0.0) fail_validation("distance matrix diagonal must be zero", "matrix");
        for (std::size_t j = 0; j < m.n; ++j) {
            const double d = m.at(i, j);
            if (!std::isfinite(d) || d < 0.0) fail_validation("distances must be finite and non-negative", "matrix");
            if (d != m.at(j, i)) fail_validation("distance matrix must be symmetric", "matrix");
        }
    }
}

} // namespace

Embedding embed_2d(const DistanceMatrix& matrix, std::uint64_t seed, EmbedMethod method) {
    check_matrix(matrix);
    Embedding e;
    e.seed = seed;
    e.method = matrix.n < 10 ? EmbedMethod::MDS : method;
    e.matrix_digest = matrix.digest();
    e.ids.resize(matrix.n);
    std::iota(e.ids.begin(), e.ids.end(), CandidateId{0});
    e.colors.assign(matrix.n, std::nullopt);
    const bool degenerate = std::all_of(matrix.values.begin(), matrix.values.end(), [](double d) { return d == 0.0; });
    if (degenerate) {
        e.coords.assign(matrix.n, Point2{});
        return e;
    }
    e.coords = e.method == EmbedMethod::MDS ? classical_mds(matrix) : tsne(matrix, seed);
    center(e.coords);
    return e;
}

Embedding recolor(Embedding embedding, const SearchState& state) {
    embedding.colors.assign(embedding.ids.size(), std::nullopt);
    for (std::size_t i = 0; i < embedding.masks.size(); ++i) {
        auto it = state.evaluated.find(embedding.masks[i]);
        if (it != state.evaluated.end()) embedding.colors[i] = it->second.accuracy;
    }
    return embedding;
}

Embedding project_search_space(const TemplateNetwork& network, const SearchState& state, std::size_t count,
                               std::uint64_t seed) {
    const auto sample = sample_search_space(network, count, derive_seed(seed, "space-sample"));
    std::vector<LabeledGraph> graphs;
    for (const auto& c : sample) graphs.push_back(mask_to_subgraph(network, c.mask));
    Embedding e = embed_2d(build_distance_matrix(graphs), derive_seed(seed, "embedding"));
    e.seed = seed;
    for (const auto& c : sample) e.masks.push_back(c.mask);
    return recolor(std::move(e), state);
}

namespace {

nlohmann::json embedding_body(const Embedding& e) {
    nlohmann::json masks = nlohmann::json::array();
    for (const auto& m : e.masks) masks.push_back(mask_to_json(m));
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& p : e.coords) coords.push_back({p.x, p.y});
    return {{"ids", e.ids},
            {"masks", masks},
            {"coords", coords},
            {"seed", e.seed},
            {"method", embed_method_name(e.method)},
            {"matrix_digest", e.matrix_digest}};
}

} // namespace

std::string Embedding::digest() const { return hex_digest(embedding_body(*this).dump()); }

nlohmann::json embedding_to_json(const Embedding& e) {
    nlohmann::json j = embedding_body(e);
    nlohmann::json colors = nlohmann::json::array();
    for (const auto& c : e.colors) colors.push_back(c ? nlohmann::json(*c) : nlohmann::json());
    j["colors"] = colors;
    j["digest"] = e.digest();
    j["schema_version"] = 1;
    return j;
}

Embedding embedding_from_json(const nlohmann::json& doc) {
    Embedding e;
    try {
        if (doc.at("schema_version").get<int>() != 1)
            fail_validation("unsupported embedding schema_version", "embedding.schema_version");
        e.ids = doc.at("ids").get<std::vector<CandidateId>>();
        for (const auto& m : doc.at("masks")) e.masks.push_back(mask_from_json(m));
        for (const auto& p : doc.at("coords")) e.coords.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        for (const auto& c : doc.at("colors")) e.colors.push_back(c.is_null() ? std::nullopt : std::optional(c.get<double>()));
        e.seed = doc.at("seed").get<std::uint64_t>();
        const auto method = doc.at("method").get<std::string>();
        if (method != "tsne" && method != "mds") fail_validation("unknown embedding method", "embedding.method");
        e.method = method == "tsne" ? EmbedMethod::TSNE : EmbedMethod::MDS;
        e.matrix_digest = doc.at("matrix_digest").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
        fail_validation(std::string("malformed embedding: ") + ex.what(), "embedding");
    }
    if (e.coords.size() != e.ids.size() || e.colors.size() != e.ids.size() ||
        (!e.masks.empty() && e.masks.size() != e.ids.size()))
        fail_validation("embedding arrays differ in length", "embedding");
    if (doc.contains("digest") && doc["digest"] != e.digest())
        throw Error(ErrorKind::Corrupt, "embedding digest does not match its contents", "embedding.digest");
    return e;
}

} // namespace hilnas
