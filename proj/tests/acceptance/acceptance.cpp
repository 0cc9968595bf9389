// Acceptance checks A1..A8. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "hilnas/evaluation.hpp"
#include "hilnas/evolution.hpp"
#include "hilnas/headless.hpp"
#include "hilnas/persistence.hpp"
#include "hilnas/projection.hpp"
#include "hilnas/rng.hpp"
#include "hilnas/session.hpp"
#include "hilnas/steering.hpp"

#ifndef HILNAS_SOURCE_DIR
#define HILNAS_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace hilnas;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Mask mask_of(const TemplateNetwork& net, std::initializer_list<PathIndex> on) {
    Mask m(net.path_count(), net.version());
    for (PathIndex p : on) m.set(p);
    return m;
}

SessionConfig small_config(std::uint64_t seed) {
    SessionConfig c;
    c.num_normal = 1;
    c.num_reduction = 1;
    c.nodes_per_cell = 2;
    c.seed = seed;
    c.evaluator.seed = seed;
    c.embedding_count = 16;
    return c;
}

double worst_cell_error(const FitnessTable& t) {
    double worst = 0.0;
    for (const auto& r : t.cells) {
        double s = 0.0;
        for (PathIndex p = r.begin; p < r.end; ++p) s += t.fitness[p];
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

// ---- A1 ----------------------------------------------------------------

void a1(Outcome& o) {
    const auto t0 = Clock::now();
    const fs::path path = fs::path(HILNAS_SOURCE_DIR) / "configs" / "bench_a1.json";
    const RunConfig config = run_config_from_json(nlohmann::json::parse(read_text_file(path)));
    const BenchReport r = run_bench(config);
    const double secs = seconds_since(t0);
    o.detail << "ea_mean=" << r.ea.mean_best << " random_mean=" << r.random.mean_best << " ea_hit=" << r.ea.hit_rate
             << " random_hit=" << r.random.hit_rate << " seeds=" << r.ea.runs.size() << " time=" << secs << "s";
    o.require(r.ea.runs.size() == 20 && r.ea.iterations == 100, "20 seeds x 100 iterations");
    for (std::size_t i = 0; i < r.ea.runs.size(); ++i) {
        const auto& e = r.ea.runs[i];
        const auto& x = r.random.runs[i];
        o.require(e.evaluations == x.evaluations, "equal evaluation budget");
        o.require(e.optimum.has_value(), "optimum enumerable");
        if (e.optimum) o.require(e.best <= *e.optimum && x.best <= *x.optimum, "best never above optimum");
    }
    o.require(r.ea.mean_best >= r.random.mean_best, "ea mean >= random mean");
    o.require(r.ea.hit_rate >= 0.8, "ea hit rate >= 0.8");
    o.require(r.ea.hit_rate > r.random.hit_rate, "ea hit rate > random hit rate");
    o.require(secs < 60.0, "runtime < 60 s");
}

// ---- A2 ----------------------------------------------------------------

void a2(Outcome& o) {
    const auto t0 = Clock::now();
    auto byte_mask = [](unsigned v) {
        Mask m(8, 0);
        for (int i = 0; i < 8; ++i) m.set(static_cast<PathIndex>(i), (v >> i) & 1u);
        return m;
    };
    std::vector<Mask> all;
    for (unsigned v = 0; v < 256; ++v) all.push_back(byte_mask(v));
    std::size_t crossings = 0, bad = 0;
    for (unsigned f = 0; f < 256; ++f)
        for (unsigned m = 0; m < 256; m += 17)
            for (unsigned s = 0; s < 256; ++s) {
                const Mask child = cross_over(all[f], all[m], all[s]);
                ++crossings;
                for (PathIndex i = 0; i < 8; ++i) {
                    const bool from = (s >> i) & 1u ? all[m].test(i) : all[f].test(i);
                    if (child.test(i) != from || (child.test(i) != all[f].test(i) && child.test(i) != all[m].test(i))) {
                        ++bad;
                        break;
                    }
                }
            }
    o.require(bad == 0, "crossover child bits come from the selected parent");

    const Mask zero(1000, 0);
    std::size_t flipped = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) flipped += mutate(zero, kDefaultMutationRate, derive_seed(77, "accept-mutation", s)).count();
    const double rate = static_cast<double>(flipped) / 1e6;
    o.require(std::abs(rate - 0.05) <= 0.001, "flip rate 0.05 +- 0.001");

    const auto net = build_template("toy", 1, 1, 2);
    std::size_t drops = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        EvaluatorSpec spec;
        spec.seed = seed;
        const auto oracle = TabularOracle::generate(net, spec);
        SearchState s = initialize_population(make_search_state(net, kDefaultAlpha, seed), oracle).state;
        auto best = [](const SearchState& st) {
            double b = 0.0;
            for (const auto& m : st.population) b = std::max(b, *m.accuracy);
            return b;
        };
        double prev = best(s);
        for (int i = 0; i < 100; ++i) {
            s = evolve(s, oracle, std::nullopt, step_seed(s)).state;
            if (best(s) < prev) ++drops;
            prev = best(s);
        }
    }
    o.require(drops == 0, "elite accuracy never decreases");
    const double secs = seconds_since(t0);
    o.detail << "crossovers=" << crossings << " bad=" << bad << " flip_rate=" << rate << " elitism_drops=" << drops
             << " time=" << secs << "s";
    o.require(secs < 30.0, "runtime < 30 s");
}

// ---- A3 ----------------------------------------------------------------

void a3(Outcome& o) {
    double worst = 0.0;
    std::size_t updates = 0;
    for (const auto& net : {build_template("toy", 1, 0, 1), build_template("toy", 1, 1, 2), build_template("toy")}) {
        Rng rng(derive_seed(3, "accept-fitness", net.path_count()));
        FitnessTable t = init_fitness(net, kDefaultAlpha);
        for (int i = 0; i < 2000; ++i) {
            const Mask m = sample_mask(net, t.fitness, rng.below(1u << 30));
            t = update_fitness(t, {static_cast<CandidateId>(i), m, rng.uniform(), 0});
            worst = std::max(worst, worst_cell_error(t));
            ++updates;
        }
    }
    // Updates made by the search loop itself.
    const auto net = build_template("toy", 1, 1, 2);
    const auto oracle = TabularOracle::generate(net, {});
    SearchHooks hooks;
    hooks.on_step = [&](const SearchState& s, const IterationReport&) {
        worst = std::max(worst, worst_cell_error(s.fitness));
        ++updates;
    };
    run_search(make_search_state(net, kDefaultAlpha, 1), oracle, 50, hooks);
    o.require(worst <= 1e-9, "per-cell sum 1 +- 1e-9");

    const auto tiny = build_template("toy", 1, 0, 1);
    FitnessTable t = update_fitness(init_fitness(tiny, 0.5), {0, mask_of(tiny, {1, 7}), 0.9, 0});
    const FitnessTable same = update_fitness(t, {1, mask_of(tiny, {3, 9}), 0.5, 0});
    double alpha_diff = 0.0;
    for (PathIndex p = 0; p < 12; ++p) alpha_diff = std::max(alpha_diff, std::abs(same.fitness[p] - t.fitness[p]));
    o.require(alpha_diff <= 1e-15, "accuracy == alpha leaves fitness unchanged");

    // 0.05 + (0.1 - 0.68) < 0 clamps to 1e-6 on paths 3 and 9; the rest stay 0.09.
    FitnessTable c = init_fitness(tiny, 0.68);
    std::fill(c.fitness.begin(), c.fitness.end(), 0.09);
    c.fitness[3] = c.fitness[9] = 0.05;
    const FitnessTable u = update_fitness(c, {0, mask_of(tiny, {3, 9}), 0.1, 0});
    const double total = 10 * 0.09 + 2 * 1e-6;
    double clamp_diff = 0.0;
    for (PathIndex p = 0; p < 12; ++p) {
        const double expect = (p == 3 || p == 9 ? 1e-6 : 0.09) / total;
        clamp_diff = std::max(clamp_diff, std::abs(u.fitness[p] - expect));
    }
    o.require(clamp_diff <= 1e-15, "clamp case matches hand computation");
    o.detail << "updates=" << updates << " worst_sum_error=" << worst << " alpha_case_diff=" << alpha_diff
             << " clamp_case_diff=" << clamp_diff;
}

// ---- A4 ----------------------------------------------------------------

LabeledGraph random_dag(Rng& rng, int max_vertices) {
    static const char* kLabels[] = {"a", "b", "c"};
    LabeledGraph g;
    const int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_vertices)));
    for (int i = 0; i < n; ++i) g.add_vertex(kLabels[rng.below(3)]);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.uniform() < 0.35) g.add_edge(i, j);
    return g;
}

// Every partial injective vertex mapping, costed from scratch.
int brute_force_ged(const LabeledGraph& g1, const LabeledGraph& g2) {
    const int n1 = g1.size(), n2 = g2.size();
    std::vector<int> map(static_cast<std::size_t>(n1), -1);
    std::vector<bool> used(static_cast<std::size_t>(n2), false);
    int best = 1 << 30;
    std::function<void(int)> go = [&](int u) {
        if (u == n1) {
            int cost = 0;
            for (int a = 0; a < n1; ++a)
                if (map[a] < 0 || g1.labels[a] != g2.labels[map[a]]) ++cost;
            for (int b = 0; b < n2; ++b)
                if (!used[b]) ++cost;
            for (auto [a, b] : g1.edges)
                if (map[a] < 0 || map[b] < 0 || !g2.has_edge(map[a], map[b])) ++cost;
            std::vector<int> inv(static_cast<std::size_t>(n2), -1);
            for (int a = 0; a < n1; ++a)
                if (map[a] >= 0) inv[map[a]] = a;
            for (auto [a, b] : g2.edges)
                if (inv[a] < 0 || inv[b] < 0 || !g1.has_edge(inv[a], inv[b])) ++cost;
            best = std::min(best, cost);
            return;
        }
        map[u] = -1;
        go(u + 1);
        for (int v = 0; v < n2; ++v) {
            if (used[v]) continue;
            used[v] = true;
            map[u] = v;
            go(u + 1);
            used[v] = false;
            map[u] = -1;
        }
    };
    go(0);
    return best;
}

void a4(Outcome& o) {
    const auto t0 = Clock::now();
    Rng rng(404);
    std::vector<LabeledGraph> graphs;
    std::size_t mismatch = 0, under = 0, pairs = 0;
    for (int i = 0; i < 200; ++i) {
        const LabeledGraph a = random_dag(rng, 6), b = random_dag(rng, 6);
        const double exact = graph_edit_distance(a, b).distance;
        if (exact != brute_force_ged(a, b)) ++mismatch;
        if (graph_edit_distance(a, b, 0).distance < exact) ++under;
        ++pairs;
        if (graphs.size() < 24) graphs.push_back(a);
    }
    o.require(mismatch == 0, "exact GED equals brute force");
    o.require(under == 0, "approximation never underestimates");

    const DistanceMatrix d = build_distance_matrix(graphs);
    std::size_t violations = 0;
    const std::size_t n = d.n;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (d.at(i, j) < 0 || d.at(i, j) != d.at(j, i)) ++violations;
            if ((d.at(i, j) == 0) != (canonical_form(graphs[i]) == canonical_form(graphs[j]))) ++violations;
            for (std::size_t k = 0; k < n; ++k)
                if (d.at(i, k) > d.at(i, j) + d.at(j, k) + 1e-12) ++violations;
        }
    o.require(d.method == DistanceMethod::Exact, "matrix entries exact");
    o.require(violations == 0, "metric axioms");
    const double secs = seconds_since(t0);
    o.detail << "pairs=" << pairs << " mismatches=" << mismatch << " underestimates=" << under
             << " axiom_violations=" << violations << " time=" << secs << "s";
    o.require(secs < 60.0, "runtime < 60 s");
}

// ---- A5 ----------------------------------------------------------------

EvaluatorSpec supernet_spec(std::uint64_t seed) {
    EvaluatorSpec s;
    s.kind = EvaluatorKind::Supernet;
    s.seed = seed;
    return s;
}

std::vector<double>& block(ParameterStore& ps, std::size_t which) {
    if (which == 0) return ps.stem;
    if (which == 1) return ps.head;
    return ps.paths[which - 2];
}

void a5(Outcome& o) {
    // masked-path perturbation
    const auto tmpl = build_template("toy", 1, 1, 2);
    Supernet big(tmpl, supernet_spec(3));
    big.train(2);
    const Mask m = sample_mask(tmpl, uniform_probabilities(tmpl), 4);
    std::vector<std::size_t> rows(32);
    std::iota(rows.begin(), rows.end(), 0);
    const double acc_before = big.evaluate(m, 7);
    const double loss_before = big.loss_and_gradient(m, rows, false, nullptr);
    for (PathIndex p = 0; p < tmpl.path_count(); ++p)
        if (!m.test(p))
            for (double& w : big.parameters().paths[p]) w += 10.0;
    const double acc_delta = std::abs(big.evaluate(m, 7) - acc_before);
    const double loss_delta = std::abs(big.loss_and_gradient(m, rows, false, nullptr) - loss_before);
    o.require(acc_delta == 0.0 && loss_delta == 0.0, "masked perturbation changes nothing");

    // finite differences on the 12-path template
    const auto tiny = build_template("toy", 1, 0, 1);
    Supernet net(tiny, supernet_spec(4));
    net.train(1);
    const Mask tm = sample_mask(tiny, uniform_probabilities(tiny), 5);
    ParameterStore grad;
    net.loss_and_gradient(tm, rows, false, &grad);
    const double h = 1e-6;
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::size_t b = 0; b < 2 + tiny.path_count(); ++b) {
        if (b >= 2 && !tm.test(b - 2)) continue;
        auto& w = block(net.parameters(), b);
        const auto& g = block(grad, b);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double keep = w[i];
            w[i] = keep + h;
            const double up = net.loss_and_gradient(tm, rows, false, nullptr);
            w[i] = keep - h;
            const double down = net.loss_and_gradient(tm, rows, false, nullptr);
            w[i] = keep;
            const double fd = (up - down) / (2 * h);
            const double scale = std::max(std::abs(fd), std::abs(g[i]));
            if (scale < 1e-7) continue;
            worst = std::max(worst, std::abs(fd - g[i]) / scale);
            ++checked;
        }
    }
    o.require(tiny.path_count() == 12, "12-path template");
    o.require(checked > 50 && worst <= 1e-4, "gradient rel err <= 1e-4");

    // 30 epochs lower validation loss for each of 5 seeds
    std::size_t decreased = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Supernet s(build_template("toy", 1, 0, 2), supernet_spec(seed));
        const auto report = s.train(30);
        if (report.curve.size() == 30 && report.curve.back().val_loss < report.curve.front().val_loss) ++decreased;
    }
    o.require(decreased == 5, "validation loss decreases for 5 seeds");
    o.detail << "masked_delta=" << acc_delta + loss_delta << " grad_checked=" << checked << " grad_rel_err=" << worst
             << " loss_decreased=" << decreased << "/5";
}

// ---- A6 ----------------------------------------------------------------

void a6(Outcome& o) {
    // Region membership, read back from the run log alone.
    Session s("a6", small_config(21));
    s.begin_search();
    s.step();
    const Embedding e = s.compute_embedding();
    std::vector<double> xs;
    for (auto p : e.coords) xs.push_back(p.x);
    std::sort(xs.begin(), xs.end());
    const double cut = 0.5 * (xs[xs.size() / 2 - 1] + xs[xs.size() / 2]);
    s.set_region(Rect{-1e9, -1e9, cut, 1e9}, e.digest());
    for (int i = 0; i < 50; ++i) s.step();

    std::set<std::string> members;
    bool region_on = false;
    std::size_t created = 0, outside = 0, steps = 0;
    for (const auto& rec : parse_runlog(format_runlog(s.runlog()))) {
        const std::string type = rec.at("type");
        if (type == "steer" && rec.at("action") == "set_region") {
            region_on = true;
            members.clear();
            for (const auto& m : rec.at("region").at("member_masks")) members.insert(m.at("hex").get<std::string>());
        } else if (type == "steer" && rec.at("action") == "clear_region") {
            region_on = false;
        } else if (type == "step" && region_on && rec.at("kind") == "iteration") {
            ++steps;
            for (const auto& c : rec.at("created")) {
                ++created;
                if (!members.count(c.at("mask").at("hex").get<std::string>())) ++outside;
            }
        }
    }
    o.require(steps == 50, "50 region iterations in the log");
    o.require(created > 0 && outside == 0, "every created candidate is a member");

    // Set operations against plain std::set algebra.
    const auto net = build_template("toy", 1, 1, 2);
    Embedding line;
    for (const auto& c : sample_search_space(net, 30, 9)) {
        line.ids.push_back(c.id);
        line.masks.push_back(c.mask);
        line.coords.push_back({static_cast<double>(c.id), 0.0});
        line.colors.push_back(std::nullopt);
    }
    Rng rng(66);
    std::size_t setop_bad = 0;
    for (int t = 0; t < 100; ++t) {
        const double lo = static_cast<double>(rng.below(30));
        const double hi = lo + static_cast<double>(rng.below(8));
        const auto region = resolve_region(line, Rect{lo - 0.5, -1, hi + 0.5, 1});
        std::set<PathIndex> uni, inter, comp;
        for (PathIndex p = 0; p < net.path_count(); ++p) inter.insert(p);
        for (const auto& m : region.member_masks) {
            std::set<PathIndex> on, keep;
            for (PathIndex p = 0; p < m.size(); ++p)
                if (m.test(p)) on.insert(p);
            uni.insert(on.begin(), on.end());
            std::set_intersection(inter.begin(), inter.end(), on.begin(), on.end(), std::inserter(keep, keep.end()));
            inter = keep;
        }
        for (PathIndex p = 0; p < net.path_count(); ++p)
            if (!uni.count(p)) comp.insert(p);
        auto vec = [](const std::set<PathIndex>& x) { return std::vector<PathIndex>(x.begin(), x.end()); };
        if (set_operation(net, SetOp::Union, region).paths != vec(uni)) ++setop_bad;
        if (set_operation(net, SetOp::Intersection, region).paths != vec(inter)) ++setop_bad;
        if (set_operation(net, SetOp::Complement, region).paths != vec(comp)) ++setop_bad;
    }
    o.require(setop_bad == 0, "set ops equal brute force");

    // Pruned paths never sampled.
    const std::vector<PathIndex> pruned{2, 20};
    const SearchState ps = prune_paths(make_search_state(net, kDefaultAlpha, 0), net, pruned);
    std::size_t hits = 0;
    for (std::uint64_t k = 0; k < 10000; ++k) {
        const Mask m = sample_mask(net, ps.fitness.probabilities(), k, ps.constraints);
        for (PathIndex p : pruned) hits += m.test(p);
    }
    o.require(hits == 0, "pruned paths absent from 10^4 samples");
    o.detail << "region_members=" << members.size() << " created=" << created << " outside=" << outside
             << " setop_mismatches=" << setop_bad << " pruned_hits=" << hits;
}

// ---- A7 ----------------------------------------------------------------

void a7(Outcome& o) {
    RunConfig c;
    c.session = small_config(0);
    c.iterations = 40;
    const std::string a = format_runlog(run_seed(c, 12).runlog), b = format_runlog(run_seed(c, 12).runlog);
    o.require(!a.empty() && a == b, "identical seeds give identical run logs");

    const fs::path dir = fs::temp_directory_path() / "hilnas-acceptance-a7";
    fs::remove_all(dir);
    std::size_t mismatched = 0;
    for (EvaluatorKind kind : {EvaluatorKind::Tabular, EvaluatorKind::Supernet}) {
        SessionConfig sc = small_config(5);
        sc.evaluator.kind = kind;
        auto started = [&](const char* id) {
            Session s(id, sc);
            if (kind == EvaluatorKind::Supernet) s.train(2);
            s.begin_search();
            return s;
        };
        Session full = started("full");
        for (int i = 0; i < 12; ++i) full.step();
        Session half = started("half");
        for (int i = 0; i < 6; ++i) half.step();
        save_session(half, dir);
        Session resumed = load_session(dir);
        for (int i = 0; i < 6; ++i) resumed.step();
        if (format_runlog(resumed.runlog()) != format_runlog(full.runlog())) ++mismatched;
        fs::remove_all(dir);
    }
    o.require(mismatched == 0, "resumed run log equals uninterrupted run log");

    const auto records = parse_runlog(a);
    const VerifyReport r = verify_runlog(records);
    o.require(r.ok && r.digests_checked == records.size() - 1, "replay recomputes every fitness digest");
    o.detail << "runlog_bytes=" << a.size() << " resume_mismatches=" << mismatched << " digests_checked="
             << r.digests_checked << "/" << records.size() - 1;
}

// ---- A8 ----------------------------------------------------------------

std::vector<int> three_means(const std::vector<Point2>& pts) {
    auto d2 = [](Point2 a, Point2 b) { return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y); };
    std::vector<Point2> centers{pts[0]};
    while (centers.size() < 3) {
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double d = 1e300;
            for (auto c : centers) d = std::min(d, d2(pts[i], c));
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        centers.push_back(pts[far]);
    }
    std::vector<int> label(pts.size(), 0);
    for (int it = 0; it < 100; ++it) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            int best = 0;
            for (int c = 1; c < 3; ++c)
                if (d2(pts[i], centers[c]) < d2(pts[i], centers[best])) best = c;
            label[i] = best;
        }
        for (int c = 0; c < 3; ++c) {
            Point2 sum{};
            int k = 0;
            for (std::size_t i = 0; i < pts.size(); ++i)
                if (label[i] == c) {
                    sum.x += pts[i].x;
                    sum.y += pts[i].y;
                    ++k;
                }
            if (k) centers[c] = {sum.x / k, sum.y / k};
        }
    }
    return label;
}

void a8(Outcome& o) {
    const auto net = build_template("toy", 1, 0, 2);
    const SearchState state = make_search_state(net, kDefaultAlpha, 1);
    const Embedding x = project_search_space(net, state, 40, 8), y = project_search_space(net, state, 40, 8);
    bool identical = x.coords.size() == y.coords.size();
    for (std::size_t i = 0; identical && i < x.coords.size(); ++i)
        identical = std::memcmp(&x.coords[i], &y.coords[i], sizeof(Point2)) == 0;
    o.require(identical && x.digest() == y.digest(), "seeded embedding bit-identical");

    // Three synthetic clusters: small spread inside, far apart across.
    std::size_t pure = 0, trials = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::size_t n = 30;
        Rng rng(derive_seed(seed, "accept-clusters"));
        std::vector<double> jitter(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) jitter[i * n + j] = jitter[j * n + i] = rng.uniform();
        DistanceMatrix m;
        m.n = n;
        m.values.assign(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) m.values[i * n + j] = (i % 3 == j % 3 ? 1.0 : 8.0) + jitter[i * n + j];
        const auto labels = three_means(embed_2d(m, seed).coords);
        std::map<int, std::set<std::size_t>> seen;
        for (std::size_t i = 0; i < n; ++i) seen[labels[i]].insert(i % 3);
        bool ok = seen.size() == 3;
        for (const auto& [k, v] : seen) ok = ok && v.size() == 1;
        pure += ok;
        ++trials;
    }
    o.require(pure == trials, "3-means purity 100%");
    o.detail << "bit_identical=" << (identical ? "yes" : "no") << " pure_trials=" << pure << "/" << trials;
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, void (*)(Outcome&)>> checks{
        {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5}, {"A6", a6}, {"A7", a7}, {"A8", a8}};
    int failed = 0;
    for (const auto& [name, fn] : checks) {
        Outcome o;
        try {
            fn(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        std::printf("%s %s %s\n", name, o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
