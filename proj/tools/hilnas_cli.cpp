#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "hilnas/error.hpp"
#include "hilnas/headless.hpp"
#include "hilnas/persistence.hpp"
#include "hilnas/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hilnas;

namespace {

fs::path data_dir() {
    const char* env = std::getenv("HILNAS_DATA_DIR");
    return env && *env ? fs::path(env) : fs::path("hilnas-data");
}

// Archives may be named relative to the data directory.
fs::path archive_path(const std::string& name) {
    const fs::path p(name);
    if (p.is_absolute() || fs::exists(p)) return p;
    return data_dir() / p;
}

struct RunFlags {
    std::string config_file;
    std::string strategy;
    std::vector<std::uint64_t> seeds;
    std::optional<std::size_t> seed_count;
    std::optional<std::uint64_t> iterations;
    std::optional<int> train_epochs;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("-c,--config", f.config_file, "run config JSON file");
    cmd->add_option("--seeds", f.seeds, "explicit seeds")->delimiter(',');
    cmd->add_option("--seed-count", f.seed_count, "use seeds 0..N-1");
    cmd->add_option("--iterations", f.iterations, "search iterations per seed");
    cmd->add_option("--train-epochs", f.train_epochs, "supernet training epochs before searching");
}

RunConfig load_run_config(const RunFlags& f) {
    json doc = json::object();
    if (!f.config_file.empty()) {
        const std::string text = read_text_file(f.config_file);
        try {
            doc = json::parse(text);
        } catch (const json::parse_error& e) {
            fail_validation(f.config_file + " is not valid JSON: " + e.what(), "config");
        }
    }
    if (!f.strategy.empty()) doc["strategy"] = f.strategy;
    if (!f.seeds.empty() || f.seed_count) {
        doc.erase("seeds");
        doc.erase("seed_count");
    }
    if (!f.seeds.empty()) doc["seeds"] = f.seeds;
    if (f.seed_count) doc["seed_count"] = *f.seed_count;
    if (f.iterations) doc["iterations"] = *f.iterations;
    if (f.train_epochs) doc["train_epochs"] = *f.train_epochs;
    return run_config_from_json(doc);
}

void write_or_print(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
    } else {
        if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
        write_text_file(path, text);
    }
}

Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hilnas: interactive one-shot architecture search engine"};
    app.require_subcommand(1);

    auto* serve = app.add_subcommand("serve", "serve the JSON API under /api/v1");
    int port = 8080;
    std::string host = "127.0.0.1";
    serve->add_option("-p,--port", port, "listen port");
    serve->add_option("--host", host, "listen address");

    auto* run = app.add_subcommand("run", "headless search over one or more seeds");
    RunFlags run_flags;
    std::string run_out, runlog_dir;
    add_run_flags(run, run_flags);
    run->add_option("--strategy", run_flags.strategy, "ea or random")->check(CLI::IsMember({"ea", "random"}));
    run->add_option("-o,--out", run_out, "write the summary JSON here instead of stdout");
    run->add_option("--runlog-dir", runlog_dir, "write runlog-<seed>.jsonl files here (ea only)");

    auto* bench = app.add_subcommand("bench", "paired EA vs random sampling comparison");
    RunFlags bench_flags;
    std::string bench_json;
    add_run_flags(bench, bench_flags);
    bench->add_option("--json", bench_json, "write the JSON table here; otherwise it follows the text table");

    auto* exp = app.add_subcommand("export", "export the best candidate of a saved session");
    std::string exp_session, exp_out;
    std::optional<int> exp_budget;
    exp->add_option("-s,--session", exp_session, "archive directory or name under the data directory")->required();
    exp->add_option("--budget-epochs", exp_budget, "retrain the candidate from scratch for this many epochs");
    exp->add_option("-o,--out", exp_out, "output file (default stdout)");

    auto* verify = app.add_subcommand("replay-verify", "recompute every fitness digest in a run log");
    std::string verify_input;
    verify->add_option("input", verify_input, "runlog.jsonl or an archive directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) {
            Service service(data_dir());
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "serving on http://" << host << ":" << port << Service::kPrefix << " (data "
                      << data_dir().string() << ")\n";
            if (!service.listen(host, port)) {
                std::cerr << "error: could not listen on " << host << ":" << port << "\n";
                return 1;
            }
            g_service = nullptr;
            return 0;
        }
        if (*run) {
            const RunConfig config = load_run_config(run_flags);
            const RunSummary summary = run_headless(config);
            if (!runlog_dir.empty() && config.strategy == Strategy::EA) {
                fs::create_directories(runlog_dir);
                for (const auto& r : summary.runs)
                    write_text_file(fs::path(runlog_dir) / ("runlog-" + std::to_string(r.seed) + ".jsonl"),
                                    format_runlog(r.runlog));
            }
            write_or_print(run_out, summary_to_json(summary).dump(2) + "\n");
            return 0;
        }
        if (*bench) {
            const BenchReport report = run_bench(load_run_config(bench_flags));
            std::cout << bench_to_text(report);
            const std::string doc = bench_to_json(report).dump(2) + "\n";
            if (bench_json.empty()) std::cout << "\n" << doc;
            else write_or_print(bench_json, doc);
            return 0;
        }
        if (*exp) {
            const Session session = load_session(archive_path(exp_session));
            write_or_print(exp_out, session.export_best(exp_budget).dump(2) + "\n");
            return 0;
        }
        if (*verify) {
            fs::path input = archive_path(verify_input);
            if (fs::is_directory(input)) input /= "runlog.jsonl";
            const VerifyReport report = verify_runlog(parse_runlog(read_text_file(input)));
            std::cout << verify_report_to_json(report).dump(2) << "\n";
            return report.ok ? 0 : 1;
        }
    } catch (const Error& e) {
        std::cerr << "error (" << error_kind_name(e.kind()) << (e.field().empty() ? "" : ", " + e.field())
                  << "): " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
