#include "hilnas/persistence.hpp"

#include <fstream>
#include <optional>
#include <sstream>

#include "hilnas/error.hpp"
#include "hilnas/rng.hpp"

namespace fs = std::filesystem;

namespace hilnas {

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::NotFound, "cannot read " + path.string(), path.filename().string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Validation, "cannot write " + path.string(), "path");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorKind::Validation, "failed writing " + path.string(), "path");
}

std::string format_runlog(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

std::vector<nlohmann::json> parse_runlog(std::string_view text) {
    std::vector<nlohmann::json> out;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        const std::size_t end = text.find('\n', pos);
        const std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
        ++line_no;
        const bool terminated = end != std::string_view::npos;
        pos = terminated ? end + 1 : text.size();
        if (line.empty()) {
            if (!terminated) break;
            throw Error(ErrorKind::Corrupt, "runlog.jsonl line " + std::to_string(line_no) + ": empty line",
                        "runlog.jsonl:" + std::to_string(line_no));
        }
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::Corrupt,
                        "runlog.jsonl line " + std::to_string(line_no) + ": not valid JSON (" + e.what() + ")",
                        "runlog.jsonl:" + std::to_string(line_no));
        }
        if (!record.is_object() || !record.contains("type") || !record["type"].is_string())
            throw Error(ErrorKind::Corrupt, "runlog.jsonl line " + std::to_string(line_no) + ": record has no type",
                        "runlog.jsonl:" + std::to_string(line_no));
        if (!terminated)
            throw Error(ErrorKind::Corrupt, "runlog.jsonl line " + std::to_string(line_no) + ": truncated record",
                        "runlog.jsonl:" + std::to_string(line_no));
        out.push_back(std::move(record));
    }
    return out;
}

namespace {

nlohmann::json parse_file(const fs::path& path) {
    const std::string text = read_text_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Corrupt, path.filename().string() + " is not valid JSON: " + e.what(),
                    path.filename().string());
    }
}

std::string pretty(const nlohmann::json& j) { return j.dump(2) + "\n"; }

} // namespace

void write_archive(const SessionArchive& a, const fs::path& dir) {
    // Written next to the target, then swapped in.
    fs::path tmp = dir;
    tmp += ".partial";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    write_text_file(tmp / "manifest.json", pretty(a.manifest));
    write_text_file(tmp / "template.json", pretty(a.template_doc));
    write_text_file(tmp / "evaluator.json", pretty(a.evaluator_doc));
    const bool tabular = a.evaluator_state.value("kind", "") == "tabular";
    write_text_file(tmp / (tabular ? "oracle.json" : "supernet.json"), pretty(a.evaluator_state));
    write_text_file(tmp / "state.json", pretty(a.state));
    write_text_file(tmp / "runlog.jsonl", format_runlog(a.runlog));
    if (a.embedding) write_text_file(tmp / "embedding.json", pretty(*a.embedding));
    fs::remove_all(dir);
    fs::rename(tmp, dir);
}

SessionArchive read_archive(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::NotFound, "no archive at " + dir.string(), "path");
    SessionArchive a;
    a.manifest = parse_file(dir / "manifest.json");
    if (!a.manifest.is_object() || !a.manifest.contains("schema_version"))
        throw Error(ErrorKind::Corrupt, "manifest.json has no schema_version", "manifest.schema_version");
    const auto& version = a.manifest["schema_version"];
    if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
        const std::string found = version.dump();
        throw Error(ErrorKind::Validation,
                    "archive schema_version " + found + " is not supported (this build reads version " +
                        std::to_string(kSchemaVersion) +
                        "); open it with the release that wrote it and re-save, or convert the archive to version " +
                        std::to_string(kSchemaVersion) + " first",
                    "manifest.schema_version");
    }
    a.template_doc = parse_file(dir / "template.json");
    a.evaluator_doc = parse_file(dir / "evaluator.json");
    if (fs::exists(dir / "oracle.json")) a.evaluator_state = parse_file(dir / "oracle.json");
    else if (fs::exists(dir / "supernet.json")) a.evaluator_state = parse_file(dir / "supernet.json");
    else throw Error(ErrorKind::Corrupt, "archive has neither oracle.json nor supernet.json", "evaluator");
    a.state = parse_file(dir / "state.json");
    for (const auto& record : parse_runlog(read_text_file(dir / "runlog.jsonl"))) a.runlog.push_back(record.dump());
    if (fs::exists(dir / "embedding.json")) a.embedding = parse_file(dir / "embedding.json");
    return a;
}

void save_session(const Session& session, const fs::path& dir) { write_archive(session.to_archive(), dir); }

Session load_session(const fs::path& dir, std::string id) {
    const SessionArchive a = read_archive(dir);
    try {
        return Session::from_archive(id.empty() ? dir.filename().string() : std::move(id), a);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Corrupt) throw;
        throw Error(ErrorKind::Corrupt, std::string("archive is inconsistent: ") + e.what(), e.field());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Corrupt, std::string("archive is malformed: ") + e.what(), "archive");
    }
}

// ---------------------------------------------------------------------------
// Replay verification

VerifyReport verify_runlog(const std::vector<nlohmann::json>& records) {
    VerifyReport report;
    auto fail = [&](std::size_t line, const std::string& what) {
        report.ok = false;
        report.message = "record " + std::to_string(line) + ": " + what;
        return report;
    };
    if (records.empty() || records[0].value("type", "") != "header") return fail(1, "run log does not start with a header");

    try {
        const SessionConfig config = session_config_from_json(records[0].at("config"));
        std::optional<TemplateNetwork> network(template_from_json(records[0].at("template")));
        FitnessTable fitness = init_fitness(*network, config.alpha);
        std::optional<TabularOracle> oracle;
        if (config.evaluator.kind == EvaluatorKind::Tabular) oracle = TabularOracle::generate(*network, config.evaluator);

        for (std::size_t i = 1; i < records.size(); ++i) {
            const auto& r = records[i];
            const std::string type = r.at("type").get<std::string>();
            const std::size_t line = i + 1;
            if (type == "step") {
                const IterationReport step = report_from_json(r);
                for (const auto& c : step.created) {
                    if (c.mask.template_version() != network->version())
                        return fail(line, "candidate " + std::to_string(c.id) + " uses a stale template version");
                    if (oracle) {
                        if (oracle->accuracy(c.mask) != *c.accuracy)
                            return fail(line, "accuracy of candidate " + std::to_string(c.id) + " does not reproduce");
                        ++report.accuracies_checked;
                    }
                    fitness = update_fitness(std::move(fitness), c);
                }
            } else if (type == "steer") {
                if (r.at("action") == "prune")
                    fitness = prune_fitness(std::move(fitness), r.at("paths").get<std::vector<PathIndex>>());
            } else if (type == "template_edit") {
                network.emplace(template_from_json(r.at("template")));
                fitness = init_fitness(*network, config.alpha);
                if (oracle) oracle = TabularOracle::generate(*network, config.evaluator);
            } else if (type == "train" || type == "finalize") {
                ++report.records;
                continue;
            } else {
                return fail(line, "unknown record type '" + type + "'");
            }
            ++report.records;
            if (r.at("fitness_digest").get<std::string>() != fitness.digest())
                return fail(line, "fitness digest mismatch (logged " + r["fitness_digest"].get<std::string>() +
                                      ", recomputed " + fitness.digest() + ")");
            ++report.digests_checked;
        }
    } catch (const std::exception& e) {
        report.ok = false;
        report.message = std::string("run log could not be replayed: ") + e.what();
    }
    return report;
}

nlohmann::json verify_report_to_json(const VerifyReport& r) {
    return {{"schema_version", kSchemaVersion},
            {"ok", r.ok},
            {"records", r.records},
            {"digests_checked", r.digests_checked},
            {"accuracies_checked", r.accuracies_checked},
            {"message", r.message}};
}

} // namespace hilnas
