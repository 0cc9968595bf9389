#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hilnas/session.hpp"

namespace hilnas {

// Archive directory layout: manifest.json, template.json, evaluator.json,
// oracle.json or supernet.json, state.json, runlog.jsonl and, when present,
// embedding.json.
void save_session(const Session& session, const std::filesystem::path& dir);

// Reads and validates everything before building the session, so a corrupt
// archive never yields a partial one.
Session load_session(const std::filesystem::path& dir, std::string id = {});

SessionArchive read_archive(const std::filesystem::path& dir);
void write_archive(const SessionArchive& archive, const std::filesystem::path& dir);

// One JSON object per line; errors name the 1-based line number.
std::vector<nlohmann::json> parse_runlog(std::string_view text);
std::string format_runlog(const std::vector<std::string>& lines);

struct VerifyReport {
    std::size_t records = 0;
    std::size_t digests_checked = 0;
    std::size_t accuracies_checked = 0;
    bool ok = true;
    std::string message;
};

// Recomputes the fitness table after every logged step, steering action and
// template edit and compares digests. With a tabular evaluator, logged
// accuracies are re-evaluated as well.
VerifyReport verify_runlog(const std::vector<nlohmann::json>& records);

nlohmann::json verify_report_to_json(const VerifyReport& report);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

} // namespace hilnas
