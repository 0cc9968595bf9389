#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hilnas/graph.hpp"
#include "hilnas/supergraph.hpp"

namespace hilnas {

// Bit vector over all template paths; one candidate subnetwork.
class Mask {
public:
    Mask() = default;
    Mask(std::size_t bits, std::uint64_t template_version) : bits_(bits, false), version_(template_version) {}

    std::size_t size() const noexcept { return bits_.size(); }
    std::uint64_t template_version() const noexcept { return version_; }
    bool test(PathIndex p) const { return bits_.at(p); }
    void set(PathIndex p, bool value = true) { bits_.at(p) = value; }
    std::size_t count() const noexcept;
    std::vector<PathIndex> active() const;

    // Hex with the first path as the most significant bit of the first digit.
    std::string to_hex() const;
    static Mask from_hex(std::string_view hex, std::size_t bits, std::uint64_t template_version);

    friend bool operator==(const Mask&, const Mask&) = default;
    friend bool operator<(const Mask& a, const Mask& b) {
        if (a.version_ != b.version_) return a.version_ < b.version_;
        return a.bits_ < b.bits_;
    }

private:
    std::vector<bool> bits_;
    std::uint64_t version_ = 0;
};

using CandidateId = std::uint64_t;

struct CandidateRecord {
    CandidateId id = 0;
    Mask mask;
    std::optional<double> accuracy;
    std::optional<std::uint64_t> iteration_evaluated;

    bool evaluated() const noexcept { return accuracy.has_value(); }
    friend bool operator==(const CandidateRecord&, const CandidateRecord&) = default;
};

// Operator-imposed restrictions: fixed paths are in every sampled or repaired
// mask, pruned paths in none.
struct PathConstraints {
    std::set<PathIndex> fixed;
    std::set<PathIndex> pruned;
    friend bool operator==(const PathConstraints&, const PathConstraints&) = default;
};

// Valid iff every node has exactly two set incoming paths with distinct sources.
bool is_valid(const TemplateNetwork& network, const Mask& mask);

Mask sample_mask(const TemplateNetwork& network, std::span<const double> path_probabilities, std::uint64_t seed,
                 const PathConstraints& constraints = {});

Mask repair_mask(const TemplateNetwork& network, const Mask& mask, std::span<const double> path_probabilities,
                 std::uint64_t seed, const PathConstraints& constraints = {});

std::vector<double> uniform_probabilities(const TemplateNetwork& network);

// Candidate dataflow graph. Vertex 0 and 1 are the network inputs feeding the
// first cell; then one vertex per active path in path order, labelled by the
// operation. A path reading node j gets edges from both of node j's paths; a
// path reading a cell input gets edges from every path of that earlier cell.
LabeledGraph mask_to_subgraph(const TemplateNetwork& network, const Mask& mask);

// Number of valid masks, saturating at UINT64_MAX.
std::uint64_t count_valid_masks(const TemplateNetwork& network);

nlohmann::json mask_to_json(const Mask& mask);
Mask mask_from_json(const nlohmann::json& doc);
nlohmann::json candidate_to_json(const CandidateRecord& record);
CandidateRecord candidate_from_json(const nlohmann::json& doc);

} // namespace hilnas
