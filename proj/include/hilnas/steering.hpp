#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hilnas/evolution.hpp"
#include "hilnas/projection.hpp"
#include "hilnas/region.hpp"

namespace hilnas {

// Points of `embedding` inside `shape`. Needs an embedding built from masks.
RegionConstraint resolve_region(const Embedding& embedding, const RegionShape& shape);

// Restricts new candidates (and their parents) to the region's members from
// the next step on. Rejects regions with fewer than two members, a digest
// other than `expected_digest` when given, and regions none of whose members
// fit the current prune/fix constraints.
SearchState set_region(SearchState state, const Embedding& embedding, const RegionShape& shape,
                       const std::optional<std::string>& expected_digest = {});
SearchState clear_region(SearchState state);

enum class SetOp { Union, Intersection, Complement };

const char* set_op_name(SetOp op) noexcept;
SetOp set_op_from_name(std::string_view name);

struct SetOpResult {
    SetOp op = SetOp::Union;
    std::vector<PathIndex> paths;  // sorted
    std::vector<CandidateId> member_ids;

    friend bool operator==(const SetOpResult&, const SetOpResult&) = default;
};

SetOpResult set_operation(const TemplateNetwork& network, SetOp op, const RegionConstraint& region);

// Pruned paths get fitness zero and are never sampled again.
SearchState prune_paths(SearchState state, const TemplateNetwork& network, std::span<const PathIndex> path_ids);

// Fixed paths are part of every sampled or repaired mask.
SearchState fix_paths(SearchState state, const TemplateNetwork& network, std::span<const PathIndex> path_ids);

nlohmann::json set_op_result_to_json(const SetOpResult& result);

} // namespace hilnas
