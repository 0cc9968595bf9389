#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "hilnas/candidate.hpp"

namespace hilnas {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

struct Rect {
    double xmin = 0.0, ymin = 0.0, xmax = 0.0, ymax = 0.0;
    friend bool operator==(const Rect&, const Rect&) = default;
};

struct Polygon {
    std::vector<Point2> vertices;
    friend bool operator==(const Polygon&, const Polygon&) = default;
};

using RegionShape = std::variant<Rect, Polygon>;

bool contains(const RegionShape& shape, Point2 point) noexcept;

// An operator-selected area of the embedded search space, resolved against
// one embedding.
struct RegionConstraint {
    RegionShape shape;
    std::vector<CandidateId> member_ids;
    std::vector<Mask> member_masks;  // parallel to member_ids
    std::string embedding_digest;

    friend bool operator==(const RegionConstraint&, const RegionConstraint&) = default;
};

nlohmann::json shape_to_json(const RegionShape& shape);
RegionShape shape_from_json(const nlohmann::json& doc);
nlohmann::json region_to_json(const RegionConstraint& region);
RegionConstraint region_from_json(const nlohmann::json& doc);

} // namespace hilnas
