#include "hilnas/steering.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hilnas/error.hpp"

namespace hilnas {

bool contains(const RegionShape& shape, Point2 pt) noexcept {
    if (const auto* r = std::get_if<Rect>(&shape))
        return pt.x >= r->xmin && pt.x <= r->xmax && pt.y >= r->ymin && pt.y <= r->ymax;
    const auto& v = std::get<Polygon>(shape).vertices;
    // Even-odd ray casting.
    bool inside = false;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        if ((v[i].y > pt.y) != (v[j].y > pt.y) &&
            pt.x < (v[j].x - v[i].x) * (pt.y - v[i].y) / (v[j].y - v[i].y) + v[i].x)
            inside = !inside;
    }
    return inside;
}

nlohmann::json shape_to_json(const RegionShape& shape) {
    if (const auto* r = std::get_if<Rect>(&shape))
        return {{"type", "rect"}, {"xmin", r->xmin}, {"ymin", r->ymin}, {"xmax", r->xmax}, {"ymax", r->ymax}};
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : std::get<Polygon>(shape).vertices) pts.push_back({p.x, p.y});
    return {{"type", "polygon"}, {"vertices", pts}};
}

RegionShape shape_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("type")) fail_validation("region shape needs a type", "shape.type");
    try {
        const auto type = doc["type"].get<std::string>();
        if (type == "rect") {
            Rect r{doc.at("xmin").get<double>(), doc.at("ymin").get<double>(), doc.at("xmax").get<double>(),
                   doc.at("ymax").get<double>()};
            if (!(r.xmin <= r.xmax && r.ymin <= r.ymax)) fail_validation("rect bounds are inverted", "shape");
            return r;
        }
        if (type == "polygon") {
            Polygon poly;
            for (const auto& p : doc.at("vertices")) poly.vertices.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            if (poly.vertices.size() < 3) fail_validation("polygon needs at least three vertices", "shape.vertices");
            return poly;
        }
        fail_validation("unknown shape type '" + type + "'", "shape.type");
    } catch (const nlohmann::json::exception& e) {
        fail_validation(std::string("malformed region shape: ") + e.what(), "shape");
    }
}

nlohmann::json region_to_json(const RegionConstraint& region) {
    nlohmann::json masks = nlohmann::json::array();
    for (const auto& m : region.member_masks) masks.push_back(mask_to_json(m));
    return {{"shape", shape_to_json(region.shape)},
            {"member_ids", region.member_ids},
            {"member_masks", masks},
            {"embedding_digest", region.embedding_digest}};
}

RegionConstraint region_from_json(const nlohmann::json& doc) {
    RegionConstraint r;
    try {
        r.shape = shape_from_json(doc.at("shape"));
        r.member_ids = doc.at("member_ids").get<std::vector<CandidateId>>();
        for (const auto& m : doc.at("member_masks")) r.member_masks.push_back(mask_from_json(m));
        r.embedding_digest = doc.at("embedding_digest").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail_validation(std::string("malformed region: ") + e.what(), "region");
    }
    if (r.member_ids.size() != r.member_masks.size()) fail_validation("region member arrays differ in length", "region");
    return r;
}

RegionConstraint resolve_region(const Embedding& embedding, const RegionShape& shape) {
    if (embedding.masks.size() != embedding.ids.size())
        fail_validation("embedding carries no candidate masks", "embedding");
    RegionConstraint r;
    r.shape = shape;
    r.embedding_digest = embedding.digest();
    for (std::size_t i = 0; i < embedding.ids.size(); ++i)
        if (contains(shape, embedding.coords[i])) {
            r.member_ids.push_back(embedding.ids[i]);
            r.member_masks.push_back(embedding.masks[i]);
        }
    return r;
}

namespace {

bool compatible(const Mask& m, const PathConstraints& c) {
    for (PathIndex p : c.pruned)
        if (m.test(p)) return false;
    for (PathIndex p : c.fixed)
        if (!m.test(p)) return false;
    return true;
}

void require_compatible_member(const SearchState& state) {
    if (!state.region) return;
    for (const auto& m : state.region->member_masks)
        if (compatible(m, state.constraints)) return;
    throw Error(ErrorKind::Conflict, "no member of the active region satisfies the prune/fix constraints");
}

std::set<PathIndex> checked_ids(const TemplateNetwork& network, std::span<const PathIndex> ids) {
    if (ids.empty()) fail_validation("path_ids must not be empty", "path_ids");
    std::set<PathIndex> out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= network.path_count())
            fail_validation("path id " + std::to_string(ids[i]) + " is out of range", "path_ids[" + std::to_string(i) + "]");
        out.insert(ids[i]);
    }
    return out;
}

void check_state_version(const SearchState& state, const TemplateNetwork& network) {
    if (state.template_version != network.version())
        throw Error(ErrorKind::StaleState, "search state belongs to another template version");
}

// Every node must still be able to take two paths with distinct sources
// that are neither pruned nor in conflict with its fixed paths.
void check_satisfiable(const TemplateNetwork& network, const PathConstraints& c) {
    for (const NodeGroup& g : network.node_groups()) {
        std::vector<PathIndex> fixed;
        std::set<Source> open;
        for (PathIndex p = g.paths.begin; p < g.paths.end; ++p) {
            if (c.fixed.count(p)) fixed.push_back(p);
            if (!c.pruned.count(p)) open.insert(network.path(p).source);
        }
        const std::string where = "cell " + std::to_string(g.cell) + " node " + std::to_string(g.node);
        if (fixed.size() > 2) fail_validation(where + " would have more than two fixed paths", "path_ids");
        if (fixed.size() == 2 && network.path(fixed[0]).source == network.path(fixed[1]).source)
            fail_validation(where + " would have two fixed paths from the same source", "path_ids");
        if (open.size() < 2) fail_validation(where + " would be left with fewer than two usable sources", "path_ids");
        if (fixed.size() == 1) {
            open.erase(network.path(fixed[0]).source);
            if (open.empty()) fail_validation(where + " has no usable source besides its fixed path", "path_ids");
        }
    }
}

} // namespace

SearchState set_region(SearchState state, const Embedding& embedding, const RegionShape& shape,
                       const std::optional<std::string>& expected_digest) {
    if (expected_digest && *expected_digest != embedding.digest())
        throw Error(ErrorKind::StaleState, "region was drawn on an embedding that is no longer current",
                    "embedding_digest");
    RegionConstraint region = resolve_region(embedding, shape);
    if (region.member_ids.size() < 2)
        fail_validation("region must contain at least two candidates, found " + std::to_string(region.member_ids.size()),
                        "shape");
    for (const auto& m : region.member_masks)
        if (m.template_version() != state.template_version)
            throw Error(ErrorKind::StaleState, "embedding was computed for another template version", "embedding");
    state.region = std::move(region);
    require_compatible_member(state);
    return state;
}

SearchState clear_region(SearchState state) {
    state.region.reset();
    return state;
}

const char* set_op_name(SetOp op) noexcept {
    switch (op) {
        case SetOp::Union: return "union";
        case SetOp::Intersection: return "intersection";
        case SetOp::Complement: return "complement";
    }
    return "union";
}

SetOp set_op_from_name(std::string_view name) {
    if (name == "union") return SetOp::Union;
    if (name == "intersection") return SetOp::Intersection;
    if (name == "complement") return SetOp::Complement;
    fail_validation("unknown set operation '" + std::string(name) + "'", "op");
}

SetOpResult set_operation(const TemplateNetwork& network, SetOp op, const RegionConstraint& region) {
    if (region.member_masks.empty()) fail_validation("region has no members", "region");
    std::vector<bool> uni(network.path_count(), false), inter(network.path_count(), true);
    for (const auto& m : region.member_masks) {
        if (m.template_version() != network.version() || m.size() != network.path_count())
            throw Error(ErrorKind::StaleState, "region members belong to another template version", "region");
        for (PathIndex p = 0; p < m.size(); ++p) {
            uni[p] = uni[p] || m.test(p);
            inter[p] = inter[p] && m.test(p);
        }
    }
    SetOpResult r;
    r.op = op;
    r.member_ids = region.member_ids;
    for (PathIndex p = 0; p < network.path_count(); ++p) {
        const bool in = op == SetOp::Union ? uni[p] : op == SetOp::Intersection ? inter[p] : !uni[p];
        if (in) r.paths.push_back(p);
    }
    return r;
}

SearchState prune_paths(SearchState state, const TemplateNetwork& network, std::span<const PathIndex> path_ids) {
    check_state_version(state, network);
    const auto ids = checked_ids(network, path_ids);
    for (PathIndex p : ids)
        if (state.constraints.fixed.count(p))
            fail_validation("path " + std::to_string(p) + " is fixed and cannot be pruned", "path_ids");
    PathConstraints next = state.constraints;
    next.pruned.insert(ids.begin(), ids.end());
    check_satisfiable(network, next);
    state.constraints = std::move(next);
    const std::vector<PathIndex> list(ids.begin(), ids.end());
    state.fitness = prune_fitness(std::move(state.fitness), list);
    require_compatible_member(state);
    return state;
}

SearchState fix_paths(SearchState state, const TemplateNetwork& network, std::span<const PathIndex> path_ids) {
    check_state_version(state, network);
    const auto ids = checked_ids(network, path_ids);
    for (PathIndex p : ids)
        if (state.constraints.pruned.count(p))
            fail_validation("path " + std::to_string(p) + " is pruned and cannot be fixed", "path_ids");
    PathConstraints next = state.constraints;
    next.fixed.insert(ids.begin(), ids.end());
    check_satisfiable(network, next);
    state.constraints = std::move(next);
    require_compatible_member(state);
    return state;
}

nlohmann::json set_op_result_to_json(const SetOpResult& r) {
    return {{"op", set_op_name(r.op)}, {"paths", r.paths}, {"member_ids", r.member_ids}};
}

} // namespace hilnas
