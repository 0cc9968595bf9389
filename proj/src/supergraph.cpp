#include "hilnas/supergraph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <unordered_map>

#include "hilnas/error.hpp"

namespace hilnas {

namespace {

constexpr std::string_view kTagNames[] = {"max_pool_3x3", "avg_pool_3x3", "skip_connect", "sep_conv_3x3",
                                          "sep_conv_5x5", "conv_1x3_3x1", "custom"};

bool op_less(const OpKind& a, const OpKind& b) {
    return std::tie(a.tag, a.name) < std::tie(b.tag, b.name);
}

void validate_params(const std::map<std::string, double>& params, const std::string& field) {
    for (const auto& [key, value] : params) {
        if (key.empty()) fail_validation("parameter name must be non-empty", field);
        if (!std::isfinite(value)) fail_validation("parameter '" + key + "' is not finite", field + "." + key);
    }
}

std::vector<OpKind> builtin_op_list() {
    std::vector<OpKind> ops;
    for (OpTag tag : kBuiltinOps) ops.push_back(OpKind::builtin(tag));
    return ops;
}

NodeSpec fresh_node(int node_id) {
    NodeSpec node;
    node.node_id = node_id;
    node.allowed_inputs = {Source::input(0), Source::input(1)};
    for (int k = 0; k < node_id; ++k) node.allowed_inputs.push_back(Source::node(k));
    return node;
}

CellSpec fresh_cell(int cell_id, CellKind kind, int nodes) {
    CellSpec cell;
    cell.cell_id = cell_id;
    cell.kind = kind;
    cell.ops = builtin_op_list();
    for (int j = 0; j < nodes; ++j) cell.nodes.push_back(fresh_node(j));
    return cell;
}

int next_cell_id(const std::vector<CellSpec>& cells) {
    int id = 0;
    for (const auto& c : cells) id = std::max(id, c.cell_id + 1);
    return id;
}

std::vector<std::size_t> target_cells(const TemplateNetwork& net, const std::optional<std::size_t>& cell) {
    std::vector<std::size_t> out;
    if (cell) {
        if (*cell >= net.cells().size()) fail_validation("cell index out of range", "edit.cell");
        out.push_back(*cell);
    } else {
        for (std::size_t c = 0; c < net.cells().size(); ++c) out.push_back(c);
    }
    return out;
}

std::size_t find_op(const CellSpec& cell, std::string_view name) {
    for (std::size_t i = 0; i < cell.ops.size(); ++i)
        if (cell.ops[i].name == name) return i;
    return cell.ops.size();
}

struct KeyParts {
    int cell_id;
    int node;
    int source;
    std::string op;
    friend bool operator<(const KeyParts& a, const KeyParts& b) {
        return std::tie(a.cell_id, a.node, a.source, a.op) < std::tie(b.cell_id, b.node, b.source, b.op);
    }
};

KeyParts key_parts(const TemplateNetwork& net, PathIndex p) {
    const PathInfo& info = net.path(p);
    const CellSpec& cell = net.cells()[info.cell];
    return {cell.cell_id, info.dst_node, info.source.raw(), cell.ops[info.op].name};
}

std::map<KeyParts, PathIndex> key_index(const TemplateNetwork& net) {
    std::map<KeyParts, PathIndex> index;
    for (PathIndex p = 0; p < net.path_count(); ++p) index.emplace(key_parts(net, p), p);
    return index;
}

} // namespace

std::string_view op_tag_name(OpTag tag) noexcept {
    return kTagNames[static_cast<std::size_t>(tag)];
}

std::optional<OpTag> op_tag_from_name(std::string_view name) noexcept {
    for (std::size_t i = 0; i < std::size(kTagNames); ++i)
        if (kTagNames[i] == name) return static_cast<OpTag>(i);
    return std::nullopt;
}

OpKind OpKind::builtin(OpTag tag) {
    return OpKind{tag, std::string(op_tag_name(tag)), {}};
}

OpKind OpKind::custom(std::string name, std::map<std::string, double> params) {
    return OpKind{OpTag::Custom, std::move(name), std::move(params)};
}

std::string OpKind::label() const {
    switch (tag) {
        case OpTag::MaxPool3x3: return "M3";
        case OpTag::AvgPool3x3: return "A3";
        case OpTag::Skip: return "S";
        case OpTag::SepConv3x3: return "C3";
        case OpTag::SepConv5x5: return "C5";
        case OpTag::Conv1x3_3x1: return "C13";
        case OpTag::Custom: return "X:" + name;
    }
    return "?";
}

std::string Source::to_string() const {
    if (is_input()) return "input" + std::to_string(input_index());
    return "node" + std::to_string(node_index());
}

std::optional<Source> Source::parse(std::string_view text) {
    auto number = [](std::string_view digits) -> std::optional<int> {
        if (digits.empty() || digits.size() > 6) return std::nullopt;
        int v = 0;
        for (char c : digits) {
            if (c < '0' || c > '9') return std::nullopt;
            v = v * 10 + (c - '0');
        }
        return v;
    };
    if (text.starts_with("input")) {
        auto v = number(text.substr(5));
        if (v && *v < 2) return Source::input(*v);
    } else if (text.starts_with("node")) {
        if (auto v = number(text.substr(4))) return Source::node(*v);
    }
    return std::nullopt;
}

std::string_view cell_kind_name(CellKind kind) noexcept {
    return kind == CellKind::Normal ? "normal" : "reduction";
}

TemplateNetwork::TemplateNetwork(std::string dataset_tag, std::vector<CellSpec> cells, std::uint64_t version)
    : dataset_tag_(std::move(dataset_tag)), cells_(std::move(cells)), version_(version) {
    if (cells_.empty()) fail_validation("template has no cells", "cells");
    bool has_normal = false;
    std::set<int> cell_ids;
    for (std::size_t c = 0; c < cells_.size(); ++c) {
        CellSpec& cell = cells_[c];
        const std::string field = "cells[" + std::to_string(c) + "]";
        if (!cell_ids.insert(cell.cell_id).second) fail_validation("duplicate cell_id", field + ".cell_id");
        has_normal = has_normal || cell.kind == CellKind::Normal;
        if (cell.nodes.empty()) fail_validation("cell must contain at least one node", field + ".nodes");
        if (cell.ops.empty()) fail_validation("cell must offer at least one operation", field + ".ops");
        std::stable_sort(cell.ops.begin(), cell.ops.end(), op_less);
        std::set<std::string> names;
        for (const OpKind& op : cell.ops) {
            if (op.name.empty()) fail_validation("operation name must be non-empty", field + ".ops");
            if (op.tag != OpTag::Custom && op.name != op_tag_name(op.tag))
                fail_validation("built-in operation '" + op.name + "' must use its tag name", field + ".ops");
            if (!names.insert(op.name).second) fail_validation("duplicate operation '" + op.name + "'", field + ".ops");
            validate_params(op.params, field + ".ops." + op.name);
        }
        for (std::size_t j = 0; j < cell.nodes.size(); ++j) {
            NodeSpec& node = cell.nodes[j];
            const std::string nfield = field + ".nodes[" + std::to_string(j) + "]";
            if (node.node_id != static_cast<int>(j)) fail_validation("node ids must be dense and ordered", nfield);
            std::sort(node.allowed_inputs.begin(), node.allowed_inputs.end());
            if (std::adjacent_find(node.allowed_inputs.begin(), node.allowed_inputs.end()) != node.allowed_inputs.end())
                fail_validation("allowed inputs must be distinct", nfield + ".allowed_inputs");
            for (Source s : node.allowed_inputs) {
                if (s.raw() < 0 || s >= Source::node(node.node_id))
                    fail_validation("input " + s.to_string() + " does not precede node " + std::to_string(j),
                                    nfield + ".allowed_inputs");
            }
            if (node.allowed_inputs.size() < 2)
                fail_validation("node needs at least two distinct input sources", nfield + ".allowed_inputs");
        }
    }
    if (!has_normal) fail_validation("template needs at least one normal cell", "cells");

    for (std::size_t c = 0; c < cells_.size(); ++c) {
        const CellSpec& cell = cells_[c];
        PathRange cell_range{paths_.size(), paths_.size()};
        for (const NodeSpec& node : cell.nodes) {
            PathRange range{paths_.size(), paths_.size()};
            for (Source s : node.allowed_inputs)
                for (std::size_t o = 0; o < cell.ops.size(); ++o) {
                    paths_.push_back(PathInfo{c, node.node_id, s, o});
                    path_group_.push_back(groups_.size());
                }
            range.end = paths_.size();
            groups_.push_back(NodeGroup{c, node.node_id, range});
        }
        cell_range.end = paths_.size();
        cell_ranges_.push_back(cell_range);
    }
}

StackingPlan TemplateNetwork::plan() const noexcept {
    StackingPlan p;
    for (const auto& c : cells_) (c.kind == CellKind::Normal ? p.num_normal : p.num_reduction) += 1;
    return p;
}

const OpKind& TemplateNetwork::op_of(PathIndex p) const {
    const PathInfo& info = path(p);
    return cells_[info.cell].ops[info.op];
}

std::optional<std::size_t> TemplateNetwork::cell_position(int cell_id) const noexcept {
    for (std::size_t c = 0; c < cells_.size(); ++c)
        if (cells_[c].cell_id == cell_id) return c;
    return std::nullopt;
}

std::optional<PathIndex> TemplateNetwork::find_path(std::size_t cell, int dst_node, Source source,
                                                    std::string_view op_name) const noexcept {
    for (const NodeGroup& g : groups_) {
        if (g.cell != cell || g.node != dst_node) continue;
        for (PathIndex p = g.paths.begin; p < g.paths.end; ++p)
            if (paths_[p].source == source && cells_[cell].ops[paths_[p].op].name == op_name) return p;
    }
    return std::nullopt;
}

Shape TemplateNetwork::output_shape(Shape input) const noexcept {
    for (const auto& c : cells_) {
        if (c.kind == CellKind::Reduction) {
            input.height /= 2;
            input.width /= 2;
            input.features *= 2;
        }
    }
    return input;
}

std::string TemplateNetwork::describe_path(PathIndex p) const {
    const PathInfo& info = path(p);
    return "cell" + std::to_string(info.cell) + "/node" + std::to_string(info.dst_node) + "<-" +
           info.source.to_string() + ":" + cells_[info.cell].ops[info.op].name;
}

std::optional<StackingPlan> default_plan(std::string_view dataset_tag) noexcept {
    if (dataset_tag == "toy" || dataset_tag == "moons" || dataset_tag == "blobs") return StackingPlan{2, 1};
    if (dataset_tag == "digits") return StackingPlan{2, 2};
    return std::nullopt;
}

TemplateNetwork build_template(std::string_view dataset_tag, std::optional<int> num_normal,
                               std::optional<int> num_reduction, std::optional<int> nodes_per_cell) {
    const auto plan = default_plan(dataset_tag);
    if (!plan) fail_validation("unknown dataset tag '" + std::string(dataset_tag) + "'", "dataset_tag");
    const int normals = num_normal.value_or(plan->num_normal);
    const int reductions = num_reduction.value_or(plan->num_reduction);
    const int nodes = nodes_per_cell.value_or(kDefaultNodesPerCell);
    if (normals < 1) fail_validation("num_normal must be at least 1", "num_normal");
    if (reductions < 0) fail_validation("num_reduction must be non-negative", "num_reduction");
    if (nodes < 1) fail_validation("nodes_per_cell must be at least 1", "nodes_per_cell");

    // Normal cells are split into (reductions + 1) near-equal runs with a
    // reduction cell between consecutive runs.
    std::vector<CellSpec> cells;
    int id = 0;
    for (int run = 0; run <= reductions; ++run) {
        const int count = normals / (reductions + 1) + (run < normals % (reductions + 1) ? 1 : 0);
        for (int i = 0; i < count; ++i) cells.push_back(fresh_cell(id++, CellKind::Normal, nodes));
        if (run < reductions) cells.push_back(fresh_cell(id++, CellKind::Reduction, nodes));
    }
    return TemplateNetwork(std::string(dataset_tag), std::move(cells), 0);
}

std::vector<PathInfo> enumerate_paths(const TemplateNetwork& network) {
    return {network.paths().begin(), network.paths().end()};
}

std::string path_key(const TemplateNetwork& network, PathIndex p) {
    const KeyParts k = key_parts(network, p);
    return "c" + std::to_string(k.cell_id) + "/n" + std::to_string(k.node) + "/" +
           Source::from_raw(k.source).to_string() + "/" + k.op;
}

std::vector<std::optional<PathIndex>> match_paths(const TemplateNetwork& from, const TemplateNetwork& to) {
    const auto index = key_index(to);
    std::vector<std::optional<PathIndex>> map(from.path_count());
    for (PathIndex p = 0; p < from.path_count(); ++p) {
        auto it = index.find(key_parts(from, p));
        if (it != index.end()) map[p] = it->second;
    }
    return map;
}

EditResult edit_template(const TemplateNetwork& network, const TemplateEdit& change) {
    std::vector<CellSpec> cells = network.cells();
    // Node renumbering for remove_node: (cell_id, removed node).
    std::optional<std::pair<int, int>> removed_node;

    std::visit(
        [&](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, edit::AddNode>) {
                if (e.cell >= cells.size()) fail_validation("cell index out of range", "edit.cell");
                auto& nodes = cells[e.cell].nodes;
                nodes.push_back(fresh_node(static_cast<int>(nodes.size())));
            } else if constexpr (std::is_same_v<T, edit::RemoveNode>) {
                if (e.cell >= cells.size()) fail_validation("cell index out of range", "edit.cell");
                auto& nodes = cells[e.cell].nodes;
                if (e.node < 0 || e.node >= static_cast<int>(nodes.size()))
                    fail_validation("node index out of range", "edit.node");
                if (nodes.size() == 1) fail_validation("cannot remove the only node of a cell", "edit.node");
                nodes.erase(nodes.begin() + e.node);
                for (std::size_t j = static_cast<std::size_t>(e.node); j < nodes.size(); ++j) {
                    NodeSpec& n = nodes[j];
                    n.node_id = static_cast<int>(j);
                    std::vector<Source> kept;
                    for (Source s : n.allowed_inputs) {
                        if (s == Source::node(e.node)) continue;
                        kept.push_back(!s.is_input() && s.node_index() > e.node ? Source::node(s.node_index() - 1) : s);
                    }
                    if (kept.size() < 2)
                        fail_validation("removing node " + std::to_string(e.node) + " would orphan node " +
                                            std::to_string(j + 1),
                                        "edit.node");
                    n.allowed_inputs = std::move(kept);
                }
                removed_node = std::make_pair(cells[e.cell].cell_id, e.node);
            } else if constexpr (std::is_same_v<T, edit::AddCell>) {
                if (e.nodes < 1) fail_validation("nodes must be at least 1", "edit.nodes");
                const std::size_t pos = e.position.value_or(cells.size());
                if (pos > cells.size()) fail_validation("cell position out of range", "edit.position");
                cells.insert(cells.begin() + static_cast<std::ptrdiff_t>(pos),
                             fresh_cell(next_cell_id(cells), e.kind, e.nodes));
            } else if constexpr (std::is_same_v<T, edit::RemoveCell>) {
                if (e.cell >= cells.size()) fail_validation("cell index out of range", "edit.cell");
                const bool last_normal =
                    cells[e.cell].kind == CellKind::Normal &&
                    std::count_if(cells.begin(), cells.end(),
                                  [](const CellSpec& c) { return c.kind == CellKind::Normal; }) == 1;
                if (last_normal) fail_validation("cannot remove the last normal cell", "edit.cell");
                cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(e.cell));
            } else if constexpr (std::is_same_v<T, edit::SetOpParams>) {
                validate_params(e.params, "edit.params");
                bool found = false;
                for (std::size_t c : target_cells(network, e.cell)) {
                    const std::size_t o = find_op(cells[c], e.op);
                    if (o == cells[c].ops.size()) continue;
                    for (const auto& [k, v] : e.params) cells[c].ops[o].params[k] = v;
                    found = true;
                }
                if (!found) fail_validation("operation '" + e.op + "' not found", "edit.op");
            } else if constexpr (std::is_same_v<T, edit::RemoveOp>) {
                bool found = false;
                for (std::size_t c : target_cells(network, e.cell)) {
                    const std::size_t o = find_op(cells[c], e.op);
                    if (o == cells[c].ops.size()) continue;
                    if (cells[c].ops.size() == 1)
                        fail_validation("cannot remove the last operation of cell " + std::to_string(c), "edit.op");
                    cells[c].ops.erase(cells[c].ops.begin() + static_cast<std::ptrdiff_t>(o));
                    found = true;
                }
                if (!found) fail_validation("operation '" + e.op + "' not found", "edit.op");
            } else if constexpr (std::is_same_v<T, edit::AddOp>) {
                for (std::size_t c : target_cells(network, e.cell)) {
                    if (find_op(cells[c], e.op.name) != cells[c].ops.size())
                        fail_validation("operation '" + e.op.name + "' already present", "edit.op");
                    cells[c].ops.push_back(e.op);
                }
            }
        },
        change);

    TemplateNetwork next(network.dataset_tag(), std::move(cells), network.version() + 1);

    const auto index = key_index(next);
    std::vector<std::optional<PathIndex>> map(network.path_count());
    for (PathIndex p = 0; p < network.path_count(); ++p) {
        KeyParts k = key_parts(network, p);
        if (removed_node && k.cell_id == removed_node->first) {
            const int gone = removed_node->second;
            if (k.node == gone || k.source == Source::node(gone).raw()) continue;
            if (k.node > gone) --k.node;
            if (k.source > Source::node(gone).raw()) --k.source;
        }
        auto it = index.find(k);
        if (it != index.end()) map[p] = it->second;
    }
    return EditResult{std::move(next), std::move(map)};
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json params_to_json(const std::map<std::string, double>& params) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : params) j[k] = v;
    return j;
}

std::map<std::string, double> params_from_json(const nlohmann::json& j, const std::string& field) {
    std::map<std::string, double> out;
    if (j.is_null()) return out;
    if (!j.is_object()) fail_validation("params must be an object", field);
    for (const auto& [k, v] : j.items()) {
        if (!v.is_number()) fail_validation("parameter must be a number", field + "." + k);
        out[k] = v.get<double>();
    }
    return out;
}

OpKind op_from_json(const nlohmann::json& j, const std::string& field) {
    if (!j.is_object()) fail_validation("operation must be an object", field);
    const auto tag = op_tag_from_name(j.value("tag", std::string{}));
    if (!tag) fail_validation("unknown operation tag", field + ".tag");
    OpKind op;
    op.tag = *tag;
    op.name = j.value("name", std::string(op_tag_name(*tag)));
    op.params = params_from_json(j.value("params", nlohmann::json::object()), field + ".params");
    return op;
}

nlohmann::json op_to_json(const OpKind& op) {
    return {{"tag", op_tag_name(op.tag)}, {"name", op.name}, {"params", params_to_json(op.params)}};
}

template <class T>
T required(const nlohmann::json& j, const char* key, const std::string& field) {
    if (!j.is_object() || !j.contains(key)) fail_validation(std::string("missing field '") + key + "'", field + "." + key);
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail_validation(std::string("field '") + key + "' has the wrong type", field + "." + key);
    }
}

std::optional<std::size_t> optional_cell(const nlohmann::json& j) {
    if (!j.contains("cell") || j["cell"].is_null()) return std::nullopt;
    return required<std::size_t>(j, "cell", "edit");
}

} // namespace

nlohmann::json template_to_json(const TemplateNetwork& network) {
    nlohmann::json cells = nlohmann::json::array();
    for (const CellSpec& c : network.cells()) {
        nlohmann::json ops = nlohmann::json::array();
        for (const OpKind& op : c.ops) ops.push_back(op_to_json(op));
        nlohmann::json nodes = nlohmann::json::array();
        for (const NodeSpec& n : c.nodes) {
            nlohmann::json inputs = nlohmann::json::array();
            for (Source s : n.allowed_inputs) inputs.push_back(s.to_string());
            nodes.push_back({{"node_id", n.node_id}, {"allowed_inputs", inputs}});
        }
        cells.push_back({{"cell_id", c.cell_id}, {"kind", cell_kind_name(c.kind)}, {"ops", ops}, {"nodes", nodes}});
    }
    return {{"schema_version", kTemplateSchemaVersion},
            {"dataset_tag", network.dataset_tag()},
            {"version", network.version()},
            {"cells", cells}};
}

TemplateNetwork template_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) fail_validation("template document must be an object", "template");
    const int schema = required<int>(doc, "schema_version", "template");
    if (schema != kTemplateSchemaVersion)
        fail_validation("unsupported template schema_version " + std::to_string(schema), "template.schema_version");
    const auto tag = required<std::string>(doc, "dataset_tag", "template");
    const auto version = required<std::uint64_t>(doc, "version", "template");
    const auto& jcells = doc.contains("cells") ? doc["cells"] : nlohmann::json();
    if (!jcells.is_array()) fail_validation("cells must be an array", "template.cells");
    std::vector<CellSpec> cells;
    for (std::size_t c = 0; c < jcells.size(); ++c) {
        const std::string field = "template.cells[" + std::to_string(c) + "]";
        const auto& jc = jcells[c];
        CellSpec cell;
        cell.cell_id = required<int>(jc, "cell_id", field);
        const auto kind = required<std::string>(jc, "kind", field);
        if (kind == "normal") cell.kind = CellKind::Normal;
        else if (kind == "reduction") cell.kind = CellKind::Reduction;
        else fail_validation("unknown cell kind '" + kind + "'", field + ".kind");
        const auto& jops = jc.contains("ops") ? jc["ops"] : nlohmann::json();
        if (!jops.is_array()) fail_validation("ops must be an array", field + ".ops");
        for (std::size_t o = 0; o < jops.size(); ++o)
            cell.ops.push_back(op_from_json(jops[o], field + ".ops[" + std::to_string(o) + "]"));
        const auto& jnodes = jc.contains("nodes") ? jc["nodes"] : nlohmann::json();
        if (!jnodes.is_array()) fail_validation("nodes must be an array", field + ".nodes");
        for (std::size_t n = 0; n < jnodes.size(); ++n) {
            const std::string nfield = field + ".nodes[" + std::to_string(n) + "]";
            NodeSpec node;
            node.node_id = required<int>(jnodes[n], "node_id", nfield);
            for (const auto& s : required<std::vector<std::string>>(jnodes[n], "allowed_inputs", nfield)) {
                auto src = Source::parse(s);
                if (!src) fail_validation("bad input source '" + s + "'", nfield + ".allowed_inputs");
                node.allowed_inputs.push_back(*src);
            }
            cell.nodes.push_back(std::move(node));
        }
        cells.push_back(std::move(cell));
    }
    return TemplateNetwork(tag, std::move(cells), version);
}

nlohmann::json edit_to_json(const TemplateEdit& change) {
    auto cell_json = [](const std::optional<std::size_t>& c) { return c ? nlohmann::json(*c) : nlohmann::json(); };
    return std::visit(
        [&](const auto& e) -> nlohmann::json {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, edit::AddNode>) return {{"type", "add_node"}, {"cell", e.cell}};
            else if constexpr (std::is_same_v<T, edit::RemoveNode>)
                return {{"type", "remove_node"}, {"cell", e.cell}, {"node", e.node}};
            else if constexpr (std::is_same_v<T, edit::AddCell>)
                return {{"type", "add_cell"}, {"kind", cell_kind_name(e.kind)}, {"position", cell_json(e.position)},
                        {"nodes", e.nodes}};
            else if constexpr (std::is_same_v<T, edit::RemoveCell>) return {{"type", "remove_cell"}, {"cell", e.cell}};
            else if constexpr (std::is_same_v<T, edit::SetOpParams>)
                return {{"type", "set_op_params"}, {"cell", cell_json(e.cell)}, {"op", e.op},
                        {"params", params_to_json(e.params)}};
            else if constexpr (std::is_same_v<T, edit::RemoveOp>)
                return {{"type", "remove_op"}, {"cell", cell_json(e.cell)}, {"op", e.op}};
            else return {{"type", "add_op"}, {"cell", cell_json(e.cell)}, {"op", op_to_json(e.op)}};
        },
        change);
}

TemplateEdit edit_from_json(const nlohmann::json& doc) {
    const auto type = required<std::string>(doc, "type", "edit");
    if (type == "add_node") return edit::AddNode{required<std::size_t>(doc, "cell", "edit")};
    if (type == "remove_node")
        return edit::RemoveNode{required<std::size_t>(doc, "cell", "edit"), required<int>(doc, "node", "edit")};
    if (type == "add_cell") {
        edit::AddCell e;
        const auto kind = doc.value("kind", std::string("normal"));
        if (kind == "normal") e.kind = CellKind::Normal;
        else if (kind == "reduction") e.kind = CellKind::Reduction;
        else fail_validation("unknown cell kind '" + kind + "'", "edit.kind");
        if (doc.contains("position") && !doc["position"].is_null())
            e.position = required<std::size_t>(doc, "position", "edit");
        if (doc.contains("nodes")) e.nodes = required<int>(doc, "nodes", "edit");
        return e;
    }
    if (type == "remove_cell") return edit::RemoveCell{required<std::size_t>(doc, "cell", "edit")};
    if (type == "set_op_params")
        return edit::SetOpParams{optional_cell(doc), required<std::string>(doc, "op", "edit"),
                                 params_from_json(doc.value("params", nlohmann::json::object()), "edit.params")};
    if (type == "remove_op") return edit::RemoveOp{optional_cell(doc), required<std::string>(doc, "op", "edit")};
    if (type == "add_op") {
        if (!doc.contains("op")) fail_validation("missing field 'op'", "edit.op");
        return edit::AddOp{optional_cell(doc), op_from_json(doc["op"], "edit.op")};
    }
    fail_validation("unknown edit type '" + type + "'", "edit.type");
}

} // namespace hilnas
