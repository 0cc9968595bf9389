#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace hilnas {

using PathIndex = std::size_t;

// The six built-in candidate operations, in path-enumeration order, followed
// by user-defined operations.
enum class OpTag : std::uint8_t {
    MaxPool3x3,
    AvgPool3x3,
    Skip,
    SepConv3x3,
    SepConv5x5,
    Conv1x3_3x1,
    Custom,
};

inline constexpr OpTag kBuiltinOps[] = {OpTag::MaxPool3x3, OpTag::AvgPool3x3,  OpTag::Skip,
                                        OpTag::SepConv3x3, OpTag::SepConv5x5, OpTag::Conv1x3_3x1};

std::string_view op_tag_name(OpTag tag) noexcept;
std::optional<OpTag> op_tag_from_name(std::string_view name) noexcept;

struct OpKind {
    OpTag tag = OpTag::Skip;
    std::string name;  // unique within a cell; built-ins use their tag name
    std::map<std::string, double> params;

    static OpKind builtin(OpTag tag);
    static OpKind custom(std::string name, std::map<std::string, double> params = {});

    // Short vertex label used in candidate subgraphs ("M3", "C5", ...).
    std::string label() const;

    friend bool operator==(const OpKind&, const OpKind&) = default;
};

// Input of a node: one of the two cell inputs or an earlier node of the
// same cell. Ordered inputs first, then nodes by index.
class Source {
public:
    static constexpr Source input(int which) noexcept { return Source(which); }
    static constexpr Source node(int index) noexcept { return Source(2 + index); }

    constexpr bool is_input() const noexcept { return value_ < 2; }
    constexpr int input_index() const noexcept { return value_; }
    constexpr int node_index() const noexcept { return value_ - 2; }
    constexpr int raw() const noexcept { return value_; }
    static constexpr Source from_raw(int raw) noexcept { return Source(raw); }

    std::string to_string() const;
    static std::optional<Source> parse(std::string_view text);

    friend constexpr auto operator<=>(const Source&, const Source&) = default;

private:
    constexpr explicit Source(int value) noexcept : value_(value) {}
    int value_ = 0;
};

struct NodeSpec {
    int node_id = 0;
    std::vector<Source> allowed_inputs;  // sorted, distinct

    friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

enum class CellKind : std::uint8_t { Normal, Reduction };

struct CellSpec {
    int cell_id = 0;  // stable identity across edits, not a position
    CellKind kind = CellKind::Normal;
    std::vector<OpKind> ops;  // candidate operations on every path of the cell
    std::vector<NodeSpec> nodes;

    friend bool operator==(const CellSpec&, const CellSpec&) = default;
};

// One (source, operation, destination) edge of the supergraph.
struct PathInfo {
    std::size_t cell = 0;  // position in the cell list
    int dst_node = 0;
    Source source = Source::input(0);
    std::size_t op = 0;  // index into the cell's op list

    friend bool operator==(const PathInfo&, const PathInfo&) = default;
};

// Contiguous run of path ids. Paths are sorted by (cell, node, source, op),
// so each node's incoming paths and each cell's paths occupy one range.
struct PathRange {
    PathIndex begin = 0;
    PathIndex end = 0;
    std::size_t size() const noexcept { return end - begin; }
    friend bool operator==(const PathRange&, const PathRange&) = default;
};

struct NodeGroup {
    std::size_t cell = 0;
    int node = 0;
    PathRange paths;
};

struct Shape {
    long height = 0;
    long width = 0;
    long features = 0;
    friend bool operator==(const Shape&, const Shape&) = default;
};

struct StackingPlan {
    int num_normal = 0;
    int num_reduction = 0;
};

inline constexpr int kDefaultNodesPerCell = 4;

// Immutable, validated supergraph. Edits produce new values.
class TemplateNetwork {
public:
    TemplateNetwork(std::string dataset_tag, std::vector<CellSpec> cells, std::uint64_t version);

    const std::string& dataset_tag() const noexcept { return dataset_tag_; }
    const std::vector<CellSpec>& cells() const noexcept { return cells_; }
    std::uint64_t version() const noexcept { return version_; }
    StackingPlan plan() const noexcept;

    std::span<const PathInfo> paths() const noexcept { return paths_; }
    std::size_t path_count() const noexcept { return paths_.size(); }
    const PathInfo& path(PathIndex p) const { return paths_.at(p); }
    const OpKind& op_of(PathIndex p) const;

    std::span<const NodeGroup> node_groups() const noexcept { return groups_; }
    std::span<const PathRange> cell_ranges() const noexcept { return cell_ranges_; }

    // Index of the node group a path belongs to.
    std::size_t group_of(PathIndex p) const { return path_group_.at(p); }

    std::optional<std::size_t> cell_position(int cell_id) const noexcept;
    std::optional<PathIndex> find_path(std::size_t cell, int dst_node, Source source,
                                       std::string_view op_name) const noexcept;

    // (H, W, F) after the full stack: reduction cells halve H and W and
    // double F, normal cells preserve the shape.
    Shape output_shape(Shape input) const noexcept;

    // Human-readable path description, e.g. "cell0/node1<-input0:sep_conv_3x3".
    std::string describe_path(PathIndex p) const;

    friend bool operator==(const TemplateNetwork& a, const TemplateNetwork& b) {
        return a.dataset_tag_ == b.dataset_tag_ && a.version_ == b.version_ && a.cells_ == b.cells_;
    }

private:
    std::string dataset_tag_;
    std::vector<CellSpec> cells_;
    std::uint64_t version_ = 0;
    std::vector<PathInfo> paths_;
    std::vector<NodeGroup> groups_;
    std::vector<PathRange> cell_ranges_;
    std::vector<std::size_t> path_group_;
};

// Dataset tags select built-in stacking plans.
std::optional<StackingPlan> default_plan(std::string_view dataset_tag) noexcept;

TemplateNetwork build_template(std::string_view dataset_tag, std::optional<int> num_normal = {},
                               std::optional<int> num_reduction = {},
                               std::optional<int> nodes_per_cell = {});

std::vector<PathInfo> enumerate_paths(const TemplateNetwork& network);

// Template edits. Cells are addressed by position; ops by name.
namespace edit {
struct AddNode {
    std::size_t cell = 0;
};
struct RemoveNode {
    std::size_t cell = 0;
    int node = 0;
};
struct AddCell {
    CellKind kind = CellKind::Normal;
    std::optional<std::size_t> position;  // append when unset
    int nodes = kDefaultNodesPerCell;
};
struct RemoveCell {
    std::size_t cell = 0;
};
struct SetOpParams {
    std::optional<std::size_t> cell;  // every cell carrying the op when unset
    std::string op;
    std::map<std::string, double> params;
};
struct RemoveOp {
    std::optional<std::size_t> cell;
    std::string op;
};
struct AddOp {
    std::optional<std::size_t> cell;
    OpKind op;
};
} // namespace edit

using TemplateEdit = std::variant<edit::AddNode, edit::RemoveNode, edit::AddCell, edit::RemoveCell,
                                  edit::SetOpParams, edit::RemoveOp, edit::AddOp>;

struct EditResult {
    TemplateNetwork network;
    // old path id -> new path id for paths that survive the edit
    std::vector<std::optional<PathIndex>> path_map;
};

EditResult edit_template(const TemplateNetwork& network, const TemplateEdit& change);

// Surviving-path map between two arbitrary templates, matched by
// (cell id, node, source, op name).
std::vector<std::optional<PathIndex>> match_paths(const TemplateNetwork& from,
                                                  const TemplateNetwork& to);

// Stable identity of a path independent of its dense index.
std::string path_key(const TemplateNetwork& network, PathIndex p);

inline constexpr int kTemplateSchemaVersion = 1;

nlohmann::json template_to_json(const TemplateNetwork& network);
TemplateNetwork template_from_json(const nlohmann::json& doc);

nlohmann::json edit_to_json(const TemplateEdit& change);
TemplateEdit edit_from_json(const nlohmann::json& doc);

std::string_view cell_kind_name(CellKind kind) noexcept;

} // namespace hilnas
