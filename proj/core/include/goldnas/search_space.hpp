#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace goldnas {

using BigInt = boost::multiprecision::cpp_int;

/// Candidate operators on every edge.
enum class OpKind : std::uint8_t { SkipConnect = 0, SepConv3x3 = 1 };

inline constexpr std::array<OpKind, 2> kAllOps{OpKind::SkipConnect, OpKind::SepConv3x3};

std::string_view op_name(OpKind op);
std::optional<OpKind> parse_op(std::string_view name);

/// Macro shape of the cell-based network.
struct NetworkShapeConfig {
  std::size_t num_cells = 2;
  std::size_t nodes_per_cell = 4;  // two inputs + inner nodes
  std::size_t initial_channels = 8;
  std::size_t input_height = 16;
  std::size_t input_width = 16;
  std::vector<std::size_t> reduction_cells;  // sorted, unique
  std::size_t num_classes = 10;
  std::size_t input_channels = 3;

  /// Reduction cells at floor(L/3) and floor(2L/3).
  static std::vector<std::size_t> default_reductions(std::size_t num_cells);

  bool is_reduction(std::size_t cell) const;
  std::size_t inner_nodes() const { return nodes_per_cell - 2; }

  /// Throws ValidationError describing the first violated constraint.
  void validate() const;

  friend bool operator==(const NetworkShapeConfig&, const NetworkShapeConfig&) = default;
};

/// One (cell, edge, operator) candidate. Field order makes the defaulted
/// comparison the canonical gate order: cell-major, edge (from, to)
/// lexicographic, then operator.
struct GateId {
  std::size_t cell = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  OpKind op = OpKind::SkipConnect;

  friend auto operator<=>(const GateId&, const GateId&) = default;
};

std::string to_string(const GateId& g);

struct NodeRef {
  std::size_t cell = 0;
  std::size_t node = 0;
  friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

/// All legal gates of a shape in canonical order.
std::vector<GateId> enumerate_gates(const NetworkShapeConfig& shape);

/// True when `g` belongs to the gate universe of `shape`.
bool in_universe(const NetworkShapeConfig& shape, const GateId& g);

/// Channel and spatial bookkeeping for one cell.
struct CellLayout {
  bool reduction = false;
  bool prev_reduction = false;      // s0 arrives at twice the spatial size
  std::size_t channels = 0;         // C of every operator in the cell
  std::size_t prev_prev_channels = 0;
  std::size_t prev_channels = 0;
  std::size_t in_height = 0, in_width = 0;    // spatial size of s1 (and of s0 after preprocessing)
  std::size_t out_height = 0, out_width = 0;  // spatial size of inner nodes
  std::size_t out_channels = 0;     // inner_nodes * channels

  /// Operator stride on edge (from, to).
  std::size_t stride(std::size_t from) const { return reduction && from < 2 ? 2 : 1; }
};

struct NetworkLayout {
  std::size_t stem_channels = 0;
  std::vector<CellLayout> cells;
  std::size_t classifier_in = 0;
};

NetworkLayout network_layout(const NetworkShapeConfig& shape);

/// Discrete architecture: the active gates plus explicitly annotated dead nodes.
struct ArchitectureEncoding {
  NetworkShapeConfig shape;
  std::set<GateId> active;
  std::set<NodeRef> dead_nodes;

  static ArchitectureEncoding full(const NetworkShapeConfig& shape);

  friend bool operator==(const ArchitectureEncoding&, const ArchitectureEncoding&) = default;
};

struct ValidityReport {
  std::vector<NodeRef> dead_nodes;         // inner nodes with no active incoming gate
  std::vector<NodeRef> unannotated_dead;   // dead but missing from arch.dead_nodes
  std::vector<NodeRef> stale_annotations;  // annotated dead but still fed by a gate

  bool valid() const { return dead_nodes.empty(); }
  /// Every dead node is annotated and every annotation is accurate.
  bool consistent() const { return unannotated_dead.empty() && stale_annotations.empty(); }
};

/// Throws ValidationError for gates or annotations outside the shape.
ValidityReport validate(const ArchitectureEncoding& arch);

/// Dead inner nodes of an arbitrary active set.
std::vector<NodeRef> find_dead_nodes(const NetworkShapeConfig& shape, const std::set<GateId>& active);

/// Sets arch.dead_nodes to exactly the currently dead nodes.
void annotate_dead_nodes(ArchitectureEncoding& arch);

struct SpaceCardinality {
  BigInt per_cell;
  BigInt exact;
};

/// per_cell = prod_{n=2}^{N-1} (2^(2n) - 1), exact = per_cell^L.
SpaceCardinality count_space(const NetworkShapeConfig& shape);

/// Scientific rendering of a non-negative integer, e.g. "6.9e+167".
std::string scientific(const BigInt& value, int significant_digits = 2);

inline constexpr int kArchitectureFormatVersion = 1;

/// Canonical JSON document (gates sorted, two-space indent, trailing newline).
std::string serialize(const ArchitectureEncoding& arch);
/// Throws ParseError (with field path or byte offset) for malformed documents
/// and ValidationError for gates outside the universe, including edge (0,1).
ArchitectureEncoding deserialize(std::string_view text);

ArchitectureEncoding load_architecture(const std::string& path);
void save_architecture(const ArchitectureEncoding& arch, const std::string& path);

/// DOT text with one digraph per cell. Skip-connect edges are thin red,
/// sep-conv-3x3 edges thick blue, concatenation arcs dashed black.
/// Throws ValidationError for an empty active set or unannotated dead nodes.
std::string export_dot(const ArchitectureEncoding& arch);

/// Random pruning baseline: starting from the full architecture, removes
/// uniformly chosen active gates (skipping choices that would kill a node)
/// until discrete FLOPs fit in `flops_budget`. Throws ValidationError when the
/// budget is below the cheapest valid architecture and RuntimeAbort when
/// `max_restarts` attempts all get stuck.
ArchitectureEncoding random_sample_under_flops(const NetworkShapeConfig& shape,
                                               std::uint64_t flops_budget, std::uint64_t seed,
                                               std::size_t max_restarts = 1000);

}  // namespace goldnas
