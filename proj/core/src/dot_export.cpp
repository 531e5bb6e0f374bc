#include <sstream>

#include "goldnas/error.hpp"
#include "goldnas/search_space.hpp"

namespace goldnas {

namespace {

std::string node_label(std::size_t cell, std::size_t node) {
  if (node == 0) return cell == 0 ? "stem" : "c_{k-2}";
  if (node == 1) return cell == 0 ? "stem" : "c_{k-1}";
  return std::to_string(node - 2);
}

}  // namespace

std::string export_dot(const ArchitectureEncoding& arch) {
  const ValidityReport report = validate(arch);
  if (arch.active.empty()) throw ValidationError("export_dot: architecture has no active gates");
  if (!report.consistent()) {
    throw ValidationError("export_dot: architecture has dead nodes that are not annotated");
  }

  std::ostringstream out;
  const auto& shape = arch.shape;
  for (std::size_t c = 0; c < shape.num_cells; ++c) {
    out << "digraph cell_" << c << " {\n";
    out << "  label=\"cell " << c << (shape.is_reduction(c) ? " (reduction)" : " (normal)") << "\";\n";
    out << "  rankdir=LR;\n";
    for (std::size_t n = 0; n < shape.nodes_per_cell; ++n) {
      const bool dead = arch.dead_nodes.contains(NodeRef{c, n});
      out << "  n" << n << " [label=\"" << node_label(c, n) << "\"";
      if (n < 2) out << ", shape=box, style=filled, fillcolor=lightgrey";
      if (dead) out << ", style=dotted, fontcolor=grey";
      out << "];\n";
    }
    out << "  out [label=\"c_{k}\", shape=box, style=filled, fillcolor=palegoldenrod];\n";
    for (const GateId& g : arch.active) {
      if (g.cell != c) continue;
      out << "  n" << g.from << " -> n" << g.to;
      if (g.op == OpKind::SkipConnect) {
        out << " [label=\"skip_connect\", color=red, penwidth=1];\n";
      } else {
        out << " [label=\"sep_conv_3x3\", color=blue, penwidth=3];\n";
      }
    }
    for (std::size_t n = 2; n < shape.nodes_per_cell; ++n) {
      if (arch.dead_nodes.contains(NodeRef{c, n})) continue;
      out << "  n" << n << " -> out [style=dashed, color=black];\n";
    }
    out << "}\n";
  }
  return out.str();
}

}  // namespace goldnas
