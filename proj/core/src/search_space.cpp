#include "goldnas/search_space.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "goldnas/error.hpp"

namespace goldnas {

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::SkipConnect:
      return "skip_connect";
    case OpKind::SepConv3x3:
      return "sep_conv_3x3";
  }
  return "unknown";
}

std::optional<OpKind> parse_op(std::string_view name) {
  for (OpKind op : kAllOps) {
    if (op_name(op) == name) return op;
  }
  return std::nullopt;
}

std::string to_string(const GateId& g) {
  return "cell " + std::to_string(g.cell) + " (" + std::to_string(g.from) + "," +
         std::to_string(g.to) + ") " + std::string(op_name(g.op));
}

std::vector<std::size_t> NetworkShapeConfig::default_reductions(std::size_t num_cells) {
  std::vector<std::size_t> r{num_cells / 3, 2 * num_cells / 3};
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

bool NetworkShapeConfig::is_reduction(std::size_t cell) const {
  return std::binary_search(reduction_cells.begin(), reduction_cells.end(), cell);
}

void NetworkShapeConfig::validate() const {
  if (num_cells == 0) throw ValidationError("shape: num_cells must be positive");
  if (nodes_per_cell < 3) {
    throw ValidationError("shape: nodes_per_cell must be at least 3, got " +
                          std::to_string(nodes_per_cell));
  }
  if (initial_channels == 0) throw ValidationError("shape: initial_channels must be positive");
  if (input_height == 0 || input_width == 0) {
    throw ValidationError("shape: input resolution must be positive");
  }
  if (num_classes == 0) throw ValidationError("shape: num_classes must be positive");
  if (input_channels == 0) throw ValidationError("shape: input_channels must be positive");
  if (!std::is_sorted(reduction_cells.begin(), reduction_cells.end()) ||
      std::adjacent_find(reduction_cells.begin(), reduction_cells.end()) != reduction_cells.end()) {
    throw ValidationError("shape: reduction_cells must be sorted and unique");
  }
  for (std::size_t r : reduction_cells) {
    if (r >= num_cells) {
      throw ValidationError("shape: reduction cell " + std::to_string(r) + " outside [0, " +
                            std::to_string(num_cells) + ")");
    }
  }
  std::size_t h = input_height, w = input_width;
  for (std::size_t r : reduction_cells) {
    if (h % 2 != 0 || w % 2 != 0) {
      throw ValidationError("shape: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                            " entering reduction cell " + std::to_string(r) + " is not even");
    }
    h /= 2;
    w /= 2;
  }
}

std::vector<GateId> enumerate_gates(const NetworkShapeConfig& shape) {
  std::vector<GateId> gates;
  const std::size_t n = shape.nodes_per_cell;
  gates.reserve(shape.num_cells * kAllOps.size() * (n * (n - 1) / 2 - 1));
  for (std::size_t c = 0; c < shape.num_cells; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = std::max<std::size_t>(i + 1, 2); j < n; ++j) {
        for (OpKind op : kAllOps) gates.push_back(GateId{c, i, j, op});
      }
    }
  }
  return gates;
}

bool in_universe(const NetworkShapeConfig& shape, const GateId& g) {
  return g.cell < shape.num_cells && g.from < g.to && g.to < shape.nodes_per_cell && g.to >= 2 &&
         (g.op == OpKind::SkipConnect || g.op == OpKind::SepConv3x3);
}

NetworkLayout network_layout(const NetworkShapeConfig& shape) {
  shape.validate();
  NetworkLayout layout;
  layout.stem_channels = shape.initial_channels;
  std::size_t c_pp = shape.initial_channels, c_p = shape.initial_channels;
  std::size_t h = shape.input_height, w = shape.input_width;
  std::size_t c = shape.initial_channels;
  bool prev_reduction = false;
  for (std::size_t k = 0; k < shape.num_cells; ++k) {
    CellLayout cell;
    cell.reduction = shape.is_reduction(k);
    if (cell.reduction) c *= 2;
    cell.prev_reduction = prev_reduction;
    cell.channels = c;
    cell.prev_prev_channels = c_pp;
    cell.prev_channels = c_p;
    cell.in_height = h;
    cell.in_width = w;
    cell.out_height = cell.reduction ? h / 2 : h;
    cell.out_width = cell.reduction ? w / 2 : w;
    cell.out_channels = shape.inner_nodes() * c;
    layout.cells.push_back(cell);
    c_pp = c_p;
    c_p = cell.out_channels;
    h = cell.out_height;
    w = cell.out_width;
    prev_reduction = cell.reduction;
  }
  layout.classifier_in = c_p;
  return layout;
}

ArchitectureEncoding ArchitectureEncoding::full(const NetworkShapeConfig& shape) {
  ArchitectureEncoding arch;
  arch.shape = shape;
  for (const GateId& g : enumerate_gates(shape)) arch.active.insert(g);
  return arch;
}

std::vector<NodeRef> find_dead_nodes(const NetworkShapeConfig& shape,
                                     const std::set<GateId>& active) {
  std::vector<std::vector<bool>> fed(shape.num_cells, std::vector<bool>(shape.nodes_per_cell, false));
  for (const GateId& g : active) fed[g.cell][g.to] = true;
  std::vector<NodeRef> dead;
  for (std::size_t c = 0; c < shape.num_cells; ++c) {
    for (std::size_t j = 2; j < shape.nodes_per_cell; ++j) {
      if (!fed[c][j]) dead.push_back(NodeRef{c, j});
    }
  }
  return dead;
}

ValidityReport validate(const ArchitectureEncoding& arch) {
  arch.shape.validate();
  for (const GateId& g : arch.active) {
    if (!in_universe(arch.shape, g)) throw ValidationError("gate outside the search space: " + to_string(g));
  }
  for (const NodeRef& n : arch.dead_nodes) {
    if (n.cell >= arch.shape.num_cells || n.node < 2 || n.node >= arch.shape.nodes_per_cell) {
      throw ValidationError("dead-node annotation (cell " + std::to_string(n.cell) + ", node " +
                            std::to_string(n.node) + ") is not an inner node");
    }
  }
  ValidityReport report;
  report.dead_nodes = find_dead_nodes(arch.shape, arch.active);
  for (const NodeRef& n : report.dead_nodes) {
    if (!arch.dead_nodes.contains(n)) report.unannotated_dead.push_back(n);
  }
  for (const NodeRef& n : arch.dead_nodes) {
    if (!std::binary_search(report.dead_nodes.begin(), report.dead_nodes.end(), n)) {
      report.stale_annotations.push_back(n);
    }
  }
  return report;
}

void annotate_dead_nodes(ArchitectureEncoding& arch) {
  arch.dead_nodes.clear();
  for (const NodeRef& n : find_dead_nodes(arch.shape, arch.active)) arch.dead_nodes.insert(n);
}

SpaceCardinality count_space(const NetworkShapeConfig& shape) {
  if (shape.nodes_per_cell < 3) throw ValidationError("count_space: nodes_per_cell must be >= 3");
  SpaceCardinality out;
  out.per_cell = 1;
  for (std::size_t n = 2; n < shape.nodes_per_cell; ++n) {
    BigInt choices = BigInt(1) << (2 * n);
    out.per_cell *= choices - 1;
  }
  out.exact = boost::multiprecision::pow(out.per_cell, static_cast<unsigned>(shape.num_cells));
  return out;
}

std::string scientific(const BigInt& value, int significant_digits) {
  if (value < 0) throw ValidationError("scientific: negative value");
  std::string digits = value.str();
  if (digits.size() <= static_cast<std::size_t>(significant_digits)) {
    return digits;
  }
  const int exponent = static_cast<int>(digits.size()) - 1;
  // Round half up on the first dropped digit.
  std::string mant = digits.substr(0, significant_digits);
  int carry = digits[significant_digits] >= '5' ? 1 : 0;
  for (int i = significant_digits - 1; i >= 0 && carry; --i) {
    int d = mant[i] - '0' + carry;
    carry = d / 10;
    mant[i] = static_cast<char>('0' + d % 10);
  }
  int exp_out = exponent;
  if (carry) {
    mant.insert(mant.begin(), '1');
    mant.pop_back();
    ++exp_out;
  }
  std::string out(1, mant[0]);
  if (mant.size() > 1) out += "." + mant.substr(1);
  out += "e+" + std::to_string(exp_out);
  return out;
}

ArchitectureEncoding load_architecture(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open architecture document '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

void save_architecture(const ArchitectureEncoding& arch, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write architecture document '" + path + "'");
  out << serialize(arch);
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace goldnas
