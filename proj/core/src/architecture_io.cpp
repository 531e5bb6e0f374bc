#include <nlohmann/json.hpp>

#include "goldnas/error.hpp"
#include "goldnas/search_space.hpp"

namespace goldnas {

using ojson = nlohmann::ordered_json;

namespace {

const ojson& field(const ojson& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + "." + key + ": missing field");
  return *it;
}

std::size_t as_index(const ojson& v, const std::string& path) {
  if (!v.is_number_integer()) throw ParseError(path + ": expected a non-negative integer");
  const auto x = v.get<std::int64_t>();
  if (x < 0) throw ParseError(path + ": expected a non-negative integer, got " + std::to_string(x));
  return static_cast<std::size_t>(x);
}

}  // namespace

std::string serialize(const ArchitectureEncoding& arch) {
  ojson doc;
  doc["format_version"] = kArchitectureFormatVersion;
  ojson shape;
  shape["num_cells"] = arch.shape.num_cells;
  shape["nodes_per_cell"] = arch.shape.nodes_per_cell;
  shape["initial_channels"] = arch.shape.initial_channels;
  shape["input_height"] = arch.shape.input_height;
  shape["input_width"] = arch.shape.input_width;
  shape["reduction_cells"] = arch.shape.reduction_cells;
  shape["num_classes"] = arch.shape.num_classes;
  doc["shape"] = shape;
  ojson gates = ojson::array();
  for (const GateId& g : arch.active) {
    ojson e;
    e["cell"] = g.cell;
    e["from"] = g.from;
    e["to"] = g.to;
    e["op"] = std::string(op_name(g.op));
    gates.push_back(e);
  }
  doc["active_gates"] = gates;
  ojson dead = ojson::array();
  for (const NodeRef& n : arch.dead_nodes) dead.push_back(ojson{{"cell", n.cell}, {"node", n.node}});
  doc["dead_nodes"] = dead;
  return doc.dump(2) + "\n";
}

ArchitectureEncoding deserialize(std::string_view text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw ParseError("architecture document: malformed JSON at byte " + std::to_string(e.byte) +
                     ": " + e.what());
  }
  const std::string root = "$";
  const std::size_t version = as_index(field(doc, "format_version", root), "$.format_version");
  if (version != static_cast<std::size_t>(kArchitectureFormatVersion)) {
    throw ParseError("$.format_version: unsupported version " + std::to_string(version));
  }

  ArchitectureEncoding arch;
  const ojson& shape = field(doc, "shape", root);
  const std::string sp = "$.shape";
  arch.shape.num_cells = as_index(field(shape, "num_cells", sp), sp + ".num_cells");
  arch.shape.nodes_per_cell = as_index(field(shape, "nodes_per_cell", sp), sp + ".nodes_per_cell");
  arch.shape.initial_channels = as_index(field(shape, "initial_channels", sp), sp + ".initial_channels");
  arch.shape.input_height = as_index(field(shape, "input_height", sp), sp + ".input_height");
  arch.shape.input_width = as_index(field(shape, "input_width", sp), sp + ".input_width");
  const ojson& red = field(shape, "reduction_cells", sp);
  if (!red.is_array()) throw ParseError(sp + ".reduction_cells: expected an array");
  for (std::size_t i = 0; i < red.size(); ++i) {
    arch.shape.reduction_cells.push_back(as_index(red[i], sp + ".reduction_cells[" + std::to_string(i) + "]"));
  }
  if (shape.contains("num_classes")) {
    arch.shape.num_classes = as_index(shape["num_classes"], sp + ".num_classes");
  }
  arch.shape.validate();

  const ojson& gates = field(doc, "active_gates", root);
  if (!gates.is_array()) throw ParseError("$.active_gates: expected an array");
  for (std::size_t i = 0; i < gates.size(); ++i) {
    const std::string gp = "$.active_gates[" + std::to_string(i) + "]";
    const ojson& g = gates[i];
    GateId id;
    id.cell = as_index(field(g, "cell", gp), gp + ".cell");
    id.from = as_index(field(g, "from", gp), gp + ".from");
    id.to = as_index(field(g, "to", gp), gp + ".to");
    const ojson& op = field(g, "op", gp);
    if (!op.is_string()) throw ParseError(gp + ".op: expected a string");
    auto kind = parse_op(op.get<std::string>());
    if (!kind) throw ParseError(gp + ".op: unknown operator '" + op.get<std::string>() + "'");
    id.op = *kind;
    if (id.from == 0 && id.to == 1) {
      throw ValidationError(gp + ": edge (0,1) is excluded from the search space");
    }
    if (!in_universe(arch.shape, id)) {
      throw ValidationError(gp + ": gate outside the search space: " + to_string(id));
    }
    if (!arch.active.insert(id).second) throw ValidationError(gp + ": duplicate gate " + to_string(id));
  }

  if (doc.contains("dead_nodes")) {
    const ojson& dead = doc["dead_nodes"];
    if (!dead.is_array()) throw ParseError("$.dead_nodes: expected an array");
    for (std::size_t i = 0; i < dead.size(); ++i) {
      const std::string dp = "$.dead_nodes[" + std::to_string(i) + "]";
      NodeRef n{as_index(field(dead[i], "cell", dp), dp + ".cell"),
                as_index(field(dead[i], "node", dp), dp + ".node")};
      if (n.cell >= arch.shape.num_cells || n.node < 2 || n.node >= arch.shape.nodes_per_cell) {
        throw ValidationError(dp + ": not an inner node of the shape");
      }
      arch.dead_nodes.insert(n);
    }
  }
  return arch;
}

}  // namespace goldnas
