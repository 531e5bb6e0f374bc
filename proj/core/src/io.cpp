#include "goldnas/io.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "goldnas/error.hpp"

namespace goldnas {

using ojson = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view text, const std::string& context) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ParseError(context + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_uint(std::string_view text, const std::string& context) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ParseError(context + ": expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string trace_csv(const TraceLog& log) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const TraceRow& r : log) {
    out += std::to_string(r.epoch) + ',' + format_double(r.lambda) + ',' + format_double(r.delta_lambda) + ',' +
           std::to_string(r.n_pruned) + ',' + std::to_string(r.active_gates) + ',' +
           format_double(r.expected_flops) + ',' + std::to_string(r.discrete_flops) + ',' +
           format_double(r.train_loss) + ',' + format_double(r.train_acc) + ',' + std::to_string(r.patience_t) +
           '\n';
  }
  return out;
}

TraceLog parse_trace_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  if (lines.empty() || lines[0] != kTraceHeader) {
    throw ParseError("trace line 1: header must be exactly '" + std::string(kTraceHeader) + "'");
  }
  TraceLog log;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) {
      if (ln + 1 == lines.size()) break;
      throw ParseError("trace line " + std::to_string(ln + 1) + ": empty line");
    }
    std::vector<std::string_view> f;
    std::string_view rest = lines[ln];
    while (true) {
      const std::size_t c = rest.find(',');
      f.push_back(rest.substr(0, c));
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    const std::string where = "trace line " + std::to_string(ln + 1);
    if (f.size() != 10) {
      throw ParseError(where + ": expected 10 fields, found " + std::to_string(f.size()));
    }
    auto col = [&](int k) { return where + ", column " + std::to_string(k + 1); };
    TraceRow r;
    r.epoch = parse_uint(f[0], col(0));
    r.lambda = parse_double(f[1], col(1));
    r.delta_lambda = parse_double(f[2], col(2));
    r.n_pruned = parse_uint(f[3], col(3));
    r.active_gates = parse_uint(f[4], col(4));
    r.expected_flops = parse_double(f[5], col(5));
    r.discrete_flops = parse_uint(f[6], col(6));
    r.train_loss = parse_double(f[7], col(7));
    r.train_acc = parse_double(f[8], col(8));
    r.patience_t = parse_uint(f[9], col(9));
    log.push_back(r);
  }
  return log;
}

std::string pareto_file_name(std::size_t index, std::uint64_t flops) {
  return "pareto_" + std::to_string(index) + "_" + std::to_string(flops) + ".json";
}

std::string manifest_json(const ParetoManifest& m) {
  ojson doc;
  doc["format_version"] = 1;
  doc["mu"] = m.mu;
  doc["seed"] = m.seed;
  ojson recs = ojson::array();
  for (const ManifestEntry& e : m.records) {
    recs.push_back({{"index", e.index},
                    {"file", e.file},
                    {"flops", e.flops},
                    {"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"train_accuracy", e.train_accuracy},
                    {"active_gates", e.active_gates}});
  }
  doc["records"] = std::move(recs);
  return doc.dump(2) + "\n";
}

namespace {

template <typename T>
T field(const ojson& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) throw ParseError(path + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const ojson::exception&) {
    throw ParseError(path + "." + key + ": wrong type");
  }
}

ojson parse_json(std::string_view text, const std::string& what) {
  try {
    return ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw ParseError(what + ": malformed JSON at byte offset " + std::to_string(e.byte));
  }
}

ojson gate_json(const GateId& g, double sigma) {
  return {{"cell", g.cell}, {"from", g.from}, {"to", g.to}, {"op", op_name(g.op)}, {"sigma", sigma}};
}

std::pair<GateId, double> gate_from_json(const ojson& j, const std::string& path) {
  GateId g;
  g.cell = field<std::size_t>(j, "cell", path);
  g.from = field<std::size_t>(j, "from", path);
  g.to = field<std::size_t>(j, "to", path);
  const std::string op = field<std::string>(j, "op", path);
  const auto kind = parse_op(op);
  if (!kind) throw ParseError(path + ".op: unknown operator '" + op + "'");
  g.op = *kind;
  return {g, field<double>(j, "sigma", path)};
}

}  // namespace

ParetoManifest parse_manifest(std::string_view text) {
  const ojson doc = parse_json(text, "manifest");
  if (field<int>(doc, "format_version", "$") != 1) throw ParseError("manifest: unsupported format_version");
  ParetoManifest m;
  m.mu = field<double>(doc, "mu", "$");
  m.seed = field<std::uint64_t>(doc, "seed", "$");
  const ojson& recs = doc.at("records");
  if (!recs.is_array()) throw ParseError("$.records: expected an array");
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const std::string path = "$.records[" + std::to_string(i) + "]";
    ManifestEntry e;
    e.index = field<std::size_t>(recs[i], "index", path);
    e.file = field<std::string>(recs[i], "file", path);
    e.flops = field<std::uint64_t>(recs[i], "flops", path);
    e.epoch = field<std::size_t>(recs[i], "epoch", path);
    e.train_loss = field<double>(recs[i], "train_loss", path);
    e.train_accuracy = field<double>(recs[i], "train_accuracy", path);
    e.active_gates = field<std::size_t>(recs[i], "active_gates", path);
    m.records.push_back(std::move(e));
  }
  return m;
}

ParetoManifest write_pareto_set(const std::filesystem::path& dir, const ParetoSet& set, double mu, std::uint64_t seed) {
  ParetoManifest m;
  m.mu = mu;
  m.seed = seed;
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    const ParetoRecord& r = set.records[i];
    ManifestEntry e{i, pareto_file_name(i, r.flops), r.flops, r.epoch, r.train_loss, r.train_accuracy,
                    r.architecture.active.size()};
    write_text_file(dir / e.file, serialize(r.architecture));
    m.records.push_back(std::move(e));
  }
  write_text_file(dir / "pareto_manifest.json", manifest_json(m));
  return m;
}

ParetoSet read_pareto_set(const std::filesystem::path& dir, ParetoManifest* manifest) {
  const ParetoManifest m = parse_manifest(read_text_file(dir / "pareto_manifest.json"));
  ParetoSet set;
  for (const ManifestEntry& e : m.records) {
    ParetoRecord r;
    r.architecture = deserialize(read_text_file(dir / e.file));
    r.flops = e.flops;
    r.epoch = e.epoch;
    r.train_loss = e.train_loss;
    r.train_accuracy = e.train_accuracy;
    set.records.push_back(std::move(r));
  }
  if (manifest) *manifest = m;
  return set;
}

std::string prune_rounds_json(const std::vector<PruneRoundReport>& rounds) {
  ojson arr = ojson::array();
  for (const PruneRoundReport& r : rounds) {
    ojson emin = ojson::array(), pruned = ojson::array();
    for (const auto& [g, s] : r.e_min) emin.push_back(gate_json(g, s));
    for (const auto& [g, s] : r.pruned) pruned.push_back(gate_json(g, s));
    arr.push_back({{"epoch", r.epoch},
                   {"active_before", r.active_before},
                   {"e_min", std::move(emin)},
                   {"pruned", std::move(pruned)},
                   {"n_pruned", r.n_pruned()}});
  }
  return arr.dump(2) + "\n";
}

std::vector<PruneRoundReport> parse_prune_rounds(std::string_view text) {
  const ojson doc = parse_json(text, "prune rounds");
  if (!doc.is_array()) throw ParseError("prune rounds: expected an array");
  std::vector<PruneRoundReport> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string path = "$[" + std::to_string(i) + "]";
    PruneRoundReport r;
    r.epoch = field<std::size_t>(doc[i], "epoch", path);
    r.active_before = field<std::size_t>(doc[i], "active_before", path);
    for (const auto& g : doc[i].at("e_min")) r.e_min.push_back(gate_from_json(g, path + ".e_min"));
    for (const auto& g : doc[i].at("pruned")) r.pruned.push_back(gate_from_json(g, path + ".pruned"));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace goldnas
