#include "goldnas/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "goldnas/error.hpp"
#include "goldnas/io.hpp"

namespace goldnas {

namespace {

constexpr char kMagic[8] = {'G', 'N', 'A', 'S', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void tensor(const Tensor& t) {
    if (t.rank() == 0 && t.size() == 0) {
      u8(0);
      return;
    }
    u8(1);
    u64(t.rank());
    for (std::size_t d : t.shape()) u64(d);
    for (double v : t.data()) f64(v);
  }
  void tensors(const std::vector<Tensor>& ts) {
    u64(ts.size());
    for (const Tensor& t : ts) tensor(t);
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const std::size_t at = pos_;
    if (u8() == 0) return Tensor();
    const std::uint64_t rank = u64();
    if (rank > 8) fail(at, "tensor rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = u64();
      numel *= d;
    }
    need(numel * 8);
    std::vector<double> values(numel);
    for (double& v : values) v = f64();
    return Tensor(std::move(shape), std::move(values));
  }
  std::vector<Tensor> tensors() {
    const std::uint64_t n = count();
    std::vector<Tensor> out;
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(tensor());
    return out;
  }
  std::uint64_t count() {
    const std::size_t at = pos_;
    const std::uint64_t n = u64();
    if (n > in_.size()) fail(at, "implausible element count " + std::to_string(n));
    return n;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }
  [[noreturn]] void fail(std::size_t at, const std::string& what) const {
    throw ParseError("checkpoint: " + what + " at byte offset " + std::to_string(at));
  }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) fail(pos_, "truncated data (need " + std::to_string(n) + " bytes)");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream o;
  o << rng;
  return o.str();
}

void gate(Writer& w, const GateId& g, double sigma) {
  w.u64(g.cell);
  w.u64(g.from);
  w.u64(g.to);
  w.u8(static_cast<std::uint8_t>(g.op));
  w.f64(sigma);
}

std::pair<GateId, double> gate(Reader& r) {
  GateId g;
  g.cell = r.u64();
  g.from = r.u64();
  g.to = r.u64();
  const std::size_t at = r.pos();
  const std::uint8_t op = r.u8();
  if (op > 1) r.fail(at, "unknown operator code " + std::to_string(op));
  g.op = static_cast<OpKind>(op);
  return {g, r.f64()};
}

std::string universe_document(const SuperNetwork& net) {
  return serialize(ArchitectureEncoding::full(net.shape()));
}

void restore_tensors(Reader& r, const std::vector<Tensor*>& targets, const char* what) {
  const std::size_t at = r.pos();
  std::vector<Tensor> ts = r.tensors();
  if (ts.size() != targets.size()) {
    r.fail(at, std::string(what) + ": " + std::to_string(ts.size()) + " tensors, expected " +
                   std::to_string(targets.size()));
  }
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i].shape() != targets[i]->shape()) r.fail(at, std::string(what) + ": shape mismatch at entry " + std::to_string(i));
    *targets[i] = std::move(ts[i]);
  }
}

}  // namespace

std::string encode_checkpoint(GoldSearch& search) {
  SuperNetwork& net = search.network();
  const SearchSettings& st = search.settings();
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(universe_document(net));
  const SchedulerState& s = search.state();
  w.f64(s.lambda);
  w.f64(s.delta_lambda);
  w.u64(s.t);
  w.u64(s.epoch);
  w.u8(search.finished() ? 1 : 0);
  for (double v : {st.scheduler.lambda0, st.scheduler.c0, st.scheduler.xi_max, st.scheduler.xi_min, st.scheduler.mu,
                   st.optimizer.eta_omega, st.optimizer.eta_alpha, st.optimizer.momentum_omega,
                   st.optimizer.momentum_alpha, st.optimizer.weight_decay_omega}) {
    w.f64(v);
  }
  for (std::uint64_t v : {std::uint64_t{st.scheduler.n0}, std::uint64_t{st.scheduler.t0}, st.scheduler.flops_min,
                          std::uint64_t{st.optimizer.batch_size},
                          std::uint64_t{net.options().sigma_scope == SigmaBarScope::Global ? 1u : 0u}}) {
    w.u64(v);
  }
  w.tensor(net.alpha().value);
  w.u64(net.active().size());
  for (bool a : net.active()) w.u8(a ? 1 : 0);
  std::vector<Tensor> ws, bs;
  for (Parameter* p : net.weights()) ws.push_back(p->value);
  for (Tensor* b : net.buffers()) bs.push_back(*b);
  w.tensors(ws);
  w.tensors(bs);
  w.tensors(net.omega_optimizer().buffers());
  w.tensors(net.alpha_optimizer().buffers());
  w.str(rng_state(search.train_rng()));
  w.str(rng_state(search.augment_rng()));

  w.u64(search.trace().size());
  for (const TraceRow& r : search.trace()) {
    w.u64(r.epoch);
    w.f64(r.lambda);
    w.f64(r.delta_lambda);
    w.u64(r.n_pruned);
    w.u64(r.active_gates);
    w.f64(r.expected_flops);
    w.u64(r.discrete_flops);
    w.f64(r.train_loss);
    w.f64(r.train_acc);
    w.u64(r.patience_t);
  }
  w.u64(search.pareto().records.size());
  for (const ParetoRecord& r : search.pareto().records) {
    w.str(serialize(r.architecture));
    w.u64(r.flops);
    w.f64(r.train_loss);
    w.f64(r.train_accuracy);
    w.u64(r.epoch);
  }
  w.u64(search.rounds().size());
  for (const PruneRoundReport& r : search.rounds()) {
    w.u64(r.epoch);
    w.u64(r.active_before);
    w.u64(r.e_min.size());
    for (const auto& [g, sg] : r.e_min) gate(w, g, sg);
    w.u64(r.pruned.size());
    for (const auto& [g, sg] : r.pruned) gate(w, g, sg);
  }
  return w.take();
}

void save_checkpoint(GoldSearch& search, const std::filesystem::path& path) {
  write_text_file(path, encode_checkpoint(search));
}

void decode_checkpoint(GoldSearch& search, std::string_view bytes) {
  Reader r(bytes);
  SuperNetwork& net = search.network();
  const SearchSettings& st = search.settings();
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    r.fail(0, "bad magic");
  }
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) r.fail(8, "unsupported version " + std::to_string(version));
  if (r.str() != universe_document(net)) {
    throw ValidationError("checkpoint: network shape differs from the current configuration");
  }
  SchedulerState s;
  s.lambda = r.f64();
  s.delta_lambda = r.f64();
  s.t = r.u64();
  s.epoch = r.u64();
  const bool finished = r.u8() != 0;
  const double expected_f[] = {st.scheduler.lambda0, st.scheduler.c0, st.scheduler.xi_max, st.scheduler.xi_min,
                               st.scheduler.mu, st.optimizer.eta_omega, st.optimizer.eta_alpha,
                               st.optimizer.momentum_omega, st.optimizer.momentum_alpha,
                               st.optimizer.weight_decay_omega};
  for (double v : expected_f) {
    if (std::bit_cast<std::uint64_t>(r.f64()) != std::bit_cast<std::uint64_t>(v)) {
      throw ValidationError("checkpoint: scheduler or optimizer settings differ from the current configuration");
    }
  }
  const std::uint64_t expected_u[] = {st.scheduler.n0, st.scheduler.t0, st.scheduler.flops_min,
                                      st.optimizer.batch_size,
                                      net.options().sigma_scope == SigmaBarScope::Global ? 1u : 0u};
  for (std::uint64_t v : expected_u) {
    if (r.u64() != v) {
      throw ValidationError("checkpoint: scheduler or optimizer settings differ from the current configuration");
    }
  }
  {
    const std::size_t at = r.pos();
    Tensor alpha = r.tensor();
    if (alpha.shape() != net.alpha().value.shape()) r.fail(at, "alpha shape mismatch");
    net.alpha().value = std::move(alpha);
  }
  {
    const std::size_t at = r.pos();
    const std::uint64_t n = r.count();
    if (n != net.active().size()) r.fail(at, "active mask length mismatch");
    std::vector<bool> active(n);
    for (std::uint64_t i = 0; i < n; ++i) active[i] = r.u8() != 0;
    net.set_active(active);
  }
  {
    std::vector<Tensor*> targets;
    for (Parameter* p : net.weights()) targets.push_back(&p->value);
    restore_tensors(r, targets, "weights");
  }
  restore_tensors(r, net.buffers(), "buffers");
  net.omega_optimizer().buffers() = r.tensors();
  net.alpha_optimizer().buffers() = r.tensors();
  {
    std::istringstream a(r.str()), b(r.str());
    a >> search.train_rng();
    b >> search.augment_rng();
    if (a.fail() || b.fail()) r.fail(r.pos(), "corrupt generator state");
  }
  TraceLog trace(r.count());
  for (TraceRow& row : trace) {
    row.epoch = r.u64();
    row.lambda = r.f64();
    row.delta_lambda = r.f64();
    row.n_pruned = r.u64();
    row.active_gates = r.u64();
    row.expected_flops = r.f64();
    row.discrete_flops = r.u64();
    row.train_loss = r.f64();
    row.train_acc = r.f64();
    row.patience_t = r.u64();
  }
  ParetoSet pareto;
  pareto.records.resize(r.count());
  for (ParetoRecord& rec : pareto.records) {
    rec.architecture = deserialize(r.str());
    rec.flops = r.u64();
    rec.train_loss = r.f64();
    rec.train_accuracy = r.f64();
    rec.epoch = r.u64();
  }
  std::vector<PruneRoundReport> rounds(r.count());
  for (PruneRoundReport& rr : rounds) {
    rr.epoch = r.u64();
    rr.active_before = r.u64();
    rr.e_min.resize(r.count());
    for (auto& e : rr.e_min) e = gate(r);
    rr.pruned.resize(r.count());
    for (auto& e : rr.pruned) e = gate(r);
  }
  if (!r.done()) r.fail(r.pos(), "trailing bytes");
  search.restore(s, std::move(pareto), std::move(trace), std::move(rounds), finished);
}

void load_checkpoint(GoldSearch& search, const std::filesystem::path& path) {
  decode_checkpoint(search, read_text_file(path));
}

}  // namespace goldnas
