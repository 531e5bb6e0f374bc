#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "goldnas/dataset.hpp"
#include "goldnas/error.hpp"
#include "goldnas/supernet.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace goldnas;

namespace {

NetworkShapeConfig small_shape(std::size_t cells, std::size_t nodes, std::size_t channels, std::size_t size,
                               std::vector<std::size_t> reductions = {}, std::size_t classes = 3) {
  NetworkShapeConfig s;
  s.num_cells = cells;
  s.nodes_per_cell = nodes;
  s.initial_channels = channels;
  s.input_height = s.input_width = size;
  s.reduction_cells = std::move(reductions);
  s.num_classes = classes;
  return s;
}

Batch random_batch(const NetworkShapeConfig& s, std::size_t n, std::mt19937_64& rng) {
  Batch b;
  b.images = testing::random_tensor({n, s.input_channels, s.input_height, s.input_width}, rng);
  std::uniform_int_distribution<int> label(0, static_cast<int>(s.num_classes) - 1);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(label(rng));
  return b;
}

// Moves every weight and alpha away from its initialization so that
// batch-norm affine terms and gate weights are all exercised.
void perturb(SuperNetwork& net, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (Parameter* p : net.weights())
    for (double& v : p->value.data()) v += 0.2 * n(rng);
  for (double& a : net.alpha().value.data()) a = n(rng);
}

// Straight-line reference for a network of normal cells, consuming the
// weight list positionally.
struct Reference {
  std::vector<Parameter*> w;
  std::size_t pos = 0;
  const Tensor& next() { return w.at(pos++)->value; }

  static Tensor relu(Tensor x) {
    for (double& v : x.data()) v = std::max(v, 0.0);
    return x;
  }
  static Tensor bn(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor y(x.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
      double m = 0.0, v = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) m += x[(b * c + ch) * hw + i];
      m /= static_cast<double>(n * hw);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) v += std::pow(x[(b * c + ch) * hw + i] - m, 2);
      v /= static_cast<double>(n * hw);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i)
          y[(b * c + ch) * hw + i] = gamma[ch] * (x[(b * c + ch) * hw + i] - m) / std::sqrt(v + 1e-5) + beta[ch];
    }
    return y;
  }
  static Tensor axpy(Tensor acc, const Tensor& x, double s) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * x[i];
    return acc;
  }

  Tensor relu_conv_bn(const Tensor& x) {
    const Tensor& k = next();
    const Tensor& g = next();
    const Tensor& b = next();
    return bn(testing::naive_conv(relu(x), k, 1, 0, 1), g, b);
  }
  Tensor sep_conv(const Tensor& x) {
    const std::size_t c = x.dim(1);
    const Tensor& dw1 = next();
    const Tensor& pw1 = next();
    const Tensor& g1 = next();
    const Tensor& b1 = next();
    const Tensor& dw2 = next();
    const Tensor& pw2 = next();
    const Tensor& g2 = next();
    const Tensor& b2 = next();
    Tensor h = bn(testing::naive_conv(testing::naive_conv(relu(x), dw1, 1, 1, c), pw1, 1, 0, 1), g1, b1);
    return bn(testing::naive_conv(testing::naive_conv(relu(h), dw2, 1, 1, c), pw2, 1, 0, 1), g2, b2);
  }

  Tensor logits(SuperNetwork& net, const Tensor& x) {
    w = net.weights();
    pos = 0;
    const Tensor& sk = next();
    const Tensor& sg = next();
    const Tensor& sb = next();
    Tensor s0 = bn(testing::naive_conv(x, sk, 1, 1, 1), sg, sb);
    Tensor s1 = s0;
    const std::size_t n = x.dim(0), nodes = net.shape().nodes_per_cell;
    for (std::size_t k = 0; k < net.shape().num_cells; ++k) {
      const CellLayout& cl = net.layout().cells[k];
      std::vector<Tensor> states{relu_conv_bn(s0), relu_conv_bn(s1)};
      for (std::size_t j = 2; j < nodes; ++j) states.emplace_back(Shape{n, cl.channels, cl.out_height, cl.out_width});
      // operators come in canonical gate order, grouped by target node
      for (std::size_t g = 0; g < net.gates().size(); ++g) {
        const GateId& id = net.gates()[g];
        if (id.cell != k) continue;
        const Tensor out = id.op == OpKind::SepConv3x3 ? sep_conv(states[id.from]) : states[id.from];
        if (net.active()[g]) states[id.to] = axpy(states[id.to], out, sigmoid_value(net.alpha().value[g]));
      }
      // concatenate inner nodes along channels
      const std::size_t hw = cl.out_height * cl.out_width, inner = nodes - 2;
      Tensor cat({n, inner * cl.channels, cl.out_height, cl.out_width});
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t j = 0; j < inner; ++j)
          for (std::size_t c = 0; c < cl.channels; ++c)
            for (std::size_t i = 0; i < hw; ++i)
              cat[((b * inner + j) * cl.channels + c) * hw + i] = states[j + 2][(b * cl.channels + c) * hw + i];
      s0 = s1;
      s1 = cat;
    }
    const Tensor& weight = next();
    const Tensor& bias = next();
    REQUIRE(pos == w.size());
    const std::size_t c = s1.dim(1), hw = s1.dim(2) * s1.dim(3), k = bias.size();
    Tensor z({n, k});
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < k; ++o) {
        double acc = bias[o];
        for (std::size_t ch = 0; ch < c; ++ch) {
          double mean = 0.0;
          for (std::size_t i = 0; i < hw; ++i) mean += s1[(b * c + ch) * hw + i];
          acc += weight[o * c + ch] * mean / static_cast<double>(hw);
        }
        z[b * k + o] = acc;
      }
    return z;
  }
};

Tensor logits_of(SuperNetwork& net, const Tensor& images, ForwardOptions opt = ForwardOptions::probe()) {
  Tape tape;
  return net.forward(tape, images, opt).logits.value();
}

DatasetSplit toy_data(std::size_t per_class, std::uint64_t seed) {
  return generate_synthetic(2, per_class, 8, seed);
}

Batch whole(const DatasetSplit& d) {
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return d.gather(idx);
}

}  // namespace

TEST_CASE("build initializes every gate at sigma 0.5 and is deterministic") {
  const NetworkShapeConfig s = small_shape(2, 4, 4, 8, {1});
  SuperNetwork a = SuperNetwork::build(s, 9);
  SuperNetwork b = SuperNetwork::build(s, 9);
  CHECK(a.gates() == enumerate_gates(s));
  CHECK(a.alpha().value.size() == a.gates().size());
  for (std::size_t g = 0; g < a.gates().size(); ++g) {
    CHECK(sigmoid_value(a.alpha().value[g]) == 0.5);
    CHECK(a.active()[g]);
  }
  const auto wa = a.weights(), wb = b.weights();
  REQUIRE(wa.size() == wb.size());
  for (std::size_t i = 0; i < wa.size(); ++i) CHECK(wa[i]->value == wb[i]->value);
  SuperNetwork c = SuperNetwork::build(s, 10);
  CHECK_FALSE(c.weights()[0]->value == wa[0]->value);
}

TEST_CASE("forward matches a straight-line reference") {
  std::mt19937_64 rng(4);
  const NetworkShapeConfig s = small_shape(2, 3, 4, 8);
  SuperNetwork net = SuperNetwork::build(s, 1);
  perturb(net, rng);
  const Batch batch = random_batch(s, 3, rng);

  Reference ref;
  const Tensor expected = ref.logits(net, batch.images);
  const Tensor got = logits_of(net, batch.images);
  REQUIRE(got.shape() == expected.shape());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-10));

  // with two inner nodes the cell output is a concatenation
  const NetworkShapeConfig s4 = small_shape(2, 4, 2, 6);
  SuperNetwork net4 = SuperNetwork::build(s4, 2);
  perturb(net4, rng);
  net4.deactivate(net4.gate_index(GateId{1, 0, 3, OpKind::SepConv3x3}));
  const Batch b4 = random_batch(s4, 2, rng);
  const Tensor e4 = ref.logits(net4, b4.images);
  const Tensor g4 = logits_of(net4, b4.images);
  for (std::size_t i = 0; i < g4.size(); ++i) CHECK(g4[i] == doctest::Approx(e4[i]).epsilon(1e-10));
}

TEST_CASE("a network with every gate removed outputs the classifier bias") {
  std::mt19937_64 rng(5);
  const NetworkShapeConfig s = small_shape(2, 4, 4, 8, {1});
  SuperNetwork net = SuperNetwork::build(s, 3);
  perturb(net, rng);
  for (std::size_t g = 0; g < net.gates().size(); ++g) net.deactivate(g);
  const Batch batch = random_batch(s, 4, rng);
  const Tensor z = logits_of(net, batch.images);
  const Tensor& bias = net.weights().back()->value;
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t k = 0; k < s.num_classes; ++k) CHECK(z[b * s.num_classes + k] == bias[k]);
}

TEST_CASE("a saturated skip gate transmits its input unscaled") {
  std::mt19937_64 rng(6);
  const NetworkShapeConfig s = small_shape(1, 3, 4, 8);
  SuperNetwork net = SuperNetwork::build(s, 3);
  const std::size_t skip = net.gate_index(GateId{0, 1, 2, OpKind::SkipConnect});
  for (std::size_t g = 0; g < net.gates().size(); ++g)
    if (g != skip) net.deactivate(g);
  net.alpha().value[skip] = 40.0;
  const Batch batch = random_batch(s, 2, rng);

  Tape tape;
  Var x = tape.constant(batch.images);
  Var direct = net.gate_operator(tape, skip, x, ForwardOptions::probe());
  for (std::size_t i = 0; i < direct.value().size(); ++i) CHECK(direct.value()[i] == batch.images[i]);

  // the reference with sigma exactly 1 agrees to rounding
  Reference ref;
  const Tensor got = logits_of(net, batch.images);
  const Tensor expected = ref.logits(net, batch.images);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  CHECK(sigmoid_value(40.0) == doctest::Approx(1.0).epsilon(1e-16));
}

TEST_CASE("zero learning rates leave all parameters unchanged") {
  std::mt19937_64 rng(7);
  const NetworkShapeConfig s = small_shape(1, 4, 4, 8);
  SuperNetwork net = SuperNetwork::build(s, 2);
  perturb(net, rng);
  std::vector<Tensor> before;
  for (Parameter* p : net.weights()) before.push_back(p->value);
  const Tensor alpha = net.alpha().value;
  OptimizerConfig opt;
  opt.eta_omega = 0.0;
  opt.eta_alpha = 0.0;
  opt.weight_decay_omega = 3e-4;
  const Batch batch = random_batch(s, 4, rng);
  for (int step = 0; step < 3; ++step) one_level_step(net, batch, opt, {1e-3, 1.0});
  const auto w = net.weights();
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i]->value == before[i]);
  CHECK(net.alpha().value == alpha);
}

TEST_CASE("with lambda zero a single gate moves against the cross-entropy gradient") {
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    const NetworkShapeConfig s = small_shape(1, 3, 4, 8, {}, 2);
    SuperNetwork net = SuperNetwork::build(s, seed);
    const std::size_t keep = net.gate_index(GateId{0, 1, 2, OpKind::SepConv3x3});
    for (std::size_t g = 0; g < net.gates().size(); ++g)
      if (g != keep) net.deactivate(g);
    for (Parameter* p : net.weights()) p->frozen = true;
    net.alpha().value[keep] = 0.3;
    const Batch batch = whole(toy_data(8, seed));

    double& a = net.alpha().value[keep];
    const double numeric = testing::central_difference(
        a, [&] { return evaluate_loss(net, batch, {}).cross_entropy; }, 1e-6);
    const double ce_before = evaluate_loss(net, batch, {}).cross_entropy;
    OptimizerConfig opt;
    opt.eta_alpha = 0.01;
    // the probe-mode loss differs from the training forward only in running stats
    one_level_step(net, batch, opt, {});
    const double moved = a - 0.3;
    INFO("seed ", seed, " numeric ", numeric, " moved ", moved);
    REQUIRE(std::abs(numeric) > 1e-9);
    CHECK((moved > 0) == (numeric < 0));
    CHECK(evaluate_loss(net, batch, {}).cross_entropy < ce_before);
  }
}

TEST_CASE("a dominant uniform term pushes gates below their edge mean down") {
  std::mt19937_64 rng(8);
  const NetworkShapeConfig s = small_shape(1, 4, 4, 8);
  SuperNetwork net = SuperNetwork::build(s, 5);
  perturb(net, rng);
  const Batch batch = random_batch(s, 4, rng);
  const Tensor before = net.alpha().value;
  const double reg_before = net.regularizer().uniform(net.gate_params());
  OptimizerConfig opt;
  opt.eta_alpha = 1e-6;
  opt.momentum_alpha = 0.0;
  one_level_step(net, batch, opt, {1e3, 0.0});

  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> edges;
  for (std::size_t g = 0; g < net.gates().size(); ++g) edges[{net.gates()[g].from, net.gates()[g].to}].push_back(g);
  std::size_t below = 0;
  for (const auto& [edge, members] : edges) {
    double mean = 0.0;
    for (std::size_t g : members) mean += sigmoid_value(before[g]) / members.size();
    for (std::size_t g : members) {
      if (sigmoid_value(before[g]) < mean) {
        CHECK(net.alpha().value[g] < before[g]);
        ++below;
      }
    }
  }
  CHECK(below > 0);
  CHECK(net.regularizer().uniform(net.gate_params()) < reg_before);
}

TEST_CASE("bilevel step with a frozen alpha rate equals a plain weight step on D2") {
  std::mt19937_64 rng(9);
  const NetworkShapeConfig s = small_shape(1, 4, 4, 8);
  SuperNetwork a = SuperNetwork::build(s, 4);
  SuperNetwork b = SuperNetwork::build(s, 4);
  const Batch d1 = random_batch(s, 4, rng), d2 = random_batch(s, 4, rng);
  OptimizerConfig opt;
  opt.eta_alpha = 0.0;
  for (int step = 0; step < 2; ++step) {
    bilevel_step(a, d1, d2, opt);
    one_level_step(b, d2, opt, {});
  }
  const auto wa = a.weights(), wb = b.weights();
  for (std::size_t i = 0; i < wa.size(); ++i) CHECK(wa[i]->value == wb[i]->value);
  CHECK(a.alpha().value == b.alpha().value);
}

TEST_CASE("bilevel alternation lowers the D1 loss in most seeds") {
  std::size_t improved = 0;
  const std::size_t seeds = 20;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const NetworkShapeConfig s = small_shape(1, 3, 4, 8, {}, 2);
    SuperNetwork net = SuperNetwork::build(s, 100 + seed);
    const auto [d1, d2] = split_dataset(toy_data(16, seed), 16, SplitRole::D1, SplitRole::D2, seed);
    const Batch full_d1 = whole(d1);
    const double before = evaluate_loss(net, full_d1, {}).cross_entropy;
    OptimizerConfig opt;
    opt.eta_omega = 0.01;
    opt.eta_alpha = 0.1;
    std::mt19937_64 rng(seed);
    const auto b1 = epoch_batches(d1.size(), 8, rng);
    const auto b2 = epoch_batches(d2.size(), 8, rng);
    for (std::size_t i = 0; i < b1.size(); ++i) bilevel_step(net, d1.gather(b1[i]), d2.gather(b2[i]), opt);
    const double after = evaluate_loss(net, full_d1, {}).cross_entropy;
    if (after <= before) ++improved;
  }
  MESSAGE("D1 loss decreased in ", improved, " of ", seeds, " seeds");
  CHECK(improved >= 16);
}

TEST_CASE("discretization of a saturated-off gate barely changes the loss") {
  std::mt19937_64 rng(10);
  const NetworkShapeConfig s = small_shape(2, 4, 4, 8, {1});
  SuperNetwork net = SuperNetwork::build(s, 6);
  perturb(net, rng);
  const Batch probe = random_batch(s, 4, rng);
  const GateId off{0, 1, 3, OpKind::SepConv3x3};
  net.alpha().value[net.gate_index(off)] = -40.0;
  const DiscretizationReport r = discretize(net, {off}, &probe);
  CHECK(r.measured);
  CHECK(std::abs(r.loss_change()) < 1e-9);
  REQUIRE(r.pruned.size() == 1);
  CHECK(r.pruned[0].first == off);
  CHECK_FALSE(net.active()[net.gate_index(off)]);
  for (Parameter* p : net.gate_weights(net.gate_index(off))) CHECK(p->frozen);
  CHECK_THROWS_AS(discretize(net, {off}), ValidationError);

  const DiscretizationReport none = discretize(net, {}, &probe);
  CHECK(none.loss_change() == 0.0);

  const GateId half{1, 0, 2, OpKind::SepConv3x3};
  net.alpha().value[net.gate_index(half)] = 0.0;
  const DiscretizationReport r2 = discretize(net, {half}, &probe);
  CHECK(r2.pruned[0].second == 0.5);
  MESSAGE("removing a gate at sigma 0.5 changed the probe loss by ", r2.loss_change());
}

TEST_CASE("export lists exactly the active gates") {
  const NetworkShapeConfig s = small_shape(2, 4, 4, 8, {1});
  SuperNetwork net = SuperNetwork::build(s, 7);
  CHECK(export_architecture(net) == ArchitectureEncoding::full(s));
  for (std::size_t from : {0, 1})
    for (OpKind op : kAllOps) discretize(net, {GateId{0, from, 2, op}});
  const ArchitectureEncoding arch = export_architecture(net);
  CHECK(arch.active.size() == net.gates().size() - 4);
  CHECK(arch.dead_nodes == std::set<NodeRef>{NodeRef{0, 2}});
  CHECK(deserialize(serialize(arch)) == arch);
}

TEST_CASE("tape gradients match central differences on small supernets") {
  std::size_t total = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t nodes = 3 + seed % 2;
    const std::vector<std::size_t> red = seed % 3 == 0 ? std::vector<std::size_t>{1} : std::vector<std::size_t>{};
    const NetworkShapeConfig s = small_shape(2, nodes, 2 + 2 * (seed % 2), 6, red);
    SuperNetwork net = SuperNetwork::build(s, seed, {true, seed % 2 ? SigmaBarScope::Global : SigmaBarScope::Edge});
    perturb(net, rng);
    if (seed % 4 == 1) net.deactivate(0);
    const Batch batch = random_batch(s, 3, rng);
    const testing::GradCheckResult r =
        testing::check_supernet_gradients(net, batch, {1e-3, static_cast<double>(seed % 2)}, 0.05, seed);
    INFO("seed ", seed, " worst ", r.worst_entry);
    CHECK(r.failed == 0);
    total += r.checked;
  }
  CHECK(total > 200);
}

TEST_CASE("forward rejects a mismatched input") {
  const NetworkShapeConfig s = small_shape(1, 3, 4, 8);
  SuperNetwork net = SuperNetwork::build(s, 1);
  Tape tape;
  CHECK_THROWS_AS(net.forward(tape, Tensor({1, 3, 6, 6}), {}), ShapeError);
  OptimizerConfig bad;
  bad.momentum_alpha = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
