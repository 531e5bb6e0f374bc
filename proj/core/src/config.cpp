#include "goldnas/config.hpp"

#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "goldnas/error.hpp"
#include "goldnas/io.hpp"
#include "goldnas/rng.hpp"

namespace goldnas {

namespace pt = boost::property_tree;

std::string scope_name(SigmaBarScope s) { return s == SigmaBarScope::Edge ? "edge" : "global"; }

SigmaBarScope parse_scope(std::string_view s) {
  if (s == "edge") return SigmaBarScope::Edge;
  if (s == "global") return SigmaBarScope::Global;
  throw ParseError("sigma_bar_scope must be 'edge' or 'global', got '" + std::string(s) + "'");
}

void ExperimentConfig::validate() const {
  shape.validate();
  optimizer.validate();
  scheduler.validate();
  augment.validate(shape.input_height, shape.input_width);
  retrain.validate();
  if (data.source != "synthetic" && data.source != "cifar10") {
    throw ValidationError("data.source must be 'synthetic' or 'cifar10'");
  }
  if (data.source == "cifar10" &&
      (shape.input_height != 32 || shape.input_width != 32 || shape.num_classes != 10 || shape.input_channels != 3)) {
    throw ValidationError("data.source = cifar10 needs a 32x32x3 input and 10 classes");
  }
  if (data.source == "synthetic" && shape.input_height != shape.input_width) {
    throw ValidationError("synthetic data is square; input_height must equal input_width");
  }
  if (data.source == "synthetic" && shape.input_channels != 3) {
    throw ValidationError("synthetic data has 3 channels");
  }
  if (random_search.samples < 1) throw ValidationError("random_search.samples must be >= 1");
}

namespace {

class Reader {
 public:
  Reader(const pt::ptree& tree, std::string source) : tree_(tree), source_(std::move(source)) {}

  template <typename T>
  void get(const std::string& section, const std::string& key, T& out) {
    seen_[section].insert(key);
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return;
    const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return;
    out = convert<T>(*v, section + "." + key);
  }

  void check_unknown() const {
    for (const auto& [section, body] : tree_) {
      const auto it = seen_.find(section);
      if (it == seen_.end()) throw ParseError(source_ + ": unknown section [" + section + "]");
      for (const auto& [key, value] : body) {
        if (!it->second.contains(key)) throw ParseError(source_ + ": unknown key '" + key + "' in [" + section + "]");
      }
    }
  }

 private:
  template <typename T>
  T convert(const std::string& text, const std::string& key) const {
    const std::string ctx = source_ + ": " + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1" || text == "yes") return true;
      if (text == "false" || text == "0" || text == "no") return false;
      throw ParseError(ctx + ": expected true or false, got '" + text + "'");
    } else if constexpr (std::is_same_v<T, double>) {
      return parse_double(text, ctx);
    } else if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, std::set<std::size_t>>) {
      std::set<std::size_t> out;
      std::string item;
      if (text.find_first_not_of(" \t") == std::string::npos) return out;
      std::istringstream in(text);
      while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        out.insert(static_cast<std::size_t>(parse_uint(std::string_view(item).substr(b, e - b + 1), ctx)));
      }
      return out;
    } else {
      return static_cast<T>(parse_uint(text, ctx));
    }
  }

  const pt::ptree& tree_;
  std::string source_;
  std::map<std::string, std::set<std::string>> seen_;
};

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig c;
  Reader r(tree, source);
  r.get("shape", "num_cells", c.shape.num_cells);
  r.get("shape", "nodes_per_cell", c.shape.nodes_per_cell);
  r.get("shape", "initial_channels", c.shape.initial_channels);
  r.get("shape", "input_height", c.shape.input_height);
  r.get("shape", "input_width", c.shape.input_width);
  r.get("shape", "num_classes", c.shape.num_classes);
  r.get("shape", "input_channels", c.shape.input_channels);
  // Absent key: the standard positions; present but empty: no reduction.
  std::set<std::size_t> reductions;
  const auto defaults = NetworkShapeConfig::default_reductions(c.shape.num_cells);
  reductions.insert(defaults.begin(), defaults.end());
  r.get("shape", "reduction_cells", reductions);
  c.shape.reduction_cells.assign(reductions.begin(), reductions.end());

  r.get("optimizer", "eta_omega", c.optimizer.eta_omega);
  r.get("optimizer", "eta_alpha", c.optimizer.eta_alpha);
  r.get("optimizer", "momentum_omega", c.optimizer.momentum_omega);
  r.get("optimizer", "momentum_alpha", c.optimizer.momentum_alpha);
  r.get("optimizer", "weight_decay_omega", c.optimizer.weight_decay_omega);
  r.get("optimizer", "batch_size", c.optimizer.batch_size);
  r.get("optimizer", "bn_affine", c.bn_affine);

  r.get("scheduler", "n0", c.scheduler.n0);
  r.get("scheduler", "lambda0", c.scheduler.lambda0);
  r.get("scheduler", "c0", c.scheduler.c0);
  r.get("scheduler", "xi_max", c.scheduler.xi_max);
  r.get("scheduler", "xi_min", c.scheduler.xi_min);
  r.get("scheduler", "t0", c.scheduler.t0);
  r.get("scheduler", "flops_min", c.scheduler.flops_min);
  r.get("scheduler", "mu", c.scheduler.mu);
  r.get("scheduler", "max_epochs", c.scheduler.max_epochs);
  std::string scope = scope_name(c.sigma_bar_scope);
  r.get("scheduler", "sigma_bar_scope", scope);
  c.sigma_bar_scope = parse_scope(scope);

  r.get("data", "source", c.data.source);
  r.get("data", "samples_per_class", c.data.samples_per_class);
  r.get("data", "eval_samples_per_class", c.data.eval_samples_per_class);
  r.get("data", "noise", c.data.noise);
  r.get("data", "cifar_dir", c.data.cifar_dir);

  r.get("augment", "enabled", c.augment.enabled);
  r.get("augment", "flip_probability", c.augment.flip_probability);
  r.get("augment", "crop_padding", c.augment.crop_padding);
  r.get("augment", "cutout", c.augment.cutout);

  r.get("retrain", "epochs", c.retrain.epochs);
  r.get("retrain", "learning_rate", c.retrain.learning_rate);
  r.get("retrain", "momentum", c.retrain.momentum);
  r.get("retrain", "weight_decay", c.retrain.weight_decay);
  r.get("retrain", "batch_size", c.retrain.batch_size);
  r.get("retrain", "augment", c.retrain.augment.enabled);
  c.retrain.augment.flip_probability = c.augment.flip_probability;
  c.retrain.augment.crop_padding = c.augment.crop_padding;
  c.retrain.augment.cutout = c.augment.cutout;

  r.get("random_search", "samples", c.random_search.samples);
  r.get("random_search", "budget", c.random_search.budget);
  r.get("random_search", "proxy_epochs", c.random_search.proxy_epochs);
  r.get("random_search", "validation_examples", c.random_search.validation_examples);

  r.get("run", "seed", c.seed);
  r.check_unknown();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path), path.string());
}

std::string config_to_ini(const ExperimentConfig& c) {
  std::ostringstream o;
  auto reductions = [&] {
    std::string s;
    for (std::size_t k : c.shape.reduction_cells) s += (s.empty() ? "" : ",") + std::to_string(k);
    return s;
  };
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "[shape]\n"
    << "num_cells = " << c.shape.num_cells << "\nnodes_per_cell = " << c.shape.nodes_per_cell
    << "\ninitial_channels = " << c.shape.initial_channels << "\ninput_height = " << c.shape.input_height
    << "\ninput_width = " << c.shape.input_width << "\nreduction_cells = " << reductions()
    << "\nnum_classes = " << c.shape.num_classes << "\ninput_channels = " << c.shape.input_channels << "\n\n";
  o << "[optimizer]\n"
    << "eta_omega = " << format_double(c.optimizer.eta_omega) << "\neta_alpha = " << format_double(c.optimizer.eta_alpha)
    << "\nmomentum_omega = " << format_double(c.optimizer.momentum_omega)
    << "\nmomentum_alpha = " << format_double(c.optimizer.momentum_alpha)
    << "\nweight_decay_omega = " << format_double(c.optimizer.weight_decay_omega)
    << "\nbatch_size = " << c.optimizer.batch_size << "\nbn_affine = " << b(c.bn_affine) << "\n\n";
  o << "[scheduler]\n"
    << "n0 = " << c.scheduler.n0 << "\nlambda0 = " << format_double(c.scheduler.lambda0)
    << "\nc0 = " << format_double(c.scheduler.c0) << "\nxi_max = " << format_double(c.scheduler.xi_max)
    << "\nxi_min = " << format_double(c.scheduler.xi_min) << "\nt0 = " << c.scheduler.t0
    << "\nflops_min = " << c.scheduler.flops_min << "\nmu = " << format_double(c.scheduler.mu)
    << "\nmax_epochs = " << c.scheduler.max_epochs << "\nsigma_bar_scope = " << scope_name(c.sigma_bar_scope)
    << "\n\n";
  o << "[data]\n"
    << "source = " << c.data.source << "\nsamples_per_class = " << c.data.samples_per_class
    << "\neval_samples_per_class = " << c.data.eval_samples_per_class << "\nnoise = " << format_double(c.data.noise)
    << "\ncifar_dir = " << c.data.cifar_dir << "\n\n";
  o << "[augment]\n"
    << "enabled = " << b(c.augment.enabled) << "\nflip_probability = " << format_double(c.augment.flip_probability)
    << "\ncrop_padding = " << c.augment.crop_padding << "\ncutout = " << c.augment.cutout << "\n\n";
  o << "[retrain]\n"
    << "epochs = " << c.retrain.epochs << "\nlearning_rate = " << format_double(c.retrain.learning_rate)
    << "\nmomentum = " << format_double(c.retrain.momentum)
    << "\nweight_decay = " << format_double(c.retrain.weight_decay) << "\nbatch_size = " << c.retrain.batch_size
    << "\naugment = " << b(c.retrain.augment.enabled) << "\n\n";
  o << "[random_search]\n"
    << "samples = " << c.random_search.samples << "\nbudget = " << c.random_search.budget
    << "\nproxy_epochs = " << c.random_search.proxy_epochs
    << "\nvalidation_examples = " << c.random_search.validation_examples << "\n\n";
  o << "[run]\nseed = " << c.seed << "\n";
  return o.str();
}

ExperimentData load_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentData d;
  if (cfg.data.source == "cifar10") {
    d.train = load_cifar10_directory(cfg.data.cifar_dir, true);
    d.eval = load_cifar10_directory(cfg.data.cifar_dir, false);
    return d;
  }
  d.train = generate_synthetic(cfg.shape.num_classes, cfg.data.samples_per_class, cfg.shape.input_height,
                               stream_seed(seed, "data"), cfg.data.noise);
  d.eval = generate_synthetic(cfg.shape.num_classes, cfg.data.eval_samples_per_class, cfg.shape.input_height,
                              stream_seed(seed, "data-eval"), cfg.data.noise);
  d.eval.role = SplitRole::Eval;
  return d;
}

}  // namespace goldnas
