#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "goldnas/dataset.hpp"
#include "goldnas/layers.hpp"
#include "goldnas/optimizer.hpp"
#include "goldnas/search_space.hpp"

namespace goldnas {

/// Stand-alone network for one discrete architecture. Active gates become
/// plain operators that are summed into their target node; there is no
/// architecture parameter anywhere. Dead nodes and every gate leaving them
/// are omitted, and each cell concatenates only its live inner nodes, so the
/// following cells see the reduced channel count.
class DiscreteNetwork {
 public:
  /// Throws ValidationError when a cell has no live inner node.
  static DiscreteNetwork build(const ArchitectureEncoding& arch, std::uint64_t seed, bool bn_affine = true);

  DiscreteNetwork(DiscreteNetwork&&) noexcept;
  DiscreteNetwork& operator=(DiscreteNetwork&&) noexcept;
  ~DiscreteNetwork();

  const NetworkShapeConfig& shape() const { return shape_; }
  Var forward(Tape& tape, const Tensor& images, const ForwardOptions& opt);

  std::vector<Parameter*> weights();
  std::vector<Tensor*> buffers();
  std::size_t parameter_count();
  /// Gates that ended up in the built network.
  const std::vector<GateId>& built_gates() const { return built_; }
  /// Output channels of each cell after dropping dead nodes.
  const std::vector<std::size_t>& cell_channels() const { return cell_channels_; }

  /// Multiply-accumulates of one forward pass per image, counted by executing
  /// the network.
  std::uint64_t measure_macs();

 private:
  DiscreteNetwork();
  struct Cell;

  NetworkShapeConfig shape_;
  std::unique_ptr<Stem> stem_;
  std::vector<std::unique_ptr<Cell>> cells_;
  std::unique_ptr<Classifier> classifier_;
  std::vector<GateId> built_;
  std::vector<std::size_t> cell_channels_;
};

struct RetrainSchedule {
  std::size_t epochs = 10;
  double learning_rate = 0.025;  // cosine-annealed to zero over `epochs`
  double momentum = 0.9;
  double weight_decay = 3e-4;
  std::size_t batch_size = 96;
  AugmentationConfig augment;

  void validate() const;
};

struct RetrainMetrics {
  std::vector<double> train_loss;      // per epoch, running minibatch mean
  std::vector<double> train_accuracy;  // per epoch, running minibatch mean
  double initial_train_loss = 0.0;
  double initial_train_accuracy = 0.0;
  double final_train_loss = 0.0;
  double final_train_accuracy = 0.0;
  bool has_eval = false;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;
  std::uint64_t macs = 0;
  std::size_t parameters = 0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean loss and accuracy over a whole split, in minibatches.
EvalResult evaluate(DiscreteNetwork& net, const DatasetSplit& data, const ForwardOptions& opt,
                    std::size_t batch_size = 256);

/// Learning rate of epoch `e` (0-based) under cosine annealing.
double cosine_lr(double base, std::size_t e, std::size_t epochs);

struct RetrainResult {
  DiscreteNetwork network;
  RetrainMetrics metrics;
};

/// Builds the discrete network and trains it with momentum SGD. With zero
/// epochs only the initial metrics are reported.
RetrainResult retrain(const ArchitectureEncoding& arch, const DatasetSplit& train, const DatasetSplit* eval,
                      const RetrainSchedule& schedule, std::uint64_t seed);

}  // namespace goldnas
