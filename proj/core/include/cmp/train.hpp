#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cmp/graph.hpp"
#include "cmp/nn.hpp"
#include "cmp/tensor.hpp"

namespace cmp {

struct TrainConfig {
  double lr = 0.01;
  double weight_decay = 5e-4;
  int max_epochs = 200;
  int patience = 100;
  std::vector<std::uint64_t> seeds{42, 43, 44, 45, 46};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Draw a fresh negative sample every epoch for the contrastive loss of the
  /// cl baseline (default: the run's fixed negative edges).
  bool cl_resample_negatives = false;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct RunMetrics {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  int best_val_epoch = 0;
  double best_val_acc = 0.0;
  double test_acc = 0.0;  // of the best-validation parameters
  double wall_time_s = 0.0;
};

/// Raised when training diverges; carries the epoch number.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, int epoch) : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long long step = 0;
};

/// One Adam update with bias correction. Weight decay is decoupled: every
/// parameter is first shrunk by lr * weight_decay * param. Throws
/// NumericError on a non-finite gradient.
void adam_step(std::vector<Parameter>& params, const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& cfg);

struct TrainResult {
  RunMetrics metrics;
  std::vector<Parameter> best_params;
};

/// Full-batch training with model selection by validation accuracy. Each
/// epoch evaluates the current parameters from the same forward pass that
/// produces the gradient, then steps. Stops once the best validation accuracy
/// has not improved for more than `patience` epochs, or at max_epochs.
/// Throws TrainingAborted on a non-finite loss or gradient.
TrainResult train(Model& model, const Graph& g, const Split& split, const TrainConfig& cfg,
                  std::uint64_t seed = 0);

/// Fraction of masked rows whose argmax matches the label (ties pick the
/// lowest class index).
double accuracy(const Tensor& logits, const std::vector<int>& labels,
                const std::vector<std::uint8_t>& mask);

/// Embeddings of the last message-passing block for the model's current
/// parameters.
Tensor embed(const Model& model, const Graph& g);

/// Linear-interpolation quantile (numpy's default), q in [0, 1].
double quantile(std::vector<double> values, double q);

struct SeedAggregate {
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  std::size_t count = 0;
};
SeedAggregate aggregate(const std::vector<double>& values);

/// Runs fn(0..count-1) on up to `jobs` threads; the first exception is
/// rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Per-run JSON document (seed, per-epoch curves, best epoch, test accuracy).
std::string metrics_json(const RunMetrics& m, bool include_wall_time = true);

}  // namespace cmp
