#include "cmp/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace cmp {
namespace {

// Mean cross-entropy over masked rows, evaluated on plain values.
double masked_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                            const std::vector<std::uint8_t>& mask) {
  const std::size_t c = logits.cols();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!mask[i]) continue;
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(row[k] - mx);
    total += mx + std::log(z) - row[static_cast<std::size_t>(labels[i])];
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (patience < 0) throw std::invalid_argument("patience must be >= 0");
  if (patience > max_epochs) throw std::invalid_argument("patience must not exceed max_epochs");
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
}

void adam_step(std::vector<Parameter>& params, const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params[i].value)) {
      throw ShapeError("adam_step: gradient shape mismatch for " + params[i].name);
    }
    if (!grads[i].all_finite()) {
      throw NumericError("non-finite gradient for parameter " + params[i].name);
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.shape());
      state.v.emplace_back(p.value.shape());
    }
  }
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double decay = cfg.lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i].value;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      w[k] -= decay * w[k];
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

double accuracy(const Tensor& logits, const std::vector<int>& labels,
                const std::vector<std::uint8_t>& mask) {
  std::size_t hit = 0, count = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!mask[i]) continue;
    const auto row = logits.row(i);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    hit += best == labels[i] ? 1 : 0;
    ++count;
  }
  return count == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(count);
}

TrainResult train(Model& model, const Graph& g, const Split& split, const TrainConfig& cfg,
                  std::uint64_t seed) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const MessageGraph mg = make_message_graph(g);
  const ModelSpec& spec = model.spec();
  const bool cl = spec.kind == ModelKind::cl;

  TrainResult out;
  out.metrics.seed = seed;
  out.best_params = model.parameters();
  AdamState state;
  double best = -1.0;
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Tape tape;
    Tensor logits;
    std::vector<Tensor> grads;
    double loss_value = 0.0;
    try {
      const Model::Forward fwd = model.forward(tape, mg, g.features);
      Var loss = cross_entropy(tape, fwd.logits, g.labels, split.train_mask);
      if (cl) {
        Var aux;
        if (cfg.cl_resample_negatives) {
          Graph fresh = sample_negative_edges(
              Graph{g.num_nodes, Tensor(), g.labels, g.pos_edges, std::nullopt}, std::nullopt,
              derive_seed(seed, 100 + static_cast<std::uint64_t>(epoch)));
          aux = contrastive_loss(tape, fwd.embeddings, make_message_graph(fresh));
        } else {
          aux = contrastive_loss(tape, fwd.embeddings, mg);
        }
        loss = add(tape, loss, scale(tape, aux, spec.cl_loss_weight));
      }
      loss_value = tape.value(loss).item();
      if (!std::isfinite(loss_value)) throw NumericError("non-finite loss");
      tape.backward(loss);
      logits = tape.value(fwd.logits);
      grads.reserve(fwd.params.size());
      for (Var p : fwd.params) grads.push_back(tape.grad(p));
    } catch (const NumericError& e) {
      throw TrainingAborted("training diverged at epoch " + std::to_string(epoch) + ": " +
                                e.what(),
                            epoch);
    } catch (const EigError& e) {
      throw TrainingAborted("eigendecomposition failed at epoch " + std::to_string(epoch) +
                                ": " + e.what(),
                            epoch);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_value;
    rec.train_acc = accuracy(logits, g.labels, split.train_mask);
    rec.val_loss = masked_cross_entropy(logits, g.labels, split.val_mask);
    rec.val_acc = accuracy(logits, g.labels, split.val_mask);
    out.metrics.epochs.push_back(rec);

    if (rec.val_acc > best) {
      best = rec.val_acc;
      since_best = 0;
      out.metrics.best_val_epoch = epoch;
      out.metrics.best_val_acc = rec.val_acc;
      out.metrics.test_acc = accuracy(logits, g.labels, split.test_mask);
      out.best_params = model.parameters();
    } else {
      ++since_best;
    }
    if (since_best > cfg.patience || epoch == cfg.max_epochs) break;

    try {
      adam_step(model.parameters(), grads, state, cfg);
    } catch (const NumericError& e) {
      throw TrainingAborted("training diverged at epoch " + std::to_string(epoch) + ": " +
                                e.what(),
                            epoch);
    }
  }
  out.metrics.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

Tensor embed(const Model& model, const Graph& g) {
  Tape tape;
  const Model::Forward fwd = model.forward(tape, make_message_graph(g), g.features);
  return tape.value(fwd.embeddings);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

SeedAggregate aggregate(const std::vector<double>& values) {
  SeedAggregate a;
  a.count = values.size();
  a.median = quantile(values, 0.5);
  a.q25 = quantile(values, 0.25);
  a.q75 = quantile(values, 0.75);
  return a;
}

void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

std::string metrics_json(const RunMetrics& m, bool include_wall_time) {
  nlohmann::ordered_json j;
  j["seed"] = m.seed;
  j["epochs_run"] = m.epochs.size();
  j["best_val_epoch"] = m.best_val_epoch;
  j["best_val_acc"] = m.best_val_acc;
  j["test_acc"] = m.test_acc;
  if (include_wall_time) j["wall_time_s"] = m.wall_time_s;
  auto curve = nlohmann::ordered_json::array();
  for (const auto& e : m.epochs) {
    curve.push_back({{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"train_acc", e.train_acc},
                     {"val_loss", e.val_loss},
                     {"val_acc", e.val_acc}});
  }
  j["epochs"] = std::move(curve);
  return j.dump(2) + "\n";
}

}  // namespace cmp
