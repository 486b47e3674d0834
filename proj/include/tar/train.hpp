#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tar/eval.hpp"
#include "tar/loss.hpp"
#include "tar/model.hpp"
#include "tar/optimizer.hpp"

namespace tar {

// Training, few-shot transfer, and sequential multi-level transfer.
// Everything here is bitwise deterministic for a fixed seed and thread
// count of one; the only nondeterminism with more threads is float
// summation order inside conv kernels.

template <typename T>
struct TrainConfig {
  OptimizerConfig<T> optimizer;
  LossWeights<T> weights;
  std::int64_t batch_size = 32;
  std::int64_t epochs = 30;
  std::uint64_t seed = 0;
  // Early stopping on the epoch's training loss; 0 disables it.
  std::int64_t patience = 0;

  void validate() const {
    optimizer.validate();
    weights.validate();
    if (batch_size < 2) {
      throw ConfigError("batch_size must be >= 2, got " + std::to_string(batch_size));
    }
    if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
    if (patience < 0) throw ConfigError("patience must be >= 0, got " + std::to_string(patience));
  }
};

struct EpochStats {
  std::int64_t epoch = 0;  // 1-based
  double l_total = 0.0;
  double l_activ = 0.0;
  double l_recon = 0.0;
  double train_acc = 0.0;
};

using History = std::vector<EpochStats>;
using EpochCallback = std::function<void(const EpochStats&)>;

inline std::string history_to_csv(const History& history) {
  std::ostringstream out;
  out << "epoch,l_total,l_activ,l_recon,train_acc\n";
  for (const EpochStats& e : history) {
    out << e.epoch << "," << detail::format_cell(e.l_total) << ","
        << detail::format_cell(e.l_activ) << "," << detail::format_cell(e.l_recon) << ","
        << detail::format_cell(e.train_acc) << "\n";
  }
  return out.str();
}

namespace detail {

inline void check_both_labels(const std::vector<ImageSample>& samples, const char* where) {
  std::int64_t reals = 0, fakes = 0;
  for (const ImageSample& s : samples) (s.label == Label::real ? reals : fakes) += 1;
  if (reals == 0 || fakes == 0) {
    throw ConfigError(std::string(where) + " needs both labels, got " + std::to_string(reals) +
                      " real and " + std::to_string(fakes) + " fake samples");
  }
}

// One optimization pass over `samples`, mutating the model in place.
// Assumes config was validated by the caller (epochs may be anything
// >= 1 here). Shuffle order is re-derived per epoch from the seed, so
// resuming with the same seed replays the same batches.
template <typename T>
History run_epochs(TarModel<T>& model, const std::vector<ImageSample>& samples,
                   const TrainConfig<T>& config, const EpochCallback& on_epoch) {
  const std::int64_t s = model.config.input_size;
  const std::int64_t n = static_cast<std::int64_t>(samples.size());
  for (const ImageSample& sample : samples) {
    validate_sample(sample);
    if (sample.pixels.dim(1) != s) {
      throw ContractError("sample " + std::to_string(sample.id) + " is " +
                          shape_string(sample.pixels.shape()) + ", model expects side " +
                          std::to_string(s));
    }
  }
  check_both_labels(samples, "training");
  // Catch a poisoned starting point up front. A NaN that enters through a
  // parameter can be silently absorbed downstream (relu of a NaN channel
  // compares false and yields zero), so waiting for the loss to turn
  // non-finite would let it hide.
  for (const auto& [name, slot] : model.params) {
    for (std::int64_t i = 0; i < slot.value.numel(); ++i) {
      if (!std::isfinite(static_cast<double>(slot.value[i]))) {
        throw NumericError("parameter '" + name + "' contains a non-finite value at index " +
                           std::to_string(i));
      }
    }
  }

  Optimizer<T> opt(config.optimizer);
  History history;
  double best_loss = 0.0;
  std::int64_t stale_epochs = 0;

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::int64_t{0});
  for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);

    double activ_sum = 0.0;
    double recon_sum = 0.0;  // weighted by sample count per batch
    std::int64_t correct = 0;
    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      const std::int64_t count = std::min(config.batch_size, n - start);
      Tensor<T> xs({count, 3, s, s});
      std::vector<Label> labels(static_cast<std::size_t>(count));
      for (std::int64_t b = 0; b < count; ++b) {
        const ImageSample& sample = samples[static_cast<std::size_t>(order[static_cast<std::size_t>(start + b)])];
        labels[static_cast<std::size_t>(b)] = sample.label;
        for (std::int64_t i = 0; i < sample.pixels.numel(); ++i) {
          xs[b * sample.pixels.numel() + i] = static_cast<T>(sample.pixels[i]);
        }
      }

      Tape<T> tape;
      ModelForward<T> fwd = ModelForward<T>::train(tape, model);
      Var x = tape.leaf(xs);
      TrainForward<T> tf = forward_train(fwd, tape, x, labels, model.config);
      Var l_activ = activation_loss(tape, tf.activations, labels);
      Var l_recon = reconstruction_loss(tape, x, tf.recon);
      Var l_total = total_loss(tape, l_recon, l_activ, config.weights);
      const double batch_total = static_cast<double>(tape.value(l_total)[0]);
      if (!std::isfinite(batch_total)) {
        throw NumericError("training loss is not finite at epoch " + std::to_string(epoch) +
                           ", sample offset " + std::to_string(start));
      }
      activ_sum += static_cast<double>(tape.value(l_activ)[0]);
      recon_sum += static_cast<double>(tape.value(l_recon)[0]) * static_cast<double>(count);

      const std::vector<Label> predicted =
          classify(tape.value(tf.latent_raw), model.config.latent_half_channels);
      for (std::int64_t b = 0; b < count; ++b) {
        if (predicted[static_cast<std::size_t>(b)] == labels[static_cast<std::size_t>(b)]) {
          ++correct;
        }
      }

      tape.backward(l_total);
      model.params.zero_grad();
      for (const auto& [name, var] : fwd.param_vars()) {
        model.params.accumulate_grad(name, tape.grad(var));
      }
      opt.step(model.params);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.l_activ = activ_sum / static_cast<double>(n);
    stats.l_recon = recon_sum / static_cast<double>(n);
    stats.l_total = static_cast<double>(config.weights.lambda) * stats.l_recon + stats.l_activ;
    stats.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (config.patience > 0) {
      if (history.size() == 1 || stats.l_total < best_loss) {
        best_loss = stats.l_total;
        stale_epochs = 0;
      } else if (++stale_epochs >= config.patience) {
        break;
      }
    }
  }
  return history;
}

}  // namespace detail

// Trains the model in place on a mixed real/fake sample set and returns
// the per-epoch history. Deterministic per (model, samples, config).
template <typename T>
History train_base(TarModel<T>& model, const std::vector<ImageSample>& samples,
                   const TrainConfig<T>& config, const EpochCallback& on_epoch = nullptr) {
  config.validate();
  return detail::run_epochs(model, samples, config, on_epoch);
}

// ------------------------------------------------------------------
// Few-shot transfer

template <typename T>
struct TransferConfig {
  TrainConfig<T> train = fewshot_defaults();
  double lr_multiplier = 1.0;
  std::int64_t shots = 50;  // expected samples per class
  // Allows few-shot sets that do not match `shots` exactly.
  bool allow_any_count = false;

  static TrainConfig<T> fewshot_defaults() {
    TrainConfig<T> c;
    c.epochs = 100;
    c.batch_size = 10;
    return c;
  }

  void validate() const {
    if (!(lr_multiplier > 0.0)) {
      throw ConfigError("lr_multiplier must be positive, got " + std::to_string(lr_multiplier));
    }
    if (shots < 1) throw ConfigError("shots must be >= 1, got " + std::to_string(shots));
    if (train.epochs != 0) train.validate();
  }
};

template <typename T>
struct TransferResult {
  TarModel<T> model;
  History history;
};

// Fine-tunes every parameter of a copy of `source` on the few-shot set;
// the source model itself is never modified. Zero epochs returns the
// copy untouched, which makes "transfer with no training" a clean
// identity for pipeline tests.
template <typename T>
TransferResult<T> transfer_few_shot(const TarModel<T>& source,
                                    const std::vector<ImageSample>& fewshot,
                                    const TransferConfig<T>& config,
                                    const EpochCallback& on_epoch = nullptr) {
  config.validate();
  if (!config.allow_any_count) {
    std::int64_t reals = 0, fakes = 0;
    for (const ImageSample& s : fewshot) (s.label == Label::real ? reals : fakes) += 1;
    if (reals != config.shots || fakes != config.shots) {
      throw ConfigError("few-shot set has " + std::to_string(reals) + " real and " +
                        std::to_string(fakes) + " fake samples, expected " +
                        std::to_string(config.shots) +
                        " per class (set allow_any_count to override)");
    }
  }

  TransferResult<T> result{source, {}};
  if (config.train.epochs == 0) return result;

  TrainConfig<T> effective = config.train;
  effective.optimizer.lr = static_cast<T>(static_cast<double>(effective.optimizer.lr) *
                                          config.lr_multiplier);
  result.history = detail::run_epochs(result.model, fewshot, effective, on_epoch);
  return result;
}

// ------------------------------------------------------------------
// Sequential transfer across domains

template <typename T>
struct TransferPlan {
  std::vector<Domain> targets;
  TransferConfig<T> config;  // applied at every stage

  void validate() const {
    if (targets.empty()) throw ConfigError("transfer plan needs at least one target domain");
    for (Domain d : targets) {
      if (d == Domain::real) throw ConfigError("transfer targets must be fake domains");
    }
    config.validate();
  }
};

struct StageSnapshot {
  Domain target = Domain::blendswap;
  std::string name;  // chain label, e.g. "blendswap->sharpswap"
  History history;
  AccuracyMatrix matrix;  // test accuracy on every fake domain after this stage
};

template <typename T>
struct SequenceResult {
  TarModel<T> model;
  std::vector<StageSnapshot> snapshots;
};

// Runs the plan stage by stage, fine-tuning on each target's few-shot
// split and snapshotting the full test-accuracy matrix after every
// stage. One snapshot per stage, in plan order.
template <typename T>
SequenceResult<T> sequence_transfer(const TarModel<T>& base, Domain base_domain,
                                    const TransferPlan<T>& plan, const Dataset& ds,
                                    const EpochCallback& on_epoch = nullptr) {
  plan.validate();
  SequenceResult<T> out{base, {}};
  Domain previous = base_domain;
  std::string chain = domain_name(base_domain);
  for (Domain target : plan.targets) {
    if (target == previous) {
      throw ConfigError("transfer stage targets '" + std::string(domain_name(target)) +
                        "' twice in a row");
    }
    TransferResult<T> stage =
        transfer_few_shot(out.model, labeled_set(ds, target, Split::fewshot), plan.config,
                          on_epoch);
    out.model = std::move(stage.model);
    chain += std::string("->") + domain_name(target);

    StageSnapshot snap;
    snap.target = target;
    snap.name = chain;
    snap.history = std::move(stage.history);
    snap.matrix = zero_shot_matrix(out.model, ds, base_domain, chain);
    out.snapshots.push_back(std::move(snap));
    previous = target;
  }
  return out;
}

// ------------------------------------------------------------------
// Dead-latent probe for the ablation study

struct ZeroActivationReport {
  std::int64_t trials = 0;
  std::int64_t zero_cases = 0;  // trials where A1 == 0 and A2 == 0 exactly

  double incidence() const {
    return trials == 0 ? 0.0 : static_cast<double>(zero_cases) / static_cast<double>(trials);
  }
};

// Counts how often a freshly initialized model maps a random input to an
// exactly dead latent (both class activations identically zero). Each
// trial draws its own model and input so the count reflects
// initialization behavior rather than one lucky seed.
template <typename T>
ZeroActivationReport measure_zero_activation(const ArchConfig& config, Variant variant,
                                             std::int64_t trials, std::uint64_t seed) {
  if (trials < 1) throw ConfigError("zero-activation probe needs trials >= 1");
  config.validate();
  ZeroActivationReport report;
  report.trials = trials;
  for (std::int64_t t = 0; t < trials; ++t) {
    const TarModel<T> model =
        build_model<T>(config, derive_seed(seed, static_cast<std::uint64_t>(2 * t)), variant);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(2 * t + 1)));
    const Tensor<T> x = random_uniform<T>({1, config.input_channels, config.input_size,
                                           config.input_size}, rng, T{-1}, T{1});
    const Tensor<T> latent = encode_infer(model, x);
    const Tensor<T> acts = per_class_activation(latent, config.latent_half_channels);
    if (acts(0, 0) == T{0} && acts(0, 1) == T{0}) ++report.zero_cases;
  }
  return report;
}

}  // namespace tar
