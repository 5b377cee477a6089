#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mmbeam/pipeline.hpp"

namespace mmbeam::training {

inline constexpr double kDefaultLabelSigma = 5.0 / 3.0;
inline constexpr int kLabelCutoff = 5;

/// Soft beam target: weights >= 0 summing to 1, peak at the true beam.
struct BeamDistribution {
  std::array<double, kNumBeams> weights{};
};

/// w_i ∝ exp(-(i-b)^2 / (2 sigma^2)) for |i-b| <= 5, 0 elsewhere, renormalised.
BeamDistribution gaussian_label(BeamLabel b, double sigma = kDefaultLabelSigma);

struct FocalLossConfig {
  double gamma = 2.0;
  void validate() const;
};

/// -sum_i t_i (1 - p_i)^gamma log max(p_i, 1e-12) with p = softmax(logits).
double focal_loss_value(std::span<const double> logits, const BeamDistribution& target, const FocalLossConfig& cfg);

/// Shadow copy of named tensors kept in double precision.
struct EmaState {
  std::map<std::string, ad::Tensor<double>> shadow;
  double decay = 0.999;
  std::uint64_t updates = 0;
};

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, const ad::Tensor<T>*>>;

/// Shadow initialised to the current values.
template <typename T>
EmaState ema_init(const NamedTensors<T>& params, double decay);

/// shadow <- d shadow + (1 - d) params with d = `decay` (state.decay when
/// negative). Throws ArgumentError on a missing name or shape mismatch.
template <typename T>
void ema_update(EmaState& state, const NamedTensors<T>& params, double decay = -1.0);

/// Decay used at update n: min(decay, (1 + n) / (10 + n)).
double ema_warmup_decay(double decay, std::uint64_t n);

/// Seeded shuffle then prefix split; train gets round(fraction * n) ids,
/// clamped so both parts are non-empty when n >= 2.
struct Split {
  std::vector<int> train, val;
};
Split split_dataset(std::span<const int> ids, double fraction, std::uint64_t seed);

/// Adam with bias correction.
class Adam {
 public:
  Adam(ad::ParameterStore<float>& store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr);
  std::uint64_t steps() const noexcept { return t_; }

 private:
  ad::ParameterStore<float>* store_;
  double b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

/// lr_min + (lr0 - lr_min) (1 + cos(pi step / total)) / 2.
double cosine_lr(double lr0, double lr_min, std::uint64_t step, std::uint64_t total);

struct AugmentConfig {
  bool flip = false;
  double flip_prob = 0.5;
  vision::PhotometricParams photometric;  // image tensors, on the fly
  double radar_noise = 0.0;               // multiplicative U(-f, f)

  void validate() const;
  bool any() const;
};

struct TrainConfig {
  double lr0 = 1e-4;
  double lr_min = 1e-6;
  int batch_size = 16;
  int epochs = 10;
  double split_fraction = 0.9;
  std::uint64_t seed = 0;
  double ema_decay = 0.999;
  bool ema_warmup = true;
  double label_sigma = kDefaultLabelSigma;
  FocalLossConfig focal;
  std::map<int, double> scenario_weights;  // sampler weight per scenario, default 1
  std::uint64_t max_steps = 0;             // 0 = epochs * steps per epoch
  AugmentConfig augment;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  std::uint64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_dba = 0.0;
  std::map<int, double> val_dba_per_scenario;
};

using StateMap = std::map<std::string, ad::Tensor<float>>;

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_dba = 0.0;
  StateMap best_raw, best_ema;
  std::uint64_t steps = 0;
  double final_loss = 0.0;
};

/// Called after every epoch with the log row and the current raw/EMA states.
using EpochCallback = std::function<void(const EpochLog&, const StateMap& raw, const StateMap& ema)>;

/// Runs the training loop; the model ends holding the best EMA weights.
/// Best is the highest validation DBA (earliest on ties); with an empty
/// validation set the last epoch wins. Throws NumericError on a non-finite loss.
TrainResult train(model::FusionModel& model, const pipeline::PreparedDataset& data, const Split& split,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Loss of one batch; exposed for determinism and flip-consistency checks.
double train_step(model::FusionModel& model, Adam& opt, const pipeline::PreparedDataset& data,
                  std::span<const int> indices, std::span<const char> flip, const TrainConfig& cfg, double lr,
                  std::uint64_t step);

/// Top-3 predictions for the selected samples, in batches.
std::vector<BeamPrediction> predict(const model::FusionModel& model, const pipeline::PreparedDataset& data,
                                    std::span<const int> indices, int batch_size = 64);

metrics::DbaReport evaluate(const model::FusionModel& model, const pipeline::PreparedDataset& data,
                            std::span<const int> indices, int batch_size = 64);

StateMap capture_state(const ad::ParameterStore<float>& store);
StateMap ema_state_map(const EmaState& ema);

/// CSV log with header epoch,step,lr,train_loss,val_dba,val_dba_s<id>...
std::string log_csv(const std::vector<EpochLog>& log, const std::vector<int>& scenario_ids);

}  // namespace mmbeam::training
