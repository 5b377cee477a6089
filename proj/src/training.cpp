#include "mmbeam/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

namespace mmbeam::training {

using ad::Tensor;

BeamDistribution gaussian_label(BeamLabel b, double sigma) {
  require(sigma > 0.0 && std::isfinite(sigma), "gaussian_label: sigma must be positive");
  BeamDistribution d;
  const int c = b.index();
  double sum = 0.0;
  for (int i = std::max(1, c - kLabelCutoff); i <= std::min(kNumBeams, c + kLabelCutoff); ++i) {
    const double dist = i - c;
    // exp underflows to 0 for tiny sigma; the peak term is always 1.
    const double w = std::exp(-dist * dist / (2.0 * sigma * sigma));
    d.weights[i - 1] = w;
    sum += w;
  }
  for (double& w : d.weights) w /= sum;
  return d;
}

void FocalLossConfig::validate() const {
  require(gamma >= 0.0 && std::isfinite(gamma), "focal gamma must be >= 0");
}

double focal_loss_value(std::span<const double> logits, const BeamDistribution& target, const FocalLossConfig& cfg) {
  require(logits.size() == static_cast<std::size_t>(kNumBeams), "focal_loss_value: expected 64 logits");
  cfg.validate();
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  double loss = 0.0;
  for (int i = 0; i < kNumBeams; ++i) {
    if (target.weights[i] == 0.0) continue;
    const double p = std::exp(logits[i] - mx) / z;
    loss -= target.weights[i] * std::pow(1.0 - p, cfg.gamma) * std::log(std::max(p, ad::kLogFloor));
  }
  return loss;
}

// ---------------------------------------------------------------------------
// EMA

template <typename T>
EmaState ema_init(const NamedTensors<T>& params, double decay) {
  require(decay >= 0.0 && decay < 1.0, "EMA decay must be in [0,1)");
  EmaState s;
  s.decay = decay;
  for (const auto& [name, t] : params) s.shadow.emplace(name, t->template cast<double>());
  return s;
}

template <typename T>
void ema_update(EmaState& state, const NamedTensors<T>& params, double decay) {
  const double d = decay < 0.0 ? state.decay : decay;
  require(d >= 0.0 && d < 1.0, "EMA decay must be in [0,1)");
  for (const auto& [name, t] : params) {
    auto it = state.shadow.find(name);
    if (it == state.shadow.end()) throw ArgumentError("ema_update: no shadow entry for '" + name + "'");
    if (it->second.shape() != t->shape()) throw ArgumentError("ema_update: shape mismatch for '" + name + "'");
  }
  if (params.size() != state.shadow.size()) throw ArgumentError("ema_update: parameter set differs from the shadow");
  for (const auto& [name, t] : params) {
    auto& sh = state.shadow.at(name).vec();
    const auto& src = t->vec();
    for (std::size_t i = 0; i < sh.size(); ++i) sh[i] = d * sh[i] + (1.0 - d) * static_cast<double>(src[i]);
  }
  ++state.updates;
}

template EmaState ema_init<float>(const NamedTensors<float>&, double);
template EmaState ema_init<double>(const NamedTensors<double>&, double);
template void ema_update<float>(EmaState&, const NamedTensors<float>&, double);
template void ema_update<double>(EmaState&, const NamedTensors<double>&, double);

double ema_warmup_decay(double decay, std::uint64_t n) {
  return std::min(decay, (1.0 + static_cast<double>(n)) / (10.0 + static_cast<double>(n)));
}

// ---------------------------------------------------------------------------
// Split, optimiser, schedule

Split split_dataset(std::span<const int> ids, double fraction, std::uint64_t seed) {
  if (ids.empty()) throw ArgumentError("split_dataset: empty dataset");
  require(fraction > 0.0 && fraction < 1.0, "split fraction must be in (0,1)");
  std::vector<int> order(ids.begin(), ids.end());
  Rng rng(derive_seed(seed, seed_tag::kSplit));
  std::shuffle(order.begin(), order.end(), rng);
  const long n = static_cast<long>(order.size());
  long n_train = std::lround(fraction * static_cast<double>(n));
  if (n >= 2) n_train = std::clamp(n_train, 1L, n - 1);
  else n_train = n;
  Split s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.end());
  return s;
}

Adam::Adam(ad::ParameterStore<float>& store, double beta1, double beta2, double eps)
    : store_(&store), b1_(beta1), b2_(beta2), eps_(eps) {
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0, "invalid Adam hyperparameters");
  for (const auto& name : store.parameter_names()) {
    const std::size_t n = store.parameter(name).value.size();
    m_.emplace(name, std::vector<double>(n, 0.0));
    v_.emplace(name, std::vector<double>(n, 0.0));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (const auto& name : store_->parameter_names()) {
    auto& p = store_->parameter(name);
    auto& m = m_.at(name);
    auto& v = v_.at(name);
    auto& w = p.value.vec();
    const auto& g = p.grad.vec();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
      v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
      const double upd = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      w[i] = static_cast<float>(static_cast<double>(w[i]) - upd);
    }
  }
}

double cosine_lr(double lr0, double lr_min, std::uint64_t step, std::uint64_t total) {
  if (total == 0) return lr0;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

// ---------------------------------------------------------------------------
// Configuration

void AugmentConfig::validate() const {
  require(flip_prob >= 0.0 && flip_prob <= 1.0, "flip probability must be in [0,1]");
  photometric.validate();
  require(radar_noise >= 0.0 && radar_noise <= 1.0, "radar noise fraction must be in [0,1]");
}

bool AugmentConfig::any() const {
  const auto& p = photometric;
  return flip || radar_noise > 0.0 || p.brightness > 0.0 || p.contrast > 0.0 || p.gamma > 0.0 || p.hue_shift > 0.0 ||
         p.saturation > 0.0 || p.sharpness > 0.0 || p.blur_sigma > 0.0;
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !(lr_min >= 0.0) || lr_min > lr0) throw ConfigError("learning rates must satisfy 0 <= lr_min <= lr0, lr0 > 0");
  if (batch_size <= 0 || epochs <= 0) throw ConfigError("batch_size and epochs must be positive");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("split fraction must be in (0,1)");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must be in [0,1)");
  if (!(label_sigma > 0.0)) throw ConfigError("label_sigma must be positive");
  for (const auto& [id, w] : scenario_weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("scenario weights must be non-negative");
  try {
    focal.validate();
    augment.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Loop

namespace {

void augment_batch(model::Batch& batch, const AugmentConfig& aug, std::uint64_t seed) {
  const auto& p = aug.photometric;
  const bool photometric = p.brightness > 0.0 || p.contrast > 0.0 || p.gamma > 0.0 || p.hue_shift > 0.0 ||
                           p.saturation > 0.0 || p.sharpness > 0.0 || p.blur_sigma > 0.0;
  if (photometric) {
    if (auto it = batch.inputs.find(model::Modality::Image); it != batch.inputs.end()) {
      Tensor<float>& t = it->second;
      const int n = t.dim(0) * t.dim(1);
      const ad::Shape frame{t.dim(2), t.dim(3), t.dim(4)};
      const std::size_t per = ad::numel(frame);
      for (int k = 0; k < n; ++k) {
        Tensor<float> f(frame, std::vector<float>(t.vec().begin() + k * per, t.vec().begin() + (k + 1) * per));
        const auto img = vision::augment_photometric(vision::from_tensor(f), p,
                                                     derive_seed(seed, seed_tag::kAugment, static_cast<std::uint64_t>(k)));
        const Tensor<float> out = vision::to_tensor(img);
        std::copy(out.vec().begin(), out.vec().end(), t.vec().begin() + k * per);
      }
    }
  }
  if (aug.radar_noise > 0.0) {
    if (auto it = batch.inputs.find(model::Modality::Radar); it != batch.inputs.end()) {
      Tensor<float>& t = it->second;
      const int rows = t.dim(3), cols = t.dim(4);
      const int n = t.dim(0) * t.dim(1) * t.dim(2);
      const std::size_t per = static_cast<std::size_t>(rows) * cols;
      for (int k = 0; k < n; ++k) {
        radar::RadarMaps m;
        m.h_ra = Tensor<double>({rows, cols}, std::vector<double>(t.vec().begin() + k * per, t.vec().begin() + (k + 1) * per));
        const auto noisy = radar::augment_radar(m, aug.radar_noise,
                                                derive_seed(seed, seed_tag::kAugment, 1000000 + static_cast<std::uint64_t>(k)));
        for (std::size_t i = 0; i < per; ++i) t[k * per + i] = static_cast<float>(noisy.h_ra[i]);
      }
    }
  }
}

Tensor<float> soft_targets(std::span<const BeamLabel> labels, double sigma) {
  Tensor<float> t({static_cast<int>(labels.size()), kNumBeams});
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const auto d = gaussian_label(labels[b], sigma);
    for (int k = 0; k < kNumBeams; ++k) t[b * kNumBeams + k] = static_cast<float>(d.weights[k]);
  }
  return t;
}

std::vector<int> epoch_order(const pipeline::PreparedDataset& data, const std::vector<int>& train_ids,
                             const TrainConfig& cfg, int epoch) {
  Rng rng(derive_seed(cfg.seed, seed_tag::kShuffle, static_cast<std::uint64_t>(epoch)));
  if (cfg.scenario_weights.empty()) {
    std::vector<int> order = train_ids;
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  }
  std::vector<double> w;
  for (int i : train_ids) {
    const auto it = cfg.scenario_weights.find(data.samples[i].scenario_id);
    w.push_back(it == cfg.scenario_weights.end() ? 1.0 : it->second);
  }
  if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) throw ConfigError("scenario weights select no training sample");
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::vector<int> order(train_ids.size());
  for (auto& o : order) o = train_ids[pick(rng)];
  return order;
}

}  // namespace

double train_step(model::FusionModel& model, Adam& opt, const pipeline::PreparedDataset& data,
                  std::span<const int> indices, std::span<const char> flip, const TrainConfig& cfg, double lr,
                  std::uint64_t step) {
  model::Batch batch = pipeline::make_batch(data, indices, flip, model.config());
  augment_batch(batch, cfg.augment, derive_seed(cfg.seed, seed_tag::kAugment, step));
  const auto labels = pipeline::batch_labels(data, indices, flip);
  const Tensor<float> targets = soft_targets(labels, cfg.label_sigma);

  ad::Tape<float> tape;
  Rng drop(derive_seed(cfg.seed, seed_tag::kDropout, step));
  const auto logits = model.forward(tape, batch, true, drop);
  const auto loss = ad::focal_loss(logits, targets, static_cast<float>(cfg.focal.gamma));
  const double value = loss.value()[0];
  if (!std::isfinite(value)) throw NumericError("non-finite training loss at step " + std::to_string(step));
  model.store().zero_grad();
  tape.backward(loss);
  opt.step(lr);
  return value;
}

std::vector<BeamPrediction> predict(const model::FusionModel& model, const pipeline::PreparedDataset& data,
                                    std::span<const int> indices, int batch_size) {
  require(batch_size > 0, "batch size must be positive");
  std::vector<BeamPrediction> out;
  out.reserve(indices.size());
  for (std::size_t s = 0; s < indices.size(); s += batch_size) {
    const auto chunk = indices.subspan(s, std::min<std::size_t>(batch_size, indices.size() - s));
    const auto logits = model.predict_logits(pipeline::make_batch(data, chunk, {}, model.config()));
    for (std::size_t b = 0; b < chunk.size(); ++b)
      out.push_back(model::predict_top3(logits.span().subspan(b * kNumBeams, kNumBeams)));
  }
  return out;
}

metrics::DbaReport evaluate(const model::FusionModel& model, const pipeline::PreparedDataset& data,
                            std::span<const int> indices, int batch_size) {
  const auto preds = predict(model, data, indices, batch_size);
  std::vector<BeamLabel> truths;
  std::vector<int> scen;
  for (int i : indices) {
    truths.push_back(data.samples.at(i).label);
    scen.push_back(data.samples.at(i).scenario_id);
  }
  return metrics::dba_score(truths, preds, scen);
}

StateMap capture_state(const ad::ParameterStore<float>& store) {
  StateMap m;
  for (const auto& [name, t] : store.state()) m.emplace(name, *t);
  return m;
}

StateMap ema_state_map(const EmaState& ema) {
  StateMap m;
  for (const auto& [name, t] : ema.shadow) m.emplace(name, t.cast<float>());
  return m;
}

TrainResult train(model::FusionModel& model, const pipeline::PreparedDataset& data, const Split& split,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (split.train.empty()) throw ArgumentError("train: empty training set");
  auto& store = model.store();
  Adam opt(store);
  EmaState ema = ema_init(store.state(), cfg.ema_decay);

  const std::uint64_t n_train = split.train.size();
  const std::uint64_t per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const std::uint64_t total = cfg.max_steps > 0 ? std::min<std::uint64_t>(cfg.max_steps, per_epoch * cfg.epochs)
                                                : per_epoch * cfg.epochs;

  TrainResult res;
  std::uint64_t step = 0;
  double lr = cfg.lr0;
  for (int epoch = 1; epoch <= cfg.epochs && step < total; ++epoch) {
    const auto order = epoch_order(data, split.train, cfg, epoch);
    std::vector<char> flips(order.size(), 0);
    if (cfg.augment.flip) {
      Rng rng(derive_seed(cfg.seed, seed_tag::kAugment, static_cast<std::uint64_t>(epoch)));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (auto& f : flips) f = u(rng) < cfg.augment.flip_prob ? 1 : 0;
    }
    double loss_sum = 0.0;
    int n_batches = 0;
    for (std::size_t s = 0; s < order.size() && step < total; s += cfg.batch_size) {
      const std::size_t len = std::min<std::size_t>(cfg.batch_size, order.size() - s);
      lr = cosine_lr(cfg.lr0, cfg.lr_min, step, total);
      const double loss = train_step(model, opt, data, std::span<const int>(order).subspan(s, len),
                                     std::span<const char>(flips).subspan(s, len), cfg, lr, step);
      const double d = cfg.ema_warmup ? ema_warmup_decay(cfg.ema_decay, ema.updates) : cfg.ema_decay;
      ema_update(ema, store.state(), d);
      loss_sum += loss;
      ++n_batches;
      ++step;
      res.final_loss = loss;
    }

    EpochLog row;
    row.epoch = epoch;
    row.step = step;
    row.lr = lr;
    row.train_loss = loss_sum / std::max(1, n_batches);
    const StateMap raw = capture_state(store);
    const StateMap shadow = ema_state_map(ema);
    if (!split.val.empty()) {
      store.load_state(shadow);
      const auto rep = evaluate(model, data, split.val);
      store.load_state(raw);
      row.val_dba = rep.overall;
      row.val_dba_per_scenario = rep.per_scenario;
    }
    log_info("epoch " + std::to_string(epoch) + " step " + std::to_string(step) + " loss " +
             std::to_string(row.train_loss) + " val_dba " + std::to_string(row.val_dba));
    res.log.push_back(row);
    if (res.log.size() == 1 || split.val.empty() || row.val_dba > res.best_val_dba) {
      res.best_epoch = epoch;
      res.best_val_dba = row.val_dba;
      res.best_raw = raw;
      res.best_ema = shadow;
    }
    if (on_epoch) on_epoch(row, raw, shadow);
  }
  res.steps = step;
  store.load_state(res.best_ema);
  return res;
}

std::string log_csv(const std::vector<EpochLog>& log, const std::vector<int>& scenario_ids) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "epoch,step,lr,train_loss,val_dba";
  for (int id : scenario_ids) os << ",val_dba_s" << id;
  os << '\n';
  for (const auto& r : log) {
    os << r.epoch << ',' << r.step << ',' << r.lr << ',' << r.train_loss << ',' << r.val_dba;
    for (int id : scenario_ids) {
      const auto it = r.val_dba_per_scenario.find(id);
      os << ',';
      if (it != r.val_dba_per_scenario.end()) os << it->second;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace mmbeam::training
