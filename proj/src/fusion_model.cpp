#include "mmbeam/fusion_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mmbeam::model {

using ad::Shape;
using ad::Tensor;
using ad::Var;

std::string to_string(Modality m) {
  switch (m) {
    case Modality::Image: return "image";
    case Modality::Lidar: return "lidar";
    case Modality::Radar: return "radar";
  }
  return "?";
}

Modality parse_modality(const std::string& name) {
  if (name == "image") return Modality::Image;
  if (name == "lidar") return Modality::Lidar;
  if (name == "radar") return Modality::Radar;
  throw ConfigError("unknown modality '" + name + "' (expected image, lidar, radar or gps)");
}

// ---------------------------------------------------------------------------
// Configuration

BackboneConfig BackboneConfig::preset(const std::string& name) {
  BackboneConfig b;
  b.name = name;
  if (name == "desk") return b;
  if (name == "resnet18" || name == "resnet34") {
    b.stage_channels = {64, 128, 256, 512};
    b.blocks_per_stage = name == "resnet18" ? std::vector<int>{2, 2, 2, 2} : std::vector<int>{3, 4, 6, 3};
    b.stem_kernel = 7;
    b.stem_stride = 2;
    b.stem_pool = true;
    return b;
  }
  throw ConfigError("unknown backbone preset '" + name + "' (expected desk, resnet18 or resnet34)");
}

void BackboneConfig::validate() const {
  if (stage_channels.size() < 2) throw ArgumentError("backbone needs at least two stages");
  if (stage_channels.size() != blocks_per_stage.size())
    throw ArgumentError("stage_channels and blocks_per_stage must have equal length");
  for (int c : stage_channels) require(c > 0, "stage channels must be positive");
  for (int b : blocks_per_stage) require(b > 0, "blocks per stage must be positive");
  require(stem_kernel > 0 && stem_kernel % 2 == 1, "stem kernel must be a positive odd number");
  require(stem_stride > 0, "stem stride must be positive");
}

bool FusionConfig::has(Modality m) const { return std::find(modalities.begin(), modalities.end(), m) != modalities.end(); }

const InputShape& FusionConfig::input(Modality m) const {
  switch (m) {
    case Modality::Image: return image;
    case Modality::Lidar: return lidar;
    case Modality::Radar: return radar;
  }
  throw ArgumentError("unknown modality");
}

namespace {

int conv_out(int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; }

// Spatial size after the stem and after each stage.
struct Spatial {
  int stem_h, stem_w;             // after the stem convolution
  int pool_h, pool_w;             // after the optional pool (= stem when absent)
  std::vector<int> stage_h, stage_w;
};

Spatial spatial(const BackboneConfig& b, const InputShape& in) {
  Spatial s{};
  const int k = b.stem_kernel, st = b.stem_stride, p = k / 2;
  s.stem_h = conv_out(in.height, k, st, p);
  s.stem_w = conv_out(in.width, k, st, p);
  s.pool_h = b.stem_pool ? conv_out(s.stem_h, 3, 2, 1) : s.stem_h;
  s.pool_w = b.stem_pool ? conv_out(s.stem_w, 3, 2, 1) : s.stem_w;
  int h = s.pool_h, w = s.pool_w;
  for (std::size_t i = 0; i < b.stage_channels.size(); ++i) {
    if (i > 0) {
      h = conv_out(h, 3, 2, 1);
      w = conv_out(w, 3, 2, 1);
    }
    s.stage_h.push_back(h);
    s.stage_w.push_back(w);
  }
  return s;
}

int heads_for(const FusionConfig& cfg, int dim) { return std::min(cfg.heads, dim); }

}  // namespace

void FusionConfig::validate() const {
  if (modalities.empty() && !use_gps) throw ConfigError("model needs at least one modality or GPS input");
  for (std::size_t i = 0; i < modalities.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (modalities[i] == modalities[j]) throw ConfigError("duplicate modality " + to_string(modalities[i]));
  if (feature_dim <= 0) throw ConfigError("feature_dim must be positive");
  if (gps_features != 2 && gps_features != 3) throw ConfigError("gps_features must be 2 or 3");
  if (transformer_layers < 0 || heads <= 0 || mlp_ratio <= 0) throw ConfigError("invalid transformer settings");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
  for (int h : head_hidden)
    if (h <= 0) throw ConfigError("head_hidden sizes must be positive");
  try {
    backbone.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  for (Modality m : modalities) {
    const auto& in = input(m);
    if (in.channels <= 0 || in.height <= 0 || in.width <= 0) throw ConfigError("input shape must be positive");
    const Spatial s = spatial(backbone, in);
    if (s.stage_h.back() < 1 || s.stage_w.back() < 1)
      throw ConfigError(to_string(m) + " input too small for the backbone");
  }
  for (int c : backbone.stage_channels)
    if (c % heads_for(*this, c) != 0)
      throw ConfigError("stage channels must be divisible by the number of attention heads");
}

int Batch::size() const {
  if (!gps.empty()) return gps.dim(0);
  if (inputs.empty()) return 0;
  return inputs.begin()->second.dim(0);
}

// ---------------------------------------------------------------------------
// Model

FusionModel::FusionModel(const FusionConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, seed_tag::kInit));
  const auto& bb = cfg_.backbone;
  const int n_stages = static_cast<int>(bb.stage_channels.size());
  for (Modality m : cfg_.modalities) {
    const std::string pre = to_string(m) + ".";
    const InputShape& in = cfg_.input(m);
    Backbone b;
    b.stem = ad::Conv2d<float>(store_, pre + "stem.conv", in.channels, bb.stage_channels[0], bb.stem_kernel,
                               bb.stem_stride, bb.stem_kernel / 2, rng);
    b.stem_bn = ad::BatchNorm2d<float>(store_, pre + "stem.bn", bb.stage_channels[0]);
    int cin = bb.stage_channels[0];
    for (int s = 0; s < n_stages; ++s) {
      std::vector<Block> blocks;
      const int cout = bb.stage_channels[s];
      for (int k = 0; k < bb.blocks_per_stage[s]; ++k) {
        const std::string bp = pre + "stage" + std::to_string(s + 1) + ".block" + std::to_string(k + 1) + ".";
        const int stride = (s > 0 && k == 0) ? 2 : 1;
        Block blk;
        blk.conv1 = ad::Conv2d<float>(store_, bp + "conv1", cin, cout, 3, stride, 1, rng);
        blk.bn1 = ad::BatchNorm2d<float>(store_, bp + "bn1", cout);
        blk.conv2 = ad::Conv2d<float>(store_, bp + "conv2", cout, cout, 3, 1, 1, rng);
        blk.bn2 = ad::BatchNorm2d<float>(store_, bp + "bn2", cout);
        if (stride != 1 || cin != cout) {
          blk.has_down = true;
          blk.down = ad::Conv2d<float>(store_, bp + "down.conv", cin, cout, 1, stride, 0, rng);
          blk.down_bn = ad::BatchNorm2d<float>(store_, bp + "down.bn", cout);
        }
        blocks.push_back(std::move(blk));
        cin = cout;
      }
      b.stages.push_back(std::move(blocks));
    }
    const Spatial sp = spatial(bb, in);
    const int proj_in = cfg_.final_pool == FinalPool::Flatten ? cin * sp.stage_h.back() * sp.stage_w.back() : cin;
    b.proj = ad::Linear<float>(store_, pre + "proj", proj_in, cfg_.feature_dim, rng);
    backbones_.push_back(std::move(b));
  }
  if (!cfg_.modalities.empty()) {
    const int T = cfg_.n_tokens();
    for (int s = 0; s < n_stages; ++s) {
      const int D = bb.stage_channels[s];
      const std::string fp = "fusion" + std::to_string(s + 1) + ".";
      FusionStage fs;
      Tensor<float> pos({T, D});
      std::uniform_real_distribution<double> u(-0.02, 0.02);
      for (auto& v : pos.vec()) v = static_cast<float>(u(rng));
      fs.pos = &store_.add_parameter(fp + "pos", std::move(pos));
      const ad::AttentionConfig acfg{D, heads_for(cfg_, D), cfg_.dropout};
      for (int l = 0; l < cfg_.transformer_layers; ++l)
        fs.layers.emplace_back(store_, fp + "layer" + std::to_string(l + 1), acfg, cfg_.mlp_ratio, rng);
      fusion_.push_back(std::move(fs));
    }
  }
  int width = (cfg_.modalities.empty() ? 0 : cfg_.feature_dim) + (cfg_.use_gps ? cfg_.gps_features : 0);
  for (std::size_t i = 0; i <= cfg_.head_hidden.size(); ++i) {
    const int out = i < cfg_.head_hidden.size() ? cfg_.head_hidden[i] : kNumBeams;
    head_.emplace_back(store_, "head.fc" + std::to_string(i + 1), width, out, rng);
    width = out;
  }
  // The output layer starts at zero: uniform initial predictions whatever the
  // scale of the summed instance features.
  const std::string last = "head.fc" + std::to_string(head_.size());
  store_.parameter(last + ".weight").value.fill(0.0f);
  store_.parameter(last + ".bias").value.fill(0.0f);
}

Var<float> FusionModel::run_block(ad::Tape<float>& tape, const Block& b, Var<float> x, bool training) const {
  Var<float> h = ad::relu(b.bn1(tape, b.conv1(tape, x), training));
  h = b.bn2(tape, b.conv2(tape, h), training);
  Var<float> skip = b.has_down ? b.down_bn(tape, b.down(tape, x), training) : x;
  return ad::relu(ad::add(h, skip));
}

Var<float> FusionModel::forward(ad::Tape<float>& tape, const Batch& batch, bool training, Rng& rng) const {
  const int B = batch.size();
  if (B <= 0) throw ArgumentError("forward: empty batch");
  const int M = static_cast<int>(cfg_.modalities.size());
  const int I = kNumInstances;
  std::vector<Var<float>> maps(M);
  for (int m = 0; m < M; ++m) {
    const Modality mod = cfg_.modalities[m];
    const auto it = batch.inputs.find(mod);
    if (it == batch.inputs.end()) throw ArgumentError("forward: batch lacks modality " + to_string(mod));
    const InputShape& in = cfg_.input(mod);
    const Shape expect{B, I, in.channels, in.height, in.width};
    if (it->second.shape() != expect)
      throw ArgumentError("forward: " + to_string(mod) + " input has shape " + ad::to_string(it->second.shape()) +
                          ", expected " + ad::to_string(expect));
    Var<float> x = tape.constant(it->second.reshaped({B * I, in.channels, in.height, in.width}));
    const Backbone& bb = backbones_[m];
    x = ad::relu(bb.stem_bn(tape, bb.stem(tape, x), training));
    if (cfg_.backbone.stem_pool) x = ad::maxpool2d(x, 3, 2, 1);
    maps[m] = x;
  }

  const int n_stages = static_cast<int>(cfg_.backbone.stage_channels.size());
  for (int s = 0; s < n_stages && M > 0; ++s) {
    for (int m = 0; m < M; ++m)
      for (const Block& blk : backbones_[m].stages[s]) maps[m] = run_block(tape, blk, maps[m], training);
    const int C = cfg_.backbone.stage_channels[s];
    std::vector<Var<float>> tokens;
    for (int m = 0; m < M; ++m) tokens.push_back(ad::reshape(ad::global_avgpool(maps[m]), {B, I, C}));
    Var<float> x = M == 1 ? tokens[0] : ad::concat<float>(tokens, 1);
    x = ad::add_leading(x, tape.parameter(*fusion_[s].pos));
    for (const auto& layer : fusion_[s].layers) x = layer(tape, x, training, rng);
    for (int m = 0; m < M; ++m) {
      Var<float> t = M == 1 ? x : ad::slice(x, 1, m * I, I);
      maps[m] = ad::add_channelwise(maps[m], ad::reshape(t, {B * I, C}));
    }
  }

  Var<float> feat;
  for (int m = 0; m < M; ++m) {
    const auto& shp = maps[m].shape();
    Var<float> f = cfg_.final_pool == FinalPool::Flatten ? ad::reshape(maps[m], {B * I, shp[1] * shp[2] * shp[3]})
                                                         : ad::global_avgpool(maps[m]);
    f = backbones_[m].proj(tape, f);
    f = ad::sum_axis(ad::reshape(f, {B, I, cfg_.feature_dim}), 1);
    feat = feat.valid() ? ad::add(feat, f) : f;
  }
  if (cfg_.use_gps) {
    if (batch.gps.shape() != Shape{B, cfg_.gps_features})
      throw ArgumentError("forward: gps input has shape " + ad::to_string(batch.gps.shape()) + ", expected [" +
                          std::to_string(B) + "," + std::to_string(cfg_.gps_features) + "]");
    Var<float> g = tape.constant(batch.gps);
    if (feat.valid()) {
      const std::vector<Var<float>> parts{feat, g};
      feat = ad::concat<float>(parts, 1);
    } else {
      feat = g;
    }
  }
  for (std::size_t i = 0; i < head_.size(); ++i) {
    feat = head_[i](tape, feat);
    if (i + 1 < head_.size()) feat = ad::relu(feat);
  }
  return feat;
}

Tensor<float> FusionModel::predict_logits(const Batch& batch) const {
  ad::Tape<float> tape;
  tape.set_grad_enabled(false);
  Rng rng(0);
  return forward(tape, batch, false, rng).value();
}

// ---------------------------------------------------------------------------
// Prediction helpers

namespace {

template <typename T>
BeamPrediction top3_impl(std::span<const T> logits) {
  if (logits.size() != static_cast<std::size_t>(kNumBeams)) throw ArgumentError("predict_top3: expected 64 logits");
  std::array<int, kNumBeams> idx{};
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + 3, idx.end(), [&](int a, int b) {
    if (logits[a] != logits[b]) return logits[a] > logits[b];
    return a < b;
  });
  double mx = -std::numeric_limits<double>::infinity();
  for (T v : logits) mx = std::max(mx, static_cast<double>(v));
  double z = 0.0;
  for (T v : logits) z += std::exp(static_cast<double>(v) - mx);
  BeamPrediction p;
  for (int k = 0; k < 3; ++k) {
    p.topk[k] = idx[k] + 1;
    p.scores[k] = std::exp(static_cast<double>(logits[idx[k]]) - mx) / z;
  }
  return p;
}

}  // namespace

BeamPrediction predict_top3(std::span<const float> logits) { return top3_impl(logits); }
BeamPrediction predict_top3(std::span<const double> logits) { return top3_impl(logits); }

BeamLabel flip_label(BeamLabel b) { return BeamLabel(kNumBeams + 1 - b.index()); }

// ---------------------------------------------------------------------------
// Complexity

namespace {

std::uint64_t conv_params(int cin, int cout, int k) { return static_cast<std::uint64_t>(k) * k * cin * cout; }
std::uint64_t conv_macs(int cin, int cout, int k, int ho, int wo) { return conv_params(cin, cout, k) * ho * wo; }
std::uint64_t linear_params(int in, int out) { return static_cast<std::uint64_t>(in) * out + out; }

struct Counts {
  std::uint64_t macs = 0, params = 0;
};

// One residual stage for a single image; returns counts and updates (cin, h, w).
Counts stage_counts(const BackboneConfig& b, int s, int& cin, int& h, int& w) {
  Counts c;
  const int cout = b.stage_channels[s];
  for (int k = 0; k < b.blocks_per_stage[s]; ++k) {
    const int stride = (s > 0 && k == 0) ? 2 : 1;
    const int ho = conv_out(h, 3, stride, 1), wo = conv_out(w, 3, stride, 1);
    c.params += conv_params(cin, cout, 3) + 2 * cout + conv_params(cout, cout, 3) + 2 * cout;
    c.macs += conv_macs(cin, cout, 3, ho, wo) + conv_macs(cout, cout, 3, ho, wo);
    if (stride != 1 || cin != cout) {
      c.params += conv_params(cin, cout, 1) + 2 * cout;
      c.macs += conv_macs(cin, cout, 1, ho, wo);
    }
    cin = cout;
    h = ho;
    w = wo;
  }
  return c;
}

Counts stem_counts(const BackboneConfig& b, int in_channels, int& h, int& w) {
  const int k = b.stem_kernel;
  const int ho = conv_out(h, k, b.stem_stride, k / 2), wo = conv_out(w, k, b.stem_stride, k / 2);
  Counts c{conv_macs(in_channels, b.stage_channels[0], k, ho, wo),
           conv_params(in_channels, b.stage_channels[0], k) + 2 * static_cast<std::uint64_t>(b.stage_channels[0])};
  h = b.stem_pool ? conv_out(ho, 3, 2, 1) : ho;
  w = b.stem_pool ? conv_out(wo, 3, 2, 1) : wo;
  return c;
}

}  // namespace

std::uint64_t backbone_params(const BackboneConfig& b, int in_channels) {
  b.validate();
  int h = 224, w = 224;
  std::uint64_t p = stem_counts(b, in_channels, h, w).params;
  int cin = b.stage_channels[0];
  for (std::size_t s = 0; s < b.stage_channels.size(); ++s) p += stage_counts(b, static_cast<int>(s), cin, h, w).params;
  return p;
}

ComplexityReport count_complexity(const FusionConfig& cfg) {
  cfg.validate();
  ComplexityReport r;
  const auto& bb = cfg.backbone;
  const int M = static_cast<int>(cfg.modalities.size());
  const std::uint64_t I = kNumInstances;
  std::vector<int> cin(M), h(M), w(M);
  for (int m = 0; m < M; ++m) {
    const InputShape& in = cfg.input(cfg.modalities[m]);
    h[m] = in.height;
    w[m] = in.width;
    const Counts c = stem_counts(bb, in.channels, h[m], w[m]);
    r.blocks.push_back({to_string(cfg.modalities[m]) + ".stem", c.macs * I, c.params});
    cin[m] = bb.stage_channels[0];
  }
  for (std::size_t s = 0; s < bb.stage_channels.size() && M > 0; ++s) {
    for (int m = 0; m < M; ++m) {
      const Counts c = stage_counts(bb, static_cast<int>(s), cin[m], h[m], w[m]);
      r.blocks.push_back({to_string(cfg.modalities[m]) + ".stage" + std::to_string(s + 1), c.macs * I, c.params});
    }
    const std::uint64_t D = bb.stage_channels[s], T = cfg.n_tokens(), R = cfg.mlp_ratio;
    const std::uint64_t per_layer_macs = 4 * T * D * D + 2 * T * T * D + 2 * R * T * D * D;
    const std::uint64_t per_layer_params = 4 * (D * D + D) + 4 * D + (D * R * D + R * D) + (R * D * D + D);
    r.blocks.push_back({"fusion" + std::to_string(s + 1), per_layer_macs * cfg.transformer_layers,
                        per_layer_params * cfg.transformer_layers + T * D});
  }
  for (int m = 0; m < M; ++m) {
    const int in = cfg.final_pool == FinalPool::Flatten ? cin[m] * h[m] * w[m] : cin[m];
    r.blocks.push_back({to_string(cfg.modalities[m]) + ".proj",
                        static_cast<std::uint64_t>(in) * cfg.feature_dim * I, linear_params(in, cfg.feature_dim)});
  }
  ComplexityBlock head{"head", 0, 0};
  int width = (M > 0 ? cfg.feature_dim : 0) + (cfg.use_gps ? cfg.gps_features : 0);
  for (std::size_t i = 0; i <= cfg.head_hidden.size(); ++i) {
    const int out = i < cfg.head_hidden.size() ? cfg.head_hidden[i] : kNumBeams;
    head.macs += static_cast<std::uint64_t>(width) * out;
    head.params += linear_params(width, out);
    width = out;
  }
  r.blocks.push_back(head);
  for (const auto& b : r.blocks) {
    r.total_macs += b.macs;
    r.total_params += b.params;
  }
  return r;
}

std::string to_csv(const ComplexityReport& r) {
  std::ostringstream os;
  os << "block,macs,params\n";
  for (const auto& b : r.blocks) os << b.name << ',' << b.macs << ',' << b.params << '\n';
  os << "total," << r.total_macs << ',' << r.total_params << '\n';
  return os.str();
}

}  // namespace mmbeam::model
