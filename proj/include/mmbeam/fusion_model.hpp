#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmbeam/ad/nn.hpp"
#include "mmbeam/metrics.hpp"

namespace mmbeam::model {

enum class Modality { Image, Lidar, Radar };

std::string to_string(Modality m);
Modality parse_modality(const std::string& name);

/// Residual convolutional backbone shared by the five instances of a modality.
struct BackboneConfig {
  std::vector<int> stage_channels{16, 32, 64, 128};
  std::vector<int> blocks_per_stage{1, 1, 1, 1};
  int stem_kernel = 3;
  int stem_stride = 2;
  bool stem_pool = false;  // 3x3 stride-2 max pool after the stem
  std::string name = "desk";

  /// "desk", "resnet18" or "resnet34".
  static BackboneConfig preset(const std::string& name);
  void validate() const;
};

struct InputShape {
  int channels = 3, height = 64, width = 64;
  bool operator==(const InputShape&) const = default;
};

enum class FinalPool { Flatten, Average };

struct FusionConfig {
  std::vector<Modality> modalities{Modality::Image, Modality::Lidar, Modality::Radar};
  bool use_gps = true;
  int gps_features = 2;  // 2 angles, or 3 with the distance feature
  BackboneConfig backbone;
  InputShape image{3, 64, 96};
  InputShape lidar{3, 64, 64};
  InputShape radar{1, 64, 80};
  int transformer_layers = 1;  // per fusion stage
  int heads = 4;
  int mlp_ratio = 4;
  double dropout = 0.0;
  int feature_dim = 128;
  FinalPool final_pool = FinalPool::Flatten;
  std::vector<int> head_hidden{256, 128};

  bool has(Modality m) const;
  const InputShape& input(Modality m) const;
  int n_tokens() const { return static_cast<int>(modalities.size()) * kNumInstances; }
  void validate() const;
};

/// Model inputs for a batch of B samples. Each modality tensor is
/// [B, 5, C, H, W]; gps is [B, gps_features] with angles already divided by 180.
struct Batch {
  std::map<Modality, ad::Tensor<float>> inputs;
  ad::Tensor<float> gps;
  int size() const;
};

/// Convolutional stages with transformer fusion after every stage, summed
/// per-instance features, GPS concatenation and an MLP head over 64 beams.
class FusionModel {
 public:
  FusionModel(const FusionConfig& cfg, std::uint64_t seed);
  FusionModel(const FusionModel&) = delete;
  FusionModel& operator=(const FusionModel&) = delete;

  /// Logits [B, 64].
  ad::Var<float> forward(ad::Tape<float>& tape, const Batch& batch, bool training, Rng& rng) const;
  /// Inference convenience: logits as a [B, 64] tensor.
  ad::Tensor<float> predict_logits(const Batch& batch) const;

  const FusionConfig& config() const { return cfg_; }
  ad::ParameterStore<float>& store() { return store_; }
  const ad::ParameterStore<float>& store() const { return store_; }

 private:
  struct Block {
    ad::Conv2d<float> conv1, conv2, down;
    ad::BatchNorm2d<float> bn1, bn2, down_bn;
    bool has_down = false;
  };
  struct Backbone {
    ad::Conv2d<float> stem;
    ad::BatchNorm2d<float> stem_bn;
    std::vector<std::vector<Block>> stages;
    ad::Linear<float> proj;
  };
  struct FusionStage {
    ad::Parameter<float>* pos = nullptr;
    std::vector<ad::TransformerLayer<float>> layers;
  };

  ad::Var<float> run_block(ad::Tape<float>& tape, const Block& b, ad::Var<float> x, bool training) const;

  FusionConfig cfg_;
  mutable ad::ParameterStore<float> store_;
  std::vector<Backbone> backbones_;  // parallel to cfg_.modalities
  std::vector<FusionStage> fusion_;
  std::vector<ad::Linear<float>> head_;
};

/// Top-3 beam ids by logit, descending; ties toward the smaller beam id.
/// Scores are softmax probabilities.
BeamPrediction predict_top3(std::span<const float> logits);
BeamPrediction predict_top3(std::span<const double> logits);

/// 65 - b.
BeamLabel flip_label(BeamLabel b);

struct ComplexityBlock {
  std::string name;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
};

/// Per-block multiply-accumulate and parameter counts for one 5-instance sample.
struct ComplexityReport {
  std::vector<ComplexityBlock> blocks;
  std::uint64_t total_macs = 0;
  std::uint64_t total_params = 0;
};

/// Analytic counts: convolutions k^2 Cin Cout Hout Wout per instance, linear
/// layers in*out per row, attention 4TD^2 + 2T^2D plus the MLP per layer.
/// Normalisation layers, pooling and elementwise ops are not counted as MACs.
ComplexityReport count_complexity(const FusionConfig& cfg);

/// Parameters of a standard ResNet backbone without the classifier, analytic.
std::uint64_t backbone_params(const BackboneConfig& b, int in_channels);

/// Reference ResNet18 parameter count listed for comparison in reports.
inline constexpr std::uint64_t kReferenceResnet18Params = 11166912;
/// Reference parameter count of the GPS-only model.
inline constexpr std::uint64_t kReferenceGpsParams = 41920;

std::string to_csv(const ComplexityReport& r);

}  // namespace mmbeam::model
