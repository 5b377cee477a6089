#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mmbeam/ad/ops.hpp"

namespace mmbeam::ad {

/// Owns every learnable parameter and non-learnable buffer of a model under
/// a dotted name. Addresses are stable for the lifetime of the store;
/// iteration follows registration order.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add_parameter(const std::string& name, Tensor<T> init);
  Tensor<T>& add_buffer(const std::string& name, Tensor<T> init);

  const std::vector<std::string>& parameter_names() const noexcept { return param_order_; }
  const std::vector<std::string>& buffer_names() const noexcept { return buffer_order_; }
  Parameter<T>& parameter(const std::string& name);
  const Parameter<T>& parameter(const std::string& name) const;
  Tensor<T>& buffer(const std::string& name);
  const Tensor<T>& buffer(const std::string& name) const;

  std::size_t parameter_count() const;
  void zero_grad();

  /// Parameters followed by buffers, in registration order.
  std::vector<std::pair<std::string, const Tensor<T>*>> state() const;
  /// Copies matching entries from `entries`; every parameter and buffer must
  /// be present with an identical shape.
  void load_state(const std::map<std::string, Tensor<T>>& entries);

 private:
  std::map<std::string, std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::unique_ptr<Tensor<T>>> buffers_;
  std::vector<std::string> param_order_;
  std::vector<std::string> buffer_order_;
};

/// Kaiming-uniform style initialiser shared by the layers below.
template <typename T>
Tensor<T> uniform_init(Shape shape, int fan_in, Rng& rng);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, int in_features, int out_features, Rng& rng,
         bool bias = true);
  /// Accepts [M, in] or [..., in]; leading axes are flattened and restored.
  Var<T> operator()(Tape<T>& tape, Var<T> x) const;
  int in_features() const noexcept { return in_; }
  int out_features() const noexcept { return out_; }

 private:
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
  int in_ = 0, out_ = 0;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore<T>& store, const std::string& name, int in_channels, int out_channels, int kernel, int stride,
         int pad, Rng& rng, bool bias = false);
  Var<T> operator()(Tape<T>& tape, Var<T> x) const;

 private:
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
  int stride_ = 1, pad_ = 0;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParameterStore<T>& store, const std::string& name, int channels);
  Var<T> operator()(Tape<T>& tape, Var<T> x, bool training) const;

 private:
  Parameter<T>* gamma_ = nullptr;
  Parameter<T>* beta_ = nullptr;
  Tensor<T>* running_mean_ = nullptr;
  Tensor<T>* running_var_ = nullptr;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, int dim);
  Var<T> operator()(Tape<T>& tape, Var<T> x) const;

 private:
  Parameter<T>* gamma_ = nullptr;
  Parameter<T>* beta_ = nullptr;
};

struct AttentionConfig {
  int model_dim = 64;
  int n_heads = 4;
  double dropout = 0.0;

  int head_dim() const { return model_dim / n_heads; }
  void validate() const;
};

/// Multi-head scaled dot-product attention over [B,T,D] token sets.
template <typename T>
class MultiheadAttention {
 public:
  MultiheadAttention() = default;
  MultiheadAttention(ParameterStore<T>& store, const std::string& name, AttentionConfig cfg, Rng& rng);
  Var<T> operator()(Tape<T>& tape, Var<T> q_in, Var<T> k_in, Var<T> v_in, bool training, Rng& rng) const;
  const AttentionConfig& config() const noexcept { return cfg_; }

  /// Linear maps used for Q, K, V and the output, exposed for tests.
  Linear<T>& query() { return wq_; }
  Linear<T>& key() { return wk_; }
  Linear<T>& value() { return wv_; }
  Linear<T>& output() { return wo_; }

 private:
  AttentionConfig cfg_;
  Linear<T> wq_, wk_, wv_, wo_;
};

/// Pre-norm encoder layer: x + MHA(LN(x)), then h + MLP(LN(h)).
template <typename T>
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParameterStore<T>& store, const std::string& name, AttentionConfig cfg, int mlp_ratio, Rng& rng);
  Var<T> operator()(Tape<T>& tape, Var<T> x, bool training, Rng& rng) const;

 private:
  AttentionConfig cfg_;
  LayerNorm<T> ln1_, ln2_;
  MultiheadAttention<T> attn_;
  Linear<T> fc1_, fc2_;
};

}  // namespace mmbeam::ad
