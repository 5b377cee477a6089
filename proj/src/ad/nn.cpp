#include "mmbeam/ad/nn.hpp"

#include <cmath>

namespace mmbeam::ad {

template <typename T>
Parameter<T>& ParameterStore<T>::add_parameter(const std::string& name, Tensor<T> init) {
  if (params_.count(name) || buffers_.count(name)) throw ArgumentError("duplicate parameter name: " + name);
  auto& slot = params_[name];
  slot = std::make_unique<Parameter<T>>(std::move(init));
  param_order_.push_back(name);
  return *slot;
}

template <typename T>
Tensor<T>& ParameterStore<T>::add_buffer(const std::string& name, Tensor<T> init) {
  if (params_.count(name) || buffers_.count(name)) throw ArgumentError("duplicate buffer name: " + name);
  auto& slot = buffers_[name];
  slot = std::make_unique<Tensor<T>>(std::move(init));
  buffer_order_.push_back(name);
  return *slot;
}

template <typename T>
Parameter<T>& ParameterStore<T>::parameter(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("unknown parameter: " + name);
  return *it->second;
}

template <typename T>
const Parameter<T>& ParameterStore<T>::parameter(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("unknown parameter: " + name);
  return *it->second;
}

template <typename T>
Tensor<T>& ParameterStore<T>::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ArgumentError("unknown buffer: " + name);
  return *it->second;
}

template <typename T>
const Tensor<T>& ParameterStore<T>::buffer(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ArgumentError("unknown buffer: " + name);
  return *it->second;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p->value.size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& [name, p] : params_) p->zero_grad();
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> ParameterStore<T>::state() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (const auto& n : param_order_) out.emplace_back(n, &params_.at(n)->value);
  for (const auto& n : buffer_order_) out.emplace_back(n, buffers_.at(n).get());
  return out;
}

template <typename T>
void ParameterStore<T>::load_state(const std::map<std::string, Tensor<T>>& entries) {
  auto take = [&](const std::string& name, Tensor<T>& dst) {
    auto it = entries.find(name);
    if (it == entries.end()) throw DataError("state is missing entry '" + name + "'");
    if (it->second.shape() != dst.shape())
      throw DataError("state entry '" + name + "' has shape " + to_string(it->second.shape()) + ", expected " +
                      to_string(dst.shape()));
    dst = it->second;
  };
  for (const auto& n : param_order_) take(n, params_.at(n)->value);
  for (const auto& n : buffer_order_) take(n, *buffers_.at(n));
}

template <typename T>
Tensor<T> uniform_init(Shape shape, int fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = fan_in > 0 ? std::sqrt(6.0 / fan_in) / std::sqrt(2.0) : 0.0;
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.vec()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
Linear<T>::Linear(ParameterStore<T>& store, const std::string& name, int in_features, int out_features, Rng& rng,
                  bool bias)
    : in_(in_features), out_(out_features) {
  require(in_features > 0 && out_features > 0, "Linear: feature counts must be positive");
  weight_ = &store.add_parameter(name + ".weight", uniform_init<T>({out_features, in_features}, in_features, rng));
  if (bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<T> b({out_features});
    for (auto& v : b.vec()) v = static_cast<T>(u(rng));
    bias_ = &store.add_parameter(name + ".bias", std::move(b));
  }
}

template <typename T>
Var<T> Linear<T>::operator()(Tape<T>& tape, Var<T> x) const {
  const Shape in_shape = x.shape();
  if (in_shape.empty() || in_shape.back() != in_)
    throw ArgumentError("Linear: expected trailing dimension " + std::to_string(in_) + ", got " + to_string(in_shape));
  Var<T> flat = x;
  if (in_shape.size() != 2) flat = reshape(x, {static_cast<int>(x.value().size() / in_), in_});
  Var<T> y = linear(flat, tape.parameter(*weight_), bias_ ? tape.parameter(*bias_) : Var<T>{});
  if (in_shape.size() != 2) {
    Shape out_shape = in_shape;
    out_shape.back() = out_;
    y = reshape(y, out_shape);
  }
  return y;
}

template <typename T>
Conv2d<T>::Conv2d(ParameterStore<T>& store, const std::string& name, int in_channels, int out_channels, int kernel,
                  int stride, int pad, Rng& rng, bool bias)
    : stride_(stride), pad_(pad) {
  const int fan_in = in_channels * kernel * kernel;
  weight_ = &store.add_parameter(name + ".weight",
                                 uniform_init<T>({out_channels, in_channels, kernel, kernel}, fan_in, rng));
  if (bias) bias_ = &store.add_parameter(name + ".bias", Tensor<T>({out_channels}));
}

template <typename T>
Var<T> Conv2d<T>::operator()(Tape<T>& tape, Var<T> x) const {
  return conv2d(x, tape.parameter(*weight_), bias_ ? tape.parameter(*bias_) : Var<T>{}, stride_, pad_);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(ParameterStore<T>& store, const std::string& name, int channels) {
  gamma_ = &store.add_parameter(name + ".weight", Tensor<T>({channels}, T(1)));
  beta_ = &store.add_parameter(name + ".bias", Tensor<T>({channels}));
  running_mean_ = &store.add_buffer(name + ".running_mean", Tensor<T>({channels}));
  running_var_ = &store.add_buffer(name + ".running_var", Tensor<T>({channels}, T(1)));
}

template <typename T>
Var<T> BatchNorm2d<T>::operator()(Tape<T>& tape, Var<T> x, bool training) const {
  return batchnorm2d(x, tape.parameter(*gamma_), tape.parameter(*beta_), *running_mean_, *running_var_, training);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterStore<T>& store, const std::string& name, int dim) {
  gamma_ = &store.add_parameter(name + ".weight", Tensor<T>({dim}, T(1)));
  beta_ = &store.add_parameter(name + ".bias", Tensor<T>({dim}));
}

template <typename T>
Var<T> LayerNorm<T>::operator()(Tape<T>& tape, Var<T> x) const {
  return layernorm(x, tape.parameter(*gamma_), tape.parameter(*beta_));
}

void AttentionConfig::validate() const {
  require(model_dim > 0 && n_heads > 0, "attention: model_dim and n_heads must be positive");
  require(model_dim % n_heads == 0, "attention: model_dim must be divisible by n_heads");
  require(dropout >= 0.0 && dropout < 1.0, "attention: dropout must be in [0,1)");
}

template <typename T>
MultiheadAttention<T>::MultiheadAttention(ParameterStore<T>& store, const std::string& name, AttentionConfig cfg,
                                          Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.model_dim;
  wq_ = Linear<T>(store, name + ".q", d, d, rng);
  wk_ = Linear<T>(store, name + ".k", d, d, rng);
  wv_ = Linear<T>(store, name + ".v", d, d, rng);
  wo_ = Linear<T>(store, name + ".out", d, d, rng);
}

template <typename T>
Var<T> MultiheadAttention<T>::operator()(Tape<T>& tape, Var<T> q_in, Var<T> k_in, Var<T> v_in, bool training,
                                         Rng& rng) const {
  const int d = cfg_.model_dim, h = cfg_.n_heads, dh = cfg_.head_dim();
  for (const auto* v : {&q_in, &k_in, &v_in}) {
    if (v->value().rank() != 3 || v->dim(2) != d)
      throw ArgumentError("attention: expected [B,T," + std::to_string(d) + "] inputs, got " + to_string(v->shape()));
  }
  const int B = q_in.dim(0), Tq = q_in.dim(1), Tk = k_in.dim(1);
  if (k_in.dim(0) != B || v_in.dim(0) != B || v_in.dim(1) != Tk) throw ArgumentError("attention: batch/length mismatch");
  auto heads = [&](Var<T> x, int len) { return permute(reshape(x, {B, len, h, dh}), {0, 2, 1, 3}); };
  Var<T> q = heads(wq_(tape, q_in), Tq);
  Var<T> k = heads(wk_(tape, k_in), Tk);
  Var<T> v = heads(wv_(tape, v_in), Tk);
  Var<T> scores = scale(matmul(q, k, true), T(1) / std::sqrt(static_cast<T>(dh)));
  Var<T> weights = dropout(softmax(scores, -1), static_cast<T>(cfg_.dropout), training, rng);
  Var<T> ctx = permute(matmul(weights, v), {0, 2, 1, 3});
  return wo_(tape, reshape(ctx, {B, Tq, d}));
}

template <typename T>
TransformerLayer<T>::TransformerLayer(ParameterStore<T>& store, const std::string& name, AttentionConfig cfg,
                                      int mlp_ratio, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.model_dim;
  ln1_ = LayerNorm<T>(store, name + ".ln1", d);
  attn_ = MultiheadAttention<T>(store, name + ".attn", cfg_, rng);
  ln2_ = LayerNorm<T>(store, name + ".ln2", d);
  fc1_ = Linear<T>(store, name + ".mlp.fc1", d, d * mlp_ratio, rng);
  fc2_ = Linear<T>(store, name + ".mlp.fc2", d * mlp_ratio, d, rng);
}

template <typename T>
Var<T> TransformerLayer<T>::operator()(Tape<T>& tape, Var<T> x, bool training, Rng& rng) const {
  const T rate = static_cast<T>(cfg_.dropout);
  Var<T> n1 = ln1_(tape, x);
  Var<T> hdn = add(x, dropout(attn_(tape, n1, n1, n1, training, rng), rate, training, rng));
  Var<T> n2 = ln2_(tape, hdn);
  Var<T> m = fc2_(tape, relu(fc1_(tape, n2)));
  return add(hdn, dropout(m, rate, training, rng));
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template Tensor<float> uniform_init<float>(Shape, int, Rng&);
template Tensor<double> uniform_init<double>(Shape, int, Rng&);
template class Linear<float>;
template class Linear<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class MultiheadAttention<float>;
template class MultiheadAttention<double>;
template class TransformerLayer<float>;
template class TransformerLayer<double>;

}  // namespace mmbeam::ad
