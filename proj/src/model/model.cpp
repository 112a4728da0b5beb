#include "imn/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "imn/tensor/random.hpp"

namespace imn {
namespace {

template <typename T>
Tensor<T> uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
ConvBnBlock<T> make_block(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw, Rng& rng) {
  ConvBnBlock<T> block;
  block.kernel = uniform_init<T>(Shape{out, in, kh, kw}, in * kh * kw, rng);
  block.gamma = Tensor<T>(Shape{out}, T{1});
  block.beta = Tensor<T>(Shape{out}, T{0});
  block.norm = BatchNormState<T>(out);
  return block;
}

template <typename T>
Var<T> ensure_finite(Var<T> v, const char* layer) {
  if (!v.value().all_finite()) {
    throw NumericError(std::string("non-finite values produced by layer '") + layer + "'");
  }
  return v;
}

// Records a tensor on the tape: trainable binding for mutable models, constant
// for const (eval-only) models.
template <typename Self, typename T>
Var<T> bind(Tape<T>& tape, Tensor<T>& t) {
  if constexpr (std::is_const_v<Self>) {
    return tape.constant(t);
  } else {
    return tape.parameter(t);
  }
}

template <typename Self, typename T>
Var<T> bind(Tape<T>& tape, const Tensor<T>& t) {
  return tape.constant(t);
}

template <typename Self, typename T, typename Block>
Var<T> conv_bn_gelu(Tape<T>& tape, Var<T> x, Block& block, Padding2d padding, BnMode mode) {
  auto h = conv2d(tape, x, bind<Self>(tape, block.kernel), std::optional<Var<T>>{}, padding);
  auto gamma = bind<Self>(tape, block.gamma);
  auto beta = bind<Self>(tape, block.beta);
  if constexpr (std::is_const_v<Self>) {
    h = batchnorm2d_eval(tape, h, gamma, beta, block.norm);
  } else {
    h = batchnorm2d(tape, h, gamma, beta, block.norm, mode);
  }
  return gelu(tape, h);
}

}  // namespace

template <typename T>
T ImnOutput<T>::positive_probability() const {
  if (formulation == Formulation::binary) return probabilities[0];
  return probabilities.size() > 1 ? probabilities[1] : probabilities[0];
}

template <typename T>
BasicImnModel<T>::BasicImnModel(ImnConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& ch = config_.encoder_channels;
  const std::size_t ekh = config_.encoder_kernel_h, ekw = config_.encoder_kernel_w;
  const std::size_t dkh = config_.decoder_kernel_h, dkw = config_.decoder_kernel_w;
  const std::size_t k = config_.num_outputs;
  encoder_[0] = make_block<T>(1, ch[0], ekh, ekw, rng);
  encoder_[1] = make_block<T>(ch[0], ch[1], ekh, ekw, rng);
  encoder_[2] = make_block<T>(ch[1], ch[2], ekh, ekw, rng);
  if (config_.variant == Variant::transnet) {
    decoder_[0] = make_block<T>(ch[2], ch[1], dkh, dkw, rng);
    decoder_[1] = make_block<T>(ch[1], ch[0], dkh, dkw, rng);
    projection_kernel_ = uniform_init<T>(Shape{k, ch[0], dkh, dkw}, ch[0] * dkh * dkw, rng);
    projection_bias_ = uniform_init<T>(Shape{k}, ch[0] * dkh * dkw, rng);
  } else {
    projection_kernel_ = uniform_init<T>(Shape{k, ch[2], 1, 1}, ch[2], rng);
    projection_bias_ = uniform_init<T>(Shape{k}, ch[2], rng);
  }
  bias_weight_ = uniform_init<T>(Shape{ch[2], k}, ch[2], rng);
  bias_bias_ = uniform_init<T>(Shape{k}, ch[2], rng);
}

template <typename T>
template <typename Self>
Var<T> BasicImnModel<T>::run_encode(Self& self, Tape<T>& tape, Var<T> image, BnMode mode) {
  const auto& cfg = self.config_;
  const auto& shape = image.shape();
  if (shape.size() != 4 || shape[1] != 1 || shape[2] != cfg.num_leads || shape[3] != cfg.signal_length) {
    throw ShapeError("encode: expected input (N, 1, " + std::to_string(cfg.num_leads) + ", " +
                     std::to_string(cfg.signal_length) + "), got " + to_string(shape));
  }
  const auto pad = same_padding(cfg.encoder_kernel_h, cfg.encoder_kernel_w);
  auto h = ensure_finite(conv_bn_gelu<Self>(tape, image, self.encoder_[0], pad, mode), "encoder.block1");
  h = conv_bn_gelu<Self>(tape, h, self.encoder_[1], pad, mode);
  h = ensure_finite(maxpool2d(tape, h, cfg.pool_factor), "encoder.block2");
  h = conv_bn_gelu<Self>(tape, h, self.encoder_[2], pad, mode);
  return ensure_finite(maxpool2d(tape, h, cfg.pool_factor), "encoder.block3");
}

template <typename T>
template <typename Self>
Var<T> BasicImnModel<T>::run_decode(Self& self, Tape<T>& tape, Var<T> latent, BnMode mode) {
  const auto& cfg = self.config_;
  if (cfg.variant == Variant::direct) {
    auto w = conv2d(tape, latent, bind<Self>(tape, self.projection_kernel_),
                    std::optional<Var<T>>(bind<Self>(tape, self.projection_bias_)), Padding2d{});
    w = upsample_nearest(tape, w, cfg.pool_factor * cfg.pool_factor);
    return ensure_finite(w, "direct.projection");
  }
  const auto pad = same_padding(cfg.decoder_kernel_h, cfg.decoder_kernel_w);
  auto h = conv_bn_gelu<Self>(tape, latent, self.decoder_[0], pad, mode);
  h = ensure_finite(upsample_nearest(tape, h, cfg.pool_factor), "decoder.stage1");
  h = conv_bn_gelu<Self>(tape, h, self.decoder_[1], pad, mode);
  h = ensure_finite(upsample_nearest(tape, h, cfg.pool_factor), "decoder.stage2");
  auto w = conv2d(tape, h, bind<Self>(tape, self.projection_kernel_),
                  std::optional<Var<T>>(bind<Self>(tape, self.projection_bias_)), pad);
  return ensure_finite(w, "decoder.projection");
}

template <typename T>
template <typename Self>
Var<T> BasicImnModel<T>::run_bias(Self& self, Tape<T>& tape, Var<T> latent, BnMode) {
  auto pooled = global_avg_pool(tape, latent);
  auto b = linear(tape, pooled, bind<Self>(tape, self.bias_weight_), bind<Self>(tape, self.bias_bias_));
  return ensure_finite(b, "bias_generator");
}

template <typename T>
template <typename Self>
ImnGraph<T> BasicImnModel<T>::run_forward(Self& self, Tape<T>& tape, Var<T> signal, BnMode mode) {
  const auto& cfg = self.config_;
  const auto& shape = signal.shape();
  if (shape.size() != 3 || shape[1] != cfg.num_leads || shape[2] != cfg.signal_length) {
    throw ShapeError("forward: expected signal (N, " + std::to_string(cfg.num_leads) + ", " +
                     std::to_string(cfg.signal_length) + "), got " + to_string(shape));
  }
  ensure_finite(signal, "input");
  auto image = reshape(tape, signal, Shape{shape[0], 1, shape[1], shape[2]});
  ImnGraph<T> graph;
  graph.latent = run_encode(self, tape, image, mode);
  graph.weights = run_decode(self, tape, graph.latent, mode);
  graph.bias = run_bias(self, tape, graph.latent, mode);
  graph.logits = ensure_finite(readout(tape, graph.weights, signal, graph.bias), "readout");
  return graph;
}

template <typename T>
ImnGraph<T> BasicImnModel<T>::forward(Tape<T>& tape, Var<T> signal, BnMode mode) {
  return run_forward(*this, tape, signal, mode);
}

template <typename T>
ImnGraph<T> BasicImnModel<T>::forward(Tape<T>& tape, Var<T> signal) const {
  return run_forward(*this, tape, signal, BnMode::eval);
}

template <typename T>
Var<T> BasicImnModel<T>::encode(Tape<T>& tape, Var<T> image, BnMode mode) {
  return run_encode(*this, tape, image, mode);
}

template <typename T>
Var<T> BasicImnModel<T>::encode(Tape<T>& tape, Var<T> image) const {
  return run_encode(*this, tape, image, BnMode::eval);
}

template <typename T>
Var<T> BasicImnModel<T>::decode_weights(Tape<T>& tape, Var<T> latent, BnMode mode) {
  return run_decode(*this, tape, latent, mode);
}

template <typename T>
Var<T> BasicImnModel<T>::decode_weights(Tape<T>& tape, Var<T> latent) const {
  return run_decode(*this, tape, latent, BnMode::eval);
}

template <typename T>
Var<T> BasicImnModel<T>::generate_bias(Tape<T>& tape, Var<T> latent, BnMode mode) {
  return run_bias(*this, tape, latent, mode);
}

template <typename T>
Var<T> BasicImnModel<T>::generate_bias(Tape<T>& tape, Var<T> latent) const {
  return run_bias(*this, tape, latent, BnMode::eval);
}

template <typename T>
ImnOutput<T> BasicImnModel<T>::predict(const Tensor<T>& signal) const {
  const Tensor<T>* one[] = {&signal};
  return std::move(predict_batch(one, 1).front());
}

template <typename T>
std::vector<ImnOutput<T>> BasicImnModel<T>::predict_batch(std::span<const Tensor<T>* const> signals,
                                                          std::size_t batch_size) const {
  const std::size_t c = config_.num_leads, l = config_.signal_length, k = config_.num_outputs;
  const std::size_t plane = c * l;
  batch_size = std::max<std::size_t>(batch_size, 1);
  std::vector<ImnOutput<T>> outputs;
  outputs.reserve(signals.size());
  for (std::size_t start = 0; start < signals.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, signals.size() - start);
    Tensor<T> batch(Shape{n, c, l});
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = *signals[start + i];
      if (s.shape() != Shape{c, l}) {
        throw ShapeError("predict: expected signal (" + std::to_string(c) + ", " + std::to_string(l) + "), got " +
                         to_string(s.shape()));
      }
      std::copy(s.data().begin(), s.data().end(), batch.data().begin() + static_cast<std::ptrdiff_t>(i * plane));
    }
    Tape<T> tape;
    auto graph = forward(tape, tape.constant(std::move(batch)));
    const auto& w = graph.weights.value();
    const auto& b = graph.bias.value();
    const auto& z = graph.logits.value();
    for (std::size_t i = 0; i < n; ++i) {
      ImnOutput<T> out;
      out.formulation = config_.formulation();
      out.weights = Tensor<T>(Shape{k, c, l});
      std::copy_n(w.data().begin() + static_cast<std::ptrdiff_t>(i * k * plane), k * plane, out.weights.data().begin());
      out.bias = Tensor<T>(Shape{k});
      out.logits = Tensor<T>(Shape{k});
      std::copy_n(b.data().begin() + static_cast<std::ptrdiff_t>(i * k), k, out.bias.data().begin());
      std::copy_n(z.data().begin() + static_cast<std::ptrdiff_t>(i * k), k, out.logits.data().begin());
      if (k == 1) {
        out.probabilities = Tensor<T>(Shape{1}, stable_sigmoid(out.logits[0]));
      } else {
        out.probabilities = Tensor<T>(Shape{k});
        const T top = *std::max_element(out.logits.data().begin(), out.logits.data().end());
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(out.logits[j] - top));
        for (std::size_t j = 0; j < k; ++j) {
          out.probabilities[j] = static_cast<T>(std::exp(static_cast<double>(out.logits[j] - top)) / total);
        }
      }
      outputs.push_back(std::move(out));
    }
  }
  return outputs;
}

template <typename T>
void BasicImnModel<T>::visit_tensors(const std::function<void(const std::string&, Tensor<T>&, bool)>& fn) {
  const char* enc[] = {"encoder.block1", "encoder.block2", "encoder.block3"};
  const char* dec[] = {"decoder.stage1", "decoder.stage2"};
  auto block = [&](const std::string& name, ConvBnBlock<T>& b) {
    fn(name + ".conv.weight", b.kernel, true);
    fn(name + ".bn.gamma", b.gamma, true);
    fn(name + ".bn.beta", b.beta, true);
    fn(name + ".bn.running_mean", b.norm.running_mean, false);
    fn(name + ".bn.running_var", b.norm.running_var, false);
  };
  for (std::size_t i = 0; i < 3; ++i) block(enc[i], encoder_[i]);
  if (config_.variant == Variant::transnet) {
    for (std::size_t i = 0; i < 2; ++i) block(dec[i], decoder_[i]);
    fn("decoder.projection.weight", projection_kernel_, true);
    fn("decoder.projection.bias", projection_bias_, true);
  } else {
    fn("direct.projection.weight", projection_kernel_, true);
    fn("direct.projection.bias", projection_bias_, true);
  }
  fn("bias_generator.linear.weight", bias_weight_, true);
  fn("bias_generator.linear.bias", bias_bias_, true);
}

template <typename T>
void BasicImnModel<T>::visit_tensors(
    const std::function<void(const std::string&, const Tensor<T>&, bool)>& fn) const {
  const_cast<BasicImnModel*>(this)->visit_tensors(
      [&](const std::string& name, Tensor<T>& t, bool trainable) { fn(name, t, trainable); });
}

template <typename T>
void BasicImnModel<T>::visit_norms(const std::function<void(const std::string&, BatchNormState<T>&)>& fn) {
  fn("encoder.block1.bn", encoder_[0].norm);
  fn("encoder.block2.bn", encoder_[1].norm);
  fn("encoder.block3.bn", encoder_[2].norm);
  if (config_.variant == Variant::transnet) {
    fn("decoder.stage1.bn", decoder_[0].norm);
    fn("decoder.stage2.bn", decoder_[1].norm);
  }
}

template <typename T>
void BasicImnModel<T>::visit_norms(
    const std::function<void(const std::string&, const BatchNormState<T>&)>& fn) const {
  const_cast<BasicImnModel*>(this)->visit_norms(
      [&](const std::string& name, BatchNormState<T>& s) { fn(name, s); });
}

template <typename T>
std::vector<ParamRef<T>> BasicImnModel<T>::parameters() {
  std::vector<ParamRef<T>> params;
  visit_tensors([&](const std::string& name, Tensor<T>& t, bool trainable) {
    if (trainable) params.push_back({name, &t});
  });
  return params;
}

template <typename T>
void BasicImnModel<T>::set_requires_grad(bool flag) {
  for (auto& p : parameters()) p.tensor->set_requires_grad(flag);
}

template <typename T>
void BasicImnModel<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

template struct ImnOutput<float>;
template struct ImnOutput<double>;
template class BasicImnModel<float>;
template class BasicImnModel<double>;

}  // namespace imn
