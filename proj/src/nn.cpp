#include "pulmo/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace pulmo::nn {

namespace {

constexpr char kMagic[8] = {'P', 'C', 'D', 'A', 'E', 'M', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

// Copies the first `count` columns of every per-sample block from a layout
// with `src_stride` columns per sample into one with `dst_stride`.
mat restride(const mat& src, Eigen::Index src_stride, Eigen::Index dst_stride, Eigen::Index count,
             Eigen::Index batch) {
  if (src_stride == dst_stride && count == src_stride) return src;
  mat dst = mat::Zero(src.rows(), dst_stride * batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    dst.middleCols(b * dst_stride, count) = src.middleCols(b * src_stride, count);
  return dst;
}

void apply_activation(mat& y, Activation act) {
  if (act == Activation::relu) y = y.cwiseMax(0.0);
}

// y has layout out_channels x (out_width * batch).
mat layer_forward(const Layer& layer, const mat& a, Eigen::Index batch) {
  const LayerSpec& s = layer.spec;
  const Eigen::Index in_w = s.in_width;
  const Eigen::Index out_w = s.out_width();
  mat y;
  if (s.kind == LayerKind::deconv1d) {
    const mat apad = restride(a, in_w, out_w, in_w, batch);
    const Eigen::Index total = out_w * batch;
    y = mat::Zero(s.out_channels, total);
    for (int t = 0; t < s.kernel_len; ++t)
      y.rightCols(total - t).noalias() += layer.tap(t) * apad.leftCols(total - t);
  } else {
    const Eigen::Index total = in_w * batch;
    mat ypad = mat::Zero(s.out_channels, total);
    for (int t = 0; t < s.kernel_len; ++t)
      ypad.leftCols(total - t).noalias() += layer.tap(t) * a.rightCols(total - t);
    y = restride(ypad, in_w, out_w, out_w, batch);
  }
  y.colwise() += layer.bias();
  apply_activation(y, s.activation);
  return y;
}

// Given the output gradient `dy` (overwritten with the pre-activation
// gradient), accumulates parameter gradients into `grad` and returns the
// gradient with respect to the layer input when `need_input` is set.
mat layer_backward(const Layer& layer, const mat& a, const mat& y, mat& dy, Eigen::Index batch,
                   Eigen::Ref<vec> grad, bool need_input) {
  const LayerSpec& s = layer.spec;
  const Eigen::Index in_w = s.in_width;
  const Eigen::Index out_w = s.out_width();
  if (s.activation == Activation::relu) dy = (y.array() > 0.0).select(dy, 0.0);

  const Eigen::Index tap_size = Eigen::Index(s.in_channels) * s.out_channels;
  grad.segment(s.num_weights(), s.out_channels) += dy.rowwise().sum();
  mat da;
  if (s.kind == LayerKind::deconv1d) {
    const mat apad = restride(a, in_w, out_w, in_w, batch);
    const Eigen::Index total = out_w * batch;
    mat dapad;
    if (need_input) dapad = mat::Zero(s.in_channels, total);
    for (int t = 0; t < s.kernel_len; ++t) {
      Eigen::Map<mat> gw(grad.data() + t * tap_size, s.out_channels, s.in_channels);
      gw.noalias() += dy.rightCols(total - t) * apad.leftCols(total - t).transpose();
      if (need_input)
        dapad.leftCols(total - t).noalias() += layer.tap(t).transpose() * dy.rightCols(total - t);
    }
    if (need_input) da = restride(dapad, out_w, in_w, in_w, batch);
  } else {
    const mat gpad = restride(dy, out_w, in_w, out_w, batch);
    const Eigen::Index total = in_w * batch;
    if (need_input) da = mat::Zero(s.in_channels, total);
    for (int t = 0; t < s.kernel_len; ++t) {
      Eigen::Map<mat> gw(grad.data() + t * tap_size, s.out_channels, s.in_channels);
      gw.noalias() += gpad.leftCols(total - t) * a.rightCols(total - t).transpose();
      if (need_input)
        da.rightCols(total - t).noalias() += layer.tap(t).transpose() * gpad.leftCols(total - t);
    }
  }
  return da;
}

// Layer-major view of samples: rows of x become one (channels x width*B) block.
mat to_activation(const Eigen::Ref<const mat>& x, const LayerSpec& first) {
  mat xt = x.transpose();
  return Eigen::Map<const mat>(xt.data(), first.in_channels, Eigen::Index(first.in_width) * x.rows());
}

mat from_activation(const mat& a, Eigen::Index batch) {
  const Eigen::Index per_sample = a.size() / batch;
  if (a.cols() == batch) return a.transpose();  // dense: channels x batch
  // 1 channel x (width * batch)
  return Eigen::Map<const mat>(a.data(), per_sample, batch).transpose();
}

mat latent_from_activation(const mat& a, const LayerSpec& last, Eigen::Index batch) {
  const Eigen::Index c_count = last.out_channels;
  const Eigen::Index w = last.out_width();
  mat latent(batch, c_count * w);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index c = 0; c < c_count; ++c)
      latent.row(b).segment(c * w, w) = a.row(c).segment(b * w, w);
  return latent;
}

mat activation_from_latent(const Eigen::Ref<const mat>& latent, const LayerSpec& first_decoder) {
  const Eigen::Index batch = latent.rows();
  const Eigen::Index c_count = first_decoder.in_channels;
  const Eigen::Index w = first_decoder.in_width;
  mat a(c_count, w * batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index c = 0; c < c_count; ++c)
      a.row(c).segment(b * w, w) = latent.row(b).segment(c * w, w);
  return a;
}

std::vector<const Layer*> chain(const DaeModel& m) {
  std::vector<const Layer*> layers;
  for (const auto& l : m.encoder) layers.push_back(&l);
  for (const auto& l : m.decoder) layers.push_back(&l);
  return layers;
}

void init_layer(Layer& layer, std::mt19937_64& rng) {
  const LayerSpec& s = layer.spec;
  layer.params = vec::Zero(s.num_params());
  const double fan_in = double(s.in_channels) * s.kernel_len;
  const double fan_out = double(s.out_channels) * s.kernel_len;
  const double limit = s.activation == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                        : std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < s.num_weights(); ++i) layer.params[i] = dist(rng);
}

struct Trace {
  std::vector<mat> acts;  // acts[0] = input, acts[k + 1] = output of layer k
};

Trace run(const std::vector<const Layer*>& layers, mat input, Eigen::Index batch) {
  Trace tr;
  tr.acts.reserve(layers.size() + 1);
  tr.acts.push_back(std::move(input));
  for (const Layer* l : layers) tr.acts.push_back(layer_forward(*l, tr.acts.back(), batch));
  return tr;
}

// Gradient of mean((xhat - x)^2); returns the loss.
double backprop(const std::vector<const Layer*>& layers, const Trace& tr, const mat& target_act,
                Eigen::Index batch, std::vector<vec>& grads) {
  const mat& out = tr.acts.back();
  const double denom = double(out.size());
  mat diff = out - target_act;
  const double loss = diff.squaredNorm() / denom;
  mat d = diff * (2.0 / denom);
  for (std::size_t k = layers.size(); k-- > 0;) {
    grads[k].setZero(layers[k]->spec.num_params());
    d = layer_backward(*layers[k], tr.acts[k], tr.acts[k + 1], d, batch, grads[k], k > 0);
  }
  return loss;
}

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian host");
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError("truncated model checkpoint");
  return v;
}

}  // namespace

int LayerSpec::out_width() const {
  switch (kind) {
    case LayerKind::dense:
      return 1;
    case LayerKind::conv1d:
      return in_width - kernel_len + 1;
    case LayerKind::deconv1d:
      return in_width + kernel_len - 1;
  }
  return 0;
}

LayerSpec LayerSpec::dense(int in, int out, Activation act) {
  return {LayerKind::dense, in, out, 1, 1, act, 1};
}
LayerSpec LayerSpec::conv1d(int in_ch, int out_ch, int kernel, int in_width, Activation act) {
  return {LayerKind::conv1d, in_ch, out_ch, kernel, in_width, act, 1};
}
LayerSpec LayerSpec::deconv1d(int in_ch, int out_ch, int kernel, int in_width, Activation act) {
  return {LayerKind::deconv1d, in_ch, out_ch, kernel, in_width, act, 1};
}

void validate(const LayerSpec& s) {
  if (s.stride != 1) throw InvalidArgument("layer stride must be 1");
  if (s.kernel_len < 1 || s.in_channels < 1 || s.out_channels < 1 || s.in_width < 1)
    throw InvalidArgument("layer sizes must be positive");
  if (s.kind == LayerKind::dense && (s.kernel_len != 1 || s.in_width != 1))
    throw InvalidArgument("dense layers have kernel 1 and width 1");
  if (s.out_width() < 1) throw InvalidArgument("convolution kernel longer than its input");
}

Eigen::Index DaeModel::latent_size() const {
  return encoder.empty() ? input_dim : encoder.back().spec.out_size();
}

Eigen::Index DaeModel::num_params() const {
  Eigen::Index n = 0;
  for (const Layer* l : chain(*this)) n += l->spec.num_params();
  return n;
}

void validate(const DaeModel& m) {
  if (m.input_dim < 1) throw InvalidArgument("model input_dim must be positive");
  if (m.encoder.empty() || m.decoder.empty()) throw InvalidArgument("model needs encoder and decoder layers");
  Eigen::Index size = m.input_dim;
  for (const Layer* l : chain(m)) {
    validate(l->spec);
    if (l->spec.in_size() != size)
      throw InvalidArgument("layer input size " + std::to_string(l->spec.in_size()) +
                            " does not match previous output " + std::to_string(size));
    if (l->params.size() != l->spec.num_params()) throw InvalidArgument("layer parameter count mismatch");
    size = l->spec.out_size();
  }
  if (size != m.input_dim) throw InvalidArgument("decoder output size differs from input_dim");
  const auto& first = m.encoder.front().spec;
  const auto& last = m.decoder.back().spec;
  const bool first_ok = (first.in_channels == m.input_dim && first.in_width == 1) ||
                        (first.in_channels == 1 && first.in_width == m.input_dim);
  const bool last_ok = (last.out_channels == m.input_dim && last.out_width() == 1) ||
                       (last.out_channels == 1 && last.out_width() == m.input_dim);
  if (!first_ok || !last_ok) throw InvalidArgument("model input/output must be a single channel or dense vector");
  const auto& enc_out = m.encoder.back().spec;
  const auto& dec_in = m.decoder.front().spec;
  if (enc_out.out_channels != dec_in.in_channels || enc_out.out_width() != dec_in.in_width)
    throw InvalidArgument("encoder output shape differs from decoder input shape");
}

DaeModel build_model(int input_dim, std::vector<LayerSpec> encoder, std::vector<LayerSpec> decoder,
                     std::uint64_t seed) {
  DaeModel m;
  m.input_dim = input_dim;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& s : encoder) {
    Layer l{s, {}};
    init_layer(l, rng);
    m.encoder.push_back(std::move(l));
  }
  for (auto& s : decoder) {
    Layer l{s, {}};
    init_layer(l, rng);
    m.decoder.push_back(std::move(l));
  }
  validate(m);
  return m;
}

DaeModel build_dae_f(int input_dim, std::uint64_t seed) {
  if (input_dim < 1) throw InvalidArgument("build_dae_f: input_dim must be positive");
  const int widths[] = {input_dim, 1024, 512, 256, 128, 256, 512, 1024, input_dim};
  std::vector<LayerSpec> enc, dec;
  for (int k = 0; k < 4; ++k) enc.push_back(LayerSpec::dense(widths[k], widths[k + 1], Activation::relu));
  for (int k = 4; k < 8; ++k)
    dec.push_back(LayerSpec::dense(widths[k], widths[k + 1], k == 7 ? Activation::linear : Activation::relu));
  auto m = build_model(input_dim, std::move(enc), std::move(dec), seed);
  m.architecture = Architecture::dae_f;
  return m;
}

DaeModel build_dae_c(int input_dim, std::uint64_t seed) {
  if (input_dim < 8) throw InvalidArgument("build_dae_c: input_dim must be at least 8");
  using A = Activation;
  std::vector<LayerSpec> enc{
      LayerSpec::conv1d(1, 32, 4, input_dim, A::relu),
      LayerSpec::conv1d(32, 16, 3, input_dim - 3, A::relu),
      LayerSpec::conv1d(16, 8, 3, input_dim - 5, A::relu),
  };
  const int w = input_dim - 7;
  std::vector<LayerSpec> dec{
      LayerSpec::deconv1d(8, 8, 3, w, A::relu),
      LayerSpec::deconv1d(8, 16, 3, w + 2, A::relu),
      LayerSpec::deconv1d(16, 32, 4, w + 4, A::relu),
      LayerSpec::deconv1d(32, 1, 1, input_dim, A::linear),
  };
  auto m = build_model(input_dim, std::move(enc), std::move(dec), seed);
  m.architecture = Architecture::dae_c;
  return m;
}

ForwardResult forward(const DaeModel& model, const Eigen::Ref<const mat>& x) {
  if (x.cols() != model.input_dim)
    throw InvalidArgument("forward: expected " + std::to_string(model.input_dim) + " features, got " +
                          std::to_string(x.cols()));
  const Eigen::Index batch = x.rows();
  const auto layers = chain(model);
  const Trace tr = run(layers, to_activation(x, model.encoder.front().spec), batch);
  ForwardResult r;
  r.latent = latent_from_activation(tr.acts[model.encoder.size()], model.encoder.back().spec, batch);
  r.reconstruction = from_activation(tr.acts.back(), batch);
  return r;
}

mat encode(const DaeModel& model, const Eigen::Ref<const mat>& x) {
  if (x.cols() != model.input_dim) throw InvalidArgument("encode: feature dimension mismatch");
  const Eigen::Index batch = x.rows();
  mat a = to_activation(x, model.encoder.front().spec);
  for (const auto& l : model.encoder) a = layer_forward(l, a, batch);
  return latent_from_activation(a, model.encoder.back().spec, batch);
}

mat decode(const DaeModel& model, const Eigen::Ref<const mat>& latent) {
  if (latent.cols() != model.latent_size()) throw InvalidArgument("decode: latent dimension mismatch");
  const Eigen::Index batch = latent.rows();
  mat a = activation_from_latent(latent, model.decoder.front().spec);
  for (const auto& l : model.decoder) a = layer_forward(l, a, batch);
  return from_activation(a, batch);
}

double mse_loss(const DaeModel& model, const Eigen::Ref<const mat>& x) {
  const mat r = forward(model, x).reconstruction;
  return (r - x).squaredNorm() / double(x.size());
}

vec flat_parameters(const DaeModel& model) {
  vec p(model.num_params());
  Eigen::Index off = 0;
  for (const Layer* l : chain(model)) {
    p.segment(off, l->params.size()) = l->params;
    off += l->params.size();
  }
  return p;
}

void set_flat_parameters(DaeModel& model, const Eigen::Ref<const vec>& p) {
  if (p.size() != model.num_params()) throw InvalidArgument("parameter vector size mismatch");
  Eigen::Index off = 0;
  for (auto* part : {&model.encoder, &model.decoder})
    for (auto& l : *part) {
      l.params = p.segment(off, l.params.size());
      off += l.params.size();
    }
}

vec loss_gradient(const DaeModel& model, const Eigen::Ref<const mat>& x) {
  if (x.cols() != model.input_dim) throw InvalidArgument("loss_gradient: feature dimension mismatch");
  const auto layers = chain(model);
  const Eigen::Index batch = x.rows();
  mat input = to_activation(x, model.encoder.front().spec);
  const mat target = Eigen::Map<const mat>(input.data(), model.decoder.back().spec.out_channels,
                                           Eigen::Index(model.decoder.back().spec.out_width()) * batch);
  const Trace tr = run(layers, std::move(input), batch);
  std::vector<vec> grads(layers.size());
  backprop(layers, tr, target, batch, grads);
  vec g(model.num_params());
  Eigen::Index off = 0;
  for (const auto& gk : grads) {
    g.segment(off, gk.size()) = gk;
    off += gk.size();
  }
  return g;
}

void train(DaeModel& model, const Eigen::Ref<const mat>& x, const TrainOptions& opt) {
  validate(model);
  if (x.rows() < 1) throw InvalidArgument("train: need at least one frame");
  if (x.cols() != model.input_dim) throw InvalidArgument("train: feature dimension mismatch");
  if (opt.batch_size < 1 || opt.epochs < 0 || !(opt.learning_rate >= 0.0))
    throw InvalidArgument("train: invalid options");

  std::vector<Layer*> layers;
  for (auto& l : model.encoder) layers.push_back(&l);
  for (auto& l : model.decoder) layers.push_back(&l);
  std::vector<const Layer*> clayers(layers.begin(), layers.end());

  std::vector<vec> m1, m2, grads(layers.size());
  for (auto* l : layers) {
    m1.push_back(vec::Zero(l->params.size()));
    m2.push_back(vec::Zero(l->params.size()));
  }

  std::mt19937_64 rng(model.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<Eigen::Index> order(std::size_t(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  const auto& first = model.encoder.front().spec;
  const auto& last = model.decoder.back().spec;
  long step = 0;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  mat batch_x;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(opt.batch_size)) {
      const auto count = Eigen::Index(std::min<std::size_t>(std::size_t(opt.batch_size), order.size() - start));
      batch_x.resize(count, x.cols());
      for (Eigen::Index i = 0; i < count; ++i) batch_x.row(i) = x.row(order[start + std::size_t(i)]);
      mat input = to_activation(batch_x, first);
      const mat target = Eigen::Map<const mat>(input.data(), last.out_channels, Eigen::Index(last.out_width()) * count);
      const Trace tr = run(clayers, std::move(input), count);
      const double loss = backprop(clayers, tr, target, count, grads);
      if (!std::isfinite(loss))
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
      sum += loss * double(count);

      ++step;
      const double c1 = 1.0 - std::pow(opt.beta1, double(step));
      const double c2 = 1.0 - std::pow(opt.beta2, double(step));
      for (std::size_t k = 0; k < layers.size(); ++k) {
        m1[k] = opt.beta1 * m1[k] + (1.0 - opt.beta1) * grads[k];
        m2[k] = opt.beta2 * m2[k] + (1.0 - opt.beta2) * grads[k].cwiseAbs2();
        layers[k]->params.array() -=
            opt.learning_rate * (m1[k].array() / c1) / ((m2[k].array() / c2).sqrt() + opt.epsilon);
      }
    }
    const double epoch_mse = sum / double(x.rows());
    model.training_stats.push_back(epoch_mse);
    for (auto* l : layers)
      if (!l->params.allFinite())
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " (non-finite parameters)");
    if (opt.patience > 0) {
      if (best - epoch_mse > opt.min_improvement) {
        best = epoch_mse;
        stale = 0;
      } else if (++stale >= opt.patience) {
        break;
      }
    }
  }
}

double gradient_check(const DaeModel& model, const Eigen::Ref<const mat>& x, double step, double abs_floor) {
  const vec g = loss_gradient(model, x);
  DaeModel probe = model;
  vec p = flat_parameters(model);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + step;
    set_flat_parameters(probe, p);
    const double up = mse_loss(probe, x);
    p[i] = saved - step;
    set_flat_parameters(probe, p);
    const double down = mse_loss(probe, x);
    p[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(g[i]), std::abs(fd), abs_floor});
    worst = std::max(worst, std::abs(g[i] - fd) / denom);
  }
  return worst;
}

void save_model(const DaeModel& model, const std::filesystem::path& path) {
  validate(model);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, std::uint32_t(model.architecture));
  put<std::uint32_t>(os, std::uint32_t(model.input_dim));
  put<std::uint64_t>(os, model.seed);
  put<std::uint32_t>(os, std::uint32_t(model.encoder.size()));
  put<std::uint32_t>(os, std::uint32_t(model.decoder.size()));
  const auto layers = chain(model);
  for (const Layer* l : layers) {
    const auto& s = l->spec;
    for (std::uint32_t v : {std::uint32_t(s.kind), std::uint32_t(s.in_channels), std::uint32_t(s.out_channels),
                            std::uint32_t(s.kernel_len), std::uint32_t(s.in_width), std::uint32_t(s.activation)})
      put(os, v);
  }
  for (const Layer* l : layers)
    for (Eigen::Index i = 0; i < l->params.size(); ++i) put<double>(os, l->params[i]);
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

DaeModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw IoError("'" + path.string() + "' is not a model checkpoint");
  if (get<std::uint32_t>(is) != kVersion) throw IoError("unsupported checkpoint version");
  DaeModel m;
  m.architecture = Architecture(get<std::uint32_t>(is));
  m.input_dim = int(get<std::uint32_t>(is));
  m.seed = get<std::uint64_t>(is);
  const auto n_enc = get<std::uint32_t>(is);
  const auto n_dec = get<std::uint32_t>(is);
  if (n_enc > 64 || n_dec > 64) throw IoError("implausible layer count in checkpoint");
  auto read_spec = [&] {
    LayerSpec s;
    s.kind = LayerKind(get<std::uint32_t>(is));
    s.in_channels = int(get<std::uint32_t>(is));
    s.out_channels = int(get<std::uint32_t>(is));
    s.kernel_len = int(get<std::uint32_t>(is));
    s.in_width = int(get<std::uint32_t>(is));
    s.activation = Activation(get<std::uint32_t>(is));
    validate(s);
    return Layer{s, {}};
  };
  for (std::uint32_t i = 0; i < n_enc; ++i) m.encoder.push_back(read_spec());
  for (std::uint32_t i = 0; i < n_dec; ++i) m.decoder.push_back(read_spec());
  for (auto* part : {&m.encoder, &m.decoder})
    for (auto& l : *part) {
      l.params.resize(l.spec.num_params());
      for (Eigen::Index i = 0; i < l.params.size(); ++i) l.params[i] = get<double>(is);
    }
  validate(m);
  return m;
}

}  // namespace pulmo::nn
