#ifndef PULMO_NN_HPP
#define PULMO_NN_HPP

#include "pulmo/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pulmo::nn {

enum class LayerKind : std::uint32_t { dense = 0, conv1d = 1, deconv1d = 2 };
enum class Activation : std::uint32_t { relu = 0, linear = 1 };

/// Shape of one layer. Dense layers are treated as width-1, kernel-1
/// convolutions over `in_channels` inputs.
///
/// conv1d is a valid (unpadded) convolution: out_width = in_width - kernel_len + 1.
/// deconv1d is the transposed convolution with full zero padding:
/// out_width = in_width + kernel_len - 1. Stride is always 1.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int in_channels = 1;
  int out_channels = 1;
  int kernel_len = 1;
  int in_width = 1;
  Activation activation = Activation::relu;
  int stride = 1;

  int out_width() const;
  Eigen::Index num_weights() const { return Eigen::Index(kernel_len) * in_channels * out_channels; }
  Eigen::Index num_params() const { return num_weights() + out_channels; }
  Eigen::Index in_size() const { return Eigen::Index(in_channels) * in_width; }
  Eigen::Index out_size() const { return Eigen::Index(out_channels) * out_width(); }

  static LayerSpec dense(int in, int out, Activation act);
  static LayerSpec conv1d(int in_ch, int out_ch, int kernel, int in_width, Activation act);
  static LayerSpec deconv1d(int in_ch, int out_ch, int kernel, int in_width, Activation act);
};

void validate(const LayerSpec& spec);

/// Parameters are stored flat: kernel_len blocks of (out x in) column-major
/// tap matrices followed by out_channels biases.
struct Layer {
  LayerSpec spec;
  vec params;

  Eigen::Map<const mat> tap(int t) const {
    return {params.data() + Eigen::Index(t) * spec.in_channels * spec.out_channels, spec.out_channels,
            spec.in_channels};
  }
  Eigen::Map<mat> tap(int t) {
    return {params.data() + Eigen::Index(t) * spec.in_channels * spec.out_channels, spec.out_channels,
            spec.in_channels};
  }
  auto bias() const { return params.segment(spec.num_weights(), spec.out_channels); }
  auto bias() { return params.segment(spec.num_weights(), spec.out_channels); }
};

enum class Architecture : std::uint32_t { custom = 0, dae_f = 1, dae_c = 2 };

struct DaeModel {
  Architecture architecture = Architecture::custom;
  int input_dim = 0;
  std::vector<Layer> encoder;
  std::vector<Layer> decoder;
  std::uint64_t seed = 17;
  std::vector<double> training_stats;  // per-epoch MSE

  /// Total number of latent units (channels x width of the last encoder layer).
  Eigen::Index latent_size() const;
  Eigen::Index num_params() const;
};

/// Checks chain consistency: every layer's input size equals the previous
/// output size and the decoder output equals `input_dim`.
void validate(const DaeModel& model);

/// Builds and He-initialises a model from layer specs.
DaeModel build_model(int input_dim, std::vector<LayerSpec> encoder, std::vector<LayerSpec> decoder,
                     std::uint64_t seed = 17);

/// Dense 301-1024-512-256-128-256-512-1024-301 autoencoder.
DaeModel build_dae_f(int input_dim = 301, std::uint64_t seed = 17);

/// Convolutional encoder (32x4, 16x3, 8x3 valid convolutions) and
/// transposed-convolution decoder (8x3, 16x3, 32x4, 1x1).
DaeModel build_dae_c(int input_dim = 301, std::uint64_t seed = 17);

struct ForwardResult {
  mat reconstruction;  // B x input_dim
  mat latent;          // B x latent_size, channel-major flattening
};

/// Rows of `x` are samples.
ForwardResult forward(const DaeModel& model, const Eigen::Ref<const mat>& x);
mat encode(const DaeModel& model, const Eigen::Ref<const mat>& x);
mat decode(const DaeModel& model, const Eigen::Ref<const mat>& latent);

/// Mean squared reconstruction error over all entries of `x`.
double mse_loss(const DaeModel& model, const Eigen::Ref<const mat>& x);

/// Exact backpropagated gradient of mse_loss, flattened in parameter order.
vec loss_gradient(const DaeModel& model, const Eigen::Ref<const mat>& x);

vec flat_parameters(const DaeModel& model);
void set_flat_parameters(DaeModel& model, const Eigen::Ref<const vec>& p);

struct TrainOptions {
  int epochs = 300;
  double learning_rate = 1e-3;
  int batch_size = 128;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Stop when the epoch MSE has not improved by more than `min_improvement`
  // for `patience` consecutive epochs. patience <= 0 disables early stopping.
  int patience = 20;
  double min_improvement = 1e-6;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// Adam on the MSE objective. Rows of `x` are training frames; shuffling is
/// seeded by model.seed. Appends one entry per epoch to training_stats.
void train(DaeModel& model, const Eigen::Ref<const mat>& x, const TrainOptions& options = {});

/// Max relative error between backprop and central finite differences over
/// every parameter. Relative error is |g - fd| / max(|g|, |fd|, abs_floor).
double gradient_check(const DaeModel& model, const Eigen::Ref<const mat>& x, double step = 1e-5,
                      double abs_floor = 1e-7);

/// Binary checkpoint, little-endian:
///   "PCDAEMDL" | u32 version (=1) | u32 architecture | u32 input_dim |
///   u64 seed | u32 n_encoder | u32 n_decoder |
///   per layer: u32 kind, in_channels, out_channels, kernel_len, in_width, activation |
///   per layer in order: f64 params (tap blocks then biases).
void save_model(const DaeModel& model, const std::filesystem::path& path);
DaeModel load_model(const std::filesystem::path& path);

}  // namespace pulmo::nn

#endif
