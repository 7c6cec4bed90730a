#ifndef PULMO_CONFIG_HPP
#define PULMO_CONFIG_HPP

#include "pulmo/spectral.hpp"

#include <cstdint>
#include <istream>
#include <string>
#include <utility>
#include <vector>

namespace pulmo {

enum class Method { pc_dae_c, pc_dae_f, dc_dae, pc_nmf, dc_nmf };
enum class MaskMode { mask, direct };
enum class MaskBase { mixture, reconstruction };

/// Every tunable of a separation run. Defaults follow the published setup
/// where one exists.
struct RunConfig {
  int frame_len = kDefaultFrameLen;
  int hop = kDefaultHop;
  int band_hi = kDefaultBandHi;
  Method method = Method::pc_dae_c;
  MaskMode mask_mode = MaskMode::mask;
  MaskBase mask_base = MaskBase::mixture;
  HighBandPolicy high_band = HighBandPolicy::zero;
  int epochs = 300;
  double lr = 1e-3;
  int batch = 128;
  int patience = 20;
  int nmf_rank = 20;
  int nmf_iters = 200;
  double lambda_sparsity = 0.1;
  int cluster_iters = 1000;
  // PC-NMF only: false clusters raw activations (turns PC-NMF into DC-NMF).
  bool nmf_periodicity = true;
  std::uint64_t seed = 17;
};

void validate(const RunConfig& config);

/// Sets one field from its textual form. Unknown keys and malformed values
/// throw InvalidArgument.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Parses `key = value` lines; `#` starts a comment. Values override `base`.
RunConfig parse_config(std::istream& in, RunConfig base = {});

/// Effective configuration as ordered key/value pairs (same keys as the file format).
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config);

std::string to_string(Method m);
std::string to_string(MaskMode m);
std::string to_string(MaskBase m);
std::string to_string(HighBandPolicy p);
Method parse_method(const std::string& s);

}  // namespace pulmo

#endif
