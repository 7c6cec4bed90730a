#include "pulmo/config.hpp"

#include <charconv>
#include <sstream>

namespace pulmo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw InvalidArgument("config: bad value '" + value + "' for " + key);
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::pc_dae_c: return "pc-dae-c";
    case Method::pc_dae_f: return "pc-dae-f";
    case Method::dc_dae: return "dc-dae";
    case Method::pc_nmf: return "pc-nmf";
    case Method::dc_nmf: return "dc-nmf";
  }
  return "?";
}

std::string to_string(MaskMode m) { return m == MaskMode::mask ? "mask" : "direct"; }
std::string to_string(MaskBase m) { return m == MaskBase::mixture ? "mixture" : "reconstruction"; }
std::string to_string(HighBandPolicy p) { return p == HighBandPolicy::zero ? "zero" : "mixture"; }

Method parse_method(const std::string& s) {
  for (Method m : {Method::pc_dae_c, Method::pc_dae_f, Method::dc_dae, Method::pc_nmf, Method::dc_nmf})
    if (to_string(m) == s) return m;
  throw InvalidArgument("unknown method '" + s + "'");
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& what) { throw InvalidArgument("config: " + what); };
  if (c.frame_len < 2 || c.frame_len % 2 != 0) fail("frame_len must be even and >= 2");
  if (c.hop < 1 || c.hop > c.frame_len) fail("hop must be in [1, frame_len]");
  if (c.band_hi < 7 || c.band_hi > c.frame_len / 2) fail("band_hi must be in [7, frame_len/2]");
  if (c.epochs < 0) fail("epochs must be >= 0");
  if (!(c.lr >= 0.0)) fail("lr must be >= 0");
  if (c.batch < 1) fail("batch must be >= 1");
  if (c.nmf_rank < 2) fail("nmf_rank must be >= 2");
  if (c.nmf_iters < 1) fail("nmf_iters must be >= 1");
  if (!(c.lambda_sparsity >= 0.0)) fail("lambda_sparsity must be >= 0");
  if (c.cluster_iters < 1) fail("cluster_iters must be >= 1");
}

void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "frame_len") c.frame_len = parse_number<int>(key, value);
  else if (key == "hop") c.hop = parse_number<int>(key, value);
  else if (key == "band_hi") c.band_hi = parse_number<int>(key, value);
  else if (key == "method") c.method = parse_method(value);
  else if (key == "mask_mode") {
    if (value == "mask") c.mask_mode = MaskMode::mask;
    else if (value == "direct") c.mask_mode = MaskMode::direct;
    else throw InvalidArgument("config: mask_mode must be mask or direct");
  } else if (key == "mask_base") {
    if (value == "mixture") c.mask_base = MaskBase::mixture;
    else if (value == "reconstruction") c.mask_base = MaskBase::reconstruction;
    else throw InvalidArgument("config: mask_base must be mixture or reconstruction");
  } else if (key == "high_band") {
    if (value == "zero") c.high_band = HighBandPolicy::zero;
    else if (value == "mixture") c.high_band = HighBandPolicy::mixture;
    else throw InvalidArgument("config: high_band must be zero or mixture");
  } else if (key == "epochs") c.epochs = parse_number<int>(key, value);
  else if (key == "lr") c.lr = parse_number<double>(key, value);
  else if (key == "batch") c.batch = parse_number<int>(key, value);
  else if (key == "patience") c.patience = parse_number<int>(key, value);
  else if (key == "nmf_rank") c.nmf_rank = parse_number<int>(key, value);
  else if (key == "nmf_iters") c.nmf_iters = parse_number<int>(key, value);
  else if (key == "lambda_sparsity") c.lambda_sparsity = parse_number<double>(key, value);
  else if (key == "cluster_iters") c.cluster_iters = parse_number<int>(key, value);
  else if (key == "nmf_periodicity") {
    if (value == "true" || value == "1") c.nmf_periodicity = true;
    else if (value == "false" || value == "0") c.nmf_periodicity = false;
    else throw InvalidArgument("config: nmf_periodicity must be true or false");
  } else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else throw InvalidArgument("config: unknown key '" + key + "'");
}

RunConfig parse_config(std::istream& in, RunConfig base) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config line " + std::to_string(lineno) + ": expected 'key = value'");
    apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& c) {
  return {
      {"frame_len", std::to_string(c.frame_len)},
      {"hop", std::to_string(c.hop)},
      {"band_hi", std::to_string(c.band_hi)},
      {"method", to_string(c.method)},
      {"mask_mode", to_string(c.mask_mode)},
      {"mask_base", to_string(c.mask_base)},
      {"high_band", to_string(c.high_band)},
      {"epochs", std::to_string(c.epochs)},
      {"lr", fmt_double(c.lr)},
      {"batch", std::to_string(c.batch)},
      {"patience", std::to_string(c.patience)},
      {"nmf_rank", std::to_string(c.nmf_rank)},
      {"nmf_iters", std::to_string(c.nmf_iters)},
      {"lambda_sparsity", fmt_double(c.lambda_sparsity)},
      {"cluster_iters", std::to_string(c.cluster_iters)},
      {"nmf_periodicity", c.nmf_periodicity ? "true" : "false"},
      {"seed", std::to_string(c.seed)},
  };
}

}  // namespace pulmo
