#include "pulmo/signal_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <vector>

namespace pulmo {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {char(v & 0xFF), char((v >> 8) & 0xFF), char((v >> 16) & 0xFF),
                     char((v >> 24) & 0xFF)};
  os.write(b, 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {char(v & 0xFF), char((v >> 8) & 0xFF)};
  os.write(b, 2);
}

double decode_sample(const unsigned char* p, int bits, bool is_float) {
  if (is_float) {
    const std::uint32_t u = read_u32(p);
    float f;
    std::memcpy(&f, &u, sizeof f);
    return double(f);
  }
  switch (bits) {
    case 8:
      return (double(p[0]) - 128.0) / 128.0;
    case 16:
      return double(std::int16_t(read_u16(p))) / 32768.0;
    case 24: {
      std::int32_t v = std::int32_t(p[0]) | (std::int32_t(p[1]) << 8) | (std::int32_t(p[2]) << 16);
      if (v & 0x800000) v -= 0x1000000;
      return double(v) / 8388608.0;
    }
    case 32:
      return double(std::int32_t(read_u32(p))) / 2147483648.0;
    default:
      return 0.0;
  }
}

double kaiser(double x, double beta) {
  // x in [-1, 1]
  if (std::abs(x) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - x * x)) / std::cyl_bessel_i(0.0, beta);
}

}  // namespace

void validate(const Waveform& w) {
  if (w.sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
  if (!w.samples.allFinite()) throw InvalidArgument("waveform contains non-finite samples");
}

vec resample(const Eigen::Ref<const vec>& x, int source_rate, int target_rate) {
  if (source_rate <= 0 || target_rate <= 0) throw InvalidArgument("resample: rates must be positive");
  if (source_rate == target_rate) return x;
  const Eigen::Index n_in = x.size();
  const Eigen::Index n_out =
      Eigen::Index((std::int64_t(n_in) * target_rate + source_rate / 2) / source_rate);
  const double ratio = double(source_rate) / target_rate;  // input samples per output sample
  const double cutoff = std::min(1.0, 1.0 / ratio);          // normalised to the input Nyquist
  constexpr int kHalfTaps = 16;
  constexpr double kBeta = 8.6;
  const double half_width = kHalfTaps / cutoff;

  vec y(n_out);
  for (Eigen::Index n = 0; n < n_out; ++n) {
    const double t = n * ratio;
    const auto lo = std::max<Eigen::Index>(0, Eigen::Index(std::ceil(t - half_width)));
    const auto hi = std::min<Eigen::Index>(n_in - 1, Eigen::Index(std::floor(t + half_width)));
    double acc = 0.0;
    for (Eigen::Index k = lo; k <= hi; ++k) {
      const double d = t - double(k);
      const double arg = cutoff * d;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      acc += x[k] * cutoff * sinc * kaiser(d / half_width, kBeta);
    }
    y[n] = acc;
  }
  return y;
}

Waveform load_audio(const std::filesystem::path& path, int target_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw IoError("'" + path.string() + "' is not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && avail >= 16) {
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible && avail >= 26) format = read_u16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (channels == 0 || rate == 0) throw IoError("'" + path.string() + "': missing fmt chunk");
  const bool is_float = format == kFormatFloat;
  const bool ok = (format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) ||
                  (is_float && bits == 32);
  if (!ok)
    throw IoError("'" + path.string() + "': unsupported encoding (format " + std::to_string(format) +
                  ", " + std::to_string(bits) + " bits)");
  const std::size_t frame_bytes = std::size_t(channels) * (bits / 8);
  const std::size_t n = data ? data_len / frame_bytes : 0;
  if (n == 0) throw IoError("'" + path.string() + "': zero-length audio");

  vec mono(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c)
      acc += decode_sample(data + i * frame_bytes + c * (bits / 8), bits, is_float);
    mono[Eigen::Index(i)] = acc / channels;
  }

  Waveform w{resample(mono, int(rate), target_rate), target_rate};
  const double peak = w.samples.cwiseAbs().maxCoeff();
  if (peak > 1.0) w.samples /= peak;
  validate(w);
  return w;
}

void save_audio(const Waveform& waveform, const std::filesystem::path& path) {
  validate(waveform);
  if (waveform.samples.size() == 0) throw InvalidArgument("save_audio: empty waveform");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  const auto n = std::uint32_t(waveform.samples.size());
  const std::uint32_t data_bytes = n * 2;
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, std::uint32_t(waveform.sample_rate));
  put_u32(out, std::uint32_t(waveform.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (Eigen::Index i = 0; i < waveform.samples.size(); ++i) {
    const double s = std::clamp(waveform.samples[i], -1.0, 32767.0 / 32768.0);
    put_u16(out, std::uint16_t(std::int16_t(std::lround(s * 32768.0))));
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace pulmo
