#include "pulmo/dump.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace pulmo {

std::string format_number(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Eigen::Ref<const mat>& data) {
  if (!header.empty() && Eigen::Index(header.size()) != data.cols())
    throw InvalidArgument("write_csv: header has " + std::to_string(header.size()) + " columns, data has " +
                          std::to_string(data.cols()));
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  if (!header.empty()) os << '\n';
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) os << (c ? "," : "") << format_number(data(r, c));
    os << '\n';
  }
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

void write_pgm(const std::filesystem::path& path, const Eigen::Ref<const mat>& image, double lo, double hi) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (Eigen::Index r = 0; r < image.rows(); ++r)
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      const double v = std::clamp((image(r, c) - lo) / span, 0.0, 1.0);
      os.put(char(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

void write_spectrogram_pgm(const std::filesystem::path& path, const Eigen::Ref<const mat>& magnitude) {
  const mat db = (magnitude.array().max(1e-12).log10() * 20.0).matrix().transpose().colwise().reverse();
  const double hi = db.maxCoeff();
  write_pgm(path, db, hi - 80.0, hi);
}

void write_mask_pgm(const std::filesystem::path& path, const Eigen::Ref<const mat>& mask) {
  write_pgm(path, mask.transpose().colwise().reverse(), 0.0, 1.0);
}

}  // namespace pulmo
