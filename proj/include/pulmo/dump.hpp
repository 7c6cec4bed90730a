#ifndef PULMO_DUMP_HPP
#define PULMO_DUMP_HPP

#include "pulmo/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace pulmo {

/// CSV with a header row; one matrix row per line, '.' decimal separator.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Eigen::Ref<const mat>& data);

/// 8-bit binary PGM. `image` is indexed (row, col); row 0 is the top line.
void write_pgm(const std::filesystem::path& path, const Eigen::Ref<const mat>& image, double lo, double hi);

/// Spectrogram image from an N x F magnitude matrix: frequency increases
/// upwards, time to the right, 20 log10 scaling over an 80 dB range.
void write_spectrogram_pgm(const std::filesystem::path& path, const Eigen::Ref<const mat>& magnitude);

/// N x F mask in [0, 1], same orientation as write_spectrogram_pgm.
void write_mask_pgm(const std::filesystem::path& path, const Eigen::Ref<const mat>& mask);

/// Shortest round-trip decimal representation.
std::string format_number(double v);

}  // namespace pulmo

#endif
