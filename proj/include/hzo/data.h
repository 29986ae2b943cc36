#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hzo/oracle.h"
#include "hzo/rng.h"
#include "hzo/tensor.h"

namespace hzo {

struct Dataset {
  std::vector<Tensor> inputs;
  std::vector<Label> labels;
  std::size_t feature_width = 0;
  std::size_t class_count = 0;

  std::size_t size() const { return inputs.size(); }
  /// Throws InputError if lengths, widths or class indices disagree.
  void validate() const;
};

/// Two interleaved half circles in the plane. Class 0 is the upper unit
/// semicircle, class 1 the lower one shifted to (1, 0.5). floor(n/2) points go
/// to class 0 and the rest to class 1; points are evenly spaced along each arc
/// before Gaussian noise of standard deviation `noise` is added.
Dataset make_two_moons(std::size_t n, double noise, Rng& rng);

/// Two interleaved Archimedean spirals. Point i of an arm sits at parameter
/// t = (i + 1) / n_arm, radius t, angle 2*pi*turns*t (+ pi for class 1).
Dataset make_spirals(std::size_t n, double turns, double noise, Rng& rng);

/// IDX image/label pair: images magic 0x00000803 with dims [n, rows, cols],
/// labels magic 0x00000801 with dims [n], all u32 big-endian, u8 payload.
/// Pixels are scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);

/// Writes `data` as an IDX pair. Inputs must be rows*cols pixels in [0, 1],
/// stored as round(255 x); labels must be class indices below 256.
void write_idx(const std::string& images_path, const std::string& labels_path, const Dataset& data,
               std::size_t rows, std::size_t cols);
std::vector<std::uint8_t> encode_idx_images(const Dataset& data, std::size_t rows,
                                            std::size_t cols);
std::vector<std::uint8_t> encode_idx_labels(const Dataset& data);

}  // namespace hzo
