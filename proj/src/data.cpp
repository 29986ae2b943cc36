#include "hzo/data.h"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "hzo/errors.h"

namespace hzo {
namespace {

constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr std::uint32_t kImageMagic = 0x00000803;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                        const char* what) {
  if (offset + 4 > bytes.size()) throw ParseError(std::string("truncated ") + what, offset);
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void push_point(Dataset& d, double x, double y, std::size_t label) {
  d.inputs.push_back(Tensor::vector({x, y}));
  d.labels.emplace_back(label);
}

}  // namespace

void Dataset::validate() const {
  if (inputs.size() != labels.size()) throw InputError("dataset inputs/labels length mismatch");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != feature_width) {
      throw InputError("sample " + std::to_string(i) + " has width " +
                       std::to_string(inputs[i].size()));
    }
    if (const auto* c = std::get_if<std::size_t>(&labels[i]); c && *c >= class_count) {
      throw InputError("sample " + std::to_string(i) + " label " + std::to_string(*c) +
                       " outside " + std::to_string(class_count) + " classes");
    }
  }
}

Dataset make_two_moons(std::size_t n, double noise, Rng& rng) {
  if (n < 2) throw InputError("two moons needs n >= 2");
  if (!(noise >= 0.0)) throw InputError("noise must be non-negative");
  const std::size_t n_outer = n / 2;
  const std::size_t n_inner = n - n_outer;
  Dataset d;
  d.feature_width = 2;
  d.class_count = 2;
  const auto arc = [](std::size_t i, std::size_t count) {
    return count < 2 ? 0.0 : std::numbers::pi * static_cast<double>(i) / (count - 1);
  };
  for (std::size_t i = 0; i < n_outer; ++i) {
    const double t = arc(i, n_outer);
    push_point(d, std::cos(t), std::sin(t), 0);
  }
  for (std::size_t i = 0; i < n_inner; ++i) {
    const double t = arc(i, n_inner);
    push_point(d, 1.0 - std::cos(t), 0.5 - std::sin(t), 1);
  }
  if (noise > 0.0) {
    for (auto& x : d.inputs) {
      x[0] += noise * rng.normal();
      x[1] += noise * rng.normal();
    }
  }
  return d;
}

Dataset make_spirals(std::size_t n, double turns, double noise, Rng& rng) {
  if (n < 2) throw InputError("spirals needs n >= 2");
  if (!(turns > 0.0)) throw InputError("turns must be positive");
  if (!(noise >= 0.0)) throw InputError("noise must be non-negative");
  Dataset d;
  d.feature_width = 2;
  d.class_count = 2;
  const std::size_t arm[2] = {n / 2, n - n / 2};
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < arm[c]; ++i) {
      const double t = static_cast<double>(i + 1) / static_cast<double>(arm[c]);
      const double theta = 2.0 * std::numbers::pi * turns * t + std::numbers::pi * c;
      double x = t * std::cos(theta);
      double y = t * std::sin(theta);
      if (noise > 0.0) {
        x += noise * rng.normal();
        y += noise * rng.normal();
      }
      push_point(d, x, y, c);
    }
  }
  return d;
}

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  if (read_be32(images, 0, "image header") != kImageMagic) {
    throw ParseError("bad IDX image magic", 0);
  }
  if (read_be32(labels, 0, "label header") != kLabelMagic) {
    throw ParseError("bad IDX label magic", 0);
  }
  const std::size_t count = read_be32(images, 4, "image header");
  const std::size_t rows = read_be32(images, 8, "image header");
  const std::size_t cols = read_be32(images, 12, "image header");
  const std::size_t label_count = read_be32(labels, 4, "label header");
  if (label_count != count) {
    throw ParseError("label count " + std::to_string(label_count) + " vs image count " +
                     std::to_string(count), 4);
  }
  const std::size_t pixels = rows * cols;
  if (images.size() < 16 + count * pixels) {
    throw ParseError("truncated image payload", images.size());
  }
  if (labels.size() < 8 + count) throw ParseError("truncated label payload", labels.size());
  if (images.size() > 16 + count * pixels) {
    throw ParseError("trailing bytes after image payload", 16 + count * pixels);
  }
  if (labels.size() > 8 + count) throw ParseError("trailing bytes after label payload", 8 + count);

  Dataset d;
  d.feature_width = pixels;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor x({pixels});
    for (std::size_t p = 0; p < pixels; ++p) x[p] = images[16 + i * pixels + p] / 255.0;
    d.inputs.push_back(std::move(x));
    const std::size_t label = labels[8 + i];
    d.labels.emplace_back(label);
    d.class_count = std::max(d.class_count, label + 1);
  }
  return d;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  return parse_idx(images, labels);
}

std::vector<std::uint8_t> encode_idx_images(const Dataset& data, std::size_t rows,
                                            std::size_t cols) {
  std::vector<std::uint8_t> out;
  write_be32(out, kImageMagic);
  write_be32(out, static_cast<std::uint32_t>(data.size()));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  for (const auto& x : data.inputs) {
    if (x.size() != rows * cols) throw DimensionError("image width does not match rows*cols");
    for (double v : x.values()) {
      if (!(v >= 0.0 && v <= 1.0)) throw InputError("pixel outside [0, 1]");
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const Dataset& data) {
  std::vector<std::uint8_t> out;
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(data.size()));
  for (const auto& l : data.labels) {
    const auto* c = std::get_if<std::size_t>(&l);
    if (!c || *c > 255) throw InputError("IDX labels must be class indices below 256");
    out.push_back(static_cast<std::uint8_t>(*c));
  }
  return out;
}

void write_idx(const std::string& images_path, const std::string& labels_path, const Dataset& data,
               std::size_t rows, std::size_t cols) {
  write_file(images_path, encode_idx_images(data, rows, cols));
  write_file(labels_path, encode_idx_labels(data));
}

}  // namespace hzo
