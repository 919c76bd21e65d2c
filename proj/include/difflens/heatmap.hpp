#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include "difflens/density_field.hpp"

namespace difflens {

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char* type,
                      const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc =
      crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

/// Write an 8-bit RGB PNG. Row-major pixel data, 3 bytes per pixel.
inline void write_png(const std::string& path, int width, int height,
                      const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw std::invalid_argument("write_png: pixel buffer size mismatch");

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
  for (int r = 0; r < height; ++r) {
    raw.push_back(0);  // filter: none
    const std::uint8_t* row = rgb.data() + static_cast<std::size_t>(r) * width * 3;
    raw.insert(raw.end(), row, row + 3 * width);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) !=
      Z_OK)
    throw std::runtime_error("write_png: deflate failed");
  compressed.resize(bound);

  std::vector<std::uint8_t> png = {137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<std::uint8_t> ihdr;
  detail::put_u32(ihdr, static_cast<std::uint32_t>(width));
  detail::put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::put_chunk(png, "IHDR", ihdr);
  detail::put_chunk(png, "IDAT", compressed);
  detail::put_chunk(png, "IEND", {});

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(png.data()),
            static_cast<std::streamsize>(png.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

inline void viridis(double u, std::uint8_t* rgb) {
  static const double anchors[9][3] = {
      {68, 1, 84},   {71, 44, 122},  {59, 81, 139},  {44, 113, 142}, {33, 144, 141},
      {39, 173, 129}, {92, 200, 99}, {170, 220, 50}, {253, 231, 37}};
  u = std::clamp(u, 0.0, 1.0);
  const double pos = u * 8.0;
  const int lo = std::min(static_cast<int>(pos), 7);
  const double f = pos - lo;
  for (int c = 0; c < 3; ++c) {
    const double val = anchors[lo][c] * (1.0 - f) + anchors[lo + 1][c] * f;
    rgb[c] = static_cast<std::uint8_t>(std::lround(val));
  }
}

}  // namespace detail

/// Render a density field as a PNG: time on the horizontal axis, position on
/// the vertical axis (largest x at the top). Colors follow a power-law
/// normalization with the given exponent; the ceiling is the 99th percentile
/// of the reference field (the field itself if none), with values clipped at
/// the 99.9th percentile.
inline void render_heatmap(const DensityField& field, const DensityField* reference,
                           const std::string& path, double gamma = 0.55) {
  if (!field.values.allFinite())
    throw std::invalid_argument("render_heatmap: field has non-finite entries");
  const DensityField& ref = reference ? *reference : field;
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(ref.values.size()));
  for (Eigen::Index i = 0; i < ref.values.rows(); ++i)
    for (Eigen::Index j = 0; j < ref.values.cols(); ++j) flat.push_back(ref.values(i, j));
  const double ceiling = detail::quantile(flat, 0.99);
  const double clip = detail::quantile(flat, 0.999);

  const int width = field.n_t();
  const int height = field.n_x();
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3);
  for (int r = 0; r < height; ++r) {
    const int xi = height - 1 - r;
    for (int c = 0; c < width; ++c) {
      double v = field.values(c, xi);
      v = std::min(v, clip);
      double u = ceiling > 0.0 ? std::clamp(v / ceiling, 0.0, 1.0) : 0.0;
      u = std::pow(u, gamma);
      detail::viridis(u, &rgb[(static_cast<std::size_t>(r) * width + c) * 3]);
    }
  }
  write_png(path, width, height, rgb);
}

}  // namespace difflens
