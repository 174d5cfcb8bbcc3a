#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cseg {

/// Class value reserved for "ignore" pixels in ground-truth maps.
inline constexpr std::uint16_t kIgnoreClass = 255;

/// Row-major multi-channel image, channel values normalized to [0,1].
struct ImagePlane {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  float at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::span<const float> pixel(std::size_t idx) const {
    return {data.data() + idx * channels, static_cast<std::size_t>(channels)};
  }
};

/// Dense per-pixel superpixel labelling. Ids are dense in [0, count) and every
/// id is a single 4-connected pixel set.
struct SuperpixelMap {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> ids;
  std::int32_t count = 0;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::int32_t at(int x, int y) const { return ids[static_cast<std::size_t>(y) * width + x]; }
};

/// Per-pixel vector field: DCNN features or class probabilities.
struct DenseFieldMap {
  int width = 0;
  int height = 0;
  int depth = 0;
  bool probability = false;
  std::vector<float> values;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::span<const float> pixel(std::size_t idx) const {
    return {values.data() + idx * depth, static_cast<std::size_t>(depth)};
  }
};

/// Ground-truth panoptic map. instance 0 marks stuff.
struct PanopticTruth {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> class_ids;
  std::vector<std::uint32_t> instance_ids;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

/// Feature source for graph construction; a view over either an image or a field.
struct FeatureView {
  int width = 0;
  int height = 0;
  int depth = 0;
  const float* values = nullptr;

  static FeatureView of(const ImagePlane& img) {
    return {img.width, img.height, img.channels, img.data.data()};
  }
  static FeatureView of(const DenseFieldMap& f) {
    return {f.width, f.height, f.depth, f.values.data()};
  }
  std::span<const float> pixel(std::size_t idx) const {
    return {values + idx * depth, static_cast<std::size_t>(depth)};
  }
};

// --- raw tensor container ("CSEG1" magic + JSON header line + LE payload) ---

enum class TensorDType { F32, U16 };

struct RawTensor {
  std::vector<int> dims;  // [H, W, D]
  TensorDType dtype = TensorDType::F32;
  bool probability = false;
  std::vector<float> f32;
  std::vector<std::uint16_t> u16;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

RawTensor read_raw_tensor(const std::filesystem::path& path);
void write_raw_tensor(const std::filesystem::path& path, const RawTensor& t);

// --- images ---

/// PNG (8-bit gray/gray+alpha/RGB/RGBA) or binary PPM (P6).
ImagePlane load_image(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const ImagePlane& img);
void save_ppm(const std::filesystem::path& path, const ImagePlane& img);

/// Low level 8/16-bit PNG access used for label maps.
struct GrayPng {
  int width = 0;
  int height = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> values;
};
GrayPng read_gray_png(const std::filesystem::path& path);
void write_gray_png(const std::filesystem::path& path, const GrayPng& png);
void write_rgb_png(const std::filesystem::path& path, int width, int height,
                   std::span<const std::uint8_t> rgb);
std::vector<std::uint8_t> encode_gray_png(const GrayPng& png);
std::vector<std::uint8_t> encode_rgb_png(int width, int height, std::span<const std::uint8_t> rgb);

// --- fields ---

DenseFieldMap load_field(const std::filesystem::path& path, bool expect_probability);
void save_field(const std::filesystem::path& path, const DenseFieldMap& field);
/// Throws NotNormalized when any pixel's slice is outside [0,1] or sums off 1 by > 1e-4.
void check_probability(const DenseFieldMap& field);

// --- superpixels ---

SuperpixelMap load_superpixels(const std::filesystem::path& path);
void save_superpixels(const std::filesystem::path& path, const SuperpixelMap& sp);
/// Splits every id into 4-connected components and re-indexes densely, ordered by
/// (original id, first pixel in raster order). Already valid maps are unchanged.
SuperpixelMap relabel_connected(int width, int height, std::span<const std::int32_t> ids);
SuperpixelMap grid_superpixels(int width, int height, int target_count);

// --- ground truth ---

/// 16-bit PNG with value = class*1000 + instance (plain class for values < 1000),
/// 8-bit PNG of classes, or a u16 raw tensor with D=1 (class) or D=2 (class, instance).
PanopticTruth load_truth(const std::filesystem::path& path);
void save_truth(const std::filesystem::path& path, const PanopticTruth& truth);

}  // namespace cseg
