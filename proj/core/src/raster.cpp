#include "cseg/raster.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <csetjmp>
#include <cstdio>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "cseg/error.hpp"
#include "cseg/grid.hpp"

namespace cseg {
namespace fs = std::filesystem;

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DepthMismatch: return "DepthMismatch";
    case ErrorCode::ClassWithoutScribble: return "ClassWithoutScribble";
    case ErrorCode::ConflictingScribbles: return "ConflictingScribbles";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::NoError: return "NoError";
    case ErrorCode::UnseededRegion: return "UnseededRegion";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::MissingRoot: return "MissingRoot";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::PolicyViolation: return "PolicyViolation";
  }
  return "Unknown";
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

namespace {

constexpr char kTensorMagic[] = "CSEG1";
constexpr std::size_t kTensorMagicLen = 5;

bool has_prefix(std::span<const std::uint8_t> bytes, std::string_view prefix) {
  return bytes.size() >= prefix.size() &&
         std::memcmp(bytes.data(), prefix.data(), prefix.size()) == 0;
}

bool is_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

// --- libpng in-memory decode/encode ---

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;  // row-major, interleaved
};

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + count > cur->bytes.size()) png_error(png, "truncated PNG");
  std::memcpy(out, cur->bytes.data() + cur->offset, count);
  cur->offset += count;
}

// libpng reports errors by longjmp; the message is parked here first.
struct PngErrorSink {
  char message[256] = "unknown libpng error";
};

void png_error_jump(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png));
  std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
  png_longjmp(png, 1);
}
void png_warning_ignore(png_structp, png_const_charp) {}

DecodedPng decode_png(std::span<const std::uint8_t> bytes) {
  PngErrorSink sink;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_jump, png_warning_ignore);
  if (!png) throw Error(ErrorCode::IoError, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::IoError, "png_create_info_struct failed");
  }
  // Everything with a destructor lives above setjmp so a longjmp skips no objects.
  ReadCursor cursor{bytes, 0};
  DecodedPng out;
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::CorruptFile, std::string("PNG: ") + sink.message);
  }

  png_set_read_fn(png, &cursor, png_read_from_memory);
  png_read_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  raw.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t per_row = static_cast<std::size_t>(out.width) * out.channels;
  out.samples.resize(per_row * out.height);
  for (int y = 0; y < out.height; ++y) {
    const std::uint8_t* src = raw.data() + y * rowbytes;
    std::uint16_t* dst = out.samples.data() + y * per_row;
    for (std::size_t i = 0; i < per_row; ++i) {
      dst[i] = out.bit_depth == 16 ? static_cast<std::uint16_t>(src[2 * i] << 8 | src[2 * i + 1])
                                   : src[i];
    }
  }
  return out;
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}
void png_flush_noop(png_structp) {}

std::vector<std::uint8_t> encode_png(int width, int height, int channels, int bit_depth,
                                     std::span<const std::uint16_t> samples) {
  PngErrorSink sink;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_jump, png_warning_ignore);
  if (!png) throw Error(ErrorCode::IoError, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::IoError, "png_create_info_struct failed");
  }
  std::vector<std::uint8_t> out;
  const std::size_t bytes_per_sample = bit_depth == 16 ? 2 : 1;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(width) * channels * bytes_per_sample);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, std::string("PNG encode: ") + sink.message);
  }

  png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
  const int color = channels == 1   ? PNG_COLOR_TYPE_GRAY
                    : channels == 2 ? PNG_COLOR_TYPE_GRAY_ALPHA
                    : channels == 3 ? PNG_COLOR_TYPE_RGB
                                    : PNG_COLOR_TYPE_RGBA;
  png_set_IHDR(png, info, width, height, bit_depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(width) * channels; ++i) {
      const std::uint16_t v = samples[static_cast<std::size_t>(y) * width * channels + i];
      if (bit_depth == 16) {
        row[2 * i] = static_cast<std::uint8_t>(v >> 8);  // PNG is big-endian
        row[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
      } else {
        row[i] = static_cast<std::uint8_t>(v);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// --- PPM ---

ImagePlane decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 2;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_ws();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      throw Error(ErrorCode::CorruptFile, "malformed PPM header");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1 << 20) throw Error(ErrorCode::CorruptFile, "PPM header value too large");
    }
    return static_cast<int>(v);
  };
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw Error(ErrorCode::CorruptFile, "malformed PPM header");
  ++pos;
  if (maxval != 255) throw Error(ErrorCode::UnsupportedFormat, "only 8-bit PPM is supported");
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - pos < n) throw Error(ErrorCode::CorruptFile, "truncated PPM payload");
  ImagePlane img{w, h, 3, std::vector<float>(n)};
  for (std::size_t i = 0; i < n; ++i) img.data[i] = static_cast<float>(bytes[pos + i] / 255.0);
  return img;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

// ---------------------------------------------------------------------------

RawTensor read_raw_tensor(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (!has_prefix(bytes, {kTensorMagic, kTensorMagicLen}))
    throw Error(ErrorCode::UnsupportedFormat, path.string() + " is not a CSEG1 tensor");
  auto nl = std::find(bytes.begin() + kTensorMagicLen, bytes.end(), std::uint8_t('\n'));
  if (nl == bytes.end()) throw Error(ErrorCode::CorruptFile, "missing tensor header terminator");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kTensorMagicLen, nl);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("bad tensor header: ") + e.what());
  }
  RawTensor t;
  try {
    t.dims = header.at("dims").get<std::vector<int>>();
    const auto dtype = header.at("dtype").get<std::string>();
    if (dtype == "f32") {
      t.dtype = TensorDType::F32;
    } else if (dtype == "u16") {
      t.dtype = TensorDType::U16;
    } else {
      throw Error(ErrorCode::UnsupportedFormat, "tensor dtype " + dtype);
    }
    t.probability = header.value("probability", false);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("bad tensor header: ") + e.what());
  }
  if (t.dims.size() != 3 || std::any_of(t.dims.begin(), t.dims.end(), [](int d) { return d <= 0; }))
    throw Error(ErrorCode::ShapeMismatch, "tensor dims must be [H,W,D] with positive entries");

  const std::size_t count = static_cast<std::size_t>(t.dims[0]) * t.dims[1] * t.dims[2];
  const std::size_t elem = t.dtype == TensorDType::F32 ? 4 : 2;
  const std::size_t offset = static_cast<std::size_t>(nl - bytes.begin()) + 1;
  if (bytes.size() - offset != count * elem)
    throw Error(ErrorCode::ShapeMismatch, "tensor payload size does not match dims");
  const std::uint8_t* p = bytes.data() + offset;
  if (t.dtype == TensorDType::F32) {
    t.f32.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u = std::uint32_t(p[4 * i]) | std::uint32_t(p[4 * i + 1]) << 8 |
                        std::uint32_t(p[4 * i + 2]) << 16 | std::uint32_t(p[4 * i + 3]) << 24;
      t.f32[i] = std::bit_cast<float>(u);
    }
  } else {
    t.u16.resize(count);
    for (std::size_t i = 0; i < count; ++i)
      t.u16[i] = static_cast<std::uint16_t>(p[2 * i] | p[2 * i + 1] << 8);
  }
  return t;
}

void write_raw_tensor(const fs::path& path, const RawTensor& t) {
  nlohmann::json header;
  header["dims"] = t.dims;
  header["dtype"] = t.dtype == TensorDType::F32 ? "f32" : "u16";
  header["probability"] = t.probability;
  const std::string head = std::string(kTensorMagic, kTensorMagicLen) + header.dump() + "\n";
  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  if (t.dtype == TensorDType::F32) {
    for (float f : t.f32) {
      const auto u = std::bit_cast<std::uint32_t>(f);
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * b)));
    }
  } else {
    for (std::uint16_t v : t.u16) {
      bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
      bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    }
  }
  write_bytes(path, bytes);
}

ImagePlane load_image(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (is_png(bytes)) {
    const DecodedPng png = decode_png(bytes);
    if (png.bit_depth != 8) throw Error(ErrorCode::UnsupportedFormat, "images must be 8-bit PNG");
    // Alpha is dropped; gray stays single-channel.
    const int keep = (png.channels == 2 || png.channels == 4) ? png.channels - 1 : png.channels;
    ImagePlane img{png.width, png.height, keep, {}};
    img.data.resize(img.pixel_count() * keep);
    for (std::size_t p = 0; p < img.pixel_count(); ++p)
      for (int c = 0; c < keep; ++c)
        img.data[p * keep + c] = static_cast<float>(png.samples[p * png.channels + c] / 255.0);
    return img;
  }
  if (has_prefix(bytes, "P6")) return decode_ppm(bytes);
  if (bytes.empty()) throw Error(ErrorCode::CorruptFile, path.string() + " is empty");
  throw Error(ErrorCode::UnsupportedFormat, path.string() + " is neither PNG nor PPM (P6)");
}

void save_png(const fs::path& path, const ImagePlane& img) {
  if (img.channels < 1 || img.channels > 4)
    throw Error(ErrorCode::UnsupportedFormat, "PNG needs 1-4 channels");
  std::vector<std::uint16_t> samples(img.data.size());
  std::transform(img.data.begin(), img.data.end(), samples.begin(), to_byte);
  write_bytes(path, encode_png(img.width, img.height, img.channels, 8, samples));
}

void save_ppm(const fs::path& path, const ImagePlane& img) {
  if (img.channels != 3) throw Error(ErrorCode::UnsupportedFormat, "PPM needs 3 channels");
  const std::string head =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  for (float v : img.data) bytes.push_back(to_byte(v));
  write_bytes(path, bytes);
}

GrayPng read_gray_png(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (!is_png(bytes)) throw Error(ErrorCode::UnsupportedFormat, path.string() + " is not a PNG");
  DecodedPng png = decode_png(bytes);
  if (png.channels != 1)
    throw Error(ErrorCode::UnsupportedFormat, path.string() + " is not a grayscale PNG");
  return {png.width, png.height, png.bit_depth, std::move(png.samples)};
}

std::vector<std::uint8_t> encode_gray_png(const GrayPng& png) {
  return encode_png(png.width, png.height, 1, png.bit_depth, png.values);
}

std::vector<std::uint8_t> encode_rgb_png(int width, int height, std::span<const std::uint8_t> rgb) {
  std::vector<std::uint16_t> samples(rgb.begin(), rgb.end());
  return encode_png(width, height, 3, 8, samples);
}

void write_gray_png(const fs::path& path, const GrayPng& png) {
  write_bytes(path, encode_gray_png(png));
}

void write_rgb_png(const fs::path& path, int width, int height, std::span<const std::uint8_t> rgb) {
  write_bytes(path, encode_rgb_png(width, height, rgb));
}

void check_probability(const DenseFieldMap& field) {
  for (std::size_t p = 0; p < field.pixel_count(); ++p) {
    double sum = 0.0;
    for (float v : field.pixel(p)) {
      if (!(v >= 0.0f && v <= 1.0f))
        throw Error(ErrorCode::NotNormalized,
                    "probability entry outside [0,1] at pixel " + std::to_string(p));
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-4)
      throw Error(ErrorCode::NotNormalized,
                  "probabilities sum to " + std::to_string(sum) + " at pixel " + std::to_string(p));
  }
}

DenseFieldMap load_field(const fs::path& path, bool expect_probability) {
  RawTensor t = read_raw_tensor(path);
  DenseFieldMap f;
  f.height = t.dims[0];
  f.width = t.dims[1];
  f.depth = t.dims[2];
  f.probability = expect_probability;
  if (t.dtype == TensorDType::F32) {
    f.values = std::move(t.f32);
  } else {
    f.values.assign(t.u16.begin(), t.u16.end());
  }
  if (expect_probability) check_probability(f);
  return f;
}

void save_field(const fs::path& path, const DenseFieldMap& field) {
  if (field.values.size() != field.pixel_count() * field.depth)
    throw Error(ErrorCode::ShapeMismatch, "field data length does not match dims");
  RawTensor t;
  t.dims = {field.height, field.width, field.depth};
  t.dtype = TensorDType::F32;
  t.probability = field.probability;
  t.f32 = field.values;
  write_raw_tensor(path, t);
}

SuperpixelMap relabel_connected(int width, int height, std::span<const std::int32_t> ids) {
  const ComponentLabels comps = label_components(width, height, ids, -1);
  if (std::find(ids.begin(), ids.end(), -1) != ids.end())
    throw Error(ErrorCode::CorruptFile, "negative superpixel id");
  // Order components by (original id, first pixel) so valid dense maps keep their ids.
  std::vector<std::pair<std::int32_t, std::size_t>> key(comps.count, {0, SIZE_MAX});
  for (std::size_t p = 0; p < ids.size(); ++p) {
    auto& k = key[comps.ids[p]];
    if (k.second == SIZE_MAX) k = {ids[p], p};
  }
  std::vector<std::int32_t> order(comps.count);
  for (std::int32_t i = 0; i < comps.count; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return key[a] < key[b]; });
  std::vector<std::int32_t> remap(comps.count);
  for (std::int32_t rank = 0; rank < comps.count; ++rank) remap[order[rank]] = rank;

  SuperpixelMap sp{width, height, std::vector<std::int32_t>(ids.size()), comps.count};
  for (std::size_t p = 0; p < ids.size(); ++p) sp.ids[p] = remap[comps.ids[p]];
  return sp;
}

SuperpixelMap load_superpixels(const fs::path& path) {
  const auto bytes = read_bytes(path);
  std::vector<std::int32_t> ids;
  int w = 0, h = 0;
  if (is_png(bytes)) {
    const GrayPng png = read_gray_png(path);
    w = png.width;
    h = png.height;
    ids.assign(png.values.begin(), png.values.end());
  } else if (has_prefix(bytes, {kTensorMagic, kTensorMagicLen})) {
    const RawTensor t = read_raw_tensor(path);
    if (t.dims[2] != 1) throw Error(ErrorCode::ShapeMismatch, "superpixel tensor needs D=1");
    h = t.dims[0];
    w = t.dims[1];
    if (t.dtype == TensorDType::U16) {
      ids.assign(t.u16.begin(), t.u16.end());
    } else {
      ids.reserve(t.f32.size());
      for (float f : t.f32) ids.push_back(static_cast<std::int32_t>(f));
    }
  } else {
    throw Error(ErrorCode::UnsupportedFormat, path.string() + " is not a PNG or CSEG1 tensor");
  }
  return relabel_connected(w, h, ids);
}

void save_superpixels(const fs::path& path, const SuperpixelMap& sp) {
  if (sp.count > 65536) throw Error(ErrorCode::UnsupportedFormat, "more than 65536 superpixels");
  GrayPng png{sp.width, sp.height, 16, std::vector<std::uint16_t>(sp.ids.begin(), sp.ids.end())};
  write_gray_png(path, png);
}

SuperpixelMap grid_superpixels(int width, int height, int target_count) {
  target_count = std::max(target_count, 1);
  width = std::max(width, 1);
  height = std::max(height, 1);
  int rows = static_cast<int>(std::lround(std::sqrt(double(target_count) * height / width)));
  rows = std::clamp(rows, 1, std::min(height, target_count));
  int cols = std::min(width, (target_count + rows - 1) / rows);
  if (rows * cols < target_count) rows = std::min(height, (target_count + cols - 1) / cols);

  // Tile boundaries round up so leading tiles take the remainder.
  auto edge = [](int i, int extent, int parts) { return (i * extent + parts - 1) / parts; };
  std::vector<int> col_of(width), row_of(height);
  for (int c = 0; c < cols; ++c)
    for (int x = edge(c, width, cols); x < edge(c + 1, width, cols); ++x) col_of[x] = c;
  for (int r = 0; r < rows; ++r)
    for (int y = edge(r, height, rows); y < edge(r + 1, height, rows); ++y) row_of[y] = r;

  SuperpixelMap sp{width, height, std::vector<std::int32_t>(static_cast<std::size_t>(width) * height),
                   rows * cols};
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      sp.ids[static_cast<std::size_t>(y) * width + x] = row_of[y] * cols + col_of[x];
  return sp;
}

PanopticTruth load_truth(const fs::path& path) {
  const auto bytes = read_bytes(path);
  PanopticTruth t;
  if (is_png(bytes)) {
    const GrayPng png = read_gray_png(path);
    t.width = png.width;
    t.height = png.height;
    t.class_ids.resize(png.values.size());
    t.instance_ids.resize(png.values.size());
    for (std::size_t i = 0; i < png.values.size(); ++i) {
      const std::uint16_t v = png.values[i];
      if (png.bit_depth == 16 && v >= 1000) {
        t.class_ids[i] = static_cast<std::uint16_t>(v / 1000);
        t.instance_ids[i] = v % 1000;
      } else {
        t.class_ids[i] = v;
        t.instance_ids[i] = 0;
      }
    }
    return t;
  }
  if (has_prefix(bytes, {kTensorMagic, kTensorMagicLen})) {
    const RawTensor raw = read_raw_tensor(path);
    if (raw.dtype != TensorDType::U16 || (raw.dims[2] != 1 && raw.dims[2] != 2))
      throw Error(ErrorCode::ShapeMismatch, "truth tensor must be u16 with D=1 or D=2");
    t.height = raw.dims[0];
    t.width = raw.dims[1];
    const int d = raw.dims[2];
    t.class_ids.resize(t.pixel_count());
    t.instance_ids.assign(t.pixel_count(), 0);
    for (std::size_t i = 0; i < t.pixel_count(); ++i) {
      t.class_ids[i] = raw.u16[i * d];
      if (d == 2) t.instance_ids[i] = raw.u16[i * d + 1];
    }
    return t;
  }
  throw Error(ErrorCode::UnsupportedFormat, path.string() + " is not a PNG or CSEG1 tensor");
}

void save_truth(const fs::path& path, const PanopticTruth& truth) {
  const auto ext = path.extension().string();
  if (ext == ".png") {
    GrayPng png{truth.width, truth.height, 16, std::vector<std::uint16_t>(truth.pixel_count())};
    for (std::size_t i = 0; i < truth.pixel_count(); ++i) {
      const std::uint32_t c = truth.class_ids[i];
      const std::uint32_t inst = truth.instance_ids[i];
      if (inst == 0) {
        if (c >= 1000) throw Error(ErrorCode::UnsupportedFormat, "class id too large for PNG truth");
        png.values[i] = static_cast<std::uint16_t>(c);
      } else {
        if (c == 0 || inst >= 1000 || c * 1000 + inst > 65535)
          throw Error(ErrorCode::UnsupportedFormat,
                      "instance not representable as class*1000+instance; use a tensor file");
        png.values[i] = static_cast<std::uint16_t>(c * 1000 + inst);
      }
    }
    write_gray_png(path, png);
    return;
  }
  RawTensor raw;
  raw.dims = {truth.height, truth.width, 2};
  raw.dtype = TensorDType::U16;
  raw.u16.resize(truth.pixel_count() * 2);
  for (std::size_t i = 0; i < truth.pixel_count(); ++i) {
    raw.u16[2 * i] = truth.class_ids[i];
    if (truth.instance_ids[i] > 65535) throw Error(ErrorCode::UnsupportedFormat, "instance id > 65535");
    raw.u16[2 * i + 1] = static_cast<std::uint16_t>(truth.instance_ids[i]);
  }
  write_raw_tensor(path, raw);
}

}  // namespace cseg
