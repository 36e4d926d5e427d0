#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcanet/label_matrix.hpp"
#include "mcanet/tensor.hpp"

namespace mcanet {

// ---------------------------------------------------------------------------
// Manifest: CSV "image_path,<class1>,...,<classC>" with 0/1 cells.

struct ManifestRow {
  std::string image_path;  // as written in the file
  std::vector<std::uint8_t> labels;
};

struct Manifest {
  std::vector<std::string> class_names;
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;  // relative image paths resolve against this

  std::size_t num_classes() const { return class_names.size(); }
  std::filesystem::path resolve(const ManifestRow& row) const;
};

Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// 8-bit RGB images, stored as binary PPM (P6, maxval 255).

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, RGB interleaved

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}
  std::uint8_t* at(std::size_t x, std::size_t y) { return &pixels[(y * width + x) * 3]; }
  const std::uint8_t* at(std::size_t x, std::size_t y) const { return &pixels[(y * width + x) * 3]; }
  bool operator==(const RgbImage&) const = default;
};

std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes);
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

// [3, H, W] with values in [0, 1].
template <typename T>
Tensor<T> image_to_tensor(const RgbImage& image);
template <typename T>
RgbImage tensor_to_image(const Tensor<T>& chw);
template <typename T>
Tensor<T> decode_image(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Samples and augmentation

template <typename T>
struct LabeledSample {
  Tensor<T> image;  // [3, S, S]
  std::vector<std::uint8_t> labels;
};

template <typename T>
LabelMatrix stack_labels(std::span<const LabeledSample<T>> samples) {
  LabelMatrix m(samples.size(), samples.empty() ? 0 : samples[0].labels.size());
  for (std::size_t r = 0; r < samples.size(); ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) = samples[r].labels.at(c);
  }
  return m;
}

// Corner-aligned bilinear resampling of the region [x0, x0+w) x [y0, y0+h)
// of a [3, H, W] image to [3, out_h, out_w].
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& image, std::size_t out_h, std::size_t out_w,
                          std::size_t x0 = 0, std::size_t y0 = 0, std::size_t w = 0,
                          std::size_t h = 0);

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& image);

struct AugmentConfig {
  double flip_probability = 0.5;
  double crop_area_min = 0.6;
  double crop_area_max = 1.0;
  double aspect_min = 3.0 / 4.0;
  double aspect_max = 4.0 / 3.0;

  void validate() const;
};

// Random horizontal flip, random scaled crop, bilinear resize to
// target_size. Labels pass through unchanged.
template <typename T>
LabeledSample<T> augment(const LabeledSample<T>& sample, std::mt19937_64& rng,
                         std::size_t target_size, const AugmentConfig& config = {});

// Decodes every manifest image and resizes it to image_size.
template <typename T>
std::vector<LabeledSample<T>> load_samples(const Manifest& manifest, std::size_t image_size);

// Seeded shuffle; the first ceil(fraction * N) rows form the training split.
std::pair<Manifest, Manifest> split_train_test(const Manifest& manifest, double fraction,
                                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic multi-label shapes

struct ShapeBox {
  std::string image_path;
  std::string class_name;
  std::size_t xmin = 0, ymin = 0, xmax = 0, ymax = 0;  // inclusive pixel bounds
};

struct SynthOptions {
  std::filesystem::path out_dir;
  std::size_t n_images = 200;
  std::size_t image_size = 32;
  std::size_t num_classes = 6;
  std::uint64_t seed = 1;
  double presence_probability = 0.5;
};

// Names of the shape archetypes, in class-index order.
const std::vector<std::string>& synthetic_class_names();

struct SynthResult {
  Manifest manifest;
  std::vector<ShapeBox> boxes;
};

// Draws one image: returns the pixels and, per present class, its box.
RgbImage render_synthetic_image(std::size_t image_size, const std::vector<bool>& present,
                                std::uint64_t seed, std::vector<ShapeBox>* boxes);

// Writes images/, manifest.csv and boxes.csv under out_dir.
SynthResult generate_synthetic_dataset(const SynthOptions& options);

std::vector<ShapeBox> load_boxes(const std::filesystem::path& path);
void save_boxes(const std::vector<ShapeBox>& boxes, const std::filesystem::path& path);

}  // namespace mcanet
