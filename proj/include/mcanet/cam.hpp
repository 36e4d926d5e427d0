#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mcanet/backbone.hpp"
#include "mcanet/data.hpp"
#include "mcanet/model.hpp"

namespace mcanet {

struct ActivationMap {
  std::size_t height = 0;  // feature-map resolution
  std::size_t width = 0;
  std::vector<double> raw;         // X_j^T m_i per location
  std::vector<double> normalized;  // min-max scaled to [0,1]; zeros when constant
  std::size_t out_height = 0;      // input resolution
  std::size_t out_width = 0;
  std::vector<double> upsampled;

  double at(std::size_t y, std::size_t x) const { return upsampled[y * out_width + x]; }

  struct Peak {
    std::size_t x = 0;
    std::size_t y = 0;
  };
  // First maximum of the upsampled map in row-major order.
  Peak peak() const;
};

// Values scaled so min -> 0 and max -> 1; a constant input maps to zeros.
std::vector<double> min_max_normalize(const std::vector<double>& values);

// Half-pixel-centred bilinear resampling of a row-major [h, w] grid with
// mirrored borders.
std::vector<double> upsample_bilinear(const std::vector<double>& grid, std::size_t h, std::size_t w,
                                      std::size_t out_h, std::size_t out_w);

// Class activation map of sample n for class i; the raw map is the class
// score map used by the attention head. ConfigError if i >= C or n >= N.
template <typename T>
ActivationMap compute_cam(const FeatureMap<T>& x, const Tensor<T>& classifier, std::size_t class_index,
                          std::size_t out_height, std::size_t out_width, std::size_t sample = 0);

// Runs the backbone in eval mode on one [3,S,S] image.
template <typename T>
ActivationMap compute_cam(Model<T>& model, const Tensor<T>& image, std::size_t class_index);

// Blue (0) to red (1).
void colormap(double v, std::uint8_t rgb[3]);

// Original on the left, 50/50 blend of original and colormap on the right,
// separated by a white gutter: output is (H, 2W + gutter).
RgbImage render_heatmap(const ActivationMap& map, const RgbImage& base, std::size_t gutter = 4);
void render_heatmap(const ActivationMap& map, const RgbImage& base, const std::filesystem::path& out_path,
                    std::size_t gutter = 4);

std::string cam_filename(const std::string& image_stem, const std::string& class_name);

// Hit iff the peak of the upsampled map lies inside the inclusive box.
// ConfigError if the box is outside the map.
bool localization_score(const ActivationMap& map, const ShapeBox& box);

}  // namespace mcanet
