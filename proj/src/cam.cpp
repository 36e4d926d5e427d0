#include "mcanet/cam.hpp"

#include <algorithm>
#include <cmath>

#include "mcanet/csra.hpp"
#include "mcanet/errors.hpp"

namespace mcanet {

ActivationMap::Peak ActivationMap::peak() const {
  if (upsampled.empty()) throw ConfigError("activation map is empty");
  const auto it = std::max_element(upsampled.begin(), upsampled.end());
  const auto idx = static_cast<std::size_t>(it - upsampled.begin());
  return {idx % out_width, idx / out_width};
}

std::vector<double> min_max_normalize(const std::vector<double>& values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

std::vector<double> upsample_bilinear(const std::vector<double>& grid, std::size_t h, std::size_t w,
                                      std::size_t out_h, std::size_t out_w) {
  if (grid.size() != h * w || h == 0 || w == 0) throw ConfigError("grid size does not match h*w");
  // Sample positions outside the outermost cell centres are mirrored back
  // inside, so a border cell peaks next to its centre rather than on a
  // clamped plateau at the image edge.
  auto source = [](std::size_t dst, std::size_t in, std::size_t out, std::size_t& i0, std::size_t& i1,
                   double& frac) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    const double last = static_cast<double>(in - 1);
    if (s < 0) s = -s;
    if (s > last) s = 2 * last - s;
    s = std::clamp(s, 0.0, last);
    i0 = static_cast<std::size_t>(std::floor(s));
    i1 = std::min(i0 + 1, in - 1);
    frac = s - static_cast<double>(i0);
  };
  std::vector<double> out(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double fy;
    source(y, h, out_h, y0, y1, fy);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double fx;
      source(x, w, out_w, x0, x1, fx);
      const double top = grid[y0 * w + x0] * (1 - fx) + grid[y0 * w + x1] * fx;
      const double bottom = grid[y1 * w + x0] * (1 - fx) + grid[y1 * w + x1] * fx;
      out[y * out_w + x] = top * (1 - fy) + bottom * fy;
    }
  }
  return out;
}

template <typename T>
ActivationMap compute_cam(const FeatureMap<T>& x, const Tensor<T>& classifier, std::size_t class_index,
                          std::size_t out_height, std::size_t out_width, std::size_t sample) {
  if (classifier.rank() != 2) throw ConfigError("classifier must be [C,d]");
  if (class_index >= classifier.dim(0)) {
    throw ConfigError("class index " + std::to_string(class_index) + " out of range for " +
                      std::to_string(classifier.dim(0)) + " classes");
  }
  if (sample >= x.batch()) throw ConfigError("sample index " + std::to_string(sample) + " out of range");
  const Tensor<T> maps = class_score_maps(x, classifier);
  ActivationMap cam;
  cam.height = x.height();
  cam.width = x.width();
  cam.raw.resize(x.locations());
  for (std::size_t j = 0; j < x.locations(); ++j) {
    cam.raw[j] = static_cast<double>(maps.at(sample, class_index, j / x.width(), j % x.width()));
  }
  cam.normalized = min_max_normalize(cam.raw);
  cam.out_height = out_height;
  cam.out_width = out_width;
  cam.upsampled = upsample_bilinear(cam.normalized, cam.height, cam.width, out_height, out_width);
  return cam;
}

template <typename T>
ActivationMap compute_cam(Model<T>& model, const Tensor<T>& image, std::size_t class_index) {
  if (image.rank() != 3) throw ConfigError("expected a [3,S,S] image, got " + dims_to_string(image.dims()));
  const FeatureMap<T> f = model.features(image.reshaped(Dims{1, image.dim(0), image.dim(1), image.dim(2)}));
  return compute_cam(f, model.classifier().value, class_index, image.dim(1), image.dim(2));
}

void colormap(double v, std::uint8_t rgb[3]) {
  v = std::clamp(v, 0.0, 1.0);
  rgb[0] = static_cast<std::uint8_t>(std::lround(255 * v));
  rgb[1] = 0;
  rgb[2] = static_cast<std::uint8_t>(std::lround(255 * (1 - v)));
}

RgbImage render_heatmap(const ActivationMap& map, const RgbImage& base, std::size_t gutter) {
  if (map.out_width != base.width || map.out_height != base.height) {
    throw ConfigError("activation map is " + std::to_string(map.out_height) + "x" +
                      std::to_string(map.out_width) + " but the image is " + std::to_string(base.height) +
                      "x" + std::to_string(base.width));
  }
  RgbImage out(2 * base.width + gutter, base.height);
  std::fill(out.pixels.begin(), out.pixels.end(), 255);
  for (std::size_t y = 0; y < base.height; ++y) {
    for (std::size_t x = 0; x < base.width; ++x) {
      const std::uint8_t* src = base.at(x, y);
      std::copy(src, src + 3, out.at(x, y));
      std::uint8_t heat[3];
      colormap(map.at(y, x), heat);
      std::uint8_t* dst = out.at(base.width + gutter + x, y);
      for (int c = 0; c < 3; ++c) dst[c] = static_cast<std::uint8_t>((src[c] + heat[c] + 1) / 2);
    }
  }
  return out;
}

void render_heatmap(const ActivationMap& map, const RgbImage& base, const std::filesystem::path& out_path,
                    std::size_t gutter) {
  write_ppm(out_path, render_heatmap(map, base, gutter));
}

std::string cam_filename(const std::string& image_stem, const std::string& class_name) {
  return image_stem + "_cam_" + class_name + ".ppm";
}

bool localization_score(const ActivationMap& map, const ShapeBox& box) {
  if (box.xmin > box.xmax || box.ymin > box.ymax || box.xmax >= map.out_width || box.ymax >= map.out_height) {
    throw ConfigError("box [" + std::to_string(box.xmin) + "," + std::to_string(box.ymin) + "," +
                      std::to_string(box.xmax) + "," + std::to_string(box.ymax) + "] lies outside the " +
                      std::to_string(map.out_width) + "x" + std::to_string(map.out_height) + " map");
  }
  const auto p = map.peak();
  return p.x >= box.xmin && p.x <= box.xmax && p.y >= box.ymin && p.y <= box.ymax;
}

template ActivationMap compute_cam(const FeatureMap<float>&, const Tensor<float>&, std::size_t, std::size_t,
                                   std::size_t, std::size_t);
template ActivationMap compute_cam(const FeatureMap<double>&, const Tensor<double>&, std::size_t, std::size_t,
                                   std::size_t, std::size_t);
template ActivationMap compute_cam(Model<float>&, const Tensor<float>&, std::size_t);
template ActivationMap compute_cam(Model<double>&, const Tensor<double>&, std::size_t);

}  // namespace mcanet
