#include "mcanet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "mcanet/rng.hpp"

namespace mcanet {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

fs::path Manifest::resolve(const ManifestRow& row) const {
  fs::path p(row.image_path);
  return p.is_absolute() ? p : base_dir / p;
}

Manifest load_manifest(const fs::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest " + path.string() + " is empty");
  auto header = split_csv_line(strip(line));
  if (header.size() < 2 || strip(header[0]) != "image_path") {
    throw DataError("manifest " + path.string() +
                    ": header must be \"image_path,<class1>,...,<classC>\"");
  }
  for (std::size_t i = 1; i < header.size(); ++i) {
    std::string name = strip(header[i]);
    if (name.empty()) throw DataError("manifest header has an empty class name");
    m.class_names.push_back(std::move(name));
  }
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    line = strip(line);
    if (line.empty()) continue;
    ++row_number;
    auto cells = split_csv_line(line);
    if (cells.size() != m.class_names.size() + 1) {
      throw DataError("manifest row " + std::to_string(row_number) + ": expected " +
                      std::to_string(m.class_names.size() + 1) + " fields, got " +
                      std::to_string(cells.size()));
    }
    ManifestRow row{strip(cells[0]), {}};
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const std::string v = strip(cells[c]);
      if (v != "0" && v != "1") {
        throw DataError("manifest row " + std::to_string(row_number) + ", class '" +
                        m.class_names[c - 1] + "': label \"" + v + "\" is not 0 or 1");
      }
      row.labels.push_back(v == "1" ? 1 : 0);
    }
    if (check_files && !fs::exists(m.resolve(row))) {
      throw DataError("manifest row " + std::to_string(row_number) + ": image " +
                      m.resolve(row).string() + " does not exist");
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << "image_path";
  for (const auto& c : manifest.class_names) out << ',' << c;
  out << '\n';
  for (const auto& r : manifest.rows) {
    out << r.image_path;
    for (auto l : r.labels) out << ',' << static_cast<int>(l);
    out << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path.string());
}

// ---------------------------------------------------------------------------
// PPM

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw FormatError("not a binary PPM: expected magic \"P6\"", 0);
  }
  std::size_t pos = 2;
  auto skip_space = [&] {
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
  auto read_number = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1u << 24)) throw FormatError(std::string("PPM ") + what + " too large", start);
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("PPM header: missing ") + what, start);
    return v;
  };
  const std::size_t w = read_number("width");
  const std::size_t h = read_number("height");
  const std::size_t maxval_at = pos;
  const std::size_t maxval = read_number("maxval");
  if (maxval != 255) throw FormatError("PPM maxval must be 255", maxval_at);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError("PPM header not terminated by whitespace", pos);
  }
  ++pos;
  const std::size_t need = w * h * 3;
  if (bytes.size() - pos < need) {
    throw FormatError("PPM payload truncated: need " + std::to_string(need) + " bytes, have " +
                          std::to_string(bytes.size() - pos),
                      bytes.size());
  }
  RgbImage img(w, h);
  std::copy(bytes.begin() + pos, bytes.begin() + pos + need, img.pixels.begin());
  return img;
}

RgbImage read_ppm(const fs::path& path) { return decode_ppm(read_file(path)); }

void write_ppm(const fs::path& path, const RgbImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto bytes = encode_ppm(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename T>
Tensor<T> image_to_tensor(const RgbImage& image) {
  Tensor<T> t(Dims{3, image.height, image.width});
  const std::size_t plane = image.width * image.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      t[c * plane + i] = static_cast<T>(image.pixels[i * 3 + c]) / T(255);
  return t;
}

template <typename T>
RgbImage tensor_to_image(const Tensor<T>& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) {
    throw ConfigError("tensor_to_image expects [3,H,W], got " + dims_to_string(chw.dims()));
  }
  RgbImage img(chw.dim(2), chw.dim(1));
  const std::size_t plane = img.width * img.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(chw[c * plane + i]), 0.0, 1.0);
      img.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  return img;
}

template <typename T>
Tensor<T> decode_image(const fs::path& path) {
  return image_to_tensor<T>(read_ppm(path));
}

// ---------------------------------------------------------------------------
// Augmentation

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& image, std::size_t out_h, std::size_t out_w,
                          std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (image.rank() != 3) {
    throw ConfigError("resize_bilinear expects [C,H,W], got " + dims_to_string(image.dims()));
  }
  const std::size_t c = image.dim(0), ih = image.dim(1), iw = image.dim(2);
  if (w == 0) w = iw - x0;
  if (h == 0) h = ih - y0;
  if (x0 + w > iw || y0 + h > ih || out_h == 0 || out_w == 0) {
    throw ConfigError("resize_bilinear region out of range");
  }
  Tensor<T> out(Dims{c, out_h, out_w});
  const double sy = out_h > 1 ? static_cast<double>(h - 1) / static_cast<double>(out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(w - 1) / static_cast<double>(out_w - 1) : 0.0;
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = y0 + oy * sy;
    const std::size_t y_lo = static_cast<std::size_t>(std::floor(fy));
    const std::size_t y_hi = std::min(y_lo + 1, y0 + h - 1);
    const double ty = fy - static_cast<double>(y_lo);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = x0 + ox * sx;
      const std::size_t x_lo = static_cast<std::size_t>(std::floor(fx));
      const std::size_t x_hi = std::min(x_lo + 1, x0 + w - 1);
      const double tx = fx - static_cast<double>(x_lo);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = image.data().data() + ch * ih * iw;
        const double top = p[y_lo * iw + x_lo] * (1 - tx) + p[y_lo * iw + x_hi] * tx;
        const double bot = p[y_hi * iw + x_lo] * (1 - tx) + p[y_hi * iw + x_hi] * tx;
        out[(ch * out_h + oy) * out_w + ox] = static_cast<T>(top * (1 - ty) + bot * ty);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& image) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor<T> out = Tensor<T>::zeros_like(image);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[(ch * h + y) * w + x] = image[(ch * h + y) * w + (w - 1 - x)];
  return out;
}

void AugmentConfig::validate() const {
  if (flip_probability < 0 || flip_probability > 1) throw ConfigError("flip probability must be in [0,1]");
  if (!(crop_area_min > 0) || crop_area_min > crop_area_max || crop_area_max > 1) {
    throw ConfigError("crop area range must satisfy 0 < min <= max <= 1");
  }
  if (!(aspect_min > 0) || aspect_min > aspect_max) throw ConfigError("invalid aspect range");
}

template <typename T>
LabeledSample<T> augment(const LabeledSample<T>& sample, std::mt19937_64& rng,
                         std::size_t target_size, const AugmentConfig& config) {
  if (target_size < 8) throw ConfigError("augment target size must be >= 8");
  config.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool flip = unit(rng) < config.flip_probability;
  const std::size_t h = sample.image.dim(1), w = sample.image.dim(2);
  std::size_t cw = w, ch = h, cx = 0, cy = 0;
  const double area = static_cast<double>(w * h);
  const double log_lo = std::log(config.aspect_min), log_hi = std::log(config.aspect_max);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double a = area * (config.crop_area_min +
                             (config.crop_area_max - config.crop_area_min) * unit(rng));
    const double aspect = std::exp(log_lo + (log_hi - log_lo) * unit(rng));
    const auto tw = static_cast<std::size_t>(std::lround(std::sqrt(a * aspect)));
    const auto th = static_cast<std::size_t>(std::lround(std::sqrt(a / aspect)));
    if (tw >= 1 && th >= 1 && tw <= w && th <= h) {
      cw = tw;
      ch = th;
      cx = std::uniform_int_distribution<std::size_t>(0, w - tw)(rng);
      cy = std::uniform_int_distribution<std::size_t>(0, h - th)(rng);
      break;
    }
  }
  Tensor<T> img = flip ? flip_horizontal(sample.image) : sample.image;
  return LabeledSample<T>{resize_bilinear(img, target_size, target_size, cx, cy, cw, ch),
                          sample.labels};
}

template <typename T>
std::vector<LabeledSample<T>> load_samples(const Manifest& manifest, std::size_t image_size) {
  std::vector<LabeledSample<T>> out;
  out.reserve(manifest.rows.size());
  for (const auto& row : manifest.rows) {
    Tensor<T> img = decode_image<T>(manifest.resolve(row));
    if (img.dim(1) != image_size || img.dim(2) != image_size) {
      img = resize_bilinear(img, image_size, image_size);
    }
    out.push_back({std::move(img), row.labels});
  }
  return out;
}

std::pair<Manifest, Manifest> split_train_test(const Manifest& manifest, double fraction,
                                               std::uint64_t seed) {
  if (!(fraction > 0 && fraction < 1)) {
    throw ConfigError("split fraction must be in (0,1), got " + std::to_string(fraction));
  }
  if (manifest.rows.empty()) throw DataError("cannot split an empty manifest");
  std::vector<std::size_t> order(manifest.rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, {0x5b117}));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(manifest.rows.size()) - 1e-9));
  Manifest train{manifest.class_names, {}, manifest.base_dir};
  Manifest test{manifest.class_names, {}, manifest.base_dir};
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train : test).rows.push_back(manifest.rows[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Synthetic shapes

const std::vector<std::string>& synthetic_class_names() {
  static const std::vector<std::string> names{"hbar", "vbar",     "square", "ring",
                                              "diamond", "triangle", "cross", "disc"};
  return names;
}

namespace {

struct Rgb {
  int r, g, b;
};

// Class-specific colours, same order as synthetic_class_names().
constexpr Rgb kColors[8] = {{50, 80, 235},  {240, 140, 30}, {225, 35, 35},  {40, 200, 60},
                            {245, 245, 245}, {215, 50, 215}, {235, 215, 35}, {35, 215, 225}};

class Canvas {
 public:
  Canvas(RgbImage& img, std::mt19937_64& rng) : img_(img), rng_(rng) {}

  template <typename Inside>
  void paint(Rgb color, std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1,
             Inside inside) {
    std::uniform_int_distribution<int> jitter(-12, 12);
    for (std::size_t y = y0; y <= y1 && y < img_.height; ++y) {
      for (std::size_t x = x0; x <= x1 && x < img_.width; ++x) {
        if (!inside(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
        std::uint8_t* p = img_.at(x, y);
        p[0] = static_cast<std::uint8_t>(std::clamp(color.r + jitter(rng_), 0, 255));
        p[1] = static_cast<std::uint8_t>(std::clamp(color.g + jitter(rng_), 0, 255));
        p[2] = static_cast<std::uint8_t>(std::clamp(color.b + jitter(rng_), 0, 255));
      }
    }
  }

 private:
  RgbImage& img_;
  std::mt19937_64& rng_;
};

}  // namespace

RgbImage render_synthetic_image(std::size_t s, const std::vector<bool>& present,
                                std::uint64_t seed, std::vector<ShapeBox>* boxes) {
  if (s < 24) throw ConfigError("synthetic image size must be >= 24");
  if (present.size() > synthetic_class_names().size()) {
    throw ConfigError("synthetic generator supports at most 8 classes");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RgbImage img(s, s);

  // Textured background: per-image grey level, a smooth ripple, pixel noise.
  const double base = 70 + 40 * unit(rng);
  const double fx = 0.15 + 0.35 * unit(rng), fy = 0.15 + 0.35 * unit(rng);
  const double phase = 6.283 * unit(rng);
  std::uniform_int_distribution<int> noise(-18, 18);
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      const double ripple = 14 * std::sin(fx * x + fy * y + phase);
      std::uint8_t* p = img.at(x, y);
      for (int c = 0; c < 3; ++c) {
        p[c] = static_cast<std::uint8_t>(std::clamp(static_cast<int>(base + ripple) + noise(rng), 0, 255));
      }
    }
  }

  Canvas canvas(img, rng);
  const double sd = static_cast<double>(s);
  auto extent = [&](double lo, double hi) {
    return std::max<std::size_t>(3, static_cast<std::size_t>(std::lround(sd * (lo + (hi - lo) * unit(rng)))));
  };
  auto origin = [&](std::size_t size) {
    return std::uniform_int_distribution<std::size_t>(0, s - size)(rng);
  };
  for (std::size_t cls = 0; cls < present.size(); ++cls) {
    if (!present[cls]) continue;
    const Rgb color = kColors[cls];
    std::size_t x0 = 0, y0 = 0, w = s, h = s;
    switch (cls) {
      case 0: {  // horizontal bar across the full width
        h = extent(0.28, 0.34);
        y0 = origin(h);
        canvas.paint(color, 0, y0, s - 1, y0 + h - 1, [](double, double) { return true; });
        break;
      }
      case 1: {  // vertical bar across the full height
        w = extent(0.28, 0.34);
        x0 = origin(w);
        canvas.paint(color, x0, 0, x0 + w - 1, s - 1, [](double, double) { return true; });
        break;
      }
      case 2: {  // large filled square
        w = h = extent(0.5, 0.72);
        x0 = origin(w);
        y0 = origin(h);
        canvas.paint(color, x0, y0, x0 + w - 1, y0 + h - 1, [](double, double) { return true; });
        break;
      }
      case 3: {  // ring
        w = h = extent(0.45, 0.6);
        x0 = origin(w);
        y0 = origin(h);
        const double cx = x0 + w / 2.0, cy = y0 + h / 2.0, ro = w / 2.0;
        const double ri = ro - std::max(2.0, 0.1 * sd);
        canvas.paint(color, x0, y0, x0 + w - 1, y0 + h - 1, [=](double x, double y) {
          const double r = std::hypot(x - cx, y - cy);
          return r <= ro && r >= ri;
        });
        break;
      }
      case 4: {  // diamond
        w = h = extent(0.38, 0.5);
        x0 = origin(w);
        y0 = origin(h);
        const double cx = x0 + w / 2.0, cy = y0 + h / 2.0, r = w / 2.0;
        canvas.paint(color, x0, y0, x0 + w - 1, y0 + h - 1, [=](double x, double y) {
          return std::abs(x - cx) + std::abs(y - cy) <= r;
        });
        break;
      }
      case 5: {  // upward triangle
        w = h = extent(0.38, 0.5);
        x0 = origin(w);
        y0 = origin(h);
        const double cx = x0 + w / 2.0, top = y0, half = w / 2.0, height = h;
        canvas.paint(color, x0, y0, x0 + w - 1, y0 + h - 1, [=](double x, double y) {
          return std::abs(x - cx) <= half * (y - top) / height;
        });
        break;
      }
      case 6: {  // plus-shaped cross
        w = h = extent(0.4, 0.52);
        x0 = origin(w);
        y0 = origin(h);
        const double cx = x0 + w / 2.0, cy = y0 + h / 2.0, arm = std::max(1.5, 0.07 * sd);
        canvas.paint(color, x0, y0, x0 + w - 1, y0 + h - 1, [=](double x, double y) {
          return std::abs(x - cx) <= arm || std::abs(y - cy) <= arm;
        });
        break;
      }
      default: {  // small disc
        w = h = extent(0.32, 0.4);
        x0 = origin(w);
        y0 = origin(h);
        const double cx = x0 + w / 2.0, cy = y0 + h / 2.0, r = w / 2.0;
        canvas.paint(color, x0, y0, x0 + w - 1, y0 + h - 1, [=](double x, double y) {
          return std::hypot(x - cx, y - cy) <= r;
        });
        break;
      }
    }
    if (boxes) {
      boxes->push_back({"", synthetic_class_names()[cls], x0, y0, x0 + w - 1, y0 + h - 1});
    }
  }
  return img;
}

SynthResult generate_synthetic_dataset(const SynthOptions& options) {
  if (options.num_classes < 1 || options.num_classes > 8) {
    throw ConfigError("synthetic generator supports 1..8 classes, got " +
                      std::to_string(options.num_classes));
  }
  if (options.image_size < 24) throw ConfigError("synthetic image size must be >= 24");
  std::error_code ec;
  fs::create_directories(options.out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (options.out_dir / "images").string() + ": " + ec.message());

  SynthResult result;
  result.manifest.base_dir = options.out_dir;
  const auto& names = synthetic_class_names();
  result.manifest.class_names.assign(names.begin(), names.begin() + options.num_classes);
  for (std::size_t i = 0; i < options.n_images; ++i) {
    std::mt19937_64 pick(derive_seed(options.seed, {i, 1}));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<bool> present(options.num_classes);
    for (std::size_t c = 0; c < options.num_classes; ++c) {
      present[c] = unit(pick) < options.presence_probability;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "images/img_%05zu.ppm", i);
    std::vector<ShapeBox> boxes;
    const RgbImage img =
        render_synthetic_image(options.image_size, present, derive_seed(options.seed, {i, 2}), &boxes);
    write_ppm(options.out_dir / name, img);
    ManifestRow row{name, {}};
    for (bool p : present) row.labels.push_back(p ? 1 : 0);
    result.manifest.rows.push_back(std::move(row));
    for (auto& b : boxes) {
      b.image_path = name;
      result.boxes.push_back(std::move(b));
    }
  }
  save_manifest(result.manifest, options.out_dir / "manifest.csv");
  save_boxes(result.boxes, options.out_dir / "boxes.csv");
  return result;
}

std::vector<ShapeBox> load_boxes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open boxes file " + path.string());
  std::string line;
  std::getline(in, line);
  if (strip(line) != "image_path,class,xmin,ymin,xmax,ymax") {
    throw DataError("boxes file " + path.string() +
                    ": header must be \"image_path,class,xmin,ymin,xmax,ymax\"");
  }
  std::vector<ShapeBox> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    line = strip(line);
    if (line.empty()) continue;
    ++row;
    auto cells = split_csv_line(line);
    if (cells.size() != 6) {
      throw DataError("boxes row " + std::to_string(row) + ": expected 6 fields");
    }
    try {
      out.push_back({cells[0], cells[1], std::stoul(cells[2]), std::stoul(cells[3]),
                     std::stoul(cells[4]), std::stoul(cells[5])});
    } catch (const std::exception&) {
      throw DataError("boxes row " + std::to_string(row) + ": bad coordinate");
    }
  }
  return out;
}

void save_boxes(const std::vector<ShapeBox>& boxes, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "image_path,class,xmin,ymin,xmax,ymax\n";
  for (const auto& b : boxes) {
    out << b.image_path << ',' << b.class_name << ',' << b.xmin << ',' << b.ymin << ','
        << b.xmax << ',' << b.ymax << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

#define MCANET_INSTANTIATE_DATA(T)                                                           \
  template Tensor<T> image_to_tensor(const RgbImage&);                                       \
  template RgbImage tensor_to_image(const Tensor<T>&);                                       \
  template Tensor<T> decode_image(const fs::path&);                                          \
  template Tensor<T> resize_bilinear(const Tensor<T>&, std::size_t, std::size_t, std::size_t, \
                                     std::size_t, std::size_t, std::size_t);                 \
  template Tensor<T> flip_horizontal(const Tensor<T>&);                                      \
  template LabeledSample<T> augment(const LabeledSample<T>&, std::mt19937_64&, std::size_t,  \
                                    const AugmentConfig&);                                   \
  template std::vector<LabeledSample<T>> load_samples(const Manifest&, std::size_t);

MCANET_INSTANTIATE_DATA(float)
MCANET_INSTANTIATE_DATA(double)

}  // namespace mcanet
