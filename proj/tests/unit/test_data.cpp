#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "generators.hpp"
#include "mcanet/data.hpp"
#include "mcanet/errors.hpp"

using namespace mcanet;
using mcanet::testing::for_all;
using mcanet::testing::Gen;
using mcanet::testing::scratch_dir;

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

Manifest numbered_manifest(std::size_t rows) {
  Manifest m;
  m.class_names = {"a", "b"};
  for (std::size_t i = 0; i < rows; ++i) m.rows.push_back({"img" + std::to_string(i) + ".ppm", {0, 1}});
  return m;
}

std::string data_error_message(const fs::path& p) {
  try {
    load_manifest(p, false);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ManifestTest, ParsesRowsAndClasses) {
  auto dir = scratch_dir("manifest");
  write_text(dir / "m.csv", "image_path,cat,dog\na.ppm,1,0\nb.ppm,0,0\nc.ppm,1,1\n");
  auto m = load_manifest(dir / "m.csv", false);
  EXPECT_EQ(m.num_classes(), 2u);
  ASSERT_EQ(m.rows.size(), 3u);
  EXPECT_EQ(m.rows[2].labels, (std::vector<std::uint8_t>{1, 1}));
  EXPECT_EQ(m.resolve(m.rows[0]), dir / "a.ppm");
}

TEST(ManifestTest, TenDisasterClassesParse) {
  auto dir = scratch_dir("manifest10");
  write_text(dir / "m.csv",
             "image_path,Road Clear,Road Blocked,Building No Damage,Building Minor Damage,"
             "Building Major Damage,Building Total Destruction,Water,Tree,Vehicle,Pool\n"
             "x.ppm,1,0,0,0,0,0,1,1,0,0\n");
  auto m = load_manifest(dir / "m.csv", false);
  EXPECT_EQ(m.num_classes(), 10u);
  EXPECT_EQ(m.class_names[1], "Road Blocked");
}

TEST(ManifestTest, InvalidCellsNameTheRow) {
  auto dir = scratch_dir("manifest_bad");
  write_text(dir / "m.csv", "image_path,a,b\nx.ppm,1,0\ny.ppm,2,0\n");
  EXPECT_NE(data_error_message(dir / "m.csv").find("row 2"), std::string::npos);
  write_text(dir / "m.csv", "image_path,a,b\nx.ppm,1\n");
  EXPECT_NE(data_error_message(dir / "m.csv").find("row 1"), std::string::npos);
  write_text(dir / "m.csv", "");
  EXPECT_THROW(load_manifest(dir / "m.csv", false), DataError);
  write_text(dir / "m.csv", "image_path,a\nmissing.ppm,1\n");
  EXPECT_THROW(load_manifest(dir / "m.csv", true), DataError);
  EXPECT_THROW(load_manifest(dir / "nope.csv"), DataError);
}

TEST(ManifestTest, SaveLoadRoundTrip) {
  auto dir = scratch_dir("manifest_rt");
  auto m = numbered_manifest(4);
  m.rows[2].labels = {1, 0};
  save_manifest(m, dir / "m.csv");
  auto back = load_manifest(dir / "m.csv", false);
  EXPECT_EQ(back.class_names, m.class_names);
  ASSERT_EQ(back.rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back.rows[i].image_path, m.rows[i].image_path);
    EXPECT_EQ(back.rows[i].labels, m.rows[i].labels);
  }
}

TEST(Ppm, WhiteAndRedPixels) {
  RgbImage white(2, 2);
  std::fill(white.pixels.begin(), white.pixels.end(), 255);
  const auto ones = image_to_tensor<float>(white);
  for (float v : ones.data()) EXPECT_EQ(v, 1.f);
  RgbImage red(1, 1);
  red.pixels = {255, 0, 0};
  auto t = image_to_tensor<double>(red);
  EXPECT_EQ(t.vec(), (std::vector<double>{1, 0, 0}));
  EXPECT_EQ(tensor_to_image(t), red);
}

TEST(Ppm, EncodeDecodeRoundTripIsExact) {
  for_all(50, 1, [](Gen& g, std::size_t i) {
    RgbImage img(g.size(1, 20), g.size(1, 20));
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(g.size(0, 255));
    EXPECT_EQ(decode_ppm(encode_ppm(img)), img) << "case " << i;
  });
}

TEST(Ppm, HeaderWithCommentsDecodes) {
  std::string s = "P6\n# a comment\n2 1\n255\n";
  std::vector<std::uint8_t> bytes(s.begin(), s.end());
  for (int i = 0; i < 6; ++i) bytes.push_back(static_cast<std::uint8_t>(i * 40));
  auto img = decode_ppm(bytes);
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.at(1, 0)[2], 200);
}

TEST(Ppm, MalformedInputsRejected) {
  auto bytes = encode_ppm(RgbImage(3, 3));
  auto bad_magic = bytes;
  bad_magic[1] = '3';
  EXPECT_THROW(decode_ppm(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_ppm(truncated), FormatError);
  std::string s = "P6\n2 2\n65535\n";
  EXPECT_THROW(decode_ppm(std::vector<std::uint8_t>(s.begin(), s.end())), FormatError);
  EXPECT_THROW(read_ppm("/nonexistent/x.ppm"), IoError);
}

TEST(Augment, IdentitySettingsEqualPlainResize) {
  Gen g(2);
  LabeledSample<double> s{g.tensor<double>(Dims{3, 20, 20}, 0, 1), {1, 0}};
  AugmentConfig cfg;
  cfg.flip_probability = 0;
  cfg.crop_area_min = cfg.crop_area_max = 1;
  cfg.aspect_min = cfg.aspect_max = 1;
  std::mt19937_64 rng(1);
  auto out = augment(s, rng, 16, cfg);
  EXPECT_EQ(out.image, resize_bilinear(s.image, 16, 16));
  EXPECT_EQ(out.labels, s.labels);
}

TEST(Augment, FlipIsAnInvolution) {
  Gen g(3);
  auto img = g.tensor<double>(Dims{3, 5, 7});
  EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
  EXPECT_NE(flip_horizontal(img), img);
}

TEST(Augment, OutputShapeAndRange) {
  for_all(30, 4, [](Gen& g, std::size_t i) {
    LabeledSample<float> s{g.tensor<float>(Dims{3, 32, 32}, 0, 1), {1}};
    auto out = augment(s, g.engine(), 32);
    EXPECT_EQ(out.image.dims(), (Dims{3, 32, 32})) << "case " << i;
    for (float v : out.image.data()) {
      EXPECT_GE(v, 0.f);
      EXPECT_LE(v, 1.f);
    }
  });
}

TEST(Augment, LargeTargetAccepted) {
  LabeledSample<float> s{Tensor<float>(Dims{3, 40, 40}, 0.5f), {1}};
  std::mt19937_64 rng(1);
  EXPECT_EQ(augment(s, rng, 448).image.dims(), (Dims{3, 448, 448}));
}

TEST(Resize, IdentityAndCornerAlignment) {
  Gen g(5);
  auto img = g.tensor<double>(Dims{3, 6, 6});
  EXPECT_EQ(resize_bilinear(img, 6, 6), img);
  Tensor<double> ramp(Dims{1, 1, 2}, std::vector<double>{0, 1});
  auto up = resize_bilinear(ramp, 1, 3);
  EXPECT_NEAR(up[0], 0.0, 1e-15);
  EXPECT_NEAR(up[1], 0.5, 1e-15);
  EXPECT_NEAR(up[2], 1.0, 1e-15);
}

TEST(Split, EightyTwentyDisjointAndDeterministic) {
  auto m = numbered_manifest(10);
  auto [train, test] = split_train_test(m, 0.8, 3);
  EXPECT_EQ(train.rows.size(), 8u);
  EXPECT_EQ(test.rows.size(), 2u);
  std::set<std::string> seen;
  for (auto* part : {&train, &test})
    for (auto& r : part->rows) EXPECT_TRUE(seen.insert(r.image_path).second);
  EXPECT_EQ(seen.size(), 10u);
  auto again = split_train_test(m, 0.8, 3);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(again.first.rows[i].image_path, train.rows[i].image_path);
}

TEST(Split, Sizes) {
  EXPECT_EQ(split_train_test(numbered_manifest(250), 0.8, 1).first.rows.size(), 200u);
  auto big = split_train_test(numbered_manifest(4494), 0.8, 1);
  EXPECT_EQ(big.first.rows.size(), 3596u);
  EXPECT_EQ(big.second.rows.size(), 898u);
  EXPECT_THROW(split_train_test(numbered_manifest(3), 1.0, 1), ConfigError);
}

TEST(Synth, PresenceExtremes) {
  auto dir = scratch_dir("synth_extremes");
  SynthOptions o;
  o.out_dir = dir / "all";
  o.n_images = 1;
  o.presence_probability = 1.0;
  auto all = generate_synthetic_dataset(o);
  EXPECT_EQ(all.manifest.rows[0].labels, std::vector<std::uint8_t>(6, 1));
  EXPECT_EQ(all.boxes.size(), 6u);
  o.out_dir = dir / "none";
  o.presence_probability = 0.0;
  auto none = generate_synthetic_dataset(o);
  EXPECT_EQ(none.manifest.rows[0].labels, std::vector<std::uint8_t>(6, 0));
  EXPECT_TRUE(none.boxes.empty());
}

TEST(Synth, PrevalenceAndFiles) {
  auto dir = scratch_dir("synth_200");
  SynthOptions o;
  o.out_dir = dir;
  o.n_images = 200;
  auto r = generate_synthetic_dataset(o);
  ASSERT_EQ(r.manifest.rows.size(), 200u);
  for (std::size_t c = 0; c < 6; ++c) {
    std::size_t count = 0;
    for (auto& row : r.manifest.rows) count += row.labels[c];
    const double prevalence = static_cast<double>(count) / 200.0;
    EXPECT_GE(prevalence, 0.3) << r.manifest.class_names[c];
    EXPECT_LE(prevalence, 0.7) << r.manifest.class_names[c];
  }
  auto reloaded = load_manifest(dir / "manifest.csv");
  EXPECT_EQ(reloaded.rows.size(), 200u);
  auto boxes = load_boxes(dir / "boxes.csv");
  ASSERT_EQ(boxes.size(), r.boxes.size());
  for (const auto& b : boxes) {
    EXPECT_LE(b.xmin, b.xmax);
    EXPECT_LE(b.ymin, b.ymax);
    EXPECT_LT(b.xmax, 32u);
    EXPECT_LT(b.ymax, 32u);
  }
  auto samples = load_samples<float>(reloaded, 32);
  EXPECT_EQ(samples[5].image.dims(), (Dims{3, 32, 32}));
}

TEST(Synth, SameSeedSameImages) {
  std::vector<bool> present{true, false, true, false, true, true};
  std::vector<ShapeBox> b1, b2;
  auto a = render_synthetic_image(32, present, 77, &b1);
  auto b = render_synthetic_image(32, present, 77, &b2);
  EXPECT_EQ(a, b);
  EXPECT_EQ(b1.size(), 4u);
  auto c = render_synthetic_image(32, present, 78, nullptr);
  EXPECT_NE(a, c);
}

TEST(Synth, ShapesDrawInsideTheirBoxes) {
  // A single present class: every non-background pixel lies in its box.
  for (std::size_t cls = 0; cls < 6; ++cls) {
    std::vector<bool> present(6, false);
    present[cls] = true;
    std::vector<ShapeBox> boxes;
    auto img = render_synthetic_image(32, present, 100 + cls, &boxes);
    auto bg = render_synthetic_image(32, std::vector<bool>(6, false), 100 + cls, nullptr);
    ASSERT_EQ(boxes.size(), 1u);
    std::size_t inside = 0;
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        const bool changed = !std::equal(img.at(x, y), img.at(x, y) + 3, bg.at(x, y));
        if (!changed) continue;
        EXPECT_TRUE(x >= boxes[0].xmin && x <= boxes[0].xmax && y >= boxes[0].ymin && y <= boxes[0].ymax)
            << "class " << cls << " pixel " << x << "," << y;
        ++inside;
      }
    EXPECT_GT(inside, 0u);
  }
}

TEST(Boxes, SaveLoadRoundTrip) {
  auto dir = scratch_dir("boxes");
  std::vector<ShapeBox> boxes{{"a.ppm", "circle", 1, 2, 3, 4}, {"b.ppm", "square", 0, 0, 31, 31}};
  save_boxes(boxes, dir / "b.csv");
  auto back = load_boxes(dir / "b.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].class_name, "square");
  EXPECT_EQ(back[0].ymax, 4u);
  write_text(dir / "bad.csv", "image_path,class,xmin,ymin,xmax,ymax\na.ppm,circle,1,x,3,4\n");
  EXPECT_THROW(load_boxes(dir / "bad.csv"), DataError);
}
