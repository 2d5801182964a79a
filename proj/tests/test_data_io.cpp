#include <cmath>
#include <filesystem>
#include <fstream>

#include <opencv2/imgcodecs.hpp>

#include "doctest.h"
#include "test_util.hpp"
#include "joined/data_io.hpp"
#include "joined/metrics.hpp"
#include "joined/targets.hpp"

using namespace joined;
using namespace joined::data_io;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("joined_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream(file) << text;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("mask encoding") {
  const auto enc = MaskEncoding::standard();
  CHECK(*enc.decode(0) == Label::OC);
  CHECK(*enc.decode(128) == Label::OD);
  CHECK(*enc.decode(255) == Label::Background);
  CHECK_FALSE(enc.decode(7).has_value());
  CHECK(enc.encode(Label::OD) == 128);

  const auto dir = scratch("enc");
  write_text(dir / "enc.json", R"({"0": "background", "1": "OD", "2": "OC"})");
  const auto custom = MaskEncoding::from_json_file(dir / "enc.json");
  CHECK(*custom.decode(2) == Label::OC);
  write_text(dir / "bad.json", R"({"0": "retina"})");
  CHECK_THROWS_AS(MaskEncoding::from_json_file(dir / "bad.json"), InputError);
}

TEST_CASE("image and mask round trips") {
  const auto dir = scratch("png");
  Tensor img(1, 3, 5, 7);
  for (std::size_t i = 0; i < img.size(); ++i) img.values()[i] = float(i % 256) / 255.0f;
  write_image(dir / "a.png", img);
  const auto back = read_image(dir / "a.png");
  CHECK(back.shape() == img.shape());
  CHECK(same(back.values(), img.values()));

  LabelMask m(4, 6);
  m(1, 2) = Label::OD;
  m(2, 2) = Label::OC;
  write_mask(dir / "m.png", m);
  CHECK(read_mask(dir / "m.png", MaskEncoding::standard()) == m);
  CHECK_THROWS_AS(read_image(dir / "missing.png"), InputError);
}

TEST_CASE("unknown mask value names the file and value") {
  const auto dir = scratch("badmask");
  cv::Mat raw(3, 3, CV_8UC1, cv::Scalar(255));
  raw.at<unsigned char>(1, 2) = 77;
  cv::imwrite((dir / "m.png").string(), raw);
  const auto msg = message_of([&] { read_mask(dir / "m.png", MaskEncoding::standard()); });
  CHECK(msg.find("m.png") != std::string::npos);
  CHECK(msg.find("77") != std::string::npos);
}

TEST_CASE("annotations csv") {
  const auto dir = scratch("csv");
  write_annotations(dir / "a.csv", {{"x", Coordinate{1.5, 2}}, {"y", std::nullopt}});
  const auto rows = read_annotations(dir / "a.csv");
  CHECK(*rows.at("x") == Coordinate{1.5, 2});
  CHECK_FALSE(rows.at("y").has_value());
  write_text(dir / "bad.csv", "id,x,y\na,1,2\n");
  CHECK_THROWS_AS(read_annotations(dir / "bad.csv"), InputError);
}

TEST_CASE("dataset scan and load") {
  const auto dir = scratch("dataset");
  SyntheticSpec spec;
  spec.size = 64;
  spec.seed = 3;
  generate_synthetic(spec, 3, dir);
  const auto m = scan_dataset(dir);
  REQUIRE(m.entries.size() == 3);
  validate(m);
  const auto data = load_dataset(m);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto direct = make_synthetic(spec, static_cast<int>(i)).sample;
    CHECK(same(data[i].image.values(), direct.image.values()));
    CHECK(*data[i].mask == *direct.mask);
    CHECK(*data[i].landmarks.od_center == *targets::od_center_from_mask(*direct.mask));
    CHECK(std::abs(data[i].landmarks.fovea->x - direct.landmarks.fovea->x) < 1e-6);
  }
  fs::remove(dir / "masks" / (m.entries[0].image_id + ".png"));
  const auto partial = load_dataset(scan_dataset(dir));
  CHECK_FALSE(partial[0].mask.has_value());
  CHECK_FALSE(partial[0].landmarks.od_center.has_value());
  CHECK_THROWS_AS(scan_dataset(dir / "nowhere"), InputError);
}

TEST_CASE("synthetic images are deterministic and anatomically valid") {
  SyntheticSpec spec;
  spec.seed = 11;
  for (int i = 0; i < 6; ++i) {
    const auto a = make_synthetic(spec, i), b = make_synthetic(spec, i);
    CHECK(same(a.sample.image.values(), b.sample.image.values()));
    const auto& mask = *a.sample.mask;
    CHECK(mask == *b.sample.mask);
    // Cup lies inside the disc by construction of the label map; vCDR tracks
    // the drawn ratio up to rasterisation.
    const auto v = metrics::vcdr(mask);
    REQUIRE(v.has_value());
    CHECK(std::abs(*v - a.truth.cup_ratio) <= 2.0 / (2.0 * a.truth.od_ry));
    const auto od = *a.sample.landmarks.od_center;
    CHECK(std::abs(od.x - a.truth.od_ellipse_center.x) <= 1.0);
    CHECK(std::abs(od.y - a.truth.od_ellipse_center.y) <= 1.0);
    const auto& f = *a.sample.landmarks.fovea;
    const double off = std::abs(f.x - od.x) / (2 * a.truth.od_ry);
    CHECK((off > 1.5 && off < 3.5));
  }
  SyntheticSpec other = spec;
  other.seed = 12;
  CHECK_FALSE(same(make_synthetic(spec, 0).sample.image.values(), make_synthetic(other, 0).sample.image.values()));
}

TEST_CASE("jnd round trip and corruption") {
  const auto dir = scratch("jnd");
  Tensor t(1, 2, 3, 4);
  for (std::size_t i = 0; i < t.size(); ++i) t.values()[i] = 0.25f * float(i);
  write_jnd(dir / "t.jnd", t);
  const auto back = read_jnd(dir / "t.jnd");
  CHECK(back.shape() == t.shape());
  CHECK(same(back.values(), t.values()));

  std::ifstream in(dir / "t.jnd", std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "JND1");

  write_text(dir / "bad.jnd", "JNX1....");
  CHECK_THROWS_AS(read_jnd(dir / "bad.jnd"), InputError);
  fs::resize_file(dir / "t.jnd", 30);
  CHECK_THROWS_AS(read_jnd(dir / "t.jnd"), InputError);
}

TEST_CASE("prediction files") {
  const auto dir = scratch("pred");
  metrics::Prediction p;
  p.image_id = "img1";
  p.mask = LabelMask(4, 4);
  p.mask(1, 1) = Label::OD;
  p.fovea = Coordinate{2.5, 3};
  p.od_center = Coordinate{1, 1};
  p.vcdr = std::nullopt;
  p.fovea_via_fallback = true;
  save_prediction(dir, p);
  const auto back = load_prediction(dir / "img1.json");
  CHECK(back.image_id == "img1");
  CHECK(back.mask == p.mask);
  CHECK(*back.fovea == *p.fovea);
  CHECK_FALSE(back.vcdr.has_value());
  CHECK(back.fovea_via_fallback);
  CHECK(load_predictions(dir).size() == 1);

  write_text(dir / "bad.json", R"({"image_id": "bad", "fovea_xy": [1], "od_center_xy": null,
                                   "vcdr": null, "fovea_via_fallback": false})");
  const auto msg = message_of([&] { load_prediction(dir / "bad.json"); });
  CHECK(msg.find("bad.json") != std::string::npos);
  CHECK(msg.find("fovea_xy") != std::string::npos);
}
