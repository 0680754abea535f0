#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "vmdetect/dataset.hpp"
#include "vmdetect/error.hpp"

using namespace vmdetect;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "vmdetect_dataset_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

void put_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_idx(const fs::path& images, const fs::path& labels, std::uint32_t image_magic) {
  std::ofstream img(images, std::ios::binary);
  put_be32(img, image_magic);
  put_be32(img, 2);
  put_be32(img, 2);
  put_be32(img, 2);
  const unsigned char pixels[8] = {0, 255, 51, 102, 255, 0, 0, 0};
  img.write(reinterpret_cast<const char*>(pixels), 8);
  std::ofstream lab(labels, std::ios::binary);
  put_be32(lab, 0x801);
  put_be32(lab, 2);
  const unsigned char l[2] = {3, 1};
  lab.write(reinterpret_cast<const char*>(l), 2);
}

}  // namespace

TEST_CASE("four-row CSV fixture") {
  TempDir dir;
  const auto path = dir.write("four.csv", "label,a,b\n0,0.1,0.2\n1,0.3,0.4\n1,0.5,0.6\n0,0.7,0.8\n");
  const auto d = load_csv(path);
  REQUIRE(d.size() == 4);
  CHECK(d.dim() == 2);
  CHECK(d.labels == std::vector<Eigen::Index>{0, 1, 1, 0});
  CHECK(d.inputs[2](1) == doctest::Approx(0.6));
  CHECK(d.num_classes == 2);
}

TEST_CASE("byte normalization") {
  TempDir dir;
  const auto path = dir.write("bytes.csv", "0,0,255,128\n1,255,0,7\n");
  const auto d = load_csv(path, Normalization::automatic);
  CHECK(d.inputs[0](0) == 0.0);
  CHECK(d.inputs[0](1) == 1.0);
  CHECK(d.inputs[0](2) == doctest::Approx(128.0 / 255.0));
  const auto b = load_csv(path, Normalization::byte);
  CHECK(b.inputs[1](0) == 1.0);
  const auto mm = load_csv(dir.write("range.csv", "0,-2,10\n1,2,30\n"), Normalization::minmax);
  CHECK(mm.inputs[0](0) == 0.0);
  CHECK(mm.inputs[1](1) == 1.0);
  CHECK_THROWS_AS(load_csv(dir.write("wide.csv", "0,-2,10\n1,2,30\n")), DataError);
}

TEST_CASE("malformed CSV input") {
  TempDir dir;
  CHECK_THROWS_AS(load_csv(dir.write("ragged.csv", "0,0.1,0.2\n1,0.3\n")), ShapeError);
  CHECK_THROWS_AS(load_csv(dir.write("word.csv", "0,0.1,0.2\n1,0.3,abc\n")), DataError);
  CHECK_THROWS_AS(load_csv(dir.write("empty.csv", "label,a\n")), DataError);
  CHECK_THROWS_AS(load_csv(dir.path / "missing.csv"), DataError);
  CHECK_THROWS_AS(load_csv(dir.write("neg.csv", "-1,0.1\n")), DataError);
}

TEST_CASE("IDX files") {
  TempDir dir;
  write_idx(dir.path / "img", dir.path / "lab", 0x803);
  const auto d = load_idx(dir.path / "img", dir.path / "lab");
  REQUIRE(d.size() == 2);
  CHECK(d.dim() == 4);
  CHECK(d.inputs[0](1) == 1.0);
  CHECK(d.inputs[0](2) == doctest::Approx(0.2));
  CHECK(d.inputs[1](0) == 1.0);
  CHECK(d.labels[0] == 3);

  write_idx(dir.path / "bad", dir.path / "lab2", 0x801);
  CHECK_THROWS_AS(load_idx(dir.path / "bad", dir.path / "lab2"), DataError);
}

TEST_CASE("two moons and splits") {
  auto d = make_two_moons(500, 0.1, 3);
  d.validate();
  CHECK(d.size() == 500);
  CHECK(d.num_classes == 2);
  assign_splits(d, 0.6, 0.2, 9);
  const auto train = d.subset(Split::train);
  const auto val = d.subset(Split::val);
  const auto test = d.subset(Split::test);
  CHECK(train.inputs.size() == 300);
  CHECK(val.inputs.size() == 100);
  CHECK(test.inputs.size() == 100);

  auto again = make_two_moons(500, 0.1, 3);
  assign_splits(again, 0.6, 0.2, 9);
  CHECK(again.split == d.split);
  CHECK(again.inputs[17] == d.inputs[17]);
  CHECK_THROWS_AS(assign_splits(d, 0.9, 0.2, 1), ConfigError);
}

TEST_CASE("CSV write and read back") {
  TempDir dir;
  const auto d = make_two_moons(20, 0.05, 1);
  write_csv(d, dir.path / "moons.csv");
  const auto back = load_csv(dir.path / "moons.csv", Normalization::none);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.labels[i] == d.labels[i]);
    CHECK((back.inputs[i] - d.inputs[i]).cwiseAbs().maxCoeff() == 0.0);
  }
}
