#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "logitds/data_io.hpp"

using namespace logitds;
namespace fs = std::filesystem;

namespace {

class IdxFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("logitds_idx_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void write_raw(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }

  IdxErrorKind kind_of(const std::function<void()>& f) {
    try {
      f();
    } catch (const IdxError& e) {
      return e.kind;
    }
    ADD_FAILURE() << "expected IdxError";
    return IdxErrorKind::io;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(IdxFiles, RoundTripThreeImages) {
  std::vector<std::uint8_t> px(3 * 28 * 28);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i * 7 % 256);
  px[0] = 255;
  write_idx_images(path("img"), px, 3, 28, 28);
  write_idx_labels(path("lab"), {0, 9, 4});
  const LabeledDataset d = load_idx_dataset(path("img"), path("lab"), "fixture");
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.inputs.cols(), 784);
  EXPECT_EQ(d.labels, (std::vector<int>{0, 9, 4}));
  EXPECT_EQ(d.class_count, 10);
  EXPECT_EQ(d.sample_shape.height, 28);
  EXPECT_EQ(d.inputs(0, 0), 1.0);
  for (std::size_t i = 0; i < px.size(); ++i) EXPECT_EQ(d.inputs.data()[i], px[i] / 255.0);
  EXPECT_GE(d.inputs.minCoeff(), 0.0);
  EXPECT_LE(d.inputs.maxCoeff(), 1.0);
}

TEST_F(IdxFiles, HeaderIsBigEndian) {
  write_idx_images(path("img"), {1, 2, 3, 4}, 1, 2, 2);
  std::ifstream in(path("img"), std::ios::binary);
  std::vector<unsigned char> b(16);
  in.read(reinterpret_cast<char*>(b.data()), 16);
  EXPECT_EQ(b[2], 0x08);
  EXPECT_EQ(b[3], 0x03);
  EXPECT_EQ(b[7], 1);
  EXPECT_EQ(b[11], 2);
}

TEST_F(IdxFiles, BadMagic) {
  write_raw(path("img"), {0, 0, 8, 1, 0, 0, 0, 0});
  EXPECT_EQ(kind_of([&] { load_idx_images(path("img")); }), IdxErrorKind::bad_magic);
  write_idx_images(path("img2"), {1}, 1, 1, 1);
  EXPECT_EQ(kind_of([&] { load_idx_labels(path("img2")); }), IdxErrorKind::bad_magic);
}

TEST_F(IdxFiles, TruncatedPayloadAndHeader) {
  write_raw(path("img"), {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3});
  EXPECT_EQ(kind_of([&] { load_idx_images(path("img")); }), IdxErrorKind::truncated);
  write_raw(path("short"), {0, 0, 8, 3, 0, 0});
  EXPECT_EQ(kind_of([&] { load_idx_images(path("short")); }), IdxErrorKind::truncated);
  write_raw(path("lab"), {0, 0, 8, 1, 0, 0, 0, 5, 1, 2});
  EXPECT_EQ(kind_of([&] { load_idx_labels(path("lab")); }), IdxErrorKind::truncated);
}

TEST_F(IdxFiles, DimensionOverflow) {
  write_raw(path("img"), {0, 0, 8, 3, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff});
  EXPECT_EQ(kind_of([&] { load_idx_images(path("img")); }), IdxErrorKind::dimension_overflow);
}

TEST_F(IdxFiles, CountMismatch) {
  write_idx_images(path("img"), std::vector<std::uint8_t>(8, 0), 2, 2, 2);
  write_idx_labels(path("lab"), {1, 2, 3});
  EXPECT_EQ(kind_of([&] { load_idx_dataset(path("img"), path("lab"), "x"); }), IdxErrorKind::count_mismatch);
}

TEST_F(IdxFiles, MissingFileIsIoError) {
  EXPECT_EQ(kind_of([&] { load_idx_images(path("nope")); }), IdxErrorKind::io);
}

TEST_F(IdxFiles, EmptyCountGivesEmptyDataset) {
  write_idx_images(path("img"), {}, 0, 28, 28);
  write_idx_labels(path("lab"), {});
  const LabeledDataset d = load_idx_dataset(path("img"), path("lab"), "empty");
  EXPECT_EQ(d.size(), 0u);
  EXPECT_EQ(d.inputs.rows(), 0);
  EXPECT_EQ(d.inputs.cols(), 784);
}

TEST(GaussianBlobs, MomentsAndLabels) {
  const std::vector<Point2> centers{{0, 3}, {-3, -1}, {4, 0}};
  const LabeledDataset d = make_gaussian_blobs(centers, 4000, 0.5, 17);
  ASSERT_EQ(d.size(), 12000u);
  EXPECT_EQ(d.class_count, 3);
  for (int c = 0; c < 3; ++c) {
    double sx = 0, sy = 0, sxx = 0;
    for (int i = 0; i < 4000; ++i) {
      const Eigen::Index r = c * 4000 + i;
      EXPECT_EQ(d.labels[static_cast<std::size_t>(r)], c);
      sx += d.inputs(r, 0);
      sy += d.inputs(r, 1);
      sxx += (d.inputs(r, 0) - centers[static_cast<std::size_t>(c)].x) *
             (d.inputs(r, 0) - centers[static_cast<std::size_t>(c)].x);
    }
    EXPECT_NEAR(sx / 4000, centers[static_cast<std::size_t>(c)].x, 0.03);
    EXPECT_NEAR(sy / 4000, centers[static_cast<std::size_t>(c)].y, 0.03);
    EXPECT_NEAR(std::sqrt(sxx / 4000), 0.5, 0.02);
  }
}

TEST(GaussianBlobs, DeterministicAndValidated) {
  const std::vector<Point2> centers{{0, 0}, {1, 1}};
  EXPECT_EQ(make_gaussian_blobs(centers, 10, 1.0, 3).inputs, make_gaussian_blobs(centers, 10, 1.0, 3).inputs);
  EXPECT_NE(make_gaussian_blobs(centers, 10, 1.0, 3).inputs, make_gaussian_blobs(centers, 10, 1.0, 4).inputs);
  EXPECT_THROW(make_gaussian_blobs({{1, 1}, {1, 1}}, 10, 1.0, 3), ConfigError);
}

TEST(RingOod, RadiusAndLabels) {
  const LabeledDataset d = make_ring_ood(6.0, 5000, 0.1, 2);
  ASSERT_EQ(d.size(), 5000u);
  double sr = 0.0, sx = 0.0;
  for (Eigen::Index i = 0; i < 5000; ++i) {
    sr += std::hypot(d.inputs(i, 0), d.inputs(i, 1));
    sx += d.inputs(i, 0);
    EXPECT_EQ(d.labels[static_cast<std::size_t>(i)], 0);
  }
  EXPECT_NEAR(sr / 5000, 6.0, 0.02);
  EXPECT_NEAR(sx / 5000, 0.0, 0.2);
  EXPECT_THROW(make_ring_ood(0.0, 10, 0.1, 1), ConfigError);
}
