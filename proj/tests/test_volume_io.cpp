#include <gtest/gtest.h>

#include <fstream>

#include "despeckle/volume_io.hpp"
#include "test_support.hpp"

namespace despeckle {
namespace {

using testing::TempDir;

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::string error_of(const std::filesystem::path& p) {
  try {
    load_volume(p);
  } catch (const IoError& e) {
    return e.what();
  }
  return "no error";
}

TEST(VolumeIo, FloatRoundTripIsBitExact) {
  TempDir dir;
  // Values representable as float survive exactly.
  Volume3D v = testing::random_unit_volume({5, 4, 3}, 42);
  for (double& x : v.data()) x = static_cast<float>(x * 7.0 - 2.0);
  v = Volume3D(v.dims(), std::vector<double>(v.data().begin(), v.data().end()),
               {0.51, 0.81, 1.04});
  save_volume(v, dir / "v.mhd");
  const Volume3D back = load_volume(dir / "v.mhd");
  EXPECT_TRUE(testing::bitwise_equal(v, back));
  EXPECT_EQ(back.spacing(), v.spacing());
  EXPECT_TRUE(std::filesystem::exists(dir / "v.raw"));
}

TEST(VolumeIo, UcharPayloadAndDefaultSpacing) {
  TempDir dir;
  write_text(dir / "u.mhd",
             "ObjectType = Image\nNDims = 3\nDimSize = 2 2 1\n"
             "ElementType = MET_UCHAR\nSomethingElse = ignored\nElementDataFile = u.raw\n");
  write_bytes(dir / "u.raw", {0, 17, 128, 255});
  const Volume3D v = load_volume(dir / "u.mhd");
  EXPECT_EQ(v.dims(), (Dims{2, 2, 1}));
  EXPECT_EQ(v.spacing(), Spacing{});
  EXPECT_EQ(std::vector<double>(v.data().begin(), v.data().end()),
            (std::vector<double>{0.0, 17.0, 128.0, 255.0}));
}

TEST(VolumeIo, PayloadSizeMismatch) {
  TempDir dir;
  write_text(dir / "m.mhd",
             "NDims = 3\nDimSize = 2 2 1\nElementType = MET_FLOAT\nElementDataFile = m.raw\n");
  write_bytes(dir / "m.raw", std::vector<unsigned char>(12, 0));
  EXPECT_NE(error_of(dir / "m.mhd").find("payload size mismatch"), std::string::npos);
}

TEST(VolumeIo, UnsupportedElementType) {
  TempDir dir;
  write_text(dir / "d.mhd",
             "NDims = 3\nDimSize = 2 2 1\nElementType = MET_DOUBLE\nElementDataFile = d.raw\n");
  write_bytes(dir / "d.raw", std::vector<unsigned char>(32, 0));
  EXPECT_NE(error_of(dir / "d.mhd").find("unsupported element type"), std::string::npos);
}

TEST(VolumeIo, MalformedHeaders) {
  TempDir dir;
  write_bytes(dir / "x.raw", std::vector<unsigned char>(16, 0));
  const std::vector<std::string> headers{
      "NDims = 2\nDimSize = 2 2 1\nElementType = MET_FLOAT\nElementDataFile = x.raw\n",
      "NDims = 3\nDimSize = 2 2\nElementType = MET_FLOAT\nElementDataFile = x.raw\n",
      "NDims = 3\nDimSize = 2 0 1\nElementType = MET_FLOAT\nElementDataFile = x.raw\n",
      "NDims = 3\nElementType = MET_FLOAT\nElementDataFile = x.raw\n",
      "NDims = 3\nDimSize = 2 2 1\nElementType = MET_FLOAT\n",
      "NDims = 3\nDimSize = 2 2 1\nElementSpacing = 1 -1 1\nElementType = MET_FLOAT\n"
      "ElementDataFile = x.raw\n",
      "NDims = 3\nthis line has no separator\n",
  };
  for (const std::string& h : headers) {
    write_text(dir / "h.mhd", h);
    EXPECT_NE(error_of(dir / "h.mhd").find("malformed header"), std::string::npos) << h;
  }
}

TEST(VolumeIo, MissingFiles) {
  TempDir dir;
  EXPECT_NE(error_of(dir / "absent.mhd").find("cannot open"), std::string::npos);
  write_text(dir / "p.mhd",
             "NDims = 3\nDimSize = 1 1 1\nElementType = MET_FLOAT\nElementDataFile = gone.raw\n");
  EXPECT_NE(error_of(dir / "p.mhd").find("cannot open payload"), std::string::npos);
}

}  // namespace
}  // namespace despeckle
