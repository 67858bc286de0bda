#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include "zebrod/augment.hpp"
#include "zebrod/error.hpp"
#include "zebrod/synth.hpp"

using namespace zebrod;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

std::size_t count_ext(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

AugmentConfig config_for(const fs::path& in, const fs::path& out) {
  AugmentConfig c;
  c.input_dir = in;
  c.output_dir = out;
  return c;
}

template <typename Fn>
ErrorCode code_of(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::NotFound;
}

}  // namespace

TEST(DefaultAngles, TenToThreeFifty) {
  const auto a = default_angles();
  ASSERT_EQ(a.size(), 35u);
  EXPECT_EQ(a.front(), 10.0);
  EXPECT_EQ(a.back(), 350.0);
  EXPECT_EQ(default_angles(90).size(), 3u);
}

TEST(RotatedStem, Naming) {
  EXPECT_EQ(rotated_stem("img00001", 10), "img00001_rot010");
  EXPECT_EQ(rotated_stem("a", 350), "a_rot350");
  EXPECT_EQ(rotated_stem("a", 5), "a_rot005");
  EXPECT_EQ(rotated_stem("a", 7.5), "a_rot007.5");
}

TEST(IsImageFile, Extensions) {
  EXPECT_TRUE(is_image_file("a.png"));
  EXPECT_TRUE(is_image_file("a.JPG"));
  EXPECT_TRUE(is_image_file("a.jpeg"));
  EXPECT_TRUE(is_image_file("a.bmp"));
  EXPECT_FALSE(is_image_file("a.txt"));
  EXPECT_FALSE(is_image_file("png"));
}

TEST(AugmentConfig, Validation) {
  AugmentConfig c = config_for("in", "out");
  EXPECT_NO_THROW(c.validate());
  for (auto bad : {std::vector<double>{0.0}, {360.0}, {10.0, 10.0}, {-5.0}, {}}) {
    c.angles = bad;
    EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
  }
  c.angles = {10};
  for (double t : {0.0, 1.5, -0.1}) {
    c.tightness = t;
    EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
  }
  c.tightness = 1.0;
  c.output_dir.clear();
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
}

TEST(GenerateRotatedDataset, OneImageGivesThirtySix) {
  TempDir in("zebrod_aug_one_in"), out("zebrod_aug_one_out");
  synth::write_product_dataset(in.path(), 1, 64, 48, 3);
  const AugmentReport r = generate_rotated_dataset(config_for(in.path(), out.path()));
  EXPECT_EQ(r.images_in, 1u);
  EXPECT_EQ(r.images_out, 36u);
  EXPECT_EQ(count_ext(out.path(), ".png"), 36u);
  EXPECT_EQ(count_ext(out.path(), ".txt"), 36u);
  EXPECT_TRUE(fs::exists(out / "img00000.png"));
  EXPECT_TRUE(fs::exists(out / "img00000_rot010.png"));
  EXPECT_TRUE(fs::exists(out / "img00000_rot350.txt"));
  EXPECT_EQ(slurp(out / "img00000.png"), slurp(in / "img00000.png"));
  const Image rotated = load_image(out / "img00000_rot090.png");
  EXPECT_EQ(rotated.width(), 64);
  EXPECT_EQ(rotated.height(), 48);
}

TEST(GenerateRotatedDataset, AnnotationsFollowRotateTightBox) {
  TempDir in("zebrod_aug_ann_in"), out("zebrod_aug_ann_out");
  synth::write_product_dataset(in.path(), 2, 80, 60, 4);
  AugmentConfig c = config_for(in.path(), out.path());
  c.angles = {15, 90, 200};
  c.tightness = 0.8;
  generate_rotated_dataset(c);
  for (const char* stem : {"img00000", "img00001"}) {
    const auto src = read_annotation_file(in / (std::string(stem) + ".txt")).boxes;
    for (double a : c.angles) {
      const auto got = read_annotation_file(out / (rotated_stem(stem, a) + ".txt")).boxes;
      std::vector<NormalizedBox> want;
      for (const auto& b : src) {
        if (auto r = rotate_tight_box(b, 80, 60, RotationSpec{a, 0.8})) want.push_back(*r);
      }
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].class_id, want[i].class_id);
        EXPECT_NEAR(got[i].x_c, want[i].x_c, 1e-6);
        EXPECT_NEAR(got[i].y_c, want[i].y_c, 1e-6);
        EXPECT_NEAR(got[i].w, want[i].w, 1e-6);
        EXPECT_NEAR(got[i].h, want[i].h, 1e-6);
      }
    }
  }
  EXPECT_TRUE(verify_dataset(out.path()).ok());
}

TEST(GenerateRotatedDataset, CountLawWithoutOriginals) {
  TempDir in("zebrod_aug_law_in"), out("zebrod_aug_law_out");
  synth::write_product_dataset(in.path(), 5, 32, 32, 5);
  AugmentConfig c = config_for(in.path(), out.path());
  c.keep_originals = false;
  c.angles = default_angles(30);
  const auto r = generate_rotated_dataset(c);
  EXPECT_EQ(r.images_out, 5u * 11u);
  EXPECT_EQ(count_ext(out.path(), ".png"), 55u);
  EXPECT_EQ(r.boxes_in, 5u);
  EXPECT_EQ(r.boxes_out + r.boxes_dropped, 5u * 11u);
}

TEST(GenerateRotatedDataset, EmptyInputGivesZeroReport) {
  TempDir in("zebrod_aug_empty_in"), out("zebrod_aug_empty_out");
  const auto r = generate_rotated_dataset(config_for(in.path(), out.path()));
  EXPECT_EQ(r.images_in, 0u);
  EXPECT_EQ(r.images_out, 0u);
  EXPECT_EQ(r.boxes_in, 0u);
  EXPECT_EQ(r.boxes_out, 0u);
  EXPECT_TRUE(r.missing_annotations.empty());
  const auto j = r.to_json();
  EXPECT_EQ(j.at("images_out"), 0);
}

TEST(GenerateRotatedDataset, MissingAnnotationIsSkippedAndCounted) {
  TempDir in("zebrod_aug_miss_in"), out("zebrod_aug_miss_out");
  synth::write_product_dataset(in.path(), 3, 32, 32, 6);
  fs::remove(in / "img00001.txt");
  const auto r = generate_rotated_dataset(config_for(in.path(), out.path()));
  EXPECT_EQ(r.images_in, 2u);
  EXPECT_EQ(r.images_out, 72u);
  ASSERT_EQ(r.missing_annotations.size(), 1u);
  EXPECT_EQ(r.missing_annotations[0], "img00001.png");
  EXPECT_FALSE(fs::exists(out / "img00001_rot010.png"));
}

TEST(GenerateRotatedDataset, ByteIdenticalReruns) {
  TempDir in("zebrod_aug_det_in"), a("zebrod_aug_det_a"), b("zebrod_aug_det_b");
  synth::write_product_dataset(in.path(), 3, 40, 30, 7);
  AugmentConfig c = config_for(in.path(), a.path());
  c.angles = {10, 45, 133, 270};
  generate_rotated_dataset(c);
  c.output_dir = b.path();
  generate_rotated_dataset(c);
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a.path())) {
    ASSERT_EQ(slurp(e.path()), slurp(b / e.path().filename().string())) << e.path();
    ++compared;
  }
  EXPECT_EQ(compared, 2u * 3u * 5u);
}

TEST(GenerateRotatedDataset, IoAndSameDirectoryErrors) {
  TempDir in("zebrod_aug_err_in");
  EXPECT_EQ(code_of([&] { generate_rotated_dataset(config_for(in / "nope", in / "out")); }), ErrorCode::IoFailure);
  EXPECT_EQ(code_of([&] { generate_rotated_dataset(config_for(in.path(), in.path())); }), ErrorCode::InvalidConfig);
}

TEST(VerifyDataset, CleanAndDefects) {
  TempDir d("zebrod_verify");
  synth::write_product_dataset(d.path(), 3, 32, 32, 8);
  {
    std::ofstream(d / "classes.txt") << "a\nb\n";
  }
  VerifyReport r = verify_dataset(d.path());
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.images, 3u);
  EXPECT_EQ(r.labels, 3u);
  EXPECT_EQ(r.pairs_verified, 3u);
  EXPECT_EQ(r.boxes, 3u);

  {
    std::ofstream(d / "orphan.txt") << "0 0.5 0.5 0.1 0.1\n";
  }
  r = verify_dataset(d.path());
  ASSERT_EQ(r.defects.size(), 1u);
  EXPECT_EQ(r.defects[0].kind, DefectKind::UnpairedLabel);
  EXPECT_FALSE(r.ok());
  fs::remove(d / "orphan.txt");

  fs::remove(d / "img00002.txt");
  {
    std::ofstream(d / "img00001.txt") << "0 0.5 0.5 0.1 0.1\n0 0.5 0.5 0.1\n";
    std::ofstream(d / "img00000.txt") << "0 0.5 0.5 1.2 0.1\n";
  }
  r = verify_dataset(d.path());
  ASSERT_EQ(r.defects.size(), 3u);
  std::map<DefectKind, std::size_t> kinds;
  for (const auto& def : r.defects) ++kinds[def.kind];
  EXPECT_EQ(kinds[DefectKind::UnpairedImage], 1u);
  EXPECT_EQ(kinds[DefectKind::MalformedLine], 1u);
  EXPECT_EQ(kinds[DefectKind::OutOfRange], 1u);
  for (const auto& def : r.defects) {
    if (def.kind == DefectKind::MalformedLine) EXPECT_EQ(def.line, 2u);
  }
  EXPECT_EQ(r.to_json().at("defects").size(), 3u);
  EXPECT_EQ(code_of([&] { verify_dataset(d / "absent"); }), ErrorCode::IoFailure);
}
