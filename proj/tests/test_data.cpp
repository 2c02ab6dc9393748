#include <algorithm>
#include <filesystem>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/data/augment.hpp"
#include "dilhyfs/data/manifest.hpp"
#include "dilhyfs/data/pgm.hpp"
#include "dilhyfs/data/synthetic.hpp"
#include "dilhyfs/util/fs.hpp"

using namespace dilhyfs;
using namespace dilhyfs::data;

namespace fs = std::filesystem;

namespace {

GenConfig small_config() {
  GenConfig c;
  c.num_classes = 5;
  c.per_class = 20;
  c.size = 16;
  return c;
}

double sq_dist(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("dilhyfs_test_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

}  // namespace

TEST(Synthetic, CountsSplitsAndRange) {
  Rng rng(7);
  const auto g = gen_dataset(small_config(), rng);
  EXPECT_EQ(g.dataset.samples.size(), 100u);
  EXPECT_EQ(g.manifest.size(), 100u);
  EXPECT_EQ(g.dataset.count(Split::train), 70u);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(g.dataset.indices(k, Split::train).size(), 14u);
    EXPECT_EQ(g.dataset.indices(k, Split::test).size(), 6u);
  }
  std::set<std::string> paths;
  for (const auto& s : g.dataset.samples) {
    EXPECT_EQ(s.image.shape(), (Shape{1, 16, 16}));
    const auto [lo, hi] = std::minmax_element(s.image.values().begin(), s.image.values().end());
    EXPECT_EQ(*lo, 0.0);
    EXPECT_EQ(*hi, 1.0);
    paths.insert(s.path);
  }
  EXPECT_EQ(paths.size(), 100u);
}

TEST(Synthetic, DeterministicPerSeed) {
  Rng a(3), b(3), c(4);
  const auto ga = gen_dataset(small_config(), a);
  const auto gb = gen_dataset(small_config(), b);
  const auto gc = gen_dataset(small_config(), c);
  EXPECT_EQ(encode_manifest(ga.manifest), encode_manifest(gb.manifest));
  bool any_diff = false;
  for (std::size_t i = 0; i < ga.dataset.samples.size(); ++i) {
    EXPECT_EQ(max_abs_diff(ga.dataset.samples[i].image, gb.dataset.samples[i].image), 0.0);
    any_diff |= max_abs_diff(ga.dataset.samples[i].image, gc.dataset.samples[i].image) > 0.0;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Synthetic, ClassesAreSeparatedByMinimumDistance) {
  Rng rng(5);
  GenConfig cfg = small_config();
  const auto specs = random_class_specs(cfg, rng);
  ASSERT_EQ(specs.size(), cfg.num_classes);
  for (std::size_t i = 0; i < specs.size(); ++i)
    for (std::size_t j = i + 1; j < specs.size(); ++j)
      EXPECT_GE(constellation_distance(specs[i], specs[j]), cfg.min_class_distance);
}

TEST(Synthetic, NoiseFreeSamplesMatchTheirTemplate) {
  Rng rng(6);
  GenConfig cfg = small_config();
  cfg.speckle = false;
  cfg.jitter_sigma = 0.0;
  cfg.azimuth_spread = 0.0;
  const auto g = gen_dataset(cfg, rng);
  for (const auto& s : g.dataset.samples) {
    EXPECT_EQ(max_abs_diff(s.image, class_template(g.specs[s.label], cfg.size)), 0.0);
  }
}

TEST(Synthetic, NearestTemplateRecoversCleanRotatedClasses) {
  Rng rng(8);
  GenConfig cfg = small_config();
  cfg.size = 32;
  cfg.speckle = false;
  cfg.azimuth_spread = 0.1;
  const auto g = gen_dataset(cfg, rng);
  std::vector<Tensor> templates;
  for (const auto& spec : g.specs) templates.push_back(class_template(spec, cfg.size));
  std::size_t correct = 0;
  for (const auto& s : g.dataset.samples) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < templates.size(); ++k)
      if (sq_dist(s.image, templates[k]) < sq_dist(s.image, templates[best])) best = k;
    correct += best == s.label ? 1 : 0;
  }
  EXPECT_EQ(correct, g.dataset.samples.size());
}

TEST(Synthetic, RejectsBadConfigs) {
  Rng rng(1);
  GenConfig c = small_config();
  c.size = 33;
  EXPECT_THROW(gen_dataset(c, rng), ConfigError);
  c = small_config();
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.train_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.min_scatterers = 9;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Pgm, DecodesTheWorkedExample) {
  const std::string bytes = std::string("P5\n2 2\n255\n") + std::string{'\x00', '\xff', '\x80', '\x40'};
  const Tensor img = decode_pgm(bytes);
  ASSERT_EQ(img.shape(), (Shape{2, 2}));
  EXPECT_EQ(img.at(0, 0), 0.0);
  EXPECT_EQ(img.at(0, 1), 1.0);
  EXPECT_NEAR(img.at(1, 0), 0.50196, 1e-5);
  EXPECT_NEAR(img.at(1, 1), 0.25098, 1e-5);
}

TEST(Pgm, CommentsAndRoundTrip) {
  const std::string bytes = std::string("P5 # a comment\n3 # w\n1\n255\n") + std::string{'\x01', '\x02', '\x03'};
  const Tensor img = decode_pgm(bytes);
  EXPECT_EQ(img.shape(), (Shape{1, 3}));
  EXPECT_NEAR(img[2], 3.0 / 255.0, 1e-15);
  Rng rng(2);
  Tensor x({4, 5});
  for (double& v : x.values()) v = static_cast<double>(rng.below(256)) / 255.0;
  EXPECT_LE(max_abs_diff(decode_pgm(encode_pgm(x)), x), 1e-15);
}

TEST(Pgm, FormatErrors) {
  EXPECT_THROW(decode_pgm("P2\n1 1\n255\n0"), FormatError);
  EXPECT_THROW(decode_pgm("P5\n2 2\n65535\n"), FormatError);
  EXPECT_THROW(decode_pgm("P5\n2 2\n255\nab"), FormatError);
  EXPECT_THROW(decode_pgm("P5\nx 2\n255\n"), FormatError);
  EXPECT_THROW(decode_pgm(""), FormatError);
}

TEST(Pgm, CenterFitCropsAndPads) {
  Tensor big({4, 4});
  for (std::size_t i = 0; i < 16; ++i) big[i] = static_cast<double>(i);
  const Tensor crop = center_fit(big, 2);
  EXPECT_EQ(max_abs_diff(crop, Tensor::matrix({{5, 6}, {9, 10}})), 0.0);
  const Tensor pad = center_fit(Tensor::matrix({{1, 2}, {3, 4}}), 4);
  EXPECT_EQ(pad.at(1, 1), 1.0);
  EXPECT_EQ(pad.at(2, 2), 4.0);
  EXPECT_EQ(pad.at(0, 0), 0.0);
  EXPECT_EQ(pad.at(3, 3), 0.0);
}

TEST(Manifest, EncodeDecodeAndErrors) {
  const std::vector<ManifestRow> rows{{"a.pgm", 0, Split::train}, {"b/c.pgm", 3, Split::test}};
  const std::string text = encode_manifest(rows);
  EXPECT_EQ(text, "{\"class\":0,\"path\":\"a.pgm\",\"split\":\"train\"}\n"
                  "{\"class\":3,\"path\":\"b/c.pgm\",\"split\":\"test\"}\n");
  const auto back = decode_manifest(text + "\n");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].path, "b/c.pgm");
  EXPECT_EQ(back[1].label, 3u);
  EXPECT_EQ(back[1].split, Split::test);
  EXPECT_THROW(decode_manifest("{\"class\":0,\"path\":\"a\"}\n"), FormatError);
  EXPECT_THROW(decode_manifest("{\"class\":-1,\"path\":\"a\",\"split\":\"train\"}\n"), FormatError);
  EXPECT_THROW(decode_manifest("not json\n"), FormatError);
  EXPECT_THROW(decode_manifest("{\"class\":0,\"path\":\"a\",\"split\":\"val\"}\n"), DataError);
}

TEST(Manifest, LoadsWrittenDataset) {
  TempDir dir;
  Rng rng(9);
  const auto g = gen_dataset(small_config(), rng);
  for (const auto& s : g.dataset.samples) write_pgm(dir.path() / s.path, s.image);
  util::atomic_write(dir.path() / "manifest.jsonl", encode_manifest(g.manifest));
  const Dataset ds = load_manifest(dir.path() / "manifest.jsonl", 16);
  ASSERT_EQ(ds.samples.size(), g.dataset.samples.size());
  EXPECT_EQ(ds.num_classes, 5u);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(ds.samples[i].label, g.dataset.samples[i].label);
    EXPECT_LE(max_abs_diff(ds.samples[i].image, g.dataset.samples[i].image), 0.5 / 255.0 + 1e-12);
  }
  fs::remove(dir.path() / g.manifest.front().path);
  EXPECT_THROW(load_manifest(dir.path() / "manifest.jsonl", 16), DataError);
}

TEST(Manifest, ClassMissingFromASplitIsRejected) {
  TempDir dir;
  write_pgm(dir.path() / "x.pgm", Tensor({2, 2}, 0.5));
  util::atomic_write(dir.path() / "m.jsonl", encode_manifest({{"x.pgm", 0, Split::train}}));
  EXPECT_THROW(load_manifest(dir.path() / "m.jsonl", 2), DataError);
}

TEST(Augment, HflipMirrorsColumnsAndIsAnInvolution) {
  const Tensor x = Tensor::matrix({{1, 2, 3}, {4, 5, 6}}).reshaped({1, 2, 3});
  EXPECT_EQ(max_abs_diff(hflip(x), Tensor::matrix({{3, 2, 1}, {6, 5, 4}}).reshaped({1, 2, 3})), 0.0);
  EXPECT_EQ(max_abs_diff(hflip(hflip(x)), x), 0.0);
}

TEST(Augment, FlipRateAndSingleDraw) {
  Rng rng(10);
  const Tensor x = Tensor::matrix({{1, 2}}).reshaped({1, 1, 2});
  int flips = 0;
  for (int i = 0; i < 4000; ++i) flips += hflip_augment(x, rng)[0] == 2.0 ? 1 : 0;
  EXPECT_NEAR(flips / 4000.0, 0.5, 0.03);
  Rng a(11), b(11);
  hflip_augment(x, a);
  b.uniform();
  EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng never(12);
  EXPECT_EQ(hflip_augment(x, never, 0.0)[0], 1.0);
}
