#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "iif/dataflow.hpp"
#include "iif/errors.hpp"

using namespace iif;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "iif_dataflow_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(GenLinear, ShapesAndSeedReproducibility) {
  SyntheticSpec s;
  s.seed = 17;
  const auto a = gen_linear(s), b = gen_linear(s);
  EXPECT_EQ(a.train.size(), 100);
  EXPECT_EQ(a.test.size(), 100);
  EXPECT_EQ(a.train.dim(), 10);
  EXPECT_EQ(a.weights.size(), 10);
  EXPECT_EQ(a.train.features, b.train.features);
  EXPECT_EQ(a.test.targets, b.test.targets);
  s.seed = 18;
  EXPECT_NE(gen_linear(s).train.features, a.train.features);
}

TEST(GenLinear, ZeroNoiseIsExactlyLinear) {
  SyntheticSpec s;
  s.sigma_n = 0;
  s.sigma_s = 0;
  const auto t = gen_linear(s);
  EXPECT_LE((t.train.features * t.weights - t.train.targets.col(0)).norm(), 1e-12);
  EXPECT_LE((t.test.features * t.weights - t.test.targets.col(0)).norm(), 1e-12);
}

TEST(GenLinear, NoiseLevelsMatch) {
  SyntheticSpec s;
  s.n_train = 20000;
  s.n_test = 20000;
  s.sigma_n = 0.1;
  s.sigma_s = 1.0;
  s.train_noise = NoiseKind::Laplace;
  const auto t = gen_linear(s);
  const Vector rn = t.train.targets.col(0) - t.train.features * t.weights;
  const Vector rs = t.test.targets.col(0) - t.test.features * t.weights;
  EXPECT_NEAR(std::sqrt(rn.squaredNorm() / rn.size()), 0.1, 0.005);
  EXPECT_NEAR(std::sqrt(rs.squaredNorm() / rs.size()), 1.0, 0.03);
}

TEST(GenBlobs, BalancedOneHot) {
  BlobSpec b;
  b.n_train = 400;
  b.classes = 4;
  const auto t = gen_blobs(b);
  t.train.validate();
  EXPECT_EQ(t.train.target_dim(), 4);
  std::vector<int> counts(4, 0);
  for (int l : t.train.labels()) ++counts[static_cast<std::size_t>(l)];
  for (int c : counts) EXPECT_EQ(c, 100);
}

TEST(FlipLabels, ExactCountAndAlwaysChanged) {
  BlobSpec b;
  b.n_train = 1000;
  const auto t = gen_blobs(b);
  Rng rng(3);
  const auto [flipped, mask] = flip_labels(t.train, 0.1, rng);
  EXPECT_EQ(mask.count(), 100);
  const auto before = t.train.labels(), after = flipped.labels();
  for (std::size_t i = 0; i < before.size(); ++i)
    EXPECT_EQ(before[i] != after[i], static_cast<bool>(mask.flipped[i]));
  flipped.validate();
}

TEST(FlipLabels, EdgeFractions) {
  BlobSpec b;
  b.n_train = 50;
  const auto t = gen_blobs(b);
  Rng rng(1);
  EXPECT_EQ(flip_labels(t.train, 0.0, rng).second.count(), 0);
  EXPECT_EQ(flip_labels(t.train, 1.0, rng).second.count(), 50);
  EXPECT_THROW(flip_labels(t.train, 1.5, rng), InvalidArgument);
  Dataset single = t.train;
  single.targets = Matrix::Ones(single.size(), 1);
  EXPECT_THROW(flip_labels(single, 0.1, rng), InvalidArgument);
}

TEST(Subset, SelectsRowsAndRejectsBadIndices) {
  SyntheticSpec s;
  const auto t = gen_linear(s);
  const auto sub = subset(t.train, std::vector<int>{3, 1});
  EXPECT_EQ(sub.size(), 2);
  EXPECT_EQ(sub.features.row(0), t.train.features.row(3));
  EXPECT_THROW(subset(t.train, std::vector<int>{}), InvalidArgument);
  EXPECT_THROW(subset(t.train, std::vector<int>{100}), InvalidArgument);
  EXPECT_THROW(subset(t.train, std::vector<int>{-1}), InvalidArgument);
}

TEST(Dataset, ValidateRejectsBadInput) {
  Dataset d;
  EXPECT_THROW(d.validate(), InvalidArgument);
  d.features = Matrix::Ones(3, 2);
  d.targets = Matrix::Ones(2, 1);
  EXPECT_THROW(d.validate(), InvalidArgument);
  d.targets = Matrix::Ones(3, 2);
  d.kind = TaskKind::Classification;
  EXPECT_THROW(d.validate(), InvalidArgument);
}

TEST(Idx, ImageRoundTripIsBitExact) {
  IdxArray a;
  a.magic = kIdxImageMagic;
  a.dims = {3, 4, 5};
  for (int i = 0; i < 60; ++i) a.payload.push_back(static_cast<std::uint8_t>(i * 4));
  const auto p = scratch("img.idx");
  write_idx(p, a);
  const auto b = read_idx(p);
  EXPECT_EQ(b.magic, a.magic);
  EXPECT_EQ(b.dims, a.dims);
  EXPECT_EQ(b.payload, a.payload);
  const auto p2 = scratch("img2.idx");
  write_idx(p2, b);
  EXPECT_EQ(file_bytes(p), file_bytes(p2));
  const Matrix m = parse_idx_images(p);
  EXPECT_EQ(m.rows(), 3);
  EXPECT_EQ(m.cols(), 20);
  EXPECT_DOUBLE_EQ(m(0, 1), 4.0 / 255.0);
}

TEST(Idx, LabelsAndDataset) {
  IdxArray img{kIdxImageMagic, {4, 2, 2}, std::vector<std::uint8_t>(16, 255)};
  IdxArray lab{kIdxLabelMagic, {4}, {0, 1, 2, 1}};
  const auto pi = scratch("ds_img.idx"), pl = scratch("ds_lab.idx");
  write_idx(pi, img);
  write_idx(pl, lab);
  const Dataset d = load_idx_dataset(pi, pl, 0, 3);
  EXPECT_EQ(d.size(), 4);
  EXPECT_EQ(d.labels(), (std::vector<int>{0, 1, 2, 1}));
  EXPECT_EQ(load_idx_dataset(pi, pl, 2, 3).size(), 2);
  EXPECT_EQ(parse_idx(pl)(2, 0), 2.0);
}

TEST(Idx, WrongMagicAndTruncation) {
  IdxArray lab{kIdxLabelMagic, {4}, {0, 1, 2, 1}};
  const auto pl = scratch("magic.idx");
  write_idx(pl, lab);
  EXPECT_THROW(parse_idx_images(pl), IoError);
  auto bytes = file_bytes(pl);
  bytes.resize(bytes.size() - 2);
  const auto pt = scratch("trunc.idx");
  std::ofstream(pt, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                            static_cast<std::streamsize>(bytes.size()));
  try {
    read_idx(pt);
    FAIL() << "truncated file accepted";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
  EXPECT_THROW(read_idx(scratch("missing.idx")), IoError);
}

TEST(Csv, RoundTripIsExact) {
  SyntheticSpec s;
  s.n_train = 13;
  const auto t = gen_linear(s);
  const auto p = scratch("train.csv");
  write_dataset_csv(p, t.train);
  const Dataset back = read_dataset_csv(p, TaskKind::Regression);
  EXPECT_EQ(back.features, t.train.features);
  EXPECT_EQ(back.targets, t.train.targets);
  const auto p2 = scratch("train2.csv");
  write_dataset_csv(p2, back);
  EXPECT_EQ(file_bytes(p), file_bytes(p2));
}

TEST(Csv, MalformedInput) {
  const auto p = scratch("bad.csv");
  std::ofstream(p) << "f0,y0\n1.0,abc\n";
  EXPECT_THROW(read_dataset_csv(p, TaskKind::Regression), IoError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  for (double v : {1.0 / 3.0, -2.5e-300, 123456789.125}) EXPECT_EQ(std::stod(format_double(v)), v);
}
