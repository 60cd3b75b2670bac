#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "sgplvm/io.hpp"
#include "sgplvm/metrics.hpp"
#include "sgplvm/synth.hpp"
#include "test_util.hpp"

using namespace sgplvm;

namespace {

std::string tmp_path(const std::string &name) {
  const auto dir = std::filesystem::temp_directory_path() / "sgplvm_test_io";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

SgplvmModel small_model(bool dynamical) {
  std::mt19937_64 rng(3);
  ObservationGrid g;
  g.n_xi = 5;
  g.spatial_factors = pixel_axes({2, 3});
  g.y = testutil::random_matrix(rng, 30, 2);
  if (dynamical) g.timestamps = Vector::LinSpaced(5, 0.0, 4.0);
  TrainConfig cfg;
  cfg.latent_dim = 2;
  cfg.m_xi = 3;
  cfg.m_s = 4;
  cfg.latent_mode = dynamical ? LatentMode::Dynamical : LatentMode::Iid;
  cfg.max_iters = 5;
  cfg.fixed_beta_iters = 2;
  SgplvmModel m = initialize(g, cfg);
  m.standardizer = Standardizer::fit(g.y);
  return train(m, cfg).model;
}

}  // namespace

TEST(MatrixFile, CsvAndBinaryRoundTrip) {
  std::mt19937_64 rng(1);
  MatrixFile f;
  f.set("A", testutil::random_matrix(rng, 3, 4) * 1e-7);
  f.set("empty", Matrix(0, 2));
  f.set("B", (Matrix(1, 2) << 1.0 / 3.0, -2.5e300).finished());
  const MatrixFile c = decode_csv(encode_csv(f));
  const MatrixFile b = decode_binary(encode_binary(f));
  for (const auto &[name, m] : f.arrays) {
    EXPECT_EQ(c.get(name), m) << name;
    EXPECT_EQ(b.get(name), m) << name;
  }
  EXPECT_EQ(c.arrays.size(), 3u);
}

TEST(MatrixFile, BinaryLayoutIsRowMajorLittleEndian) {
  MatrixFile f;
  f.set("x", (Matrix(2, 2) << 1.0, 2.0, 3.0, 4.0).finished());
  const std::string bytes = encode_binary(f);
  ASSERT_EQ(bytes.substr(0, 4), "SGPL");
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 2 + 1 + 8 + 8 + 4 * 8);
  double second;
  std::memcpy(&second, bytes.data() + 31 + 8, 8);
  EXPECT_EQ(second, 2.0);
}

TEST(MatrixFile, PlainShapeHeaderAndErrors) {
  const MatrixFile f = decode_csv("#shape:2,2\n1,2\n3,4\n");
  EXPECT_EQ(f.get("data")(1, 0), 3.0);
  EXPECT_THROW(decode_csv("#shape:2,2\n1,2\n"), DataError);
  EXPECT_THROW(decode_csv("#shape:1,2\n1,x\n"), DataError);
  EXPECT_THROW(decode_csv("#shape:1,2\n1,2,3\n"), DataError);
  EXPECT_THROW(decode_csv("#shape:1,1\nnan\n"), DataError);
  EXPECT_THROW(decode_csv("1,2\n"), DataError);
  MatrixFile bad;
  bad.set("x", Matrix::Constant(1, 1, INFINITY));
  EXPECT_THROW(encode_binary(bad), DataError);
  std::string bytes = encode_binary(decode_csv("#shape:1,1\n1\n"));
  EXPECT_THROW(decode_binary(bytes.substr(0, bytes.size() - 1)), DataError);
  EXPECT_THROW(decode_binary("XXXX"), DataError);
}

TEST(MatrixFile, AtomicWriteAndAutodetect) {
  MatrixFile f;
  f.set("Y", Matrix::Identity(2, 3));
  const std::string a = tmp_path("a.csv"), b = tmp_path("b.sgpl");
  write_matrix_file(a, f);
  write_matrix_file(b, f);
  EXPECT_FALSE(std::filesystem::exists(a + ".tmp"));
  EXPECT_EQ(read_matrix_file(a).get("Y"), f.get("Y"));
  EXPECT_EQ(read_matrix_file(b).get("Y"), f.get("Y"));
  EXPECT_THROW(read_matrix_file(tmp_path("missing.csv")), DataError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (bool dynamical : {false, true}) {
    const SgplvmModel m = small_model(dynamical);
    const std::string path = tmp_path(dynamical ? "dyn.sgpl" : "iid.sgpl");
    save_checkpoint(path, m);
    const SgplvmModel r = load_checkpoint(path);
    EXPECT_EQ(pack(r), pack(m));
    EXPECT_EQ(r.beta, m.beta);
    EXPECT_EQ(r.y, m.y);
    EXPECT_EQ(r.x_s, m.x_s);
    EXPECT_EQ(r.z_s, m.z_s);
    EXPECT_EQ(r.q.timestamps, m.q.timestamps);
    EXPECT_EQ(r.standardizer.scale, m.standardizer.scale);
    EXPECT_EQ(r.trained, m.trained);
    EXPECT_EQ(r.iterations_done, m.iterations_done);
    EXPECT_EQ(r.has_temporal, m.has_temporal);
    EXPECT_EQ(evaluate_bound(r), evaluate_bound(m));
    // The text encoding keeps 17 significant digits, which is exact too.
    const SgplvmModel c = model_from_arrays(decode_csv(encode_csv(checkpoint_arrays(m))));
    EXPECT_EQ(pack(c), pack(m));
  }
}

TEST(Checkpoint, RejectsCorruptContent) {
  MatrixFile f = checkpoint_arrays(small_model(false));
  f.set("ordering", Matrix::Constant(1, 1, 2.0));
  EXPECT_THROW(model_from_arrays(f), DataError);
  f = checkpoint_arrays(small_model(false));
  f.set("q_mu", Matrix::Zero(3, 2));
  EXPECT_THROW(model_from_arrays(f), DataError);
  f.arrays.erase(f.arrays.begin());
  EXPECT_THROW(model_from_arrays(f), DataError);
}

TEST(Grid, CountsAndLayouts) {
  MatrixFile f;
  f.set("Y", (Matrix(2, 6) << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12).finished());
  const ObservationGrid g = grid_from_arrays(f, GridLayout{{2, 3}, 1});
  EXPECT_EQ(g.y.rows(), 12);
  EXPECT_EQ(g.y.cols(), 1);
  EXPECT_EQ(g.spatial_factors[0].rows(), 2);
  EXPECT_EQ(g.spatial_factors[1].rows(), 3);
  EXPECT_EQ(g.y(7, 0), 8.0);
  const Matrix xs = g.spatial_inputs();
  EXPECT_EQ(xs(4, 0), 1.0);
  EXPECT_EQ(xs(4, 1), 1.0);

  // Canonical layout and the shape array give the same grid.
  MatrixFile h = grid_arrays(g);
  const ObservationGrid g2 = grid_from_arrays(h, GridLayout{{}, 1});
  EXPECT_EQ(g2.y, g.y);
  EXPECT_EQ(decode_binary(encode_binary(h)).get("Y"), decode_csv(encode_csv(h)).get("Y"));

  MatrixFile bad;
  bad.set("Y", Matrix::Zero(5, 5));
  try {
    grid_from_arrays(bad, GridLayout{{2, 3}, 1}, "frames.csv");
    FAIL();
  } catch (const DataError &e) {
    EXPECT_NE(std::string(e.what()).find("frames.csv"), std::string::npos);
  }
  MatrixFile timed = h;
  timed.set("t", Matrix::Zero(3, 1));
  EXPECT_THROW(grid_from_arrays(timed, GridLayout{{}, 1}), DataError);
}

TEST(Grid, RefinedAxesKeepOriginalPixels) {
  const auto fine = pixel_axes({3, 4}, 2);
  EXPECT_EQ(fine[0].rows(), 6);
  EXPECT_EQ(fine[1].rows(), 8);
  EXPECT_EQ(cartesian_product(fine).rows(), 4 * 12);
  EXPECT_EQ(fine[1](2, 0), 1.0);
  EXPECT_EQ(fine[1](1, 0), 0.5);
}

TEST(Config, ParsesKeysAndRejectsUnknown) {
  const ConfigMap m = parse_config("# comment\nmax_iters = 50  # trailing\n\noptimizer=adam\nspatial_kernel = white\n");
  const TrainConfig c = train_config_from(m);
  EXPECT_EQ(c.max_iters, 50);
  EXPECT_EQ(c.optimizer, OptimizerKind::Adam);
  EXPECT_EQ(c.spatial_family, KernelFamily::White);
  EXPECT_THROW(train_config_from(parse_config("lengthscale = 2\n")), ConfigError);
  EXPECT_THROW(train_config_from(parse_config("max_iters = many\n")), ConfigError);
  EXPECT_THROW(parse_config("no equals sign\n"), ConfigError);
  EXPECT_THROW(train_config_from(parse_config("latent_mode = chaotic\n")), ConfigError);
}

TEST(Metrics, PerfectPredictionAndPercentiles) {
  const CaseMetrics c = case_metrics(Matrix::Zero(4, 1), Matrix::Zero(4, 1), Matrix::Ones(4, 1));
  EXPECT_EQ(c.rmse, 0.0);
  EXPECT_NEAR(c.mnlp, 0.5 * std::log(2 * M_PI), 1e-15);
  EXPECT_NEAR(c.mnlp, 0.9189385332, 1e-9);
  std::vector<double> v;
  for (int i = 1; i <= 20; ++i) v.push_back(i);
  EXPECT_EQ(percentile_nearest_rank(v, 5), 1.0);
  EXPECT_EQ(percentile_nearest_rank(v, 95), 19.0);
  EXPECT_EQ(percentile_nearest_rank(v, 100), 20.0);
  EXPECT_EQ(median({3.0, 1.0, 2.0, 10.0}), 2.5);
  const MetricsReport r = summarize({CaseMetrics{1.0, 2.0, 3}, CaseMetrics{3.0, 4.0, 3}});
  EXPECT_EQ(r.rmse.mean, 2.0);
  EXPECT_EQ(r.mnlp.p95, 4.0);
}

TEST(Synth, DeterministicAndNoiseFree) {
  SynthParams p;
  p.n_train = 6;
  p.n_test = 3;
  p.shape = {4, 5};
  const SynthDataset a = synth_generate(p, 7), b = synth_generate(p, 7);
  EXPECT_EQ(a.train.y, b.train.y);
  EXPECT_EQ(a.test_mask, b.test_mask);
  EXPECT_EQ(a.train.y.rows(), 6 * 20);
  EXPECT_EQ(a.test_mask.sum(), 3.0 * 10.0);
  p.noise_std = 0.0;
  const SynthDataset c = synth_generate(p, 7);
  EXPECT_EQ(c.train.y, c.f_train);
  EXPECT_EQ(c.test.y, c.f_test);
}

TEST(Synth, VideoSplitsAlternateFrames) {
  SynthParams p;
  p.kind = SynthKind::DynamicVideo;
  p.n_train = 5;
  p.n_test = 5;
  p.shape = {3, 3};
  const SynthDataset d = synth_generate(p, 1);
  EXPECT_EQ(d.train.timestamps, (Vector(5) << 0, 2, 4, 6, 8).finished());
  EXPECT_EQ(d.test.timestamps, (Vector(5) << 1, 3, 5, 7, 9).finished());
  EXPECT_EQ(d.test_mask.sum(), 0.0);
}

TEST(Synth, PixelCovarianceApproachesSpatialKernel) {
  SynthParams p;
  p.shape = {3, 3};
  p.noise_std = 0.0;
  p.n_test = 0;
  p.latent_lengthscale = 0.05;  // nearly independent images
  p.spatial_lengthscale = 1.5;
  KernelSpec<double> ks;
  ks.family = p.spatial_family;
  ks.lengthscales = Vector::Constant(1, 1.5);
  const Matrix target = kernel_matrix(ks, cartesian_product(pixel_axes({3, 3})));
  std::vector<double> err;
  for (Index n : {200, 3200}) {
    p.n_train = n;
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const SynthDataset d = synth_generate(p, seed);
      const Eigen::Map<const RowMat<double>> f(d.train.y.data(), n, 9);
      const Matrix cov = f.transpose() * f / static_cast<double>(n);
      total += (cov - target).norm();
    }
    err.push_back(total / 3.0);
  }
  EXPECT_LT(err[1], 0.5 * err[0]);
}
