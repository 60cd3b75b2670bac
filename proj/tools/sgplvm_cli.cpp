#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "sgplvm/io.hpp"
#include "sgplvm/synth.hpp"
#include "sgplvm/workflow.hpp"

using namespace sgplvm;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::vector<Index> parse_shape(const std::string &s) {
  std::vector<Index> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size() || v < 1) throw std::invalid_argument(part);
      out.push_back(v);
    } catch (const std::exception &) {
      throw ConfigError("bad shape '" + s + "', expected e.g. 12x12");
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string metrics_csv(const MetricsReport &r) {
  std::string out = "case,count,rmse,mnlp\n";
  for (std::size_t i = 0; i < r.cases.size(); ++i) {
    const auto &c = r.cases[i];
    out += std::to_string(i) + "," + std::to_string(c.count) + "," + fmt(c.rmse) + "," + fmt(c.mnlp) + "\n";
  }
  out += "mean,," + fmt(r.rmse.mean) + "," + fmt(r.mnlp.mean) + "\n";
  out += "p5,," + fmt(r.rmse.p5) + "," + fmt(r.mnlp.p5) + "\n";
  out += "p95,," + fmt(r.rmse.p95) + "," + fmt(r.mnlp.p95) + "\n";
  return out;
}

Matrix read_mask(const std::string &path, const ObservationGrid &test) {
  const MatrixFile f = read_matrix_file(path);
  const Matrix &m = f.has("mask") ? f.get("mask") : f.arrays.at(0).second;
  if (m.rows() != test.n_xi || m.cols() != test.n_s()) {
    throw DataError(path + ": mask is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                    ", expected " + std::to_string(test.n_xi) + "x" + std::to_string(test.n_s()));
  }
  return m;
}

// Spatial inputs for prediction: the training grid refined by an integer
// factor, or explicit coordinates from a file.
Matrix prediction_inputs(const SgplvmModel &m, int refine, const std::string &spatial_file,
                         Matrix *shape) {
  if (!spatial_file.empty()) {
    const MatrixFile f = read_matrix_file(spatial_file);
    const Matrix xs = f.has("X_s") ? f.get("X_s") : f.arrays.at(0).second;
    if (xs.cols() != m.x_s.cols()) throw DataError(spatial_file + ": spatial inputs have wrong dimension");
    *shape = Matrix::Constant(1, 1, static_cast<double>(xs.rows()));
    return xs;
  }
  // Recover the per-axis grid from the training inputs.
  std::vector<Matrix> axes;
  for (Index d = 0; d < m.x_s.cols(); ++d) {
    std::vector<double> vals(m.x_s.col(d).data(), m.x_s.col(d).data() + m.x_s.rows());
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    const Index k = static_cast<Index>(vals.size());
    const double step = k > 1 ? (vals.back() - vals.front()) / static_cast<double>(k - 1) : 1.0;
    const Index kk = k * refine;
    axes.push_back(Vector::LinSpaced(kk, vals.front(), vals.front() + step * static_cast<double>(kk - 1) / refine));
  }
  shape->resize(1, static_cast<Index>(axes.size()));
  for (std::size_t a = 0; a < axes.size(); ++a) (*shape)(0, static_cast<Index>(a)) = static_cast<double>(axes[a].rows());
  return cartesian_product(axes);
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Structured Bayesian GP-LVM: training, latent inference, imputation and prediction"};
  app.require_subcommand(1);

  // train
  auto *train_cmd = app.add_subcommand("train", "Fit a model to a data file");
  std::string data_path, config_path, out_path, trace_path, shape_str;
  Index channels = 1;
  train_cmd->add_option("--data", data_path, "Data file with array Y (and optional shape, t)")->required();
  train_cmd->add_option("--config", config_path, "key = value configuration file");
  train_cmd->add_option("--out", out_path, "Checkpoint to write")->required();
  train_cmd->add_option("--trace", trace_path, "Bound trace CSV (default: <out>.trace.csv)");
  train_cmd->add_option("--shape", shape_str, "Spatial grid shape, e.g. 12x12 (default: shape array)");
  train_cmd->add_option("--channels", channels, "Output channels per pixel")->check(CLI::PositiveNumber);

  // infer
  auto *infer_cmd = app.add_subcommand("infer", "Infer latent posteriors of partially observed examples");
  std::string ckpt_path, test_path, mask_path;
  int restarts = 5, infer_iters = 200;
  std::uint64_t seed = 0;
  for (auto *c : {infer_cmd}) {
    c->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
    c->add_option("--test", test_path, "Test data file with array Y")->required();
    c->add_option("--mask", mask_path, "Mask file (1 = observed)")->required();
    c->add_option("--out", out_path, "Output file")->required();
    c->add_option("--restarts", restarts, "Optimizer restarts")->check(CLI::PositiveNumber);
    c->add_option("--iters", infer_iters, "Iterations per restart");
    c->add_option("--seed", seed, "Random seed");
  }

  // impute
  auto *impute_cmd = app.add_subcommand("impute", "Fill in the unobserved pixels of test examples");
  std::string metrics_path;
  int n_mog = 100, threads = 1;
  bool raw_mnlp = false, no_noise = false;
  impute_cmd->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  impute_cmd->add_option("--test", test_path, "Test data file with array Y")->required();
  impute_cmd->add_option("--mask", mask_path, "Mask file (1 = observed)")->required();
  impute_cmd->add_option("--out", out_path, "Imputed data file")->required();
  impute_cmd->add_option("--metrics", metrics_path, "Metrics CSV (default: <out>.metrics.csv)");
  impute_cmd->add_option("--n-mog", n_mog, "Mixture components for the covariance")->check(CLI::PositiveNumber);
  impute_cmd->add_option("--restarts", restarts, "Latent inference restarts")->check(CLI::PositiveNumber);
  impute_cmd->add_option("--iters", infer_iters, "Latent inference iterations per restart");
  impute_cmd->add_option("--seed", seed, "Random seed");
  impute_cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  impute_cmd->add_flag("--raw-mnlp", raw_mnlp, "Report MNLP in raw data units");
  impute_cmd->add_flag("--no-noise", no_noise, "Condition on observed pixels without observation noise");

  // predict
  auto *predict_cmd = app.add_subcommand("predict", "Predict outputs at given latent points or times");
  std::string times_path, latents_path, spatial_path;
  int refine = 1;
  predict_cmd->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  auto *times_opt = predict_cmd->add_option("--times", times_path, "File with times (dynamical models)");
  auto *lat_opt = predict_cmd->add_option("--latents", latents_path, "File with latent 'mean' (and optional 'var')");
  times_opt->excludes(lat_opt);
  predict_cmd->add_option("--spatial", spatial_path, "File with spatial inputs X_s");
  predict_cmd->add_option("--refine", refine, "Refine the training pixel grid by this factor")->check(CLI::PositiveNumber);
  predict_cmd->add_option("--n-mog", n_mog, "Mixture components for uncertain latents")->check(CLI::PositiveNumber);
  predict_cmd->add_option("--seed", seed, "Random seed");
  predict_cmd->add_option("--out", out_path, "Prediction file")->required();

  // eval
  auto *eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  std::string pred_path, truth_path;
  double noise_var = 0.0;
  eval_cmd->add_option("--pred", pred_path, "Prediction file with Y and var")->required();
  eval_cmd->add_option("--truth", truth_path, "Ground-truth file with Y")->required();
  eval_cmd->add_option("--mask", mask_path, "Mask file; only entries with mask 0 are scored");
  eval_cmd->add_option("--noise-var", noise_var, "Added to the predictive variance")->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--shape", shape_str, "Spatial grid shape for the mask");
  eval_cmd->add_option("--out", out_path, "Metrics CSV (default: stdout)");

  // export-latents
  auto *export_cmd = app.add_subcommand("export-latents", "Write latent posteriors and inverse lengthscales");
  export_cmd->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  export_cmd->add_option("--out", out_path, "Output file")->required();

  // synth
  auto *synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string kind = "gp_images", out_dir, format = "sgpl";
  SynthParams sp;
  synth_cmd->add_option("--kind", kind, "gp_images or dynamic_video");
  synth_cmd->add_option("--out-dir", out_dir, "Directory for train/test/mask files")->required();
  synth_cmd->add_option("--seed", seed, "Random seed");
  synth_cmd->add_option("--n-train", sp.n_train, "Training examples");
  synth_cmd->add_option("--n-test", sp.n_test, "Test examples");
  synth_cmd->add_option("--shape", shape_str, "Image shape, e.g. 12x12");
  synth_cmd->add_option("--latent-dim", sp.latent_dim, "Latent dimension");
  synth_cmd->add_option("--noise", sp.noise_std, "Observation noise standard deviation");
  synth_cmd->add_option("--missing", sp.missing_fraction, "Fraction of missing pixels per test image");
  synth_cmd->add_option("--spatial-lengthscale", sp.spatial_lengthscale, "Spatial kernel lengthscale");
  synth_cmd->add_option("--format", format, "sgpl (binary) or csv")->check(CLI::IsMember({"sgpl", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) {
      const TrainConfig cfg = config_path.empty() ? TrainConfig{} : train_config_from(read_config(config_path));
      const ObservationGrid data = load_grid(data_path, GridLayout{parse_shape(shape_str), channels});
      const TrainResult r = train_on_grid(data, cfg);
      save_checkpoint(out_path, r.model);
      std::string trace = "iter,bound,beta,grad_norm,wall_ms\n";
      for (const auto &row : r.trace) {
        trace += std::to_string(row.iter) + "," + fmt(row.bound) + "," + fmt(row.beta) + "," +
                 fmt(row.grad_norm) + "," + fmt(row.wall_ms) + "\n";
      }
      write_file_atomic(trace_path.empty() ? out_path + ".trace.csv" : trace_path, trace);
      std::cout << "initial bound " << fmt(r.initial_bound) << ", final bound " << fmt(r.final_bound)
                << " (" << r.status << ")\n";
    } else if (*infer_cmd || *impute_cmd) {
      const SgplvmModel model = load_checkpoint(ckpt_path);
      const PosteriorContext ctx = make_context(model);
      const ObservationGrid test = load_grid(test_path, GridLayout{{}, model.d_y()});
      const Matrix mask = read_mask(mask_path, test);
      InferConfig ic;
      ic.restarts = restarts;
      ic.max_iters = infer_iters;
      ic.seed = seed;
      if (*infer_cmd) {
        const Index d = model.latent_dim();
        Matrix mean(test.n_xi, d), var(test.n_xi, d), bound(test.n_xi, 1);
        for (Index i = 0; i < test.n_xi; ++i) {
          InferConfig c = ic;
          c.seed = seed + static_cast<std::uint64_t>(i);
          const InferResult r = infer_latent(ctx, make_test_case(model, test, mask, i), c);
          mean.row(i) = r.q.mean.transpose();
          var.row(i) = r.q.var.transpose();
          bound(i, 0) = r.bound;
        }
        MatrixFile f;
        f.set("mean", mean);
        f.set("var", var);
        f.set("bound", bound);
        write_matrix_file(out_path, f);
      } else {
        ImputeSetOptions opt;
        opt.impute.n_mog = n_mog;
        opt.impute.seed = seed;
        opt.impute.observation_noise = !no_noise;
        opt.impute.infer = ic;
        opt.raw_mnlp = raw_mnlp;
        opt.threads = threads;
        const ImputeSetResult r = impute_test_set(ctx, test, mask, opt);
        MatrixFile f = grid_arrays(test);
        f.set("Y", r.y);
        f.set("var", r.var);
        write_matrix_file(out_path, f);
        write_file_atomic(metrics_path.empty() ? out_path + ".metrics.csv" : metrics_path, metrics_csv(r.metrics));
        std::cout << "mean RMSE " << fmt(r.metrics.rmse.mean) << ", mean MNLP " << fmt(r.metrics.mnlp.mean) << "\n";
      }
    } else if (*predict_cmd) {
      const SgplvmModel model = load_checkpoint(ckpt_path);
      const PosteriorContext ctx = make_context(model);
      Matrix shape;
      const Matrix xs = prediction_inputs(model, refine, spatial_path, &shape);
      LatentMarginals q;
      if (!times_path.empty()) {
        const MatrixFile tf = read_matrix_file(times_path);
        const Matrix &t = tf.has("t") ? tf.get("t") : tf.arrays.at(0).second;
        q = dynamical_latent_at(model, Eigen::Map<const Vector>(t.data(), t.size()));
      } else if (!latents_path.empty()) {
        const MatrixFile lf = read_matrix_file(latents_path);
        q.mean = lf.get("mean");
        q.var = lf.has("var") ? lf.get("var") : Matrix::Zero(q.mean.rows(), q.mean.cols());
        if (q.var.rows() != q.mean.rows() || q.var.cols() != q.mean.cols()) {
          throw DataError(latents_path + ": 'var' must match 'mean'");
        }
      } else {
        throw ConfigError("predict needs --times or --latents");
      }
      const Index ns = xs.rows();
      Matrix y(q.mean.rows() * ns, model.d_y()), var(q.mean.rows() * ns, model.d_y());
      for (Index i = 0; i < q.mean.rows(); ++i) {
        const DiagonalGaussian qi{q.mean.row(i).transpose(), q.var.row(i).transpose()};
        Matrix mi, vi;
        if ((qi.var.array() == 0.0).all()) {
          const PredictiveGaussian p = predict_at(ctx, qi.mean.transpose(), xs);
          mi = p.mean;
          vi = p.var.replicate(1, model.d_y());
        } else {
          mi = predict_marginal_mean(ctx, LatentMarginals{qi.mean.transpose(), qi.var.transpose()}, xs);
          vi = predict_mixture(ctx, qi, xs, n_mog, seed + static_cast<std::uint64_t>(i)).variance();
        }
        y.middleRows(i * ns, ns) = model.standardizer.invert(mi);
        var.middleRows(i * ns, ns) = model.standardizer.invert_variance(vi);
      }
      MatrixFile f;
      f.set("Y", y);
      f.set("var", var);
      f.set("shape", shape);
      f.set("X_s", xs);
      write_matrix_file(out_path, f);
    } else if (*eval_cmd) {
      const MatrixFile pf = read_matrix_file(pred_path);
      const MatrixFile tf = read_matrix_file(truth_path);
      const Matrix &mean = pf.get("Y");
      const Matrix &truth = tf.get("Y");
      const Matrix var = pf.has("var") ? pf.get("var") : Matrix::Zero(mean.rows(), mean.cols());
      if (mean.rows() != truth.rows() || mean.cols() != truth.cols() || var.rows() != mean.rows() ||
          var.cols() != mean.cols()) {
        throw DataError("prediction and truth files have different shapes");
      }
      std::vector<CaseMetrics> cases;
      if (!mask_path.empty()) {
        const MatrixFile mf = read_matrix_file(mask_path);
        const Matrix &mask = mf.has("mask") ? mf.get("mask") : mf.arrays.at(0).second;
        const Index ns = mask.cols();
        if (mask.rows() * ns != mean.rows()) throw DataError(mask_path + ": mask does not match the predictions");
        for (Index i = 0; i < mask.rows(); ++i) {
          std::vector<Index> rows;
          for (Index s = 0; s < ns; ++s) {
            if (mask(i, s) == 0.0) rows.push_back(i * ns + s);
          }
          cases.push_back(masked_metrics(truth, mean, var, rows, noise_var));
        }
      } else {
        const Matrix v = var.array() + noise_var;
        cases.push_back(case_metrics(truth, mean, v));
      }
      const std::string csv = metrics_csv(summarize(std::move(cases)));
      if (out_path.empty()) {
        std::cout << csv;
      } else {
        write_file_atomic(out_path, csv);
      }
    } else if (*export_cmd) {
      const SgplvmModel model = load_checkpoint(ckpt_path);
      const LatentMarginals q = latent_marginals(model.q, model.temporal(), model.temporal_jitter);
      MatrixFile f;
      f.set("mean", q.mean);
      f.set("var", q.var);
      Matrix inv(1, model.latent_dim());
      for (Index d = 0; d < model.latent_dim(); ++d) inv(0, d) = 1.0 / model.latent_kernel.lengthscale(d);
      f.set("inverse_lengthscales", inv);
      if (model.q.timestamps.size() > 0) f.set("t", model.q.timestamps);
      write_matrix_file(out_path, f);
    } else if (*synth_cmd) {
      sp.kind = synth_kind_from_string(kind);
      if (!shape_str.empty()) sp.shape = parse_shape(shape_str);
      const SynthDataset d = synth_generate(sp, seed);
      const std::string ext = format == "csv" ? ".csv" : ".sgpl";
      const std::filesystem::path dir(out_dir);
      write_matrix_file((dir / ("train" + ext)).string(), grid_arrays(d.train));
      MatrixFile test = grid_arrays(d.test);
      test.set("Y_clean", d.f_test);
      write_matrix_file((dir / ("test" + ext)).string(), test);
      MatrixFile mask;
      mask.set("mask", d.test_mask);
      write_matrix_file((dir / ("mask" + ext)).string(), mask);
      MatrixFile lat;
      lat.set("train", d.latents_train);
      lat.set("test", d.latents_test);
      write_matrix_file((dir / ("latents" + ext)).string(), lat);
    }
  } catch (const ConfigError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError &e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const DecompositionError &e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
