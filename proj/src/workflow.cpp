#include "sgplvm/workflow.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>

namespace sgplvm {

TrainResult train_on_grid(const ObservationGrid &raw, const TrainConfig &cfg) {
  raw.validate();
  ObservationGrid g = raw;
  const Standardizer st = Standardizer::fit(raw.y);
  g.y = st.apply(raw.y);
  SgplvmModel m = initialize(g, cfg);
  m.standardizer = st;
  return train(m, cfg);
}

TestCase make_test_case(const SgplvmModel &model, const ObservationGrid &raw, const Matrix &mask,
                        Index i) {
  const Index ns = raw.n_s();
  if (mask.rows() != raw.n_xi || mask.cols() != ns) {
    throw DataError("mask is " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                    ", expected " + std::to_string(raw.n_xi) + "x" + std::to_string(ns));
  }
  const Matrix xs = raw.spatial_inputs();
  if (xs.cols() != model.x_s.cols()) throw DataError("test grid dimension differs from the model");
  TestCase tc;
  for (Index s = 0; s < ns; ++s) {
    if (mask(i, s) != 0.0) tc.observed_idx.push_back(s);
  }
  const Matrix block = raw.y.middleRows(i * ns, ns);
  tc.y_star = model.standardizer.apply(block(tc.observed_idx, Eigen::all));
  tc.xs_star = xs(tc.observed_idx, Eigen::all);
  if (raw.timestamps.size() == raw.n_xi) tc.t_star = raw.timestamps(i);
  return tc;
}

CaseMetrics masked_metrics(const Matrix &truth, const Matrix &mean, const Matrix &var,
                           const std::vector<Index> &rows, double noise_var) {
  const Matrix v = var(rows, Eigen::all).array() + noise_var;
  return case_metrics(truth(rows, Eigen::all), mean(rows, Eigen::all), v);
}

ImputeSetResult impute_test_set(const PosteriorContext &ctx, const ObservationGrid &raw,
                                const Matrix &mask, const ImputeSetOptions &opt) {
  raw.validate();
  const SgplvmModel &m = ctx.model;
  if (raw.d_y() != m.d_y()) throw DataError("test data channel count differs from the model");
  const Index ns = raw.n_s();
  const Index n = raw.n_xi;
  const Matrix xs = raw.spatial_inputs();
  if (xs.cols() != m.x_s.cols()) throw DataError("test grid dimension differs from the model");

  ImputeSetResult out;
  out.y = raw.y;
  out.var = Matrix::Zero(raw.y.rows(), raw.y.cols());
  out.latents.resize(n);
  std::vector<CaseMetrics> cases(n);
  std::vector<ImputeResult> results(n);

  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&](Index first, Index step) {
    for (Index i = first; i < n; i += step) {
      try {
        ImputeOptions io = opt.impute;
        io.seed = opt.impute.seed + static_cast<std::uint64_t>(i);
        io.infer.seed = opt.impute.infer.seed + static_cast<std::uint64_t>(i);
        results[i] = impute(ctx, make_test_case(m, raw, mask, i), xs, io);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const int threads = std::max(1, std::min<int>(opt.threads, static_cast<int>(std::max<Index>(n, 1))));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(work, k, threads);
    for (auto &t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  const double noise_var = 1.0 / m.beta;
  for (Index i = 0; i < n; ++i) {
    const ImputeResult &r = results[i];
    out.latents[i] = r.latent;
    if (r.missing_idx.empty()) {
      cases[i] = CaseMetrics{};
      continue;
    }
    const Matrix mean_raw = m.standardizer.invert(r.mean);
    const Matrix var_raw = m.standardizer.invert_variance(r.var);
    const Matrix truth = raw.y.middleRows(i * ns, ns)(r.missing_idx, Eigen::all);
    for (std::size_t k = 0; k < r.missing_idx.size(); ++k) {
      out.y.row(i * ns + r.missing_idx[k]) = mean_raw.row(static_cast<Index>(k));
      out.var.row(i * ns + r.missing_idx[k]) = var_raw.row(static_cast<Index>(k));
    }
    CaseMetrics c;
    c.count = truth.size();
    c.rmse = std::sqrt((truth - mean_raw).squaredNorm() / static_cast<double>(c.count));
    if (opt.raw_mnlp) {
      const Matrix noise = m.standardizer.invert_variance(Matrix::Constant(1, m.d_y(), noise_var));
      const Matrix v = var_raw.rowwise() + noise.row(0);
      c.mnlp = case_metrics(truth, mean_raw, v).mnlp;
    } else {
      const Matrix truth_std = m.standardizer.apply(truth);
      c.mnlp = case_metrics(truth_std, r.mean, (r.var.array() + noise_var).matrix()).mnlp;
    }
    cases[i] = c;
  }
  out.metrics = summarize(std::move(cases));
  return out;
}

}  // namespace sgplvm
