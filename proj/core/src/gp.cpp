#include "ceopt/gp.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>

namespace ceopt {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

bool rows_equal(const Eigen::MatrixXd& A, Eigen::Index i, const Eigen::MatrixXd& B,
                Eigen::Index j) {
  for (Eigen::Index d = 0; d < A.cols(); ++d)
    if (A(i, d) != B(j, d)) return false;
  return true;
}

// Lower Cholesky factor of K + jitter*I. The base jitter of
// 1e-8 * signal_variance is always part of the model; on factorization
// failure it escalates by x10 up to an absolute ceiling of 1e-2.
Eigen::MatrixXd cholesky_with_jitter(Eigen::MatrixXd K, double scale, double* jitter_used) {
  double jitter = 1e-8 * std::max(scale, 1e-12);
  while (jitter <= 1e-2) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = jitter;
      return llt.matrixL();
    }
    jitter *= 10.0;
  }
  throw NumericalFailure("covariance not positive definite after jitter escalation");
}

std::atomic<int> clamp_warnings{0};

double clamp_variance(double v) {
  if (v >= 0.0) return v;
  if (v < -1e-8) {
    const int n = clamp_warnings.fetch_add(1);
    if (n < 3)
      std::fprintf(stderr, "ceopt: clamped predictive variance %.3e to 0\n", v);
  }
  return 0.0;
}

}  // namespace

RbfKernel::RbfKernel(Eigen::VectorXd ls, double sv)
    : lengthscales(std::move(ls)), signal_variance(sv) {
  if (lengthscales.size() == 0) throw InvalidData("kernel needs at least one lengthscale");
  for (Eigen::Index d = 0; d < lengthscales.size(); ++d)
    if (!(lengthscales[d] > 0.0) || !std::isfinite(lengthscales[d]))
      throw InvalidData("lengthscales must be positive and finite");
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
    throw InvalidData("signal variance must be positive and finite");
}

double RbfKernel::operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  double q = 0.0;
  for (Eigen::Index d = 0; d < lengthscales.size(); ++d) {
    const double t = (a[d] - b[d]) / lengthscales[d];
    q += t * t;
  }
  return signal_variance * std::exp(-0.5 * q);
}

Eigen::MatrixXd RbfKernel::matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const {
  if (&A == &B) {
    // Exact symmetry: fill the lower triangle once and mirror it.
    const Eigen::Index n = A.rows();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      K(i, i) = signal_variance;
      for (Eigen::Index j = 0; j < i; ++j) K(i, j) = K(j, i) = (*this)(A.row(i), A.row(j));
    }
    return K;
  }
  const Eigen::VectorXd inv_ls = lengthscales.cwiseInverse();
  const Eigen::MatrixXd As = A * inv_ls.asDiagonal();
  const Eigen::MatrixXd Bs = B * inv_ls.asDiagonal();
  const Eigen::VectorXd a2 = As.rowwise().squaredNorm();
  const Eigen::VectorXd b2 = Bs.rowwise().squaredNorm();
  Eigen::MatrixXd Q = -2.0 * As * Bs.transpose();
  Q.colwise() += a2;
  Q.rowwise() += b2.transpose();
  return signal_variance * (-0.5 * Q.cwiseMax(0.0).array()).exp().matrix();
}

GaussianProcess::GaussianProcess(RbfKernel kernel, double noise_variance, MeanFn prior_mean,
                                 VarOffsetFn prior_var_offset)
    : kernel_(std::move(kernel)),
      noise_variance_(noise_variance),
      prior_mean_(std::move(prior_mean)),
      prior_var_offset_(std::move(prior_var_offset)) {
  if (noise_variance_ < 0.0 || !std::isfinite(noise_variance_))
    throw InvalidData("noise variance must be non-negative and finite");
  X_.resize(0, kernel_.dim());
  y_.resize(0);
}

double GaussianProcess::prior_mean_at(const Eigen::VectorXd& x) const {
  return prior_mean_ ? prior_mean_(x) : 0.0;
}

double GaussianProcess::prior_variance_at(const Eigen::VectorXd& x) const {
  return kernel_.signal_variance + (prior_var_offset_ ? prior_var_offset_(x) : 0.0);
}

Eigen::MatrixXd GaussianProcess::covariance(const Eigen::MatrixXd& A,
                                            const Eigen::MatrixXd& B) const {
  Eigen::MatrixXd K = kernel_.matrix(A, B);
  if (prior_var_offset_) {
    // The offset component only correlates coincident inputs.
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      for (Eigen::Index j = 0; j < B.rows(); ++j)
        if (rows_equal(A, i, B, j)) K(i, j) += prior_var_offset_(A.row(i));
  }
  return K;
}

GaussianProcess GaussianProcess::conditioned_on(const Eigen::MatrixXd& inputs,
                                                const Eigen::VectorXd& outputs) const {
  if (inputs.rows() != outputs.size())
    throw InvalidData("inputs/outputs row count mismatch");
  if (inputs.rows() > 0 && static_cast<std::size_t>(inputs.cols()) != kernel_.dim())
    throw InvalidData("training input dimension does not match kernel");
  if (!inputs.allFinite() || !outputs.allFinite())
    throw InvalidData("training data must be finite");
  GaussianProcess out(*this);
  out.X_ = inputs;
  out.y_ = outputs;
  out.refresh();
  return out;
}

GaussianProcess GaussianProcess::with_extra_point(const Eigen::VectorXd& x, double y) const {
  Eigen::MatrixXd X(X_.rows() + 1, kernel_.dim());
  Eigen::VectorXd Y(y_.size() + 1);
  if (X_.rows() > 0) X.topRows(X_.rows()) = X_;
  X.row(X.rows() - 1) = x.transpose();
  if (y_.size() > 0) Y.head(y_.size()) = y_;
  Y[Y.size() - 1] = y;
  return conditioned_on(X, Y);
}

void GaussianProcess::refresh() {
  const Eigen::Index n = y_.size();
  residual_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) residual_[i] = y_[i] - prior_mean_at(X_.row(i));
  if (n == 0) {
    chol_.resize(0, 0);
    alpha_.resize(0);
    return;
  }
  Eigen::MatrixXd K = covariance(X_, X_);
  K.diagonal().array() += noise_variance_;
  chol_ = cholesky_with_jitter(std::move(K), kernel_.signal_variance, &jitter_);
  alpha_ = chol_.transpose().triangularView<Eigen::Upper>().solve(
      chol_.triangularView<Eigen::Lower>().solve(residual_));
}

double GaussianProcess::log_marginal_likelihood() const {
  const Eigen::Index n = y_.size();
  if (n == 0) throw InvalidData("log marginal likelihood needs at least one point");
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(chol_(i, i));
  return -0.5 * residual_.dot(alpha_) - logdet - 0.5 * double(n) * kLog2Pi;
}

void GaussianProcess::predict_mean_var(const Eigen::MatrixXd& queries, Eigen::VectorXd& mean,
                                       Eigen::VectorXd& variance) const {
  if (static_cast<std::size_t>(queries.cols()) != kernel_.dim())
    throw InvalidQuery("query dimension does not match kernel");
  const Eigen::Index m = queries.rows();
  mean.resize(m);
  variance.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    mean[i] = prior_mean_at(queries.row(i));
    variance[i] = prior_variance_at(queries.row(i));
  }
  if (y_.size() == 0) return;
  const Eigen::MatrixXd C = covariance(X_, queries);  // n x m
  mean.noalias() += C.transpose() * alpha_;
  const Eigen::MatrixXd V = chol_.triangularView<Eigen::Lower>().solve(C);
  for (Eigen::Index i = 0; i < m; ++i)
    variance[i] = clamp_variance(variance[i] - V.col(i).squaredNorm());
}

std::vector<PosteriorGaussian> GaussianProcess::predict(const Eigen::MatrixXd& queries) const {
  Eigen::VectorXd mean, var;
  predict_mean_var(queries, mean, var);
  std::vector<PosteriorGaussian> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) out[i] = {mean[i], var[i]};
  return out;
}

Eigen::MatrixXd GaussianProcess::sample_joint(const Eigen::MatrixXd& queries, int count,
                                              Rng& rng) const {
  if (queries.rows() < 1) throw InvalidQuery("sample_joint needs at least one query");
  if (count < 1) throw InvalidQuery("sample_joint needs count >= 1");
  if (static_cast<std::size_t>(queries.cols()) != kernel_.dim())
    throw InvalidQuery("query dimension does not match kernel");

  // Deduplicate identical queries so coincident points share their draw and
  // the posterior covariance stays well conditioned.
  const Eigen::Index m = queries.rows();
  std::vector<Eigen::Index> to_unique(m);
  std::vector<Eigen::Index> unique_rows;
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index found = -1;
    for (std::size_t u = 0; u < unique_rows.size() && found < 0; ++u)
      if (rows_equal(queries, unique_rows[u], queries, i))
        found = static_cast<Eigen::Index>(u);
    if (found < 0) {
      found = static_cast<Eigen::Index>(unique_rows.size());
      unique_rows.push_back(i);
    }
    to_unique[i] = found;
  }
  const Eigen::Index mu = static_cast<Eigen::Index>(unique_rows.size());
  Eigen::MatrixXd Q(mu, queries.cols());
  for (Eigen::Index u = 0; u < mu; ++u) Q.row(u) = queries.row(unique_rows[u]);

  Eigen::VectorXd mean(mu);
  Eigen::MatrixXd cov = covariance(Q, Q);
  for (Eigen::Index i = 0; i < mu; ++i) mean[i] = prior_mean_at(Q.row(i));
  if (y_.size() > 0) {
    const Eigen::MatrixXd C = covariance(X_, Q);
    mean.noalias() += C.transpose() * alpha_;
    const Eigen::MatrixXd V = chol_.triangularView<Eigen::Lower>().solve(C);
    cov.noalias() -= V.transpose() * V;
  }
  const Eigen::MatrixXd L = cholesky_with_jitter(std::move(cov), kernel_.signal_variance, nullptr);

  Eigen::MatrixXd out(count, m);
  Eigen::VectorXd z(mu);
  for (int s = 0; s < count; ++s) {
    for (Eigen::Index i = 0; i < mu; ++i) z[i] = draw_normal(rng);
    const Eigen::VectorXd f = mean + L * z;
    for (Eigen::Index i = 0; i < m; ++i) out(s, i) = f[to_unique[i]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hyperparameter fitting

namespace {

struct LmlCore {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
};

// Value and gradient in (log ls..., log sv, [log noise]) coordinates.
// `diag_offset` holds optional per-point prior-variance inflation.
LmlCore lml_core(const Eigen::MatrixXd& X, const Eigen::VectorXd& r, const RbfKernel& kernel,
                 double noise, const Eigen::VectorXd* diag_offset, bool want_noise_grad) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  LmlCore out;
  out.gradient = Eigen::VectorXd::Zero(d + 1 + (want_noise_grad ? 1 : 0));

  Eigen::MatrixXd Krbf = kernel.matrix(X, X);
  Eigen::MatrixXd K = Krbf;
  K.diagonal().array() += noise;
  if (diag_offset) K.diagonal() += *diag_offset;

  Eigen::MatrixXd L;
  try {
    L = cholesky_with_jitter(K, kernel.signal_variance, nullptr);
  } catch (const NumericalFailure&) {
    return out;  // -inf value signals the optimizer away
  }
  const Eigen::VectorXd alpha = L.transpose().triangularView<Eigen::Upper>().solve(
      L.triangularView<Eigen::Lower>().solve(r));
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(L(i, i));
  out.value = -0.5 * r.dot(alpha) - logdet - 0.5 * double(n) * kLog2Pi;

  // dL/dtheta = 0.5 tr((alpha alpha^T - K^{-1}) dK/dtheta)
  Eigen::MatrixXd Kinv = L.transpose().triangularView<Eigen::Upper>().solve(
      L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n)));
  const Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;

  for (Eigen::Index dd = 0; dd < d; ++dd) {
    const double ls = kernel.lengthscales[dd];
    double g = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const double t = (X(i, dd) - X(j, dd)) / ls;
        g += W(i, j) * Krbf(i, j) * t * t;
      }
    out.gradient[dd] = 0.5 * g;
  }
  out.gradient[d] = 0.5 * (W.array() * Krbf.array()).sum();
  if (want_noise_grad) out.gradient[d + 1] = 0.5 * noise * W.trace();
  return out;
}

struct ParamSpace {
  Eigen::Index dim;
  bool fit_noise;
  double ls_lo, ls_hi, var_lo, var_hi;

  Eigen::VectorXd clip(Eigen::VectorXd theta) const {
    for (Eigen::Index i = 0; i < dim; ++i)
      theta[i] = std::clamp(theta[i], std::log(ls_lo), std::log(ls_hi));
    for (Eigen::Index i = dim; i < theta.size(); ++i)
      theta[i] = std::clamp(theta[i], std::log(var_lo), std::log(var_hi));
    return theta;
  }
  RbfKernel kernel(const Eigen::VectorXd& theta) const {
    return RbfKernel(theta.head(dim).array().exp().matrix(), std::exp(theta[dim]));
  }
  double noise(const Eigen::VectorXd& theta, double fixed) const {
    return fit_noise ? std::exp(theta[dim + 1]) : fixed;
  }
};

}  // namespace

double lml_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& outputs,
                        const RbfKernel& kernel, double noise_variance,
                        Eigen::VectorXd* gradient) {
  LmlCore core = lml_core(inputs, outputs, kernel, noise_variance, nullptr, true);
  if (gradient) *gradient = core.gradient;
  return core.value;
}

namespace {

struct FitCoreResult {
  RbfKernel kernel;
  double noise = 0.0;
  double lml = -std::numeric_limits<double>::infinity();
};

FitCoreResult fit_core(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& r,
                       const Eigen::VectorXd* diag_offset, const FitOptions& options) {
  if (inputs.rows() < 1) throw InvalidData("fit needs at least one point");
  if (inputs.rows() != r.size()) throw InvalidData("inputs/outputs size mismatch");
  if (!inputs.allFinite() || !r.allFinite()) throw InvalidData("non-finite training data");
  if (options.restarts < 1) throw InvalidData("restarts must be >= 1");

  const Eigen::Index n = inputs.rows();
  const Eigen::Index d = inputs.cols();

  const ParamSpace space{d, options.fit_noise, options.lengthscale_min, options.lengthscale_max,
                         options.variance_min, options.variance_max};

  // Heuristic start: column spread for lengthscales, residual variance split
  // between signal and noise.
  Eigen::VectorXd theta0(d + 1 + (options.fit_noise ? 1 : 0));
  for (Eigen::Index dd = 0; dd < d; ++dd) {
    const double spread = inputs.col(dd).maxCoeff() - inputs.col(dd).minCoeff();
    theta0[dd] = std::log(std::max(spread > 0.0 ? 0.3 * spread : 1.0, options.lengthscale_min));
  }
  const double rvar = n > 1 ? r.squaredNorm() / double(n) : 1.0;
  theta0[d] = std::log(std::max(rvar, 10.0 * options.variance_min));
  if (options.fit_noise)
    theta0[d + 1] = std::log(std::max(0.1 * rvar, 10.0 * options.variance_min));
  theta0 = space.clip(theta0);

  auto evaluate = [&](const Eigen::VectorXd& theta) {
    return lml_core(inputs, r, space.kernel(theta), space.noise(theta, options.fixed_noise_variance),
                    diag_offset, options.fit_noise);
  };

  Rng rng = make_rng(options.seed, 0x9f17u);
  Eigen::VectorXd best_theta = theta0;
  double best_value = -std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < options.restarts; ++restart) {
    Eigen::VectorXd theta = theta0;
    if (restart > 0) {
      for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += 1.5 * draw_normal(rng);
      theta = space.clip(theta);
    }
    LmlCore cur = evaluate(theta);
    if (cur.value > best_value) {
      best_value = cur.value;
      best_theta = theta;
    }
    if (!std::isfinite(cur.value)) continue;

    double step = 0.25;
    for (int it = 0; it < options.max_iterations; ++it) {
      const double gnorm = cur.gradient.lpNorm<Eigen::Infinity>();
      if (!std::isfinite(gnorm) || gnorm < 1e-6) break;
      const Eigen::VectorXd dir = cur.gradient / gnorm;
      bool accepted = false;
      for (int half = 0; half < 24 && !accepted; ++half) {
        const Eigen::VectorXd trial = space.clip(theta + step * dir);
        LmlCore next = evaluate(trial);
        if (next.value > best_value) {
          best_value = next.value;
          best_theta = trial;
        }
        if (next.value > cur.value + 1e-12) {
          theta = trial;
          cur = std::move(next);
          accepted = true;
          step = std::min(step * 1.5, 1.0);
        } else {
          step *= 0.5;
        }
      }
      if (!accepted || step < 1e-10) break;
    }
  }

  if (!std::isfinite(best_value))
    throw FitFailed("no restart produced a finite log marginal likelihood");

  return {space.kernel(best_theta), space.noise(best_theta, options.fixed_noise_variance),
          best_value};
}

}  // namespace

GaussianProcess fit_gp(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& outputs,
                       const FitOptions& options) {
  if (outputs.size() < 1) throw InvalidData("fit needs at least one point");
  const double ymean = outputs.mean();
  const Eigen::VectorXd r = outputs.array() - ymean;
  const FitCoreResult fit = fit_core(inputs, r, nullptr, options);
  GaussianProcess gp(fit.kernel, fit.noise, [ymean](const Eigen::VectorXd&) { return ymean; });
  return gp.conditioned_on(inputs, outputs);
}

GaussianProcess fit_gp_with_prior(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& outputs,
                                  MeanFn prior_mean, VarOffsetFn prior_var_offset,
                                  const FitOptions& options) {
  if (outputs.size() < 1) throw InvalidData("fit needs at least one point");
  Eigen::VectorXd r(outputs.size());
  for (Eigen::Index i = 0; i < outputs.size(); ++i)
    r[i] = outputs[i] - (prior_mean ? prior_mean(inputs.row(i)) : 0.0);
  Eigen::VectorXd offsets;
  const Eigen::VectorXd* offsets_ptr = nullptr;
  if (prior_var_offset) {
    offsets.resize(inputs.rows());
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) offsets[i] = prior_var_offset(inputs.row(i));
    offsets_ptr = &offsets;
  }
  const FitCoreResult fit = fit_core(inputs, r, offsets_ptr, options);
  GaussianProcess gp(fit.kernel, fit.noise, std::move(prior_mean), std::move(prior_var_offset));
  return gp.conditioned_on(inputs, outputs);
}

}  // namespace ceopt
