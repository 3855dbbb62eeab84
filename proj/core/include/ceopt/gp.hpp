#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "ceopt/errors.hpp"
#include "ceopt/rng.hpp"

namespace ceopt {

// Squared-exponential kernel with one lengthscale per input dimension.
struct RbfKernel {
  Eigen::VectorXd lengthscales;
  double signal_variance = 1.0;

  RbfKernel() = default;
  RbfKernel(Eigen::VectorXd ls, double sv);

  std::size_t dim() const { return static_cast<std::size_t>(lengthscales.size()); }
  double operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
  // Gram matrix k(A_i, B_j); rows of A/B are points.
  Eigen::MatrixXd matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const;
};

struct PosteriorGaussian {
  double mean = 0.0;
  double variance = 0.0;
};

// Optional prior-mean and prior-variance-offset handles. The offset models
// an extra zero-mean component that is perfectly correlated at identical
// inputs and uncorrelated otherwise, so it enters the covariance only where
// two points coincide.
using MeanFn = std::function<double(const Eigen::VectorXd&)>;
using VarOffsetFn = std::function<double(const Eigen::VectorXd&)>;

// Exact GP regressor. A value is immutable once built: conditioning on data
// returns a new instance with a refreshed Cholesky factor.
class GaussianProcess {
 public:
  GaussianProcess() = default;
  GaussianProcess(RbfKernel kernel, double noise_variance, MeanFn prior_mean = nullptr,
                  VarOffsetFn prior_var_offset = nullptr);

  // New GP conditioned on (inputs, outputs); inputs are row-points.
  GaussianProcess conditioned_on(const Eigen::MatrixXd& inputs,
                                 const Eigen::VectorXd& outputs) const;
  GaussianProcess with_extra_point(const Eigen::VectorXd& x, double y) const;

  std::size_t num_points() const { return static_cast<std::size_t>(y_.size()); }
  std::size_t input_dim() const { return kernel_.dim(); }
  const Eigen::MatrixXd& train_inputs() const { return X_; }
  const Eigen::VectorXd& train_outputs() const { return y_; }
  const RbfKernel& kernel() const { return kernel_; }
  double noise_variance() const { return noise_variance_; }

  double prior_mean_at(const Eigen::VectorXd& x) const;
  double prior_variance_at(const Eigen::VectorXd& x) const;

  // log N(y; m, K + noise I) for the stored data.
  double log_marginal_likelihood() const;

  // Latent-function posterior at each query row; observation noise is not
  // added. Variance is clamped at zero after round-off.
  std::vector<PosteriorGaussian> predict(const Eigen::MatrixXd& queries) const;
  void predict_mean_var(const Eigen::MatrixXd& queries, Eigen::VectorXd& mean,
                        Eigen::VectorXd& variance) const;

  // `count` i.i.d. draws of the latent posterior over the query rows; one
  // draw per returned row. Duplicate query points share their draw exactly.
  Eigen::MatrixXd sample_joint(const Eigen::MatrixXd& queries, int count, Rng& rng) const;

 private:
  void refresh();
  Eigen::MatrixXd covariance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const;

  RbfKernel kernel_;
  double noise_variance_ = 0.0;
  MeanFn prior_mean_;
  VarOffsetFn prior_var_offset_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd chol_;     // lower factor of K + noise I + jitter I
  Eigen::VectorXd alpha_;    // (K + noise I + jitter I)^{-1} (y - m0)
  Eigen::VectorXd residual_; // y - m0(X)
  double jitter_ = 0.0;

  friend struct LmlObjective;
};

struct FitOptions {
  int restarts = 5;
  int max_iterations = 80;
  std::uint64_t seed = 0;
  bool fit_noise = true;
  double fixed_noise_variance = 1e-2;  // used when fit_noise is false
  double lengthscale_min = 1e-3, lengthscale_max = 1e3;
  double variance_min = 1e-6, variance_max = 1e3;
};

// Type-II maximum likelihood fit of an RBF GP: multistart gradient ascent on
// the log marginal likelihood in log-hyperparameter space. Outputs are
// centred on their empirical mean, which becomes the constant prior mean of
// the returned GP.
GaussianProcess fit_gp(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& outputs,
                       const FitOptions& options = {});

// Same fit with fixed prior-mean and variance-offset handles: residuals are
// taken against the prior mean and the offset inflates the training
// diagonal. The handles are not fitted; the returned GP carries them.
GaussianProcess fit_gp_with_prior(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& outputs,
                                  MeanFn prior_mean, VarOffsetFn prior_var_offset,
                                  const FitOptions& options = {});

// Log marginal likelihood and its gradient w.r.t. (log lengthscales...,
// log signal variance, log noise variance) for zero-prior-mean data.
// Exposed for the finite-difference property checks.
double lml_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& outputs,
                        const RbfKernel& kernel, double noise_variance,
                        Eigen::VectorXd* gradient);

}  // namespace ceopt
