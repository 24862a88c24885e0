#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasgrid/category_grammar.hpp"
#include "biasgrid/sentiment.hpp"

namespace biasgrid {

// ---------------------------------------------------------------------------
// Special functions. All throw DomainError outside their domain.

// ln Gamma(x) for x > 0 (Lanczos, g = 7, 9 terms).
double ln_gamma(double x);
// Regularized incomplete beta I_x(a, b), a, b > 0, x in [0, 1], evaluated
// with a modified-Lentz continued fraction.
double reg_inc_beta(double a, double b, double x);
// Student-t CDF with `dof` > 0 degrees of freedom.
double t_cdf(double t, double dof);
// Two-sided tail P(|T| >= |t|); computed directly to keep small p accurate.
double t_two_sided_p(double t, double dof);
// F(df1, df2) CDF and upper tail.
double f_cdf(double f, double df1, double df2);
double f_upper_p(double f, double df1, double df2);

// ---------------------------------------------------------------------------
// Tests

enum class Direction { a_lower, b_lower, equal };
std::string_view to_string(Direction d);

struct TestResult {
  double statistic = 0.0;
  double dof = 0.0;
  // Second degrees of freedom for F tests, 0 otherwise.
  double dof2 = 0.0;
  double p_value = 1.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  Direction direction = Direction::equal;
};

double mean(std::span<const double> xs);
// Unbiased (n - 1) sample variance.
double sample_variance(std::span<const double> xs);

// Welch's unequal-variance t test, two-sided. Requires |a|, |b| >= 2.
// Two zero-variance samples give t = 0, p = 1 when their means agree and
// t = +-inf, p = 0 otherwise.
TestResult welch_t(std::span<const double> a, std::span<const double> b);

// Classic pooled-variance Student t test, two-sided.
TestResult student_t(std::span<const double> a, std::span<const double> b);

// One-way ANOVA. statistic = F, dof = k - 1, dof2 = N - k. mean_a/mean_b
// hold the lowest and highest group means.
TestResult one_way_anova(const std::vector<std::vector<double>>& groups);

// Pearson correlation: statistic = r, dof = n - 2, p from
// t = r * sqrt((n - 2) / (1 - r^2)).
TestResult pearson_r(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Regression

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::vector<double> column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct Coefficient {
  std::string name;
  double coef = 0.0;
  double std_error = 0.0;
  double t = 0.0;
  double p = 1.0;
};

struct RegressionResult {
  // Intercept ("const") first, then one row per predictor.
  std::vector<Coefficient> coefficients;
  double r_squared = 0.0;
  std::size_t n = 0;
  std::vector<double> residuals;
};

// (x - min) / (max - min). Throws DomainError for constant input.
std::vector<double> minmax_standardize(std::span<const double> xs);

struct OlsOptions {
  // Min-max scale every predictor to [0, 1] before fitting.
  bool standardize = true;
};

// Least squares with an intercept via the normal equations (Cholesky).
// Throws SingularMatrixError naming the collinear columns, DomainError for
// shape problems or constant predictors.
RegressionResult ols_regress(const Matrix& design, std::span<const double> y, const std::vector<std::string>& names,
                             OlsOptions options = {});

// ---------------------------------------------------------------------------
// Parity

struct DistributionKey {
  PromptSpec spec;
  std::string model_id;
  Transform transform = Transform::softmax;
  Scope scope = Scope::full_sentence;

  std::string to_string() const;
};

struct ScoreDistribution {
  DistributionKey key;
  std::vector<double> values;
};

struct EpsilonPolicy {
  enum class Kind { significance, mean_gap };
  Kind kind = Kind::significance;
  double alpha = 0.001;
  // Minimum absolute mean difference, used by mean_gap only.
  double gap = 0.0;

  std::string describe() const;
};

struct ParityVerdict {
  std::string key_a;
  std::string key_b;
  std::string epsilon_policy;
  TestResult test;
  bool biased = false;
  Direction direction = Direction::equal;
};

// Welch test of a against b; biased when p < alpha (and, under mean_gap,
// the absolute mean difference exceeds gap). Ties are never biased.
ParityVerdict parity_check(const ScoreDistribution& a, const ScoreDistribution& b, EpsilonPolicy policy = {});

}  // namespace biasgrid
