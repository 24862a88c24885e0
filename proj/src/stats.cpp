#include "biasgrid/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "biasgrid/error.hpp"

namespace biasgrid {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

constexpr double kLanczos[] = {0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
                               771.32342877765313,      -176.61502916214059,   12.507343278686905,
                               -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 100000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw DomainError("reg_inc_beta: continued fraction did not converge");
}

Direction direction_of(double mean_a, double mean_b) {
  if (mean_a < mean_b) return Direction::a_lower;
  if (mean_a > mean_b) return Direction::b_lower;
  return Direction::equal;
}

void require_finite(std::span<const double> xs, const char* what) {
  for (double x : xs) {
    if (!std::isfinite(x)) throw DomainError(std::string(what) + ": non-finite sample value");
  }
}

// p and statistic for a t value that may be infinite.
TestResult finish_t(double t, double dof, double ma, double mb) {
  TestResult r;
  r.statistic = t;
  r.dof = dof;
  r.mean_a = ma;
  r.mean_b = mb;
  r.direction = direction_of(ma, mb);
  r.p_value = std::isinf(t) ? 0.0 : t_two_sided_p(t, dof);
  return r;
}

}  // namespace

double ln_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("ln_gamma: x must be finite and > 0");
  if (x < 0.5) {
    // Reflection keeps accuracy for small arguments.
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) - ln_gamma(1.0 - x);
  }
  x -= 1.0;
  double a = kLanczos[0];
  const double t = x + 7.5;
  for (int i = 1; i < 9; ++i) a += kLanczos[i] / (x + i);
  return 0.5 * std::log(2.0 * std::numbers::pi) + (x + 0.5) * std::log(t) - t + std::log(a);
}

double reg_inc_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("reg_inc_beta: a and b must be > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("reg_inc_beta: x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw DomainError("t distribution: dof must be > 0");
  if (std::isnan(t)) throw DomainError("t distribution: t is NaN");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  return std::clamp(reg_inc_beta(0.5 * dof, 0.5, dof / (dof + t * t)), 0.0, 1.0);
}

double t_cdf(double t, double dof) {
  if (!(dof > 0.0)) throw DomainError("t_cdf: dof must be > 0");
  if (std::isnan(t)) throw DomainError("t_cdf: t is NaN");
  if (t == 0.0) return 0.5;
  const double tail = 0.5 * t_two_sided_p(t, dof);
  return t > 0 ? 1.0 - tail : tail;
}

double f_cdf(double f, double df1, double df2) {
  if (!(df1 > 0.0) || !(df2 > 0.0)) throw DomainError("f_cdf: degrees of freedom must be > 0");
  if (std::isnan(f)) throw DomainError("f_cdf: f is NaN");
  if (f <= 0.0) return 0.0;
  if (std::isinf(f)) return 1.0;
  return reg_inc_beta(0.5 * df1, 0.5 * df2, df1 * f / (df1 * f + df2));
}

double f_upper_p(double f, double df1, double df2) {
  if (!(df1 > 0.0) || !(df2 > 0.0)) throw DomainError("f distribution: degrees of freedom must be > 0");
  if (std::isnan(f)) throw DomainError("f distribution: f is NaN");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return reg_inc_beta(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * f));
}

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::a_lower:
      return "a_lower";
    case Direction::b_lower:
      return "b_lower";
    case Direction::equal:
      return "equal";
  }
  return "?";
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("mean of empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw DomainError("variance needs at least 2 values");
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

TestResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DomainError("welch_t: each sample needs at least 2 values");
  require_finite(a, "welch_t");
  require_finite(b, "welch_t");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  const double va = sample_variance(a) / na;
  const double vb = sample_variance(b) / nb;
  const double se2 = va + vb;
  if (se2 == 0.0) {
    const double t = ma == mb ? 0.0 : (ma > mb ? kInf : -kInf);
    return finish_t(t, na + nb - 2.0, ma, mb);
  }
  const double t = (ma - mb) / std::sqrt(se2);
  const double dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  return finish_t(t, dof, ma, mb);
}

TestResult student_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DomainError("student_t: each sample needs at least 2 values");
  require_finite(a, "student_t");
  require_finite(b, "student_t");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  const double dof = na + nb - 2.0;
  const double pooled = ((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / dof;
  const double se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  if (se == 0.0) return finish_t(ma == mb ? 0.0 : (ma > mb ? kInf : -kInf), dof, ma, mb);
  return finish_t((ma - mb) / se, dof, ma, mb);
}

TestResult one_way_anova(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw DomainError("one_way_anova: need at least 2 groups");
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw DomainError("one_way_anova: every group needs at least 2 values");
    require_finite(g, "one_way_anova");
    for (double x : g) total += x;
    n += g.size();
  }
  const double grand = total / static_cast<double>(n);
  double ssb = 0.0, ssw = 0.0;
  double lo = kInf, hi = -kInf;
  for (const auto& g : groups) {
    const double m = mean(g);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double x : g) ssw += (x - m) * (x - m);
  }
  const double k = static_cast<double>(groups.size());
  TestResult r;
  r.dof = k - 1.0;
  r.dof2 = static_cast<double>(n) - k;
  r.mean_a = lo;
  r.mean_b = hi;
  r.direction = direction_of(lo, hi);
  if (ssb == 0.0) {
    r.statistic = 0.0;
    r.p_value = 1.0;
  } else if (ssw == 0.0) {
    r.statistic = kInf;
    r.p_value = 0.0;
  } else {
    r.statistic = (ssb / r.dof) / (ssw / r.dof2);
    r.p_value = f_upper_p(r.statistic, r.dof, r.dof2);
  }
  return r;
}

TestResult pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("pearson_r: x and y differ in length");
  if (x.size() < 3) throw DomainError("pearson_r: need at least 3 pairs");
  require_finite(x, "pearson_r");
  require_finite(y, "pearson_r");
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("pearson_r: zero variance");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = static_cast<double>(x.size()) - 2.0;
  TestResult out;
  out.statistic = r;
  out.dof = dof;
  out.mean_a = mx;
  out.mean_b = my;
  out.direction = direction_of(mx, my);
  if (std::fabs(r) == 1.0) {
    out.p_value = 0.0;
  } else {
    out.p_value = t_two_sided_p(r * std::sqrt(dof / (1.0 - r * r)), dof);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::set_column(std::size_t c, std::span<const double> values) {
  if (values.size() != rows_) throw DomainError("Matrix::set_column: length mismatch");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

std::vector<double> minmax_standardize(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("minmax_standardize: empty input");
  const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw DomainError("minmax_standardize: constant input");
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = (xs[i] - lo) / (hi - lo);
  return out;
}

RegressionResult ols_regress(const Matrix& design, std::span<const double> y, const std::vector<std::string>& names,
                             OlsOptions options) {
  const std::size_t n = design.rows();
  const std::size_t k = design.cols();
  if (y.size() != n) throw DomainError("ols_regress: response length differs from design rows");
  if (names.size() != k) throw DomainError("ols_regress: one name per design column required");
  const std::size_t p = k + 1;
  if (n <= p) throw DomainError("ols_regress: need more rows than coefficients (" + std::to_string(p) + ")");
  require_finite(y, "ols_regress");

  // X = [1 | predictors]
  Matrix x(n, p, 1.0);
  for (std::size_t c = 0; c < k; ++c) {
    auto col = design.column(c);
    require_finite(col, "ols_regress");
    if (options.standardize) {
      try {
        col = minmax_standardize(col);
      } catch (const DomainError&) {
        throw DomainError("ols_regress: predictor '" + names[c] + "' is constant");
      }
    }
    x.set_column(c + 1, col);
  }
  std::vector<std::string> labels{"const"};
  labels.insert(labels.end(), names.begin(), names.end());

  Matrix xtx(p, p);
  std::vector<double> xty(p, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < p; ++i) {
      xty[i] += x(r, i) * y[r];
      for (std::size_t j = 0; j <= i; ++j) xtx(i, j) += x(r, i) * x(r, j);
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i + 1; j < p; ++j) xtx(i, j) = xtx(j, i);
  }

  // Cholesky XtX = L L^T. A vanishing pivot means column j lies in the span
  // of the columns before it.
  Matrix l(p, p);
  for (std::size_t j = 0; j < p; ++j) {
    double d = xtx(j, j);
    for (std::size_t m = 0; m < j; ++m) d -= l(j, m) * l(j, m);
    if (d <= 1e-10 * xtx(j, j)) {
      // Coefficients of column j regressed on columns 0..j-1: L_prev^T b = l_j.
      std::vector<double> beta(j, 0.0);
      for (std::size_t ii = j; ii-- > 0;) {
        double s = l(j, ii);
        for (std::size_t m = ii + 1; m < j; ++m) s -= l(m, ii) * beta[m];
        beta[ii] = s / l(ii, ii);
      }
      std::string partners;
      for (std::size_t m = 0; m < j; ++m) {
        if (std::fabs(beta[m]) > 1e-8) partners += (partners.empty() ? "" : ", ") + labels[m];
      }
      throw SingularMatrixError("ols_regress: design is rank deficient; column '" + labels[j] +
                                "' is collinear with {" + partners + "}");
    }
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < p; ++i) {
      double s = xtx(i, j);
      for (std::size_t m = 0; m < j; ++m) s -= l(i, m) * l(j, m);
      l(i, j) = s / l(j, j);
    }
  }

  auto solve = [&](std::vector<double> rhs) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t m = 0; m < i; ++m) rhs[i] -= l(i, m) * rhs[m];
      rhs[i] /= l(i, i);
    }
    for (std::size_t i = p; i-- > 0;) {
      for (std::size_t m = i + 1; m < p; ++m) rhs[i] -= l(m, i) * rhs[m];
      rhs[i] /= l(i, i);
    }
    return rhs;
  };

  RegressionResult result;
  result.n = n;
  const double ybar = mean(y);
  double sst = 0.0;
  for (double v : y) sst += (v - ybar) * (v - ybar);

  std::vector<double> coef;
  if (sst == 0.0) {
    // Constant response: intercept carries it all, slopes are exactly zero.
    coef.assign(p, 0.0);
    coef[0] = ybar;
  } else {
    coef = solve(xty);
  }

  result.residuals.resize(n);
  double rss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double fit = 0.0;
    for (std::size_t i = 0; i < p; ++i) fit += x(r, i) * coef[i];
    result.residuals[r] = y[r] - fit;
    rss += result.residuals[r] * result.residuals[r];
  }
  result.r_squared = sst == 0.0 ? 0.0 : std::clamp(1.0 - rss / sst, 0.0, 1.0);

  const double dof = static_cast<double>(n - p);
  const double sigma2 = rss / dof;
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<double> unit(p, 0.0);
    unit[i] = 1.0;
    const double var = sigma2 * solve(unit)[i];
    Coefficient c;
    c.name = labels[i];
    c.coef = coef[i];
    c.std_error = std::sqrt(std::max(var, 0.0));
    if (c.std_error == 0.0) {
      c.t = c.coef == 0.0 ? 0.0 : (c.coef > 0 ? kInf : -kInf);
      c.p = c.coef == 0.0 ? 1.0 : 0.0;
    } else {
      c.t = c.coef / c.std_error;
      c.p = t_two_sided_p(c.t, dof);
    }
    result.coefficients.push_back(std::move(c));
  }
  return result;
}

// ---------------------------------------------------------------------------

std::string DistributionKey::to_string() const {
  return spec.key() + "#" + model_id + "#" + std::string(biasgrid::to_string(transform)) + "#" +
         std::string(biasgrid::to_string(scope));
}

std::string EpsilonPolicy::describe() const {
  std::ostringstream ss;
  ss << "p<" << alpha;
  if (kind == Kind::mean_gap) ss << " and |mean_a-mean_b|>" << gap;
  return ss.str();
}

ParityVerdict parity_check(const ScoreDistribution& a, const ScoreDistribution& b, EpsilonPolicy policy) {
  if (a.values.empty() || b.values.empty()) throw DomainError("parity_check: empty distribution");
  ParityVerdict v;
  v.key_a = a.key.to_string();
  v.key_b = b.key.to_string();
  v.epsilon_policy = policy.describe();
  v.test = welch_t(a.values, b.values);
  v.direction = v.test.direction;
  bool biased = v.test.p_value < policy.alpha && v.direction != Direction::equal;
  if (policy.kind == EpsilonPolicy::Kind::mean_gap) {
    biased = biased && std::fabs(v.test.mean_a - v.test.mean_b) > policy.gap;
  }
  v.biased = biased;
  return v;
}

}  // namespace biasgrid
