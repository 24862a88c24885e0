#pragma once

// Reference computations written independently of the library: densities
// use std::lgamma and are integrated numerically, linear systems are solved
// by Gauss-Jordan elimination. Slow, simple, and only for tests.

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oracle {

// Composite Simpson rule with n (even) panels.
template <class F>
double simpson(F f, double lo, double hi, int n = 20000) {
  if (hi <= lo) return 0.0;
  const double h = (hi - lo) / n;
  double sum = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) sum += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

inline double t_density(double x, double dof) {
  const double log_c = std::lgamma((dof + 1) / 2) - std::lgamma(dof / 2) - 0.5 * std::log(dof * M_PI);
  return std::exp(log_c - (dof + 1) / 2 * std::log1p(x * x / dof));
}

inline double t_cdf(double t, double dof) {
  const double half = simpson([&](double x) { return t_density(x, dof); }, 0.0, std::fabs(t));
  return t >= 0 ? 0.5 + half : 0.5 - half;
}

inline double t_two_sided(double t, double dof) {
  return 1.0 - 2.0 * simpson([&](double x) { return t_density(x, dof); }, 0.0, std::fabs(t));
}

// Upper tail of F(d1, d2) through the Beta(d1/2, d2/2) variable
// d1 f / (d1 f + d2). Needs d1, d2 >= 2 so the density is bounded.
inline double f_upper(double f, double d1, double d2) {
  const double a = d1 / 2, b = d2 / 2;
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  auto dens = [&](double x) {
    if (x <= 0 || x >= 1) return (x <= 0 ? (a == 1 ? std::exp(log_norm) : 0.0) : (b == 1 ? std::exp(log_norm) : 0.0));
    return std::exp(log_norm + (a - 1) * std::log(x) + (b - 1) * std::log1p(-x));
  };
  const double x0 = d1 * f / (d1 * f + d2);
  return simpson(dens, x0, 1.0, 200000);
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / v.size();
}

inline double var(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

struct T {
  double t, dof, p;
};

inline T welch(const std::vector<double>& a, const std::vector<double>& b) {
  const double va = var(a) / a.size(), vb = var(b) / b.size();
  const double t = (mean(a) - mean(b)) / std::sqrt(va + vb);
  const double dof = (va + vb) * (va + vb) / (va * va / (a.size() - 1) + vb * vb / (b.size() - 1));
  return {t, dof, t_two_sided(t, dof)};
}

inline T pooled(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = a.size(), nb = b.size();
  const double sp = ((na - 1) * var(a) + (nb - 1) * var(b)) / (na + nb - 2);
  const double t = (mean(a) - mean(b)) / std::sqrt(sp * (1 / na + 1 / nb));
  return {t, na + nb - 2, t_two_sided(t, na + nb - 2)};
}

struct F {
  double f, df1, df2, p;
};

// Textbook ANOVA table.
inline F anova(const std::vector<std::vector<double>>& groups) {
  std::vector<double> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  const double grand = mean(all);
  double ssb = 0, ssw = 0;
  for (const auto& g : groups) {
    const double m = mean(g);
    ssb += g.size() * (m - grand) * (m - grand);
    for (double x : g) ssw += (x - m) * (x - m);
  }
  const double df1 = groups.size() - 1, df2 = all.size() - groups.size();
  const double f = (ssb / df1) / (ssw / df2);
  return {f, df1, df2, f_upper(f, df1, df2)};
}

// r from the covariance definition, summed pair by pair.
inline T pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  const double r = sxy / std::sqrt(sxx * syy);
  const double dof = x.size() - 2.0;
  const double t = r * std::sqrt(dof / (1 - r * r));
  return {r, dof, t_two_sided(t, dof)};
}

// Inverse by Gauss-Jordan with partial pivoting.
inline std::vector<std::vector<double>> invert(std::vector<std::vector<double>> m) {
  const std::size_t n = m.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
    if (std::fabs(m[piv][col]) < 1e-14) throw std::runtime_error("oracle: singular");
    std::swap(m[piv], m[col]);
    std::swap(inv[piv], inv[col]);
    const double d = m[col][col];
    for (std::size_t c = 0; c < n; ++c) {
      m[col][c] /= d;
      inv[col][c] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m[r][col];
      for (std::size_t c = 0; c < n; ++c) {
        m[r][c] -= f * m[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return inv;
}

struct Ols {
  std::vector<double> coef, se, t, p;
  double r2;
};

// rows: predictors without intercept; the intercept is added first.
inline Ols ols(const std::vector<std::vector<double>>& rows, const std::vector<double>& y) {
  const std::size_t n = rows.size(), k = rows[0].size() + 1;
  std::vector<std::vector<double>> xtx(k, std::vector<double>(k, 0.0));
  std::vector<double> xty(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x{1.0};
    x.insert(x.end(), rows[i].begin(), rows[i].end());
    for (std::size_t a = 0; a < k; ++a) {
      xty[a] += x[a] * y[i];
      for (std::size_t b = 0; b < k; ++b) xtx[a][b] += x[a] * x[b];
    }
  }
  const auto inv = invert(xtx);
  Ols out;
  out.coef.assign(k, 0.0);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) out.coef[a] += inv[a][b] * xty[b];
  double rss = 0, tss = 0;
  const double my = mean(y);
  for (std::size_t i = 0; i < n; ++i) {
    double fit = out.coef[0];
    for (std::size_t j = 1; j < k; ++j) fit += out.coef[j] * rows[i][j - 1];
    rss += (y[i] - fit) * (y[i] - fit);
    tss += (y[i] - my) * (y[i] - my);
  }
  out.r2 = 1 - rss / tss;
  const double sigma2 = rss / (n - k);
  for (std::size_t a = 0; a < k; ++a) {
    out.se.push_back(std::sqrt(sigma2 * inv[a][a]));
    out.t.push_back(out.coef[a] / out.se.back());
    out.p.push_back(t_two_sided(out.t.back(), n - k));
  }
  return out;
}

}  // namespace oracle
