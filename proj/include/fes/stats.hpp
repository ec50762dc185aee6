#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fes/distributions.hpp"
#include "fes/error.hpp"

namespace fes {

struct TestResult {
  std::string test_name;
  double statistic = 0.0;
  double df1 = -1.0; ///< -1 when not applicable
  double df2 = -1.0;
  double p = 1.0;
  bool degenerate = false;
  std::string note;
};

/// Complete within-subject design: subjects x cells, one or two factors.
/// For two factors the cell index is ia * levels[1] + ib.
struct RepeatedMeasures {
  int subjects = 0;
  std::vector<int> factor_levels; // size 1 or 2
  std::vector<double> data;       // row-major subjects x cells

  int cells() const {
    int c = 1;
    for (int l : factor_levels) c *= l;
    return c;
  }
  double at(int subject, int cell) const {
    return data[static_cast<std::size_t>(subject) * cells() + cell];
  }
  double at2(int subject, int ia, int ib) const {
    return at(subject, ia * factor_levels[1] + ib);
  }
  std::vector<double> column(int cell) const {
    std::vector<double> out(subjects);
    for (int s = 0; s < subjects; ++s) out[s] = at(s, cell);
    return out;
  }
  void validate() const {
    require_arg(subjects >= 2, "at least two subjects required");
    require_arg(factor_levels.size() == 1 || factor_levels.size() == 2,
                "one or two factors supported");
    for (int l : factor_levels) require_arg(l >= 2, "factors need at least two levels");
    require_arg(data.size() == static_cast<std::size_t>(subjects) * cells(),
                "incomplete repeated-measures data");
  }
};

/// Midranks of a vector (average rank for ties).
inline std::vector<double> midranks(const std::vector<double>& x) {
  std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// ---------------------------------------------------------------------------
// Shapiro-Wilk (Royston's 1995 approximation, 3 <= n <= 50)
// ---------------------------------------------------------------------------

inline TestResult shapiro_wilk(std::vector<double> sample) {
  std::size_t n = sample.size();
  require_arg(n >= 3 && n <= 50, "Shapiro-Wilk supports 3 <= n <= 50");
  std::sort(sample.begin(), sample.end());
  require_arg(sample.back() > sample.front(), "Shapiro-Wilk requires nonzero variance");

  // Expected normal order statistics m and weight vector a.
  std::vector<double> m(n);
  double ssq_m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = normal_ppf((static_cast<double>(i + 1) - 0.375) / (static_cast<double>(n) + 0.25));
    ssq_m += m[i] * m[i];
  }
  double rsn = 1.0 / std::sqrt(static_cast<double>(n));
  auto poly = [](const double* c, int k, double x) {
    double v = 0.0;
    for (int i = k - 1; i >= 0; --i) v = v * x + c[i];
    return v;
  };
  static const double c1[] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
  static const double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};

  std::vector<double> a(n);
  double norm = std::sqrt(ssq_m);
  if (n == 3) {
    a[0] = -M_SQRT1_2;
    a[2] = M_SQRT1_2;
    a[1] = 0.0;
  } else {
    double an = m[n - 1] / norm + poly(c1, 6, rsn);
    double phi;
    if (n > 5) {
      double an1 = m[n - 2] / norm + poly(c2, 6, rsn);
      phi = (ssq_m - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
            (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
      a[n - 1] = an;
      a[n - 2] = an1;
      a[0] = -an;
      a[1] = -an1;
      for (std::size_t i = 2; i < n - 2; ++i) a[i] = m[i] / std::sqrt(phi);
    } else {
      phi = (ssq_m - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
      a[n - 1] = an;
      a[0] = -an;
      for (std::size_t i = 1; i < n - 1; ++i) a[i] = m[i] / std::sqrt(phi);
    }
  }

  double mean = std::accumulate(sample.begin(), sample.end(), 0.0) / static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += a[i] * sample[i];
    den += (sample[i] - mean) * (sample[i] - mean);
  }
  double w = num * num / den;
  w = std::min(w, 1.0);

  TestResult result;
  result.test_name = "shapiro_wilk";
  result.statistic = w;
  result.df1 = static_cast<double>(n);
  if (n == 3) {
    double p = 6.0 / M_PI * (std::asin(std::sqrt(w)) - std::asin(std::sqrt(0.75)));
    result.p = std::clamp(p, 0.0, 1.0);
    return result;
  }
  double z;
  double dn = static_cast<double>(n);
  if (n <= 11) {
    double gamma = 0.459 * dn - 2.273;
    double wt = -std::log(gamma - std::log1p(-w));
    double mu = 0.5440 - 0.39978 * dn + 0.025054 * dn * dn - 0.0006714 * dn * dn * dn;
    double sigma = std::exp(1.3822 - 0.77857 * dn + 0.062767 * dn * dn - 0.0020322 * dn * dn * dn);
    z = (wt - mu) / sigma;
  } else {
    double ln_n = std::log(dn);
    double wt = std::log1p(-w);
    double mu = -1.5861 - 0.31082 * ln_n - 0.083751 * ln_n * ln_n + 0.0038915 * ln_n * ln_n * ln_n;
    double sigma = std::exp(-0.4803 - 0.082676 * ln_n + 0.0030302 * ln_n * ln_n);
    z = (wt - mu) / sigma;
  }
  result.p = normal_sf(z);
  return result;
}

// ---------------------------------------------------------------------------
// Mauchly's sphericity test
// ---------------------------------------------------------------------------

namespace detail {

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = a[i * n + i];
  return eig;
}

/// Normalized Helmert contrasts: (k-1) x k, rows orthonormal and orthogonal
/// to the constant vector.
inline std::vector<double> helmert_contrasts(int k) {
  std::vector<double> c(static_cast<std::size_t>(k - 1) * k, 0.0);
  for (int j = 1; j < k; ++j) {
    double norm = std::sqrt(static_cast<double>(j) * (j + 1));
    for (int i = 0; i < j; ++i) c[static_cast<std::size_t>(j - 1) * k + i] = 1.0 / norm;
    c[static_cast<std::size_t>(j - 1) * k + j] = -static_cast<double>(j) / norm;
  }
  return c;
}

} // namespace detail

/// Mauchly's test on an n x k matrix of one within-subject factor
/// (columns = levels). Two-level factors are spherical by definition.
inline TestResult mauchly_matrix(const std::vector<std::vector<double>>& columns, int subjects) {
  int k = static_cast<int>(columns.size());
  TestResult result;
  result.test_name = "mauchly";
  if (k == 2) {
    result.statistic = 1.0;
    result.p = 1.0;
    result.note = "two levels: sphericity holds by definition";
    return result;
  }
  require_arg(k >= 3, "Mauchly's test needs a factor with at least 3 levels");
  int p = k - 1;
  auto c = detail::helmert_contrasts(k);

  // Contrast-transformed data Z = Y C^T, then covariance of Z.
  std::vector<double> z(static_cast<std::size_t>(subjects) * p, 0.0);
  for (int s = 0; s < subjects; ++s)
    for (int j = 0; j < p; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += columns[l][s] * c[static_cast<std::size_t>(j) * k + l];
      z[static_cast<std::size_t>(s) * p + j] = acc;
    }
  std::vector<double> mean(p, 0.0);
  for (int s = 0; s < subjects; ++s)
    for (int j = 0; j < p; ++j) mean[j] += z[static_cast<std::size_t>(s) * p + j];
  for (double& m : mean) m /= subjects;
  std::vector<double> cov(static_cast<std::size_t>(p) * p, 0.0);
  for (int s = 0; s < subjects; ++s)
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j)
        cov[static_cast<std::size_t>(i) * p + j] +=
            (z[static_cast<std::size_t>(s) * p + i] - mean[i]) *
            (z[static_cast<std::size_t>(s) * p + j] - mean[j]);
  for (double& v : cov) v /= (subjects - 1);

  auto eig = detail::symmetric_eigenvalues(cov, p);
  double trace = 0.0, log_det = 0.0;
  bool singular = false;
  for (double e : eig) {
    trace += e;
    if (e <= 0.0)
      singular = true;
    else
      log_det += std::log(e);
  }
  result.df1 = static_cast<double>(p) * (p + 1) / 2.0 - 1.0;
  if (singular || trace <= 0.0) {
    result.statistic = 0.0;
    result.p = 0.0;
    result.degenerate = true;
    result.note = "singular covariance";
    return result;
  }
  double log_w = log_det - p * std::log(trace / p);
  double w = std::exp(log_w);
  double nm1 = static_cast<double>(subjects - 1);
  double d = 1.0 - (2.0 * p * p + p + 2.0) / (6.0 * p * nm1);
  double chi2 = -nm1 * d * log_w;
  result.statistic = w;
  result.p = chi2_sf(chi2, result.df1);
  return result;
}

/// Mauchly's test for one factor of a design; for two-factor designs the data
/// are averaged over the other factor first.
inline TestResult mauchly(const RepeatedMeasures& rm, int factor = 0) {
  rm.validate();
  require_arg(factor >= 0 && factor < static_cast<int>(rm.factor_levels.size()),
              "factor index out of range");
  int k = rm.factor_levels[factor];
  std::vector<std::vector<double>> columns(k, std::vector<double>(rm.subjects, 0.0));
  if (rm.factor_levels.size() == 1) {
    for (int l = 0; l < k; ++l) columns[l] = rm.column(l);
  } else {
    int other = rm.factor_levels[1 - factor];
    for (int s = 0; s < rm.subjects; ++s)
      for (int l = 0; l < k; ++l) {
        double acc = 0.0;
        for (int o = 0; o < other; ++o)
          acc += (factor == 0) ? rm.at2(s, l, o) : rm.at2(s, o, l);
        columns[l][s] = acc / other;
      }
  }
  return mauchly_matrix(columns, rm.subjects);
}

// ---------------------------------------------------------------------------
// Repeated-measures ANOVA
// ---------------------------------------------------------------------------

namespace detail {

inline TestResult anova_effect(const std::string& name, double ss_effect, double df_effect,
                               double ss_error, double df_error) {
  TestResult r;
  r.test_name = name;
  r.df1 = df_effect;
  r.df2 = df_error;
  double ms_effect = ss_effect / df_effect;
  double ms_error = ss_error / df_error;
  if (ms_error <= 0.0) {
    if (ms_effect <= 1e-300) {
      r.statistic = 0.0;
      r.p = 1.0;
    } else {
      r.statistic = std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    r.degenerate = true;
    r.note = "zero error variance";
    return r;
  }
  r.statistic = ms_effect / ms_error;
  r.p = f_sf(r.statistic, df_effect, df_error);
  return r;
}

} // namespace detail

/// One- or two-way repeated-measures ANOVA; each effect is tested against its
/// own effect-by-subject interaction.
inline std::vector<TestResult> rm_anova(const RepeatedMeasures& rm) {
  rm.validate();
  int n = rm.subjects;
  if (rm.factor_levels.size() == 1) {
    int k = rm.factor_levels[0];
    double grand = 0.0;
    for (int s = 0; s < n; ++s)
      for (int c = 0; c < k; ++c) grand += rm.at(s, c);
    grand /= static_cast<double>(n) * k;
    std::vector<double> mean_s(n, 0.0), mean_c(k, 0.0);
    for (int s = 0; s < n; ++s)
      for (int c = 0; c < k; ++c) {
        mean_s[s] += rm.at(s, c) / k;
        mean_c[c] += rm.at(s, c) / n;
      }
    double ss_total = 0.0, ss_subj = 0.0, ss_cond = 0.0;
    for (int s = 0; s < n; ++s) ss_subj += k * (mean_s[s] - grand) * (mean_s[s] - grand);
    for (int c = 0; c < k; ++c) ss_cond += n * (mean_c[c] - grand) * (mean_c[c] - grand);
    for (int s = 0; s < n; ++s)
      for (int c = 0; c < k; ++c) ss_total += (rm.at(s, c) - grand) * (rm.at(s, c) - grand);
    double ss_err = ss_total - ss_subj - ss_cond;
    return {detail::anova_effect("rm_anova:condition", ss_cond, k - 1.0, std::max(ss_err, 0.0),
                                 static_cast<double>(k - 1) * (n - 1))};
  }

  int a = rm.factor_levels[0], b = rm.factor_levels[1];
  double grand = 0.0;
  for (int s = 0; s < n; ++s)
    for (int c = 0; c < a * b; ++c) grand += rm.at(s, c);
  grand /= static_cast<double>(n) * a * b;

  std::vector<double> m_s(n, 0.0), m_a(a, 0.0), m_b(b, 0.0);
  std::vector<double> m_ab(static_cast<std::size_t>(a) * b, 0.0);
  std::vector<double> m_as(static_cast<std::size_t>(a) * n, 0.0);
  std::vector<double> m_bs(static_cast<std::size_t>(b) * n, 0.0);
  for (int s = 0; s < n; ++s)
    for (int ia = 0; ia < a; ++ia)
      for (int ib = 0; ib < b; ++ib) {
        double v = rm.at2(s, ia, ib);
        m_s[s] += v / (a * b);
        m_a[ia] += v / (n * b);
        m_b[ib] += v / (n * a);
        m_ab[static_cast<std::size_t>(ia) * b + ib] += v / n;
        m_as[static_cast<std::size_t>(ia) * n + s] += v / b;
        m_bs[static_cast<std::size_t>(ib) * n + s] += v / a;
      }

  double ss_a = 0.0, ss_b = 0.0, ss_ab = 0.0, ss_as = 0.0, ss_bs = 0.0, ss_total = 0.0,
         ss_subj = 0.0;
  for (int ia = 0; ia < a; ++ia) ss_a += n * b * (m_a[ia] - grand) * (m_a[ia] - grand);
  for (int ib = 0; ib < b; ++ib) ss_b += n * a * (m_b[ib] - grand) * (m_b[ib] - grand);
  for (int ia = 0; ia < a; ++ia)
    for (int ib = 0; ib < b; ++ib) {
      double d = m_ab[static_cast<std::size_t>(ia) * b + ib] - m_a[ia] - m_b[ib] + grand;
      ss_ab += n * d * d;
    }
  for (int s = 0; s < n; ++s) ss_subj += a * b * (m_s[s] - grand) * (m_s[s] - grand);
  for (int ia = 0; ia < a; ++ia)
    for (int s = 0; s < n; ++s) {
      double d = m_as[static_cast<std::size_t>(ia) * n + s] - m_a[ia] - m_s[s] + grand;
      ss_as += b * d * d;
    }
  for (int ib = 0; ib < b; ++ib)
    for (int s = 0; s < n; ++s) {
      double d = m_bs[static_cast<std::size_t>(ib) * n + s] - m_b[ib] - m_s[s] + grand;
      ss_bs += a * d * d;
    }
  for (int s = 0; s < n; ++s)
    for (int c = 0; c < a * b; ++c) ss_total += (rm.at(s, c) - grand) * (rm.at(s, c) - grand);
  double ss_abs = ss_total - ss_subj - ss_a - ss_b - ss_ab - ss_as - ss_bs;

  return {
      detail::anova_effect("rm_anova:factor1", ss_a, a - 1.0, std::max(ss_as, 0.0),
                           static_cast<double>(a - 1) * (n - 1)),
      detail::anova_effect("rm_anova:factor2", ss_b, b - 1.0, std::max(ss_bs, 0.0),
                           static_cast<double>(b - 1) * (n - 1)),
      detail::anova_effect("rm_anova:interaction", ss_ab,
                           static_cast<double>(a - 1) * (b - 1), std::max(ss_abs, 0.0),
                           static_cast<double>(a - 1) * (b - 1) * (n - 1)),
  };
}

// ---------------------------------------------------------------------------
// Friedman test
// ---------------------------------------------------------------------------

inline TestResult friedman_matrix(const std::vector<std::vector<double>>& columns, int subjects) {
  int k = static_cast<int>(columns.size());
  require_arg(k >= 3, "Friedman test needs at least 3 conditions");
  require_arg(subjects >= 2, "Friedman test needs at least 2 subjects");

  std::vector<double> rank_sum(k, 0.0);
  double tie_term = 0.0; // sum over rows of sum(t^3 - t)
  std::vector<double> row(k);
  for (int s = 0; s < subjects; ++s) {
    for (int c = 0; c < k; ++c) row[c] = columns[c][s];
    auto ranks = midranks(row);
    for (int c = 0; c < k; ++c) rank_sum[c] += ranks[c];
    std::vector<double> sorted(row);
    std::sort(sorted.begin(), sorted.end());
    int i = 0;
    while (i < k) {
      int j = i;
      while (j + 1 < k && sorted[j + 1] == sorted[i]) ++j;
      double t = j - i + 1;
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  double n = subjects;
  double stat = 0.0;
  for (int c = 0; c < k; ++c) {
    double rbar = rank_sum[c] / n;
    stat += (rbar - (k + 1) / 2.0) * (rbar - (k + 1) / 2.0);
  }
  stat *= 12.0 * n / (k * (k + 1.0));
  double correction = 1.0 - tie_term / (n * k * (static_cast<double>(k) * k - 1.0));

  TestResult result;
  result.test_name = "friedman";
  result.df1 = k - 1.0;
  if (correction <= 0.0) {
    result.statistic = 0.0;
    result.p = 1.0;
    result.degenerate = true;
    result.note = "all rows fully tied";
    return result;
  }
  result.statistic = stat / correction;
  result.p = result.statistic <= 0.0 ? 1.0 : chi2_sf(result.statistic, result.df1);
  return result;
}

inline TestResult friedman(const RepeatedMeasures& rm) {
  rm.validate();
  require_arg(rm.factor_levels.size() == 1, "Friedman test applies to a one-factor design");
  std::vector<std::vector<double>> columns(rm.cells());
  for (int c = 0; c < rm.cells(); ++c) columns[c] = rm.column(c);
  return friedman_matrix(columns, rm.subjects);
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test
// ---------------------------------------------------------------------------

/// Exact p by full enumeration of sign assignments for n <= 12 (valid with
/// midranks); normal approximation with tie correction and continuity
/// correction otherwise. Zero differences are dropped.
inline TestResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
  require_arg(x.size() == y.size() && !x.empty(), "paired samples required");
  std::vector<double> diff;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != y[i]) diff.push_back(x[i] - y[i]);
  require_arg(diff.size() >= 5, "fewer than 5 nonzero differences");

  std::size_t n = diff.size();
  std::vector<double> abs_d(n);
  for (std::size_t i = 0; i < n; ++i) abs_d[i] = std::abs(diff[i]);
  auto ranks = midranks(abs_d);
  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (diff[i] > 0.0) w_plus += ranks[i];

  TestResult result;
  result.test_name = "wilcoxon_signed_rank";
  result.statistic = w_plus;
  result.df1 = static_cast<double>(n);

  if (n <= 12) {
    // Exact permutation distribution over all 2^n sign assignments.
    std::size_t total = std::size_t{1} << n;
    std::size_t le = 0, ge = 0;
    const double eps = 1e-9;
    for (std::size_t mask = 0; mask < total; ++mask) {
      double w = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (std::size_t{1} << i)) w += ranks[i];
      if (w <= w_plus + eps) ++le;
      if (w >= w_plus - eps) ++ge;
    }
    double p_le = static_cast<double>(le) / static_cast<double>(total);
    double p_ge = static_cast<double>(ge) / static_cast<double>(total);
    result.p = std::min(1.0, 2.0 * std::min(p_le, p_ge));
    result.note = "exact";
    return result;
  }

  double dn = static_cast<double>(n);
  double mean = dn * (dn + 1.0) / 4.0;
  double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
  // Tie correction over groups of equal |difference|.
  std::vector<double> sorted(abs_d);
  std::sort(sorted.begin(), sorted.end());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
    double t = static_cast<double>(j - i + 1);
    var -= (t * t * t - t) / 48.0;
    i = j + 1;
  }
  require(var > 0.0, ErrorCategory::numeric, "Wilcoxon variance collapsed to zero");
  double delta = std::abs(w_plus - mean);
  double z = (delta - 0.5) / std::sqrt(var); // continuity correction
  z = std::max(z, 0.0);
  result.p = std::min(1.0, 2.0 * normal_sf(z));
  result.note = "normal approximation";
  return result;
}

// ---------------------------------------------------------------------------
// Paired t test
// ---------------------------------------------------------------------------

inline TestResult paired_t(const std::vector<double>& x, const std::vector<double>& y) {
  require_arg(x.size() == y.size() && x.size() >= 2, "paired samples of size >= 2 required");
  std::size_t n = x.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i] - y[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = x[i] - y[i] - mean;
    ss += d * d;
  }
  TestResult result;
  result.test_name = "paired_t";
  result.df1 = static_cast<double>(n - 1);
  if (ss <= 0.0) {
    require_arg(mean != 0.0, "paired t requires nonzero variance of differences");
    // Constant nonzero shift: |t| unbounded.
    result.statistic = mean > 0.0 ? std::numeric_limits<double>::infinity()
                                  : -std::numeric_limits<double>::infinity();
    result.p = 0.0;
    result.degenerate = true;
    result.note = "zero variance of differences";
    return result;
  }
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  result.statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  result.p = t_two_sided_p(result.statistic, result.df1);
  return result;
}

// ---------------------------------------------------------------------------
// Holm-Bonferroni step-down adjustment
// ---------------------------------------------------------------------------

inline std::vector<double> holm_bonferroni(const std::vector<double>& pvals) {
  for (double p : pvals) require_arg(p >= 0.0 && p <= 1.0, "p-values must lie in [0,1]");
  std::size_t m = pvals.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double v = static_cast<double>(m - i) * pvals[order[i]];
    running = std::max(running, v);
    adjusted[order[i]] = std::min(1.0, running);
  }
  return adjusted;
}

// ---------------------------------------------------------------------------
// Test-selection procedure
// ---------------------------------------------------------------------------

struct PostHocComparison {
  int factor = 0;
  int level_a = 0;
  int level_b = 0;
  TestResult test;
  double p_adjusted = 1.0;
  bool significant = false;
};

struct AnalysisPlan {
  bool parametric = false;
  double alpha = 0.05;
  std::vector<TestResult> normality;  ///< Shapiro-Wilk per cell
  std::vector<TestResult> sphericity; ///< Mauchly per factor (>= 3 levels)
  std::vector<TestResult> omnibus;
  std::vector<PostHocComparison> posthoc;
};

/// The selection procedure: parametric tests (RM ANOVA + paired t) when every
/// cell passes Shapiro-Wilk and every factor passes Mauchly at alpha;
/// otherwise Friedman + Wilcoxon. Post-hoc families get Holm-Bonferroni.
inline AnalysisPlan select_tests(const RepeatedMeasures& rm, double alpha = 0.05) {
  rm.validate();
  AnalysisPlan plan;
  plan.alpha = alpha;

  bool normal = true;
  for (int c = 0; c < rm.cells(); ++c) {
    TestResult r = shapiro_wilk(rm.column(c));
    normal = normal && r.p > alpha;
    plan.normality.push_back(std::move(r));
  }
  bool spherical = true;
  for (int f = 0; f < static_cast<int>(rm.factor_levels.size()); ++f) {
    TestResult r = mauchly(rm, f);
    spherical = spherical && r.p > alpha;
    plan.sphericity.push_back(std::move(r));
  }
  plan.parametric = normal && spherical;

  if (plan.parametric) {
    plan.omnibus = rm_anova(rm);
  } else if (rm.factor_levels.size() == 1) {
    plan.omnibus.push_back(friedman(rm));
  } else {
    // Nonparametric two-factor fallback: Friedman over all cells.
    std::vector<std::vector<double>> columns(rm.cells());
    for (int c = 0; c < rm.cells(); ++c) columns[c] = rm.column(c);
    plan.omnibus.push_back(friedman_matrix(columns, rm.subjects));
  }

  // Pairwise post-hoc comparisons on each factor's marginal means.
  for (int f = 0; f < static_cast<int>(rm.factor_levels.size()); ++f) {
    int k = rm.factor_levels[f];
    auto marginal = [&](int level) {
      std::vector<double> out(rm.subjects, 0.0);
      if (rm.factor_levels.size() == 1) return rm.column(level);
      int other = rm.factor_levels[1 - f];
      for (int s = 0; s < rm.subjects; ++s) {
        double acc = 0.0;
        for (int o = 0; o < other; ++o)
          acc += (f == 0) ? rm.at2(s, level, o) : rm.at2(s, o, level);
        out[s] = acc / other;
      }
      return out;
    };
    std::vector<PostHocComparison> family;
    for (int i = 0; i < k; ++i)
      for (int j = i + 1; j < k; ++j) {
        PostHocComparison cmp;
        cmp.factor = f;
        cmp.level_a = i;
        cmp.level_b = j;
        cmp.test = plan.parametric ? paired_t(marginal(i), marginal(j))
                                   : wilcoxon_signed_rank(marginal(i), marginal(j));
        family.push_back(std::move(cmp));
      }
    std::vector<double> raw;
    raw.reserve(family.size());
    for (const auto& cmp : family) raw.push_back(cmp.test.p);
    auto adj = holm_bonferroni(raw);
    for (std::size_t i = 0; i < family.size(); ++i) {
      family[i].p_adjusted = adj[i];
      family[i].significant = adj[i] < alpha;
      plan.posthoc.push_back(std::move(family[i]));
    }
  }
  return plan;
}

} // namespace fes
