#pragma once

// Least squares min ||V lambda - b||_2 through a modified Gram-Schmidt QR that
// drops near-dependent columns in a single pass.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace tubeflow::coupling {

struct FilteredSolution {
  std::vector<double> lambda;        // one entry per input column, 0 for dropped columns
  std::vector<std::size_t> dropped;  // indices of filtered columns, ascending
  std::size_t rank = 0;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Columns are processed in order. A column is dropped when the norm of its
/// component orthogonal to the accepted columns falls below filter_eps * ||V||_F.
inline FilteredSolution filtered_least_squares(const std::vector<std::vector<double>>& columns,
                                               std::span<const double> b, double filter_eps) {
  FilteredSolution out;
  out.lambda.assign(columns.size(), 0.0);
  if (columns.empty()) return out;

  double frob2 = 0.0;
  for (const auto& c : columns) frob2 += dot(c, c);
  const double threshold = filter_eps * std::sqrt(frob2);

  std::vector<std::vector<double>> q;
  std::vector<std::vector<double>> r;  // r[j] holds column j of R (length j+1)
  std::vector<std::size_t> accepted;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    std::vector<double> w = columns[j];
    std::vector<double> rcol(q.size() + 1, 0.0);
    // Two sweeps of MGS keep Q orthogonal for nearly collinear columns.
    for (int sweep = 0; sweep < 2; ++sweep) {
      for (std::size_t i = 0; i < q.size(); ++i) {
        const double c = dot(q[i], w);
        rcol[i] += c;
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= c * q[i][k];
      }
    }
    const double nrm = norm2(w);
    if (!(nrm >= threshold) || nrm == 0.0) {
      out.dropped.push_back(j);
      continue;
    }
    for (double& x : w) x /= nrm;
    rcol.back() = nrm;
    q.push_back(std::move(w));
    r.push_back(std::move(rcol));
    accepted.push_back(j);
  }

  const std::size_t m = q.size();
  out.rank = m;
  std::vector<double> qtb(m);
  for (std::size_t i = 0; i < m; ++i) qtb[i] = dot(q[i], b);
  std::vector<double> x(m, 0.0);
  for (std::size_t ii = m; ii-- > 0;) {
    double s = qtb[ii];
    for (std::size_t j = ii + 1; j < m; ++j) s -= r[j][ii] * x[j];
    x[ii] = s / r[ii][ii];
  }
  for (std::size_t i = 0; i < m; ++i) out.lambda[accepted[i]] = x[i];
  return out;
}

}  // namespace tubeflow::coupling
