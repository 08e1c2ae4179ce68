#include "emtune/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "emtune/error.hpp"
#include "emtune/random.hpp"

namespace emtune {
namespace {

Matrix centered(const Matrix& data) {
  Matrix out = data;
  Matrix mean = column_sums(data);
  mean *= 1.0 / static_cast<double>(data.rows());
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) -= mean(0, c);
  return out;
}

// Gram-Schmidt on the columns of a D x 2 matrix. Returns false if the second
// column is numerically dependent on the first.
bool orthonormalize(Matrix& q) {
  const std::size_t d = q.rows();
  double n0 = 0.0;
  for (std::size_t i = 0; i < d; ++i) n0 += q(i, 0) * q(i, 0);
  n0 = std::sqrt(n0);
  if (!(n0 > 0.0)) return false;
  for (std::size_t i = 0; i < d; ++i) q(i, 0) /= n0;
  // Two projection passes for numerical orthogonality.
  double n1 = 0.0;
  double before = 0.0;
  for (std::size_t i = 0; i < d; ++i) before += q(i, 1) * q(i, 1);
  for (int pass = 0; pass < 2; ++pass) {
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) dot += q(i, 0) * q(i, 1);
    for (std::size_t i = 0; i < d; ++i) q(i, 1) -= dot * q(i, 0);
  }
  for (std::size_t i = 0; i < d; ++i) n1 += q(i, 1) * q(i, 1);
  n1 = std::sqrt(n1);
  if (!(n1 > 1e-13 * std::max(std::sqrt(before), n0))) return false;
  for (std::size_t i = 0; i < d; ++i) q(i, 1) /= n1;
  return true;
}

}  // namespace

PcaResult pca_project(const Matrix& data, const PcaOptions& options) {
  if (data.rows() < 3) throw DataError("pca_project: needs at least 3 points");
  if (data.cols() < 2) throw DegenerateGeometryError("pca_project: data has fewer than 2 dimensions");
  const Matrix x = centered(data);
  const std::size_t dim = x.cols();
  Matrix cov = matmul_tn(x, x);
  cov *= 1.0 / static_cast<double>(x.rows());
  double trace = 0.0;
  for (std::size_t i = 0; i < dim; ++i) trace += cov(i, i);
  const auto rank_error = [] {
    return DegenerateGeometryError("pca_project: centered data has rank < 2");
  };
  if (!(trace > 0.0)) throw rank_error();

  Rng rng(options.seed);
  Matrix q(dim, 2);
  for (auto& v : q.values()) v = rng.normal();
  if (!orthonormalize(q)) throw rank_error();

  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    Matrix z = matmul(cov, q);
    if (!orthonormalize(z)) throw rank_error();
    const double change = max_abs_diff(z, q);
    q = std::move(z);
    if (change < 1e-14) break;
  }

  // Rayleigh-Ritz on the converged 2-D subspace.
  const Matrix h = matmul_tn(q, matmul(cov, q));
  const double a = h(0, 0), b = 0.5 * (h(0, 1) + h(1, 0)), c = h(1, 1);
  const double mid = 0.5 * (a + c);
  const double radius = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
  const double lambda1 = mid + radius;
  const double lambda2 = mid - radius;
  if (!(lambda2 > 1e-12 * trace)) throw rank_error();

  double v0 = 1.0, v1 = 0.0;
  if (std::abs(b) > 0.0) {
    v0 = lambda1 - c;
    v1 = b;
    const double n = std::hypot(v0, v1);
    v0 /= n;
    v1 /= n;
  } else if (c > a) {
    v0 = 0.0;
    v1 = 1.0;
  }

  PcaResult result;
  result.components = Matrix(2, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    result.components(0, i) = v0 * q(i, 0) + v1 * q(i, 1);
    result.components(1, i) = -v1 * q(i, 0) + v0 * q(i, 1);
  }
  for (std::size_t r = 0; r < 2; ++r) {
    auto row = result.components.row(r);
    std::size_t peak = 0;
    for (std::size_t i = 1; i < dim; ++i)
      if (std::abs(row[i]) > std::abs(row[peak])) peak = i;
    if (row[peak] < 0.0)
      for (auto& v : row) v = -v;
  }
  result.variance[0] = lambda1;
  result.variance[1] = lambda2;
  result.total_variance = trace;
  result.coordinates = matmul_nt(x, result.components);
  return result;
}

namespace {

Matrix squared_distances(const Matrix& x) {
  const std::size_t n = x.rows();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      auto xj = x.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < xi.size(); ++k) s += (xi[k] - xj[k]) * (xi[k] - xj[k]);
      d(i, j) = s;
      d(j, i) = s;
    }
  }
  return d;
}

void check_tsne_input(std::size_t n, double perplexity) {
  if (!(perplexity > 0.0)) throw ConfigError("tsne: perplexity must be positive");
  if (n > kTsneMaxPoints) {
    throw ConfigError("tsne: " + std::to_string(n) + " points exceeds the exact-variant cap of " +
                      std::to_string(kTsneMaxPoints));
  }
  if (static_cast<double>(n) < 3.0 * perplexity) {
    throw ConfigError("tsne: perplexity " + std::to_string(perplexity) + " is too large for " +
                      std::to_string(n) + " points (need N >= 3 * perplexity)");
  }
}

double kl_divergence(const Matrix& p, const Matrix& y) {
  const std::size_t n = y.rows();
  const Matrix d = squared_distances(y);
  double sum_q = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) sum_q += 1.0 / (1.0 + d(i, j));
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || p(i, j) <= 0.0) continue;
      const double q = (1.0 / (1.0 + d(i, j))) / sum_q;
      kl += p(i, j) * std::log(p(i, j) / std::max(q, std::numeric_limits<double>::min()));
    }
  }
  return kl;
}

}  // namespace

Matrix tsne_conditional_affinities(const Matrix& data, double perplexity) {
  const std::size_t n = data.rows();
  check_tsne_input(n, perplexity);
  const Matrix d = squared_distances(data);
  const double target = std::log(perplexity);
  Matrix p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = -std::numeric_limits<double>::max();
    double hi = std::numeric_limits<double>::max();
    auto row = p.row(i);
    // Shift by the smallest off-diagonal distance to avoid underflow.
    double min_d = std::numeric_limits<double>::max();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) min_d = std::min(min_d, d(i, j));
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0;
      double weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * (d(i, j) - min_d));
        sum += row[j];
        weighted += (d(i, j) - min_d) * row[j];
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      for (auto& v : row) v /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0.0) {
        lo = beta;
        beta = hi == std::numeric_limits<double>::max() ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = lo == -std::numeric_limits<double>::max() ? beta / 2.0 : 0.5 * (beta + lo);
      }
    }
  }
  return p;
}

TsneResult tsne_project(const Matrix& data, const TsneOptions& options) {
  const std::size_t n = data.rows();
  check_tsne_input(n, options.perplexity);

  Matrix x = centered(data);
  double max_abs = 0.0;
  for (double v : x.values()) max_abs = std::max(max_abs, std::abs(v));
  if (max_abs > 0.0) x *= 1.0 / max_abs;

  Matrix p = tsne_conditional_affinities(x, options.perplexity);
  {
    Matrix sym = p + p.transpose();
    double total = 0.0;
    for (double v : sym.values()) total += v;
    sym *= 1.0 / total;
    p = std::move(sym);
  }

  Rng rng(options.seed);
  Matrix y(n, 2);
  for (auto& v : y.values()) v = rng.normal() * 1e-4;
  Matrix velocity(n, 2);
  Matrix gains(n, 2, 1.0);
  Matrix grad(n, 2);
  Matrix kernel(n, n);

  TsneResult result;
  for (std::size_t it = 0; it < options.iterations; ++it) {
    const bool exaggerating = it < options.exaggeration_iterations;
    const double exaggeration = exaggerating ? options.exaggeration : 1.0;
    const double momentum = exaggerating ? options.initial_momentum : options.final_momentum;

    double sum_q = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      kernel(i, i) = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y(i, 0) - y(j, 0);
        const double dy = y(i, 1) - y(j, 1);
        const double k = 1.0 / (1.0 + dx * dx + dy * dy);
        kernel(i, j) = k;
        kernel(j, i) = k;
        sum_q += 2.0 * k;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double g0 = 0.0, g1 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double k = kernel(i, j);
        const double mult = (exaggeration * p(i, j) - k / sum_q) * k;
        g0 += mult * (y(i, 0) - y(j, 0));
        g1 += mult * (y(i, 1) - y(j, 1));
      }
      grad(i, 0) = 4.0 * g0;
      grad(i, 1) = 4.0 * g1;
    }
    for (std::size_t k = 0; k < y.size(); ++k) {
      double& gain = gains.values()[k];
      const double g = grad.values()[k];
      double& v = velocity.values()[k];
      gain = (std::signbit(g) != std::signbit(v)) ? gain + 0.2 : gain * 0.8;
      gain = std::max(gain, 0.01);
      v = momentum * v - options.learning_rate * gain * g;
      y.values()[k] += v;
    }
    y = centered(y);

    if (options.cost_interval != 0 && (it + 1) % options.cost_interval == 0) {
      result.costs.emplace_back(it + 1, kl_divergence(p, y));
    }
  }
  if (!y.all_finite()) throw NumericError("tsne: embedding diverged");
  result.coordinates = std::move(y);
  return result;
}

double neighbor_purity(const Matrix& coordinates, const std::vector<int>& labels) {
  const std::size_t n = coordinates.rows();
  if (labels.size() != n) throw DimensionError("neighbor_purity: label count mismatch");
  if (n < 2) throw DataError("neighbor_purity: needs at least 2 points");
  std::size_t pure = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t nearest = i;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < coordinates.cols(); ++k) {
        const double diff = coordinates(i, k) - coordinates(j, k);
        s += diff * diff;
      }
      if (s < best) {
        best = s;
        nearest = j;
      }
    }
    pure += labels[nearest] == labels[i];
  }
  return static_cast<double>(pure) / static_cast<double>(n);
}

}  // namespace emtune
