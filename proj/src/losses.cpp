#include "emtune/losses.hpp"

#include <algorithm>
#include <cmath>

#include "emtune/error.hpp"
#include "emtune/log.hpp"

namespace emtune {
namespace {

void require_batch_pair(const Matrix& anchor, const Matrix& positive, const char* what) {
  require_same_shape(anchor, positive, what);
  if (anchor.rows() < 2) {
    throw DataError(std::string(what) + ": batch size " + std::to_string(anchor.rows()) +
                    " is too small, cross-correlation needs at least 2 rows");
  }
}

// Column-normalized batch with what is needed to backpropagate through the
// normalization.
struct NormalizedColumns {
  Matrix centered;            // input after optional centering
  Matrix unit;                // centered column / (norm + eps), or 0 if collapsed
  std::vector<double> norms;  // per-column norm of `centered`
  std::vector<bool> collapsed;
  bool center = false;
};

NormalizedColumns normalize_columns(const Matrix& x, bool center) {
  NormalizedColumns out;
  out.center = center;
  out.centered = x;
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  if (center) {
    Matrix mean = column_sums(x);
    mean *= 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out.centered(r, c) -= mean(0, c);
  }
  out.unit = Matrix(rows, cols);
  out.norms.assign(cols, 0.0);
  out.collapsed.assign(cols, false);
  for (std::size_t c = 0; c < cols; ++c) {
    double sq = 0.0;
    for (std::size_t r = 0; r < rows; ++r) sq += out.centered(r, c) * out.centered(r, c);
    const double norm = std::sqrt(sq);
    out.norms[c] = norm;
    if (norm < kCorrelationEpsilon) {
      out.collapsed[c] = true;
      continue;
    }
    const double scale = 1.0 / (norm + kCorrelationEpsilon);
    for (std::size_t r = 0; r < rows; ++r) out.unit(r, c) = out.centered(r, c) * scale;
  }
  return out;
}

// Pulls d loss / d unit back to d loss / d input.
Matrix normalize_backward(const NormalizedColumns& nc, const Matrix& grad_unit) {
  const std::size_t rows = nc.centered.rows();
  const std::size_t cols = nc.centered.cols();
  Matrix grad(rows, cols);
  for (std::size_t c = 0; c < cols; ++c) {
    if (nc.collapsed[c]) continue;
    const double n = nc.norms[c];
    const double d = n + kCorrelationEpsilon;
    double dot = 0.0;
    for (std::size_t r = 0; r < rows; ++r) dot += nc.centered(r, c) * grad_unit(r, c);
    const double radial = dot / (n * d * d);
    for (std::size_t r = 0; r < rows; ++r)
      grad(r, c) = grad_unit(r, c) / d - nc.centered(r, c) * radial;
  }
  if (nc.center) {
    Matrix mean = column_sums(grad);
    mean *= 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) grad(r, c) -= mean(0, c);
  }
  return grad;
}

void warn_collapsed(const NormalizedColumns& nc, const char* role) {
  std::size_t count = 0;
  std::size_t first = 0;
  for (std::size_t c = 0; c < nc.collapsed.size(); ++c) {
    if (nc.collapsed[c] && count++ == 0) first = c;
  }
  if (count > 0) {
    log_warning(std::string("cross_correlation: ") + std::to_string(count) + " collapsed " + role +
                " dimension(s), first is " + std::to_string(first) + "; their correlations are 0");
  }
}

}  // namespace

TripletLossOutput triplet_loss(const TripletBatch& batch, double margin) {
  if (!(margin >= 0.0)) throw ConfigError("triplet_loss: margin must be >= 0");
  require_same_shape(batch.anchor, batch.positive, "triplet_loss anchor/positive");
  require_same_shape(batch.anchor, batch.negative, "triplet_loss anchor/negative");
  if (batch.anchor.rows() == 0) throw DataError("triplet_loss: empty batch");

  const std::size_t rows = batch.anchor.rows();
  const std::size_t dim = batch.anchor.cols();
  TripletLossOutput out;
  out.dist_pos.resize(rows);
  out.dist_neg.resize(rows);
  out.grad_anchor = Matrix(rows, dim);
  out.grad_positive = Matrix(rows, dim);
  out.grad_negative = Matrix(rows, dim);

  for (std::size_t b = 0; b < rows; ++b) {
    auto a = batch.anchor.row(b);
    auto p = batch.positive.row(b);
    auto n = batch.negative.row(b);
    double dp = 0.0;
    double dn = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      dp += (a[k] - p[k]) * (a[k] - p[k]);
      dn += (a[k] - n[k]) * (a[k] - n[k]);
    }
    out.dist_pos[b] = dp;
    out.dist_neg[b] = dn;
    const double hinge = dp - dn + margin;
    if (hinge < 0.0) continue;
    out.loss += hinge;
    auto ga = out.grad_anchor.row(b);
    auto gp = out.grad_positive.row(b);
    auto gn = out.grad_negative.row(b);
    for (std::size_t k = 0; k < dim; ++k) {
      ga[k] = 2.0 * (n[k] - p[k]);
      gp[k] = -2.0 * (a[k] - p[k]);
      gn[k] = 2.0 * (a[k] - n[k]);
    }
  }
  return out;
}

Matrix cross_correlation(const Matrix& anchor, const Matrix& positive,
                         CrossCorrelationOptions options) {
  require_batch_pair(anchor, positive, "cross_correlation");
  const auto a = normalize_columns(anchor, options.center);
  const auto p = normalize_columns(positive, options.center);
  warn_collapsed(a, "anchor");
  warn_collapsed(p, "positive");
  return matmul_tn(a.unit, p.unit);
}

LossOutput barlow_twins_loss(const Matrix& anchor, const Matrix& positive, double lambda,
                             CrossCorrelationOptions options) {
  if (!(lambda >= 0.0)) throw ConfigError("barlow_twins_loss: lambda must be >= 0");
  require_batch_pair(anchor, positive, "barlow_twins_loss");

  const auto a = normalize_columns(anchor, options.center);
  const auto p = normalize_columns(positive, options.center);
  warn_collapsed(a, "anchor");
  warn_collapsed(p, "positive");
  const Matrix c = matmul_tn(a.unit, p.unit);

  const std::size_t dim = c.rows();
  LossOutput out;
  Matrix grad_c(dim, dim);
  double on_diagonal = 0.0;
  double off_diagonal = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double cij = c(i, j);
      if (i == j) {
        on_diagonal += (1.0 - cij) * (1.0 - cij);
        grad_c(i, j) = -2.0 * (1.0 - cij);
      } else {
        off_diagonal += cij * cij;
        grad_c(i, j) = 2.0 * lambda * cij;
      }
    }
  }
  out.loss = on_diagonal + lambda * off_diagonal;
  // C = A^T P, so dA = P G^T and dP = A G.
  out.grad_anchor = normalize_backward(a, matmul_nt(p.unit, grad_c));
  out.grad_positive = normalize_backward(p, matmul(a.unit, grad_c));
  return out;
}

LossOutput combined_loss(const TripletBatch& batch, double margin, double lambda, double beta,
                         CrossCorrelationOptions options) {
  if (!(beta >= 0.0)) throw ConfigError("combined_loss: beta must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("combined_loss: lambda must be >= 0");
  auto triplet = triplet_loss(batch, margin);
  LossOutput out;
  out.loss = triplet.loss;
  out.grad_anchor = std::move(triplet.grad_anchor);
  out.grad_positive = std::move(triplet.grad_positive);
  out.grad_negative = std::move(triplet.grad_negative);
  if (beta == 0.0) return out;

  auto barlow = barlow_twins_loss(batch.anchor, batch.positive, lambda, options);
  out.loss += beta * barlow.loss;
  out.grad_anchor += barlow.grad_anchor * beta;
  out.grad_positive += barlow.grad_positive * beta;
  return out;
}

CrossEntropyOutput cross_entropy_loss(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw DimensionError("cross_entropy_loss: " + std::to_string(labels.size()) +
                         " labels for logits " + logits.shape_string());
  }
  if (logits.rows() == 0) throw DataError("cross_entropy_loss: empty batch");
  const std::size_t rows = logits.rows();
  const std::size_t classes = logits.cols();
  CrossEntropyOutput out;
  out.grad_logits = Matrix(rows, classes);
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t b = 0; b < rows; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw DataError("cross_entropy_loss: label " + std::to_string(label) + " at row " +
                      std::to_string(b) + " outside [0, " + std::to_string(classes) + ")");
    }
    auto z = logits.row(b);
    const double peak = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - peak);
    const double log_norm = peak + std::log(sum);
    out.loss += log_norm - z[static_cast<std::size_t>(label)];
    auto g = out.grad_logits.row(b);
    for (std::size_t k = 0; k < classes; ++k) {
      g[k] = std::exp(z[k] - log_norm) * inv_rows;
    }
    g[static_cast<std::size_t>(label)] -= inv_rows;
  }
  out.loss *= inv_rows;
  return out;
}

}  // namespace emtune
