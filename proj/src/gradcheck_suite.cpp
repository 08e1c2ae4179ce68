#include "emtune/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "emtune/error.hpp"
#include "emtune/gradcheck.hpp"
#include "emtune/losses.hpp"
#include "emtune/model.hpp"
#include "emtune/random.hpp"

namespace emtune {
namespace {

constexpr double kPerturbation = 1e-5;
// Points closer than this to a hinge or ReLU kink are resampled.
constexpr double kKinkClearance = 1e-3;

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = scale * rng.normal();
  return m;
}

std::vector<double> flatten(std::initializer_list<const Matrix*> parts) {
  std::vector<double> out;
  for (const Matrix* m : parts) out.insert(out.end(), m->values().begin(), m->values().end());
  return out;
}

// Splits a flat vector back into matrices shaped like `shapes`.
std::vector<Matrix> unflatten(std::span<const double> flat, const std::vector<Matrix>& shapes) {
  std::vector<Matrix> out;
  std::size_t offset = 0;
  for (const auto& s : shapes) {
    Matrix m(s.rows(), s.cols());
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), m.size(), m.values().begin());
    offset += m.size();
    out.push_back(std::move(m));
  }
  return out;
}

void write_grad(std::vector<double>* grad, std::initializer_list<const Matrix*> parts) {
  if (grad != nullptr) *grad = flatten(parts);
}

bool hinge_clear(const TripletBatch& batch, double margin) {
  const auto out = triplet_loss(batch, margin);
  for (std::size_t b = 0; b < out.dist_pos.size(); ++b) {
    if (std::abs(out.dist_pos[b] - out.dist_neg[b] + margin) < kKinkClearance) return false;
  }
  return true;
}

bool relu_clear(const Mlp& net, const Matrix& x) {
  Mlp::Tape tape;
  net.forward(x, tape);
  for (const auto& cache : tape.caches) {
    if (cache.kind != LayerKind::relu) continue;
    for (double v : cache.input->values())
      if (std::abs(v) < kKinkClearance) return false;
  }
  return true;
}

std::vector<double> flatten_params(const Mlp& net) {
  std::vector<double> out;
  for (const Matrix* p : net.parameters()) out.insert(out.end(), p->values().begin(), p->values().end());
  return out;
}

void load_params(Mlp& net, std::span<const double> flat) {
  std::size_t offset = 0;
  for (Matrix* p : net.parameters()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), p->size(), p->values().begin());
    offset += p->size();
  }
}

std::vector<double> flatten_grads(const std::vector<Matrix>& grads) {
  std::vector<double> out;
  for (const auto& g : grads) out.insert(out.end(), g.values().begin(), g.values().end());
  return out;
}

using CaseBody = std::function<double(Rng&)>;

GradCheckCase run_case(const std::string& name, std::uint64_t seed, std::size_t points,
                       const CaseBody& body) {
  GradCheckCase result{name, points, 0.0};
  for (std::size_t k = 0; k < points; ++k) {
    Rng rng(Rng::derive(seed, k));
    result.max_relative_error = std::max(result.max_relative_error, body(rng));
  }
  return result;
}

// Each body draws a point (resampling near kinks) and returns the max
// relative error there.

double triplet_case(Rng& rng) {
  const double margin = 1.0;
  TripletBatch batch;
  do {
    batch = {random_matrix(rng, 4, 3), random_matrix(rng, 4, 3), random_matrix(rng, 4, 3)};
  } while (!hinge_clear(batch, margin));
  const std::vector<Matrix> shapes{batch.anchor, batch.positive, batch.negative};
  auto f = [&](std::span<const double> p, std::vector<double>* grad) {
    auto m = unflatten(p, shapes);
    auto out = triplet_loss({m[0], m[1], m[2]}, margin);
    write_grad(grad, {&out.grad_anchor, &out.grad_positive, &out.grad_negative});
    return out.loss;
  };
  return grad_check(f, flatten({&batch.anchor, &batch.positive, &batch.negative}), kPerturbation)
      .max_relative_error;
}

double barlow_case(Rng& rng, bool center) {
  const Matrix a = random_matrix(rng, 6, 4);
  const Matrix p = a + random_matrix(rng, 6, 4, 0.5);
  const double lambda = 0.5;
  const std::vector<Matrix> shapes{a, p};
  auto f = [&](std::span<const double> x, std::vector<double>* grad) {
    auto m = unflatten(x, shapes);
    auto out = barlow_twins_loss(m[0], m[1], lambda, {center});
    write_grad(grad, {&out.grad_anchor, &out.grad_positive});
    return out.loss;
  };
  return grad_check(f, flatten({&a, &p}), kPerturbation).max_relative_error;
}

double combined_case(Rng& rng) {
  const double margin = 1.0;
  const double lambda = kDefaultBarlowLambda;
  const double beta = kDefaultCombinationBeta;
  TripletBatch batch;
  do {
    batch = {random_matrix(rng, 5, 3), random_matrix(rng, 5, 3), random_matrix(rng, 5, 3)};
  } while (!hinge_clear(batch, margin));
  const std::vector<Matrix> shapes{batch.anchor, batch.positive, batch.negative};
  auto f = [&](std::span<const double> x, std::vector<double>* grad) {
    auto m = unflatten(x, shapes);
    auto out = combined_loss({m[0], m[1], m[2]}, margin, lambda, beta);
    write_grad(grad, {&out.grad_anchor, &out.grad_positive, &out.grad_negative});
    return out.loss;
  };
  return grad_check(f, flatten({&batch.anchor, &batch.positive, &batch.negative}), kPerturbation)
      .max_relative_error;
}

double cross_entropy_case(Rng& rng) {
  const Matrix logits = random_matrix(rng, 5, 4, 2.0);
  std::vector<int> labels;
  for (std::size_t i = 0; i < 5; ++i) labels.push_back(static_cast<int>(rng.below(4)));
  const std::vector<Matrix> shapes{logits};
  auto f = [&](std::span<const double> x, std::vector<double>* grad) {
    auto m = unflatten(x, shapes);
    auto out = cross_entropy_loss(m[0], labels);
    write_grad(grad, {&out.grad_logits});
    return out.loss;
  };
  return grad_check(f, flatten({&logits}), kPerturbation).max_relative_error;
}


// Combined loss of the encoded anchor/positive/negative batches with respect
// to the encoder parameters; 8 rows per role, 4 -> 3 -> 2.
double encoder_combined_case(Rng& rng, double beta) {
  const double margin = 1.0;
  const double lambda = 0.5;
  Encoder encoder;
  Matrix stacked;
  do {
    encoder = init_encoder({4, {3}, 2, rng.next()});
    for (Matrix* p : encoder.net.parameters())
      for (auto& v : p->values()) v = rng.normal();
    stacked = random_matrix(rng, 24, 4);
  } while (!relu_clear(encoder.net, stacked) ||
           !hinge_clear({slice_rows(encoder.net.forward(stacked), 0, 8),
                         slice_rows(encoder.net.forward(stacked), 8, 8),
                         slice_rows(encoder.net.forward(stacked), 16, 8)},
                        margin));

  auto f = [&](std::span<const double> x, std::vector<double>* grad) {
    Encoder probe = encoder;
    load_params(probe.net, x);
    Mlp::Tape tape;
    const Matrix emb = probe.net.forward(stacked, tape);
    auto out = combined_loss({slice_rows(emb, 0, 8), slice_rows(emb, 8, 8), slice_rows(emb, 16, 8)},
                             margin, lambda, beta);
    if (grad != nullptr) {
      const Matrix parts[] = {out.grad_anchor, out.grad_positive, out.grad_negative};
      *grad = flatten_grads(probe.net.backward(tape, vstack(parts)).params);
    }
    return out.loss;
  };
  return grad_check(f, flatten_params(encoder.net), kPerturbation).max_relative_error;
}

// cross-entropy of adapter(encoder(x)) with respect to all parameters.
double end_to_end_case(Rng& rng) {
  Encoder encoder;
  Adapter adapter;
  Matrix x;
  do {
    encoder = init_encoder({5, {4}, 3, rng.next()});
    adapter = init_adapter({3, 4, 3}, rng.next());
    x = random_matrix(rng, 6, 5);
  } while (!relu_clear(encoder.net, x) || !relu_clear(adapter.net, encoder.net.forward(x)));
  std::vector<int> labels;
  for (std::size_t i = 0; i < 6; ++i) labels.push_back(static_cast<int>(rng.below(3)));

  const std::size_t encoder_size = flatten_params(encoder.net).size();
  auto f = [&](std::span<const double> p, std::vector<double>* grad) {
    Encoder enc = encoder;
    Adapter ada = adapter;
    load_params(enc.net, p.first(encoder_size));
    load_params(ada.net, p.subspan(encoder_size));
    Mlp::Tape enc_tape, ada_tape;
    const Matrix logits = ada.net.forward(enc.net.forward(x, enc_tape), ada_tape);
    auto ce = cross_entropy_loss(logits, labels);
    if (grad != nullptr) {
      auto ga = ada.net.backward(ada_tape, ce.grad_logits);
      auto ge = enc.net.backward(enc_tape, ga.input_grad);
      *grad = flatten_grads(ge.params);
      auto tail = flatten_grads(ga.params);
      grad->insert(grad->end(), tail.begin(), tail.end());
    }
    return ce.loss;
  };
  auto params = flatten_params(encoder.net);
  auto tail = flatten_params(adapter.net);
  params.insert(params.end(), tail.begin(), tail.end());
  return grad_check(f, params, kPerturbation).max_relative_error;
}

}  // namespace

GradCheckReport run_gradcheck_suite(std::uint64_t seed, std::size_t points) {
  GradCheckReport report;
  auto add = [&](const std::string& name, std::uint64_t stream, const CaseBody& body) {
    report.cases.push_back(run_case(name, Rng::derive(seed, stream), points, body));
    report.max_relative_error =
        std::max(report.max_relative_error, report.cases.back().max_relative_error);
  };
  add("triplet", 1, triplet_case);
  add("barlow_twins", 2, [](Rng& r) { return barlow_case(r, false); });
  add("barlow_twins_centered", 3, [](Rng& r) { return barlow_case(r, true); });
  add("combined", 4, combined_case);
  add("cross_entropy", 5, cross_entropy_case);
  add("encoder+combined", 6, [](Rng& r) { return encoder_combined_case(r, kDefaultCombinationBeta); });
  add("encoder+combined(beta=1)", 7, [](Rng& r) { return encoder_combined_case(r, 1.0); });
  add("encoder+adapter+cross_entropy", 8, end_to_end_case);
  return report;
}

}  // namespace emtune
