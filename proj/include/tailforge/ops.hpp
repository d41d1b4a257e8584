#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tailforge/graph.hpp"

namespace tailforge {

namespace detail {

// A 1x1 result that may hold inf/nan, so callers can report divergence.
template <typename T>
Matrix<T> scalar_matrix(T v) {
  Matrix<T> m(1, 1);
  m(0, 0) = v;
  return m;
}

}  // namespace detail

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  return make_op(matmul(a->value(), b->value()), {a, b}, [](Node<T>& self) {
    const auto& g = self.grad();
    const auto& av = self.parent(0)->value();
    const auto& bv = self.parent(1)->value();
    if (self.parent(0)->requires_grad()) accumulate(self, 0, matmul_nt(g, bv));
    if (self.parent(1)->requires_grad()) accumulate(self, 1, matmul_tn(av, g));
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!a->value().same_shape(b->value())) {
    throw DimensionError("add shape mismatch: " + a->value().shape() + " vs " +
                         b->value().shape());
  }
  Matrix<T> out = a->value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b->value().data()[i];
  return make_op(std::move(out), {a, b}, [](Node<T>& self) {
    accumulate(self, 0, self.grad());
    accumulate(self, 1, self.grad());
  });
}

// a (n x c) + bias (1 x c) broadcast over rows.
template <typename T>
Var<T> add_row(const Var<T>& a, const Var<T>& bias) {
  const auto& av = a->value();
  const auto& bv = bias->value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_row shape mismatch: " + av.shape() + " + " + bv.shape());
  }
  Matrix<T> out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
  return make_op(std::move(out), {a, bias}, [](Node<T>& self) {
    const auto& g = self.grad();
    accumulate(self, 0, g);
    if (self.parent(1)->requires_grad()) {
      Matrix<T> gb(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      accumulate(self, 1, gb);
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Matrix<T> out = a->value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return make_op(std::move(out), {a}, [](Node<T>& self) {
    const auto& x = self.parent(0)->value();
    Matrix<T> gx = self.grad();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (!(x.data()[i] > T{0})) gx.data()[i] = T{0};
    accumulate(self, 0, gx);
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total{0};
  for (T v : a->value().data()) total += v;
  return make_op(detail::scalar_matrix(total), {a}, [](Node<T>& self) {
    const auto& x = self.parent(0)->value();
    accumulate(self, 0, Matrix<T>(x.rows(), x.cols(), self.grad()(0, 0)));
  });
}

// Stacks b under a (same column count).
template <typename T>
Var<T> vstack(const Var<T>& a, const Var<T>& b) {
  const auto& av = a->value();
  const auto& bv = b->value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("vstack column mismatch: " + av.shape() + " over " + bv.shape());
  }
  Matrix<T> out(av.rows() + bv.rows(), av.cols());
  std::copy(av.data().begin(), av.data().end(), out.data().begin());
  std::copy(bv.data().begin(), bv.data().end(), out.data().begin() + av.size());
  return make_op(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& g = self.grad();
    const auto& av = self.parent(0)->value();
    const auto& bv = self.parent(1)->value();
    Matrix<T> ga(av.rows(), av.cols());
    Matrix<T> gb(bv.rows(), bv.cols());
    std::copy(g.data().begin(), g.data().begin() + av.size(), ga.data().begin());
    std::copy(g.data().begin() + av.size(), g.data().end(), gb.data().begin());
    accumulate(self, 0, ga);
    accumulate(self, 1, gb);
  });
}

namespace detail {

template <typename T>
std::vector<T> row_norms(const Matrix<T>& x, const char* what) {
  std::vector<T> norms(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    T acc{0};
    for (T v : x.row(i)) acc += v * v;
    norms[i] = std::sqrt(acc);
    if (!(norms[i] > T{0})) {
      throw DegenerateInputError(std::string(what) + ": row " + std::to_string(i) +
                                     " has zero norm",
                                 i);
    }
  }
  return norms;
}

template <typename T>
Matrix<T> normalize_rows(const Matrix<T>& x, const std::vector<T>& norms) {
  Matrix<T> out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (auto& v : out.row(i)) v /= norms[i];
  return out;
}

// Pulls a gradient w.r.t. unit rows u = x/|x| back to x.
template <typename T>
Matrix<T> unnormalize_grad(const Matrix<T>& unit, const std::vector<T>& norms,
                           const Matrix<T>& g_unit) {
  Matrix<T> gx(unit.rows(), unit.cols());
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    T dot{0};
    for (std::size_t k = 0; k < unit.cols(); ++k) dot += unit(i, k) * g_unit(i, k);
    for (std::size_t k = 0; k < unit.cols(); ++k)
      gx(i, k) = (g_unit(i, k) - unit(i, k) * dot) / norms[i];
  }
  return gx;
}

}  // namespace detail

// S_ij = <a_i, b_j> / (|a_i| |b_j|)
template <typename T>
Var<T> cosine_similarity(const Var<T>& a, const Var<T>& b) {
  if (a->value().cols() != b->value().cols()) {
    throw DimensionError("cosine_similarity column mismatch: " + a->value().shape() + " vs " +
                         b->value().shape());
  }
  auto a_norms = detail::row_norms(a->value(), "cosine_similarity (left)");
  auto b_norms = detail::row_norms(b->value(), "cosine_similarity (right)");
  auto a_unit = detail::normalize_rows(a->value(), a_norms);
  auto b_unit = detail::normalize_rows(b->value(), b_norms);
  Matrix<T> s = matmul_nt(a_unit, b_unit);
  return make_op(std::move(s), {a, b},
                 [a_norms = std::move(a_norms), b_norms = std::move(b_norms),
                  a_unit = std::move(a_unit), b_unit = std::move(b_unit)](Node<T>& self) {
                   const auto& g = self.grad();
                   if (self.parent(0)->requires_grad())
                     accumulate(self, 0,
                                detail::unnormalize_grad(a_unit, a_norms, matmul(g, b_unit)));
                   if (self.parent(1)->requires_grad())
                     accumulate(self, 1,
                                detail::unnormalize_grad(b_unit, b_norms, matmul_tn(g, a_unit)));
                 });
}

// B x B cosine similarity between all rows of z.
template <typename T>
Var<T> row_cosine_similarity(const Var<T>& z) {
  auto out = cosine_similarity(z, z);
  // Exact unit diagonal and symmetry regardless of rounding in the products.
  auto& s = out->mutable_value();
  for (std::size_t i = 0; i < s.rows(); ++i) {
    s(i, i) = T{1};
    for (std::size_t j = i + 1; j < s.cols(); ++j) s(j, i) = s(i, j);
  }
  return out;
}

template <typename T>
struct MaskedSoftmax {
  Var<T> weights;
  // Rows whose mask has no unmasked entry; their weights are all zero.
  std::vector<std::size_t> empty_rows;
};

// W_ij = exp(S_ij) E_ij / sum_k exp(S_ik) E_ik, stabilised by the row max
// over unmasked entries.
template <typename T>
MaskedSoftmax<T> masked_row_softmax(const Var<T>& s, const Matrix<T>& mask) {
  const auto& sv = s->value();
  if (!sv.same_shape(mask)) {
    throw DimensionError("masked_row_softmax shape mismatch: " + sv.shape() + " vs mask " +
                         mask.shape());
  }
  for (T m : mask.data()) {
    if (m != T{0} && m != T{1}) throw ValidationError("mask entries must be 0 or 1");
  }
  MaskedSoftmax<T> result;
  Matrix<T> w(sv.rows(), sv.cols());
  for (std::size_t i = 0; i < sv.rows(); ++i) {
    T row_max = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < sv.cols(); ++j)
      if (mask(i, j) != T{0}) row_max = std::max(row_max, sv(i, j));
    if (row_max == -std::numeric_limits<T>::infinity()) {
      result.empty_rows.push_back(i);
      continue;
    }
    T denom{0};
    for (std::size_t j = 0; j < sv.cols(); ++j) {
      if (mask(i, j) != T{0}) {
        w(i, j) = std::exp(sv(i, j) - row_max);
        denom += w(i, j);
      }
    }
    for (std::size_t j = 0; j < sv.cols(); ++j) w(i, j) /= denom;
  }
  result.weights = make_op(std::move(w), {s}, [](Node<T>& self) {
    const auto& g = self.grad();
    const auto& w = self.value();
    Matrix<T> gs(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i) {
      T dot{0};
      for (std::size_t j = 0; j < w.cols(); ++j) dot += w(i, j) * g(i, j);
      for (std::size_t j = 0; j < w.cols(); ++j) gs(i, j) = w(i, j) * (g(i, j) - dot);
    }
    accumulate(self, 0, gs);
  });
  return result;
}

// Mean over rows of -sum_k y_k log softmax(logits)_k. Label rows must be
// probability vectors.
template <typename T>
Var<T> soft_label_cross_entropy(const Var<T>& logits, const Matrix<T>& labels) {
  const auto& z = logits->value();
  if (!z.same_shape(labels)) {
    throw DimensionError("cross entropy shape mismatch: logits " + z.shape() + " vs labels " +
                         labels.shape());
  }
  if (z.rows() == 0) throw ValidationError("cross entropy over an empty batch");
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    T row_sum{0};
    for (T v : labels.row(i)) {
      if (v < T{0}) throw ValidationError("invalid label: negative entry in row " + std::to_string(i));
      row_sum += v;
    }
    if (std::abs(row_sum - T{1}) > T(1e-6)) {
      throw ValidationError("invalid label: row " + std::to_string(i) + " sums to " +
                            std::to_string(static_cast<double>(row_sum)));
    }
  }
  Matrix<T> probs(z.rows(), z.cols());
  T loss{0};
  for (std::size_t i = 0; i < z.rows(); ++i) {
    T row_max = z(i, 0);
    for (T v : z.row(i)) row_max = std::max(row_max, v);
    T denom{0};
    for (std::size_t k = 0; k < z.cols(); ++k) {
      probs(i, k) = std::exp(z(i, k) - row_max);
      denom += probs(i, k);
    }
    const T log_denom = std::log(denom);
    for (std::size_t k = 0; k < z.cols(); ++k) {
      probs(i, k) /= denom;
      if (labels(i, k) != T{0}) loss -= labels(i, k) * (z(i, k) - row_max - log_denom);
    }
  }
  const T batch = static_cast<T>(z.rows());
  loss /= batch;
  return make_op(detail::scalar_matrix(loss), {logits},
                 [probs = std::move(probs), labels, batch](Node<T>& self) {
                   const T scale = self.grad()(0, 0) / batch;
                   Matrix<T> gz(probs.rows(), probs.cols());
                   for (std::size_t i = 0; i < gz.size(); ++i)
                     gz.data()[i] = (probs.data()[i] - labels.data()[i]) * scale;
                   accumulate(self, 0, gz);
                 });
}

// Row i of the result is w_i a_i + (1 - w_i) b_i; w is a constant.
template <typename T>
Var<T> affine_combine(const Var<T>& a, const Var<T>& b, std::span<const T> w) {
  const auto& av = a->value();
  const auto& bv = b->value();
  if (!av.same_shape(bv)) {
    throw DimensionError("affine_combine shape mismatch: " + av.shape() + " vs " + bv.shape());
  }
  if (w.size() != av.rows()) {
    throw DimensionError("affine_combine weight length " + std::to_string(w.size()) +
                         " does not match " + std::to_string(av.rows()) + " rows");
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(w[i] >= T{0} && w[i] <= T{1})) {
      throw ValidationError("affine_combine weight " + std::to_string(static_cast<double>(w[i])) +
                            " at row " + std::to_string(i) + " outside [0,1]");
    }
  }
  std::vector<T> weights(w.begin(), w.end());
  Matrix<T> out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j)
      out(i, j) = weights[i] * av(i, j) + (T{1} - weights[i]) * bv(i, j);
  return make_op(std::move(out), {a, b}, [weights = std::move(weights)](Node<T>& self) {
    const auto& g = self.grad();
    for (std::size_t p = 0; p < 2; ++p) {
      if (!self.parent(p)->requires_grad()) continue;
      Matrix<T> gp(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i) {
        const T f = p == 0 ? weights[i] : T{1} - weights[i];
        for (std::size_t j = 0; j < g.cols(); ++j) gp(i, j) = f * g(i, j);
      }
      accumulate(self, p, gp);
    }
  });
}

}  // namespace tailforge
