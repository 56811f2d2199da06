#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "gazecone/random.hpp"
#include "gazecone/tensor.hpp"

namespace testutil {

inline gazecone::Tensor random_tensor(gazecone::Shape shape, gazecone::Rng& rng, double lo = -1.0, double hi = 1.0) {
  gazecone::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); }

// Central difference of f with respect to x[i], restoring x afterwards.
inline double central_diff(const std::function<double()>& f, double& x, double h) {
  const double keep = x;
  x = keep + h;
  const double fp = f();
  x = keep - h;
  const double fm = f();
  x = keep;
  return (fp - fm) / (2.0 * h);
}

// sum(w * t)
inline double dot(const gazecone::Tensor& w, const gazecone::Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += w[i] * t[i];
  return s;
}

}  // namespace testutil
