#include "gazecone/losses.hpp"

#include <algorithm>
#include <cmath>

#include "gazecone/errors.hpp"

namespace gazecone::learning {

LossValue shifted_grids_loss(std::span<const double> logits, const std::optional<geometry::Vec2>& gaze,
                             bool mask_no_gaze) {
  using namespace grids;
  if (logits.size() != kGridCount * kClasses) {
    throw DimensionError("shifted_grids_loss expects " + std::to_string(kGridCount * kClasses) + " logits");
  }
  if (gaze) {
    const double x = gaze->x(), y = gaze->y();
    if (!(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0)) {
      throw InputError("gaze target (" + std::to_string(x) + ", " + std::to_string(y) + ") outside [0,1]^2");
    }
  } else if (mask_no_gaze) {
    throw InputError("NO_GAZE target needs the no-gaze class, which is masked");
  }
  const auto p = grid_probabilities(logits, mask_no_gaze);
  LossValue out;
  out.grad.assign(logits.size(), 0.0);
  const std::size_t used = mask_no_gaze ? kLocationClasses : kClasses;
  for (std::size_t g = 0; g < kGridCount; ++g) {
    const std::size_t target = gaze ? target_class(*gaze, g) : kNoGazeClass;
    // Log-sum-exp form keeps the loss finite for saturated logits.
    const double* z = logits.data() + g * kClasses;
    const double m = *std::max_element(z, z + used);
    double s = 0.0;
    for (std::size_t c = 0; c < used; ++c) s += std::exp(z[c] - m);
    out.value += m + std::log(s) - z[target];
    for (std::size_t c = 0; c < used; ++c) out.grad[g * kClasses + c] = p[g * kClasses + c];
    out.grad[g * kClasses + target] -= 1.0;
  }
  return out;
}

ScalarLoss scene_change_loss(double gamma, bool same_scene) {
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const double g = std::clamp(gamma, lo, hi);
  ScalarLoss out;
  out.value = same_scene ? -std::log(g) : -std::log(1.0 - g);
  if (gamma > lo && gamma < hi) out.grad = same_scene ? -1.0 / g : 1.0 / (1.0 - g);
  return out;
}

}  // namespace gazecone::learning
