#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gazecone/geometry.hpp"
#include "gazecone/grids.hpp"

namespace gazecone::learning {

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;  // same layout as the input logits
};

// Sum over the five grids of the cross-entropy between the grid softmax and
// the target class of `gaze` under that grid's shift. An empty `gaze` means
// NO_GAZE and targets the extra class, which needs mask_no_gaze == false.
// With mask_no_gaze the extra class is excluded from the softmax.
// Throws InputError for a point outside [0,1]^2.
LossValue shifted_grids_loss(std::span<const double> logits, const std::optional<geometry::Vec2>& gaze,
                             bool mask_no_gaze);

struct ScalarLoss {
  double value = 0.0;
  double grad = 0.0;  // d loss / d gamma
};

// Binary cross-entropy of gamma against same_scene (target 1 when same),
// with gamma clamped to [1e-7, 1 - 1e-7]; the clamp is flat, so the gradient
// vanishes outside that range.
ScalarLoss scene_change_loss(double gamma, bool same_scene);

}  // namespace gazecone::learning
