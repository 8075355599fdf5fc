#pragma once

namespace gtal {

/// Temporal IoU |a ∩ b| / |a ∪ b| of [a_start, a_end] and [b_start, b_end].
/// Throws Error when either interval has end <= start.
double temporal_iou(double a_start, double a_end, double b_start, double b_end);

}  // namespace gtal
