#include "gtal/interval.hpp"

#include <algorithm>

#include "gtal/common.hpp"

namespace gtal {

double temporal_iou(double a_start, double a_end, double b_start, double b_end) {
  if (!(a_end > a_start) || !(b_end > b_start)) throw Error("temporal_iou: degenerate interval (end <= start)");
  const double inter = std::min(a_end, b_end) - std::max(a_start, b_start);
  if (inter <= 0.0) return 0.0;
  const double uni = std::max(a_end, b_end) - std::min(a_start, b_start);
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace gtal
