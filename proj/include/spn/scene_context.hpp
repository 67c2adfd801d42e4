#pragma once

#include <vector>

#include "spn/geometry.hpp"

namespace spn {

struct KeypointMatch {
  Vec2 pixel_a;  // frame i
  Vec2 pixel_b;  // frame i+1

  Vec2 displacement() const { return pixel_b - pixel_a; }
};

struct Segment2 {
  Vec2 a;
  Vec2 b;
};

/// Angular interval in degrees, both ends inclusive. start > end wraps through 0.
class AngleRangeDeg {
 public:
  AngleRangeDeg(double start_deg, double end_deg);

  double start() const { return start_; }
  double end() const { return end_; }
  bool contains(double angle_deg) const;

  /// The full circle [0, 360).
  static AngleRangeDeg full();
  /// [center - half_width, center + half_width], wrapped into [0, 360).
  static AngleRangeDeg centered(double center_deg, double half_width_deg);

 private:
  AngleRangeDeg(double start, double end, bool full) : start_(start), end_(end), full_(full) {}

  double start_;
  double end_;
  bool full_ = false;
};

struct MatchFilterConfig {
  double min_displacement_px = 50.0;
  AngleRangeDeg valid_range{320.0, 20.0};
};

/// Displacement angle in [0, 360): 0 is image-right (+u), angles grow counterclockwise as seen
/// on screen, i.e. toward image-up (-v).
double displacement_angle_deg(const Vec2& displacement);

/// Keeps matches whose displacement is at least d_p pixels. Input order is preserved.
std::vector<KeypointMatch> filter_static_matches(const std::vector<KeypointMatch>& matches, double d_p);

/// Keeps matches whose displacement angle lies in `range`. Throws ZeroDisplacement on a
/// match with identical endpoints.
std::vector<KeypointMatch> filter_direction_matches(const std::vector<KeypointMatch>& matches,
                                                    const AngleRangeDeg& range);

/// Both filters, static first.
std::vector<KeypointMatch> filter_matches(const std::vector<KeypointMatch>& matches,
                                          const MatchFilterConfig& config);

enum class HoughWeighting { Length, Unweighted };

/// Orientation histogram over undirected segment angles in [0, 180). Returns the center of
/// the heaviest bin (lowest bin index on ties). bin_width_deg must divide 180.
double dominant_angle_hough(const std::vector<Segment2>& segments, double bin_width_deg,
                            HoughWeighting weighting = HoughWeighting::Length);

}  // namespace spn
