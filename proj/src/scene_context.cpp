#include "spn/scene_context.hpp"

#include <cmath>
#include <numbers>

#include "spn/error.hpp"

namespace spn {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double wrap360(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  if (w >= 360.0) w -= 360.0;
  return w;
}

void check_angle(double deg) {
  if (!(deg >= 0.0 && deg < 360.0)) {
    throw Error(ErrorCode::InvalidArgument, "angle must lie in [0, 360)");
  }
}

}  // namespace

AngleRangeDeg::AngleRangeDeg(double start_deg, double end_deg) : start_(start_deg), end_(end_deg) {
  check_angle(start_deg);
  check_angle(end_deg);
}

bool AngleRangeDeg::contains(double angle_deg) const {
  if (full_) return true;
  if (start_ <= end_) return angle_deg >= start_ && angle_deg <= end_;
  return angle_deg >= start_ || angle_deg <= end_;
}

AngleRangeDeg AngleRangeDeg::full() { return AngleRangeDeg(0.0, 360.0, true); }

AngleRangeDeg AngleRangeDeg::centered(double center_deg, double half_width_deg) {
  if (!(half_width_deg >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative half width");
  if (half_width_deg >= 180.0) return full();
  return AngleRangeDeg(wrap360(center_deg - half_width_deg), wrap360(center_deg + half_width_deg));
}

double displacement_angle_deg(const Vec2& d) { return wrap360(std::atan2(-d.y(), d.x()) * kRadToDeg); }

std::vector<KeypointMatch> filter_static_matches(const std::vector<KeypointMatch>& matches, double d_p) {
  if (d_p < 0.0) throw Error(ErrorCode::NegativeThreshold, "d_p must be >= 0");
  std::vector<KeypointMatch> kept;
  for (const auto& m : matches) {
    if (m.displacement().norm() >= d_p) kept.push_back(m);
  }
  return kept;
}

std::vector<KeypointMatch> filter_direction_matches(const std::vector<KeypointMatch>& matches,
                                                    const AngleRangeDeg& range) {
  std::vector<KeypointMatch> kept;
  for (const auto& m : matches) {
    const Vec2 d = m.displacement();
    if (d.x() == 0.0 && d.y() == 0.0) {
      throw Error(ErrorCode::ZeroDisplacement, "match has identical endpoints");
    }
    if (range.contains(displacement_angle_deg(d))) kept.push_back(m);
  }
  return kept;
}

std::vector<KeypointMatch> filter_matches(const std::vector<KeypointMatch>& matches,
                                          const MatchFilterConfig& config) {
  auto moving = filter_static_matches(matches, config.min_displacement_px);
  // d_p == 0 lets stationary matches through; they carry no direction and are dropped here.
  std::erase_if(moving, [](const KeypointMatch& m) { return m.displacement().isZero(0.0); });
  return filter_direction_matches(moving, config.valid_range);
}

double dominant_angle_hough(const std::vector<Segment2>& segments, double bin_width_deg,
                            HoughWeighting weighting) {
  if (!(bin_width_deg > 0.0)) throw Error(ErrorCode::InvalidArgument, "bin width must be > 0");
  const double bins_real = 180.0 / bin_width_deg;
  const auto num_bins = static_cast<long>(std::llround(bins_real));
  if (num_bins < 1 || std::abs(bins_real - static_cast<double>(num_bins)) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "bin width must divide 180");
  }

  std::vector<double> acc(static_cast<std::size_t>(num_bins), 0.0);
  double total = 0.0;
  for (const auto& s : segments) {
    Vec2 d = s.b - s.a;
    const double len = d.norm();
    if (len == 0.0) continue;
    // Canonical direction so that swapping endpoints yields the same bits.
    if (d.y() > 0.0 || (d.y() == 0.0 && d.x() < 0.0)) d = -d;
    double theta = displacement_angle_deg(d);
    if (theta >= 180.0) theta -= 180.0;
    auto bin = static_cast<long>(std::floor(theta / bin_width_deg));
    if (bin >= num_bins) bin = num_bins - 1;
    const double w = weighting == HoughWeighting::Length ? len : 1.0;
    acc[static_cast<std::size_t>(bin)] += w;
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::NoDominantAngle, "no segments with nonzero length");

  std::size_t best = 0;
  for (std::size_t i = 1; i < acc.size(); ++i) {
    if (acc[i] > acc[best]) best = i;
  }
  return (static_cast<double>(best) + 0.5) * bin_width_deg;
}

}  // namespace spn
