#include "perchsim/sim/geometry.hpp"

#include <cmath>

namespace perchsim::sim {
namespace {

constexpr double kMinT = 1e-12;

std::optional<double> lateral_hit(const Ray& ray, const TreeModel& tree) {
  const Vec3& a = tree.axis_direction;
  const Vec3 w = ray.origin - tree.base_point;
  const Vec3 d_perp = ray.direction - ray.direction.dot(a) * a;
  const Vec3 w_perp = w - w.dot(a) * a;

  const double qa = d_perp.squaredNorm();
  if (qa < 1e-300) return std::nullopt;  // ray parallel to the axis
  const double qb = 2.0 * d_perp.dot(w_perp);
  const double qc = w_perp.squaredNorm() - tree.radius * tree.radius;
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0.0) return std::nullopt;

  // Numerically stable root pair.
  const double root = std::sqrt(disc);
  const double q = -0.5 * (qb + std::copysign(root, qb));
  double t0 = q / qa;
  double t1 = (q != 0.0) ? qc / q : t0;
  if (t0 > t1) std::swap(t0, t1);

  // Entry point only: an origin inside the cylinder sees nothing.
  if (qc < 0.0 || t0 <= kMinT) return std::nullopt;
  const double s = (w + t0 * ray.direction).dot(a);
  if (s < 0.0 || s > tree.height) return std::nullopt;
  return t0;
}

std::optional<double> top_cap_hit(const Ray& ray, const TreeModel& tree) {
  const Vec3& a = tree.axis_direction;
  const double denom = ray.direction.dot(a);
  if (std::abs(denom) < 1e-300) return std::nullopt;
  const Vec3 top = tree.axis_point(tree.height);
  const double t = (top - ray.origin).dot(a) / denom;
  if (t <= kMinT) return std::nullopt;
  // Entering from above only.
  if ((ray.origin - top).dot(a) <= 0.0) return std::nullopt;
  const Vec3 rel = ray.origin + t * ray.direction - top;
  if ((rel - rel.dot(a) * a).squaredNorm() > tree.radius * tree.radius) return std::nullopt;
  return t;
}

}  // namespace

std::optional<double> intersect_tree(const Ray& ray, const TreeModel& tree) {
  const auto side = lateral_hit(ray, tree);
  const auto cap = top_cap_hit(ray, tree);
  if (side && cap) return std::min(*side, *cap);
  return side ? side : cap;
}

std::optional<double> intersect_ground(const Ray& ray) {
  if (ray.direction.z() >= 0.0 || ray.origin.z() <= 0.0) return std::nullopt;
  const double t = -ray.origin.z() / ray.direction.z();
  if (t <= kMinT) return std::nullopt;
  return t;
}

}  // namespace perchsim::sim
