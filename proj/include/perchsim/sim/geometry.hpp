#pragma once

#include <optional>

#include "perchsim/sim/types.hpp"

namespace perchsim::sim {

struct Ray {
  Vec3 origin;
  Vec3 direction;  // need not be unit; hit parameters are in units of its length
};

/// Smallest t > 0 at which the ray enters the solid tree cylinder (lateral
/// surface or top cap), if any.
std::optional<double> intersect_tree(const Ray& ray, const TreeModel& tree);

/// Smallest t > 0 at which the ray reaches the ground plane z = 0.
std::optional<double> intersect_ground(const Ray& ray);

}  // namespace perchsim::sim
