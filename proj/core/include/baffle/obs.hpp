#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace baffle {

enum class ObsKind : std::uint8_t { Vector = 0, Image = 1 };

/// Shape descriptor for observations.
/// Vector: dims = {d, 1, 1}. Image: dims = {h, w, c}, stored row-major
/// (row, col, channel), all values expected in [0, 1].
struct ObsLayout {
  ObsKind kind = ObsKind::Vector;
  std::array<std::uint32_t, 3> dims = {0, 1, 1};

  std::size_t size() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  bool operator==(const ObsLayout&) const = default;

  static ObsLayout vector(std::uint32_t d) { return {ObsKind::Vector, {d, 1, 1}}; }
  static ObsLayout image(std::uint32_t h, std::uint32_t w, std::uint32_t c) {
    return {ObsKind::Image, {h, w, c}};
  }
};

/// Flat float observation; layout carried separately by the owning
/// EnvSpec / Dataset header / model.
using Observation = std::vector<float>;

}  // namespace baffle
