/*
 * Copyright 2026 The PPS Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace pps::delaunay {

struct Point {
  std::int64_t x = 0;
  std::int64_t y = 0;
  bool operator==(const Point&) const = default;
};

// Coordinates must satisfy |c| <= kMaxCoordinate so that the exact predicates
// fit in 128-bit integers.
inline constexpr std::int64_t kMaxCoordinate = std::int64_t{1} << 24;

using Triangle = std::array<std::size_t, 3>;  // counter-clockwise vertex indices

// > 0 when c lies left of a->b.
std::int64_t orient(const Point& a, const Point& b, const Point& c);

// > 0 when d lies strictly inside the circumcircle of counter-clockwise a, b, c.
__int128 incircle(const Point& a, const Point& b, const Point& c, const Point& d);

// Delaunay triangulation by incremental insertion with ghost triangles on the
// hull, so no bounding triangle is needed. Cocircular ties are broken by
// insertion order. Throws DegenerateInput (fewer than three points, all
// collinear, duplicates) and InvalidArgument (coordinate out of range).
std::vector<Triangle> triangulate(const std::vector<Point>& points);

}  // namespace pps::delaunay
