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

#include "pps/delaunay.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "pps/error.hpp"

namespace pps::delaunay {

std::int64_t orient(const Point& a, const Point& b, const Point& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

__int128 incircle(const Point& a, const Point& b, const Point& c, const Point& d) {
  const __int128 adx = a.x - d.x, ady = a.y - d.y;
  const __int128 bdx = b.x - d.x, bdy = b.y - d.y;
  const __int128 cdx = c.x - d.x, cdy = c.y - d.y;
  const __int128 alift = adx * adx + ady * ady;
  const __int128 blift = bdx * bdx + bdy * bdy;
  const __int128 clift = cdx * cdx + cdy * cdy;
  return alift * (bdx * cdy - bdy * cdx) + blift * (cdx * ady - cdy * adx) + clift * (adx * bdy - ady * bdx);
}

namespace {

constexpr int kGhost = -1;
constexpr int kNone = -1;

struct Tri {
  int v[3];
  int n[3];  // n[i] lies across the edge opposite v[i]
  bool alive = true;

  bool ghost() const { return v[2] == kGhost; }
};

std::uint64_t edge_key(int from, int to) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(from + 1)) << 32) |
         static_cast<std::uint32_t>(to + 1);
}

// Interleaves the low 32 bits of x and y.
std::uint64_t morton(std::uint64_t x, std::uint64_t y) {
  const auto spread = [](std::uint64_t v) {
    v &= 0xffffffffULL;
    v = (v | (v << 16)) & 0x0000ffff0000ffffULL;
    v = (v | (v << 8)) & 0x00ff00ff00ff00ffULL;
    v = (v | (v << 4)) & 0x0f0f0f0f0f0f0f0fULL;
    v = (v | (v << 2)) & 0x3333333333333333ULL;
    v = (v | (v << 1)) & 0x5555555555555555ULL;
    return v;
  };
  return spread(x) | (spread(y) << 1);
}

class Builder {
 public:
  explicit Builder(const std::vector<Point>& pts) : p_(pts) {}

  void init(int a, int b, int c) {
    if (orient(p_[a], p_[b], p_[c]) < 0) std::swap(b, c);
    const int t0 = make({a, b, c});
    const int g0 = make({b, a, kGhost});
    const int g1 = make({c, b, kGhost});
    const int g2 = make({a, c, kGhost});
    std::unordered_map<std::uint64_t, std::pair<int, int>> edges;
    for (int t : {t0, g0, g1, g2}) {
      for (int i = 0; i < 3; ++i) edges[edge_key(tris_[t].v[(i + 1) % 3], tris_[t].v[(i + 2) % 3])] = {t, i};
    }
    for (int t : {t0, g0, g1, g2}) {
      for (int i = 0; i < 3; ++i) {
        tris_[t].n[i] = edges.at(edge_key(tris_[t].v[(i + 2) % 3], tris_[t].v[(i + 1) % 3])).first;
      }
    }
    hint_ = t0;
  }

  void insert(int pi) {
    const Point& p = p_[pi];
    const int start = locate(p);
    ++stamp_;
    std::vector<int> cavity{start};
    std::vector<int> stack{start};
    mark(start);
    in_cavity_[start] = 1;
    struct Boundary {
      int u, w, outside;
    };
    std::vector<Boundary> boundary;
    while (!stack.empty()) {
      const int t = stack.back();
      stack.pop_back();
      for (int i = 0; i < 3; ++i) {
        const int nb = tris_[t].n[i];
        const int u = tris_[t].v[(i + 1) % 3];
        const int w = tris_[t].v[(i + 2) % 3];
        if (visited(nb)) {
          if (!in_cavity_[nb]) boundary.push_back({u, w, nb});
          continue;
        }
        mark(nb);
        if (conflict(nb, p)) {
          in_cavity_[nb] = 1;
          cavity.push_back(nb);
          stack.push_back(nb);
        } else {
          in_cavity_[nb] = 0;
          boundary.push_back({u, w, nb});
        }
      }
    }
    for (int t : cavity) {
      tris_[t].alive = false;
      free_.push_back(t);
    }

    std::unordered_map<std::uint64_t, std::pair<int, int>> open;
    std::vector<int> created;
    created.reserve(boundary.size());
    for (const auto& e : boundary) {
      int v[3] = {e.u, e.w, pi};
      int n[3] = {kNone, kNone, e.outside};
      // Keep the ghost vertex last.
      int k = 0;
      if (v[0] == kGhost) k = 1;
      if (v[1] == kGhost) k = 2;
      const int t = make({v[k], v[(k + 1) % 3], v[(k + 2) % 3]});
      for (int i = 0; i < 3; ++i) tris_[t].n[i] = n[(i + k) % 3];
      Tri& out = tris_[e.outside];
      // Match by vertices: freed slots are reused, so indices are ambiguous.
      for (int i = 0; i < 3; ++i) {
        if (out.v[(i + 1) % 3] == e.w && out.v[(i + 2) % 3] == e.u) out.n[i] = t;
      }
      for (int i = 0; i < 3; ++i) {
        if (tris_[t].n[i] != kNone) continue;
        const int from = tris_[t].v[(i + 1) % 3];
        const int to = tris_[t].v[(i + 2) % 3];
        const auto twin = open.find(edge_key(to, from));
        if (twin != open.end()) {
          tris_[t].n[i] = twin->second.first;
          tris_[twin->second.first].n[twin->second.second] = t;
          open.erase(twin);
        } else {
          open[edge_key(from, to)] = {t, i};
        }
      }
      created.push_back(t);
    }
    if (!open.empty()) throw Error("DegenerateInput", "cavity boundary is not closed");
    for (int t : created) {
      if (!tris_[t].ghost()) {
        hint_ = t;
        break;
      }
    }
  }

  std::vector<Triangle> result() const {
    std::vector<Triangle> out;
    for (const auto& t : tris_) {
      if (t.alive && !t.ghost()) {
        out.push_back({static_cast<std::size_t>(t.v[0]), static_cast<std::size_t>(t.v[1]),
                       static_cast<std::size_t>(t.v[2])});
      }
    }
    return out;
  }

 private:
  int make(std::array<int, 3> v) {
    Tri t{{v[0], v[1], v[2]}, {kNone, kNone, kNone}, true};
    int idx;
    if (!free_.empty()) {
      idx = free_.back();
      free_.pop_back();
      tris_[idx] = t;
    } else {
      idx = static_cast<int>(tris_.size());
      tris_.push_back(t);
      seen_.push_back(0);
      in_cavity_.push_back(0);
    }
    seen_[idx] = 0;
    return idx;
  }

  void mark(int t) { seen_[t] = stamp_; }
  bool visited(int t) const { return seen_[t] == stamp_; }

  bool conflict(int t, const Point& p) const {
    const Tri& tri = tris_[t];
    if (!tri.ghost()) return incircle(p_[tri.v[0]], p_[tri.v[1]], p_[tri.v[2]], p) > 0;
    // A ghost's circumcircle degenerates to the open outer half-plane plus the
    // open hull edge.
    const Point& a = p_[tri.v[0]];
    const Point& b = p_[tri.v[1]];
    const std::int64_t o = orient(a, b, p);
    if (o != 0) return o > 0;
    const std::int64_t da = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
    const std::int64_t db = (p.x - b.x) * (a.x - b.x) + (p.y - b.y) * (a.y - b.y);
    return da > 0 && db > 0;
  }

  int locate(const Point& p) const {
    int t = hint_;
    const std::size_t limit = 4 * tris_.size() + 16;
    for (std::size_t step = 0; step < limit; ++step) {
      const Tri& tri = tris_[t];
      int next = kNone;
      for (int i = 0; i < 3; ++i) {
        if (orient(p_[tri.v[(i + 1) % 3]], p_[tri.v[(i + 2) % 3]], p) < 0) {
          next = tri.n[i];
          break;
        }
      }
      if (next == kNone) return t;
      if (tris_[next].ghost()) return next;
      t = next;
    }
    for (std::size_t i = 0; i < tris_.size(); ++i) {
      if (tris_[i].alive && conflict(static_cast<int>(i), p)) return static_cast<int>(i);
    }
    throw Error("DegenerateInput", "point location failed");
  }

  const std::vector<Point>& p_;
  std::vector<Tri> tris_;
  std::vector<int> free_;
  std::vector<std::uint32_t> seen_;
  std::vector<char> in_cavity_;
  std::uint32_t stamp_ = 0;
  int hint_ = 0;
};

}  // namespace

std::vector<Triangle> triangulate(const std::vector<Point>& points) {
  if (points.size() < 3) throw Error("DegenerateInput", fmt::format("{} points cannot be triangulated", points.size()));
  if (points.size() > static_cast<std::size_t>(std::numeric_limits<int>::max() / 4)) {
    throw Error("InvalidArgument", "too many points");
  }
  std::int64_t min_x = points[0].x, min_y = points[0].y;
  for (const auto& p : points) {
    if (std::llabs(p.x) > kMaxCoordinate || std::llabs(p.y) > kMaxCoordinate) {
      throw Error("InvalidArgument", fmt::format("coordinate ({}, {}) out of range", p.x, p.y));
    }
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
  }
  std::vector<int> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint64_t> keys(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    keys[i] = morton(static_cast<std::uint64_t>(points[i].x - min_x), static_cast<std::uint64_t>(points[i].y - min_y));
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] < keys[b]; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (points[order[i]] == points[order[i - 1]]) {
      throw Error("DegenerateInput",
                  fmt::format("duplicate point ({}, {})", points[order[i]].x, points[order[i]].y));
    }
  }
  std::size_t third = 2;
  while (third < order.size() && orient(points[order[0]], points[order[1]], points[order[third]]) == 0) ++third;
  if (third == order.size()) throw Error("DegenerateInput", "all points are collinear");
  std::rotate(order.begin() + 2, order.begin() + static_cast<std::ptrdiff_t>(third),
              order.begin() + static_cast<std::ptrdiff_t>(third) + 1);

  Builder b(points);
  b.init(order[0], order[1], order[2]);
  for (std::size_t i = 3; i < order.size(); ++i) b.insert(order[i]);
  return b.result();
}

}  // namespace pps::delaunay
