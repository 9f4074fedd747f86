// Copyright 2026 The partguide Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>

namespace partguide {

struct Point {
  int x = 0;
  int y = 0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned pixel box, half-open: covers x0 <= x < x1, y0 <= y < y1.
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  std::int64_t area() const {
    return empty() ? 0 : static_cast<std::int64_t>(width()) * height();
  }
  bool empty() const { return x1 <= x0 || y1 <= y0; }

  bool contains(Point p) const { return p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1; }
  bool contains(const Box& o) const {
    return o.x0 >= x0 && o.y0 >= y0 && o.x1 <= x1 && o.y1 <= y1;
  }

  /// Floored midpoint ((x0+x1)/2, (y0+y1)/2); inside any non-empty box.
  Point center() const { return {floor_half(x0 + x1), floor_half(y0 + y1)}; }

  friend bool operator==(const Box&, const Box&) = default;

 private:
  static int floor_half(int v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); }
};

inline std::int64_t intersection_area(const Box& a, const Box& b) {
  const Box overlap{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1),
                    std::min(a.y1, b.y1)};
  return overlap.area();
}

/// Smallest box containing both.
inline Box bounding_union(const Box& a, const Box& b) {
  return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1),
          std::max(a.y1, b.y1)};
}

inline std::ostream& operator<<(std::ostream& os, const Box& b) {
  return os << '(' << b.x0 << ',' << b.y0 << ',' << b.x1 << ',' << b.y1 << ')';
}

inline std::ostream& operator<<(std::ostream& os, const Point& p) {
  return os << '(' << p.x << ',' << p.y << ')';
}

}  // namespace partguide
