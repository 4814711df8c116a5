#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace smog {

using Vec3 = std::array<double, 3>;

inline double dist_sq(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Static 3D kd-tree. Nearest-neighbor order is total: candidates compare by
// (squared distance, index), so equal-distance ties always resolve to the
// lower index.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> pts) : pts_(std::move(pts)) {
    idx_.resize(pts_.size());
    axis_.assign(pts_.size(), 0);
    for (size_t i = 0; i < pts_.size(); ++i) idx_[i] = static_cast<int64_t>(i);
    if (!pts_.empty()) build(0, static_cast<int64_t>(pts_.size()));
  }

  int64_t size() const { return static_cast<int64_t>(pts_.size()); }

  // k nearest neighbors of q, ascending by (distance, index).
  std::vector<int64_t> knn(const Vec3& q, int64_t k) const {
    if (k <= 0) throw std::invalid_argument("empty query");
    if (k > size()) throw std::invalid_argument("insufficient points");
    std::vector<Cand> heap;
    heap.reserve(static_cast<size_t>(k));
    search(0, size(), q, k, heap);
    std::sort(heap.begin(), heap.end(), cand_less);
    std::vector<int64_t> out(heap.size());
    for (size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].idx;
    return out;
  }

  int64_t nearest(const Vec3& q, double* out_dist_sq = nullptr) const {
    if (size() == 0) throw std::invalid_argument("insufficient points");
    std::vector<Cand> heap;
    search(0, size(), q, 1, heap);
    if (out_dist_sq) *out_dist_sq = heap.front().d2;
    return heap.front().idx;
  }

 private:
  struct Cand {
    double d2;
    int64_t idx;
  };
  static bool cand_less(const Cand& a, const Cand& b) {
    return a.d2 != b.d2 ? a.d2 < b.d2 : a.idx < b.idx;
  }

  // Median split on the axis of largest extent; node layout is implicit
  // (median at the midpoint of [lo, hi)).
  void build(int64_t lo, int64_t hi) {
    if (hi - lo <= 1) return;
    Vec3 mn = pts_[static_cast<size_t>(idx_[static_cast<size_t>(lo)])];
    Vec3 mx = mn;
    for (int64_t i = lo + 1; i < hi; ++i) {
      const Vec3& p = pts_[static_cast<size_t>(idx_[static_cast<size_t>(i)])];
      for (int a = 0; a < 3; ++a) {
        mn[a] = std::min(mn[a], p[a]);
        mx[a] = std::max(mx[a], p[a]);
      }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (mx[a] - mn[a] > mx[axis] - mn[axis]) axis = a;
    const int64_t mid = lo + (hi - lo) / 2;
    std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                     [&](int64_t a, int64_t b) {
                       const double ca = pts_[static_cast<size_t>(a)][axis];
                       const double cb = pts_[static_cast<size_t>(b)][axis];
                       return ca != cb ? ca < cb : a < b;
                     });
    axis_[static_cast<size_t>(mid)] = static_cast<int8_t>(axis);
    build(lo, mid);
    build(mid + 1, hi);
  }

  void consider(std::vector<Cand>& heap, int64_t k, const Cand& c) const {
    if (static_cast<int64_t>(heap.size()) < k) {
      heap.push_back(c);
      std::push_heap(heap.begin(), heap.end(), cand_less);
    } else if (cand_less(c, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), cand_less);
      heap.back() = c;
      std::push_heap(heap.begin(), heap.end(), cand_less);
    }
  }

  void search(int64_t lo, int64_t hi, const Vec3& q, int64_t k,
              std::vector<Cand>& heap) const {
    if (lo >= hi) return;
    const int64_t mid = lo + (hi - lo) / 2;
    const int64_t pi = idx_[static_cast<size_t>(mid)];
    consider(heap, k, Cand{dist_sq(q, pts_[static_cast<size_t>(pi)]), pi});
    if (hi - lo == 1) return;
    const int axis = axis_.empty() ? 0 : axis_[static_cast<size_t>(mid)];
    const double delta = q[axis] - pts_[static_cast<size_t>(pi)][axis];
    const int64_t near_lo = delta <= 0 ? lo : mid + 1;
    const int64_t near_hi = delta <= 0 ? mid : hi;
    const int64_t far_lo = delta <= 0 ? mid + 1 : lo;
    const int64_t far_hi = delta <= 0 ? hi : mid;
    search(near_lo, near_hi, q, k, heap);
    // The far side can still hold an equal-distance lower index, so only
    // prune on strict inequality.
    const double plane_d2 = delta * delta;
    if (static_cast<int64_t>(heap.size()) < k || plane_d2 <= heap.front().d2)
      search(far_lo, far_hi, q, k, heap);
  }

  std::vector<Vec3> pts_;
  std::vector<int64_t> idx_;
  std::vector<int8_t> axis_;
};

}  // namespace smog
