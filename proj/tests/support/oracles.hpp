#pragma once

// Test-side reference implementations. None of these call into the code
// under test for the quantity they check.

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// Straight transcription of the cost formula, written independently of
// cost_model.cpp.
struct Params {
  double lambda, T, beta, u, G, H, c0, cv, Ev, r, rT;
};

inline double rec(const Params& p, double n, double m) {
  const double e = p.lambda * p.T * p.u + p.lambda * p.T * (p.G + p.H) * m - n * p.Ev * (p.r - p.rT);
  return p.c0 * (e > 0 ? e : 0.0);
}
inline double total(const Params& p, double n, double m) { return rec(p, n, m) + n * p.cv * p.T; }

inline std::int64_t sla_min(const Params& p) {
  std::int64_t n = 1;
  while (p.beta * static_cast<double>(n) < p.lambda) ++n;
  return n;
}

// Exhaustive integer argmin over [lo, hi], ties to the smaller N.
inline std::int64_t argmin(const std::function<double(std::int64_t)>& cost, std::int64_t lo, std::int64_t hi) {
  std::int64_t best = lo;
  double best_c = cost(lo);
  for (std::int64_t n = lo + 1; n <= hi; ++n) {
    const double c = cost(n);
    if (c < best_c) {
      best_c = c;
      best = n;
    }
  }
  return best;
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Byte-bounded LRU kept as a plain recency deque (front = most recent).
class ReferenceLru {
 public:
  explicit ReferenceLru(std::uint64_t capacity) : cap_(capacity) {}

  bool get(const std::string& key) {
    for (auto it = order_.begin(); it != order_.end(); ++it) {
      if (it->first == key) {
        auto e = *it;
        order_.erase(it);
        order_.push_front(e);
        ++hits_;
        return true;
      }
    }
    ++misses_;
    return false;
  }

  // Returns evicted keys, oldest first. Oversized payloads are refused.
  std::vector<std::string> set(const std::string& key, std::uint64_t size) {
    std::vector<std::string> evicted;
    if (size > cap_) return evicted;
    for (auto it = order_.begin(); it != order_.end(); ++it) {
      if (it->first == key) {
        used_ -= it->second;
        order_.erase(it);
        break;
      }
    }
    order_.push_front({key, size});
    used_ += size;
    while (used_ > cap_) {
      evicted.push_back(order_.back().first);
      used_ -= order_.back().second;
      order_.pop_back();
    }
    return evicted;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> k;
    for (const auto& e : order_) k.push_back(e.first);
    return k;
  }
  std::uint64_t used() const { return used_; }
  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }

 private:
  std::uint64_t cap_;
  std::uint64_t used_ = 0;
  std::uint64_t hits_ = 0, misses_ = 0;
  std::deque<std::pair<std::string, std::uint64_t>> order_;
};

// Uniform double in [lo, hi).
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline std::int64_t uniform_int(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

}  // namespace oracle
