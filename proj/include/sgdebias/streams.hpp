#pragma once

// Named random streams and a deterministic parallel loop.
//
// Every random quantity is drawn from an engine seeded by
// (master seed, tag, index...), so results never depend on the number of
// workers or on scheduling order.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <string_view>
#include <thread>
#include <vector>

namespace sgdebias {

using Engine = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// Seed of the stream keyed by (master, tag, i, j).
constexpr std::uint64_t stream_seed(std::uint64_t master, std::string_view tag, std::uint64_t i = 0,
                                    std::uint64_t j = 0) noexcept {
  std::uint64_t h = detail::splitmix64(master);
  h = detail::splitmix64(h ^ detail::fnv1a(tag));
  h = detail::splitmix64(h ^ i);
  h = detail::splitmix64(h ^ (j * 0xD1B54A32D192ED03ULL));
  return h;
}

inline Engine make_engine(std::uint64_t master, std::string_view tag, std::uint64_t i = 0,
                          std::uint64_t j = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(stream_seed(master, tag, i, j)),
                    static_cast<std::uint32_t>(stream_seed(master, tag, i, j) >> 32)};
  return Engine(seq);
}

/// Runs body(i) for i in [0, count) on up to `workers` threads.
///
/// Each index runs exactly once; the first exception thrown by any body is
/// rethrown on the calling thread after all workers stop.
template <typename Body>
void parallel_for(std::size_t count, std::size_t workers, Body&& body) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace sgdebias
