#ifndef FHCI_RNG_HPP
#define FHCI_RNG_HPP

// Counter-based random streams (Philox4x32-10, Salmon et al., SC'11) and a
// deterministic parallel-for. A stream is identified by (seed, stream, substream);
// its output does not depend on which thread consumes it or in what order.
//
// Normal variates use the Box-Muller transform (Box and Muller, 1958): each
// Philox block yields two uniforms on (0,1) and therefore two normals.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

namespace fhci {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Sequential view of one Philox stream. Counter words: [block, substream, stream lo, stream hi].
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint32_t substream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        substream_(substream),
        stream_(stream) {}

  /// Uniform on the open interval (0,1), 53-bit resolution.
  double uniform() {
    if (pos_ >= 2) refill();
    const std::uint64_t hi = block_[2 * pos_] >> 5;      // 27 bits
    const std::uint64_t lo = block_[2 * pos_ + 1] >> 6;  // 26 bits
    ++pos_;
    return (static_cast<double>((hi << 26) | lo) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  void refill() {
    const Philox4x32::Counter ctr{counter_, substream_, static_cast<std::uint32_t>(stream_),
                                  static_cast<std::uint32_t>(stream_ >> 32)};
    block_ = Philox4x32::generate(ctr, key_);
    ++counter_;
    pos_ = 0;
  }

  Philox4x32::Key key_;
  std::uint32_t substream_;
  std::uint64_t stream_;
  std::uint32_t counter_ = 0;
  Philox4x32::Counter block_{};
  int pos_ = 2;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Worker count: explicit request if positive, else FHCI_THREADS, else hardware concurrency.
inline unsigned resolve_threads(int requested = 0) {
  if (requested > 0) return static_cast<unsigned>(requested);
  if (const char* env = std::getenv("FHCI_THREADS"); env != nullptr) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls body(i) for i in [0, n) on `threads` workers. Callers write results by
/// index, so the outcome is independent of scheduling. The first exception is rethrown.
template <typename Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace fhci

#endif  // FHCI_RNG_HPP
