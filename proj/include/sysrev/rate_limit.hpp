#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <random>

#include "sysrev/http.hpp"

namespace sysrev {

using Clock = std::chrono::steady_clock;

/// Token bucket. Starts full; `burst` is the bucket capacity. Permit
/// issuance is serialized, so concurrent callers queue behind each other.
class RateLimiter {
 public:
  explicit RateLimiter(double permits_per_second, double burst = 1.0);

  /// Blocks until a permit is available; returns the grant time.
  Clock::time_point acquire();

  double rate() const noexcept { return rate_; }

 private:
  std::mutex mutex_;
  double rate_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
};

struct Permit {
  Clock::time_point granted_at;
};

Permit throttle(RateLimiter& limiter);

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

/// Exponential backoff for 429/5xx and connection failures.
struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base{1000};
  double factor = 2.0;
  double jitter = 0.2;  // uniform +/- fraction applied to each delay

  /// Delay before retry number `retry` (0-based), without jitter.
  std::chrono::milliseconds nominal_delay(int retry) const;
};

bool is_retryable_status(int status);

/// Sends with retries. Returns the last response once attempts run out
/// (possibly still 429/5xx); timeouts are not retried and propagate as
/// TransportError, as do connection failures on the final attempt.
http::Response send_with_retry(http::Transport& transport, const http::Request& request, const RetryPolicy& policy,
                               const Sleeper& sleeper, RateLimiter* limiter = nullptr,
                               std::mt19937_64* rng = nullptr);

}  // namespace sysrev
