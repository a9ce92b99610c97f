#include "sysrev/rate_limit.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace sysrev {

RateLimiter::RateLimiter(double permits_per_second, double burst)
    : rate_(permits_per_second), burst_(burst), tokens_(burst), last_(Clock::now()) {
  if (!(permits_per_second > 0.0)) throw Error(ErrorCode::kInput, "permits_per_second must be positive");
  if (!(burst >= 1.0)) throw Error(ErrorCode::kInput, "burst must be at least 1");
}

Clock::time_point RateLimiter::acquire() {
  std::lock_guard lock(mutex_);
  while (true) {
    const auto now = Clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return now;
    }
    const double wait = (1.0 - tokens_) / rate_;
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
  }
}

Permit throttle(RateLimiter& limiter) { return Permit{limiter.acquire()}; }

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::chrono::milliseconds RetryPolicy::nominal_delay(int retry) const {
  const double ms = static_cast<double>(base.count()) * std::pow(factor, retry);
  return std::chrono::milliseconds(static_cast<long long>(std::llround(ms)));
}

bool is_retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

http::Response send_with_retry(http::Transport& transport, const http::Request& request, const RetryPolicy& policy,
                               const Sleeper& sleeper, RateLimiter* limiter, std::mt19937_64* rng) {
  const int attempts = std::max(1, policy.max_attempts);
  std::uniform_real_distribution<double> spread(-policy.jitter, policy.jitter);

  for (int attempt = 1;; ++attempt) {
    if (limiter != nullptr) limiter->acquire();
    const bool last = attempt >= attempts;
    try {
      http::Response response = transport.send(request);
      if (!is_retryable_status(response.status) || last) return response;
    } catch (const http::TransportError& e) {
      if (e.kind() == http::FailureKind::kTimeout || last) throw;
    }
    auto delay = policy.nominal_delay(attempt - 1);
    if (rng != nullptr && policy.jitter > 0.0) {
      delay = std::chrono::milliseconds(
          static_cast<long long>(std::llround(static_cast<double>(delay.count()) * (1.0 + spread(*rng)))));
    }
    sleeper(delay);
  }
}

}  // namespace sysrev
