#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <sys/socket.h>
#include <unistd.h>

#include <deque>

#include "fixtures.hpp"
#include "sysrev/http.hpp"
#include "sysrev/rate_limit.hpp"

using namespace sysrev;
using std::chrono::milliseconds;

namespace {

/// Replays a fixed script of statuses (0 = connection failure, -1 = timeout).
class ScriptedTransport final : public http::Transport {
 public:
  explicit ScriptedTransport(std::deque<int> script) : script_(std::move(script)) {}
  http::Response send(const http::Request&) override {
    ++calls;
    const int s = script_.empty() ? 200 : script_.front();
    if (!script_.empty()) script_.pop_front();
    if (s == 0) throw http::TransportError(http::FailureKind::kConnection, "refused");
    if (s == -1) throw http::TransportError(http::FailureKind::kTimeout, "timed out");
    return http::Response{s, "body", {}};
  }
  int calls = 0;

 private:
  std::deque<int> script_;
};

int max_in_window(const std::vector<Clock::time_point>& grants, double window_seconds) {
  int best = 0;
  for (std::size_t i = 0; i < grants.size(); ++i) {
    int n = 0;
    for (std::size_t j = i; j < grants.size(); ++j) {
      if (std::chrono::duration<double>(grants[j] - grants[i]).count() < window_seconds) ++n;
    }
    best = std::max(best, n);
  }
  return best;
}

}  // namespace

TEST(RateLimiter, FirstPermitIsImmediate) {
  RateLimiter limiter(3.0);
  const auto before = Clock::now();
  throttle(limiter);
  EXPECT_LT(sysrev::testing::seconds_between(before, Clock::now()), 0.05);
}

TEST(RateLimiter, TenPermitsAtThreePerSecondTakeThreeSeconds) {
  RateLimiter limiter(3.0);
  std::vector<Clock::time_point> grants;
  const auto start = Clock::now();
  for (int i = 0; i < 10; ++i) grants.push_back(throttle(limiter).granted_at);
  EXPECT_GE(sysrev::testing::seconds_between(start, grants.back()), 3.0 - 1e-3);
  EXPECT_LE(max_in_window(grants, 1.0), 4);
}

TEST(RateLimiter, ConcurrentCallersShareTheBudget) {
  RateLimiter limiter(20.0);
  std::mutex m;
  std::vector<Clock::time_point> grants;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 10; ++i) {
        const auto g = limiter.acquire();
        std::lock_guard lock(m);
        grants.push_back(g);
      }
    });
  }
  for (auto& t : threads) t.join();
  std::sort(grants.begin(), grants.end());
  EXPECT_LE(max_in_window(grants, 1.0), 21);
  EXPECT_GE(sysrev::testing::seconds_between(grants.front(), grants.back()), 39.0 / 20.0 - 1e-3);
}

TEST(RateLimiter, RejectsBadRates) {
  EXPECT_THROW(RateLimiter(0.0), Error);
  EXPECT_THROW(RateLimiter(-1.0), Error);
  EXPECT_THROW(RateLimiter(1.0, 0.5), Error);
}

TEST(Retry, NominalBackoffSequence) {
  RetryPolicy p;
  std::vector<long long> got;
  for (int i = 0; i < 5; ++i) got.push_back(p.nominal_delay(i).count());
  EXPECT_EQ(got, (std::vector<long long>{1000, 2000, 4000, 8000, 16000}));
}

TEST(Retry, RetryableStatuses) {
  EXPECT_TRUE(is_retryable_status(429));
  EXPECT_TRUE(is_retryable_status(500));
  EXPECT_TRUE(is_retryable_status(503));
  EXPECT_FALSE(is_retryable_status(404));
  EXPECT_FALSE(is_retryable_status(200));
}

TEST(Retry, SucceedsAfterTransientFailures) {
  ScriptedTransport t({429, 0, 502, 200});
  std::vector<milliseconds> waits;
  RetryPolicy p;
  p.jitter = 0.0;
  const auto r = send_with_retry(t, http::Request{}, p, [&](milliseconds d) { waits.push_back(d); });
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(t.calls, 4);
  EXPECT_EQ(waits, (std::vector<milliseconds>{milliseconds(1000), milliseconds(2000), milliseconds(4000)}));
}

TEST(Retry, ReturnsLastResponseWhenAttemptsRunOut) {
  ScriptedTransport t({429, 429, 429, 429, 429, 429});
  const auto r = send_with_retry(t, http::Request{}, RetryPolicy{}, [](milliseconds) {});
  EXPECT_EQ(r.status, 429);
  EXPECT_EQ(t.calls, 5);
}

TEST(Retry, TimeoutsPropagateImmediately) {
  ScriptedTransport t({-1});
  EXPECT_THROW(send_with_retry(t, http::Request{}, RetryPolicy{}, [](milliseconds) {}), http::TransportError);
  EXPECT_EQ(t.calls, 1);
}

TEST(Retry, JitterStaysWithinTwentyPercent) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    ScriptedTransport t({503, 200});
    std::vector<milliseconds> waits;
    send_with_retry(t, http::Request{}, RetryPolicy{}, [&](milliseconds d) { waits.push_back(d); }, nullptr, &rng);
    ASSERT_EQ(waits.size(), 1u);
    EXPECT_GE(waits[0].count(), 800);
    EXPECT_LE(waits[0].count(), 1200);
  }
}

TEST(Http, ParseUrl) {
  const auto u = http::parse_url("https://eutils.ncbi.nlm.nih.gov/entrez/eutils/esearch.fcgi?db=pubmed");
  EXPECT_EQ(u.scheme, "https");
  EXPECT_EQ(u.host, "eutils.ncbi.nlm.nih.gov");
  EXPECT_EQ(u.port, 443);
  EXPECT_EQ(u.target, "/entrez/eutils/esearch.fcgi?db=pubmed");
  const auto local = http::parse_url("http://127.0.0.1:8080");
  EXPECT_EQ(local.port, 8080);
  EXPECT_EQ(local.target, "/");
  EXPECT_THROW(http::parse_url("ftp://x"), Error);
  EXPECT_THROW(http::parse_url("no-scheme"), Error);
  EXPECT_THROW(http::parse_url("http://:80/"), Error);
}

TEST(Http, UrlEncode) {
  EXPECT_EQ(http::url_encode("\"Hepatitis A\"[tiab] AND x"), "%22Hepatitis%20A%22%5Btiab%5D%20AND%20x");
  EXPECT_EQ(http::url_encode("a-b_c.d~"), "a-b_c.d~");
}

TEST(Http, ConnectionRefusedIsConnectionFailure) {
  // Bind a port without listening on it, so connects are refused.
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);
  http::Request r;
  r.url = "http://127.0.0.1:" + std::to_string(port) + "/";
  r.timeout = milliseconds(500);
  try {
    http::make_default_transport()->send(r);
    FAIL() << "expected a transport error";
  } catch (const http::TransportError& e) {
    EXPECT_EQ(e.kind(), http::FailureKind::kConnection);
  }
  ::close(fd);
}
