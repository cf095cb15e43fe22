#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <semaphore>

#include "nlf/core/util.hpp"
#include "nlf/gateway/provider.hpp"

namespace nlf::gateway {

using Millis = std::chrono::milliseconds;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Millis now() = 0;
  virtual void sleep_until(Millis deadline) = 0;
};

class SystemClock final : public Clock {
 public:
  Millis now() override;
  void sleep_until(Millis deadline) override;
};

/// Virtual time for tests: sleeping advances the clock instead of blocking.
class ManualClock final : public Clock {
 public:
  Millis now() override;
  void sleep_until(Millis deadline) override;
  void advance(Millis delta);

 private:
  std::mutex mutex_;
  Millis now_{0};
};

/// Sliding-window limiter: at most `per_minute` admissions in any 60 s window.
class RateLimiter {
 public:
  RateLimiter(int per_minute, std::shared_ptr<Clock> clock);

  /// Blocks until admission is allowed; returns the admission time.
  Millis acquire();

 private:
  int per_minute_;
  std::shared_ptr<Clock> clock_;
  std::mutex mutex_;
  std::deque<Millis> admitted_;
};

/// Provider-agnostic completion client with bounded concurrency, rate limiting and
/// jittered exponential backoff. Safe for concurrent use.
class ChatClient {
 public:
  ChatClient(ProviderConfig cfg, std::shared_ptr<Provider> provider,
             std::shared_ptr<Clock> clock = std::make_shared<SystemClock>(),
             std::uint64_t jitter_seed = 0);

  /// Throws AuthError, ExhaustedRetries, MalformedProviderReply or RequestRejected.
  ChatResponse complete(const ChatRequest& request);

  [[nodiscard]] const ProviderConfig& config() const noexcept { return cfg_; }

  /// Backoff before retry number `attempt` (1-based), before jitter.
  [[nodiscard]] static Millis backoff_ceiling(const RetryPolicy& policy, int attempt);

 private:
  Millis jittered_backoff(int attempt);

  ProviderConfig cfg_;
  std::shared_ptr<Provider> provider_;
  std::shared_ptr<Clock> clock_;
  RateLimiter limiter_;
  std::counting_semaphore<> in_flight_;
  std::mutex rng_mutex_;
  Rng rng_;
};

}  // namespace nlf::gateway
