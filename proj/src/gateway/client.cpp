#include "nlf/gateway/client.hpp"

#include <algorithm>
#include <thread>

namespace nlf::gateway {

using namespace std::chrono_literals;

Millis SystemClock::now() {
  return std::chrono::duration_cast<Millis>(std::chrono::steady_clock::now().time_since_epoch());
}

void SystemClock::sleep_until(Millis deadline) {
  const auto delta = deadline - now();
  if (delta > 0ms) std::this_thread::sleep_for(delta);
}

Millis ManualClock::now() {
  std::lock_guard lock(mutex_);
  return now_;
}

void ManualClock::sleep_until(Millis deadline) {
  std::lock_guard lock(mutex_);
  now_ = std::max(now_, deadline);
}

void ManualClock::advance(Millis delta) {
  std::lock_guard lock(mutex_);
  now_ += delta;
}

RateLimiter::RateLimiter(int per_minute, std::shared_ptr<Clock> clock)
    : per_minute_(per_minute), clock_(std::move(clock)) {
  if (per_minute_ < 1) throw InvalidArgument("requests_per_minute must be >= 1");
}

Millis RateLimiter::acquire() {
  constexpr Millis kWindow = 60s;
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = clock_->now();
    while (!admitted_.empty() && admitted_.front() <= now - kWindow) admitted_.pop_front();
    if (static_cast<int>(admitted_.size()) < per_minute_) {
      admitted_.push_back(now);
      return now;
    }
    const auto wake = admitted_.front() + kWindow;
    lock.unlock();
    clock_->sleep_until(wake);
    lock.lock();
  }
}

ChatClient::ChatClient(ProviderConfig cfg, std::shared_ptr<Provider> provider,
                       std::shared_ptr<Clock> clock, std::uint64_t jitter_seed)
    : cfg_((cfg.validate(), std::move(cfg))),
      provider_(std::move(provider)),
      clock_(std::move(clock)),
      limiter_(cfg_.requests_per_minute, clock_),
      in_flight_(cfg_.max_concurrency),
      rng_(jitter_seed) {}

Millis ChatClient::backoff_ceiling(const RetryPolicy& policy, int attempt) {
  const int shift = std::min(attempt - 1, 30);
  const auto raw = static_cast<std::int64_t>(policy.backoff_base_ms) << shift;
  return Millis(std::min<std::int64_t>(raw, policy.backoff_cap_ms));
}

Millis ChatClient::jittered_backoff(int attempt) {
  const auto ceiling = backoff_ceiling(cfg_.retry_policy, attempt).count();
  double u;
  {
    std::lock_guard lock(rng_mutex_);
    u = rng_.uniform();
  }
  // Equal jitter: half fixed, half uniform.
  return Millis(ceiling / 2 + static_cast<std::int64_t>(u * static_cast<double>(ceiling - ceiling / 2)));
}

ChatResponse ChatClient::complete(const ChatRequest& request) {
  request.validate();
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<>& sem;
    ~Release() { sem.release(); }
  } release{in_flight_};

  std::string last_cause;
  const int max_attempts = cfg_.retry_policy.max_attempts;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    limiter_.acquire();
    const auto started = clock_->now();
    try {
      auto content = provider_->send(request);
      return ChatResponse{std::move(content), (clock_->now() - started).count(), attempt};
    } catch (const TransientError& e) {
      last_cause = e.what();
    }
    if (attempt < max_attempts) clock_->sleep_until(clock_->now() + jittered_backoff(attempt));
  }
  throw ExhaustedRetries(max_attempts, last_cause);
}

}  // namespace nlf::gateway
