#pragma once

#include <chrono>
#include <mutex>
#include <thread>

namespace agebench {

// Exponential backoff: attempt k (1-based) waits initial * multiplier^(k-1)
// before the next try.
struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    double multiplier = 2.0;

    std::chrono::milliseconds backoff_after(int attempt) const {
        double ms = static_cast<double>(initial_backoff.count());
        for (int i = 1; i < attempt; ++i) ms *= multiplier;
        return std::chrono::milliseconds(static_cast<long long>(ms));
    }
};

// Enforces a minimum interval between acquisitions. Thread-safe; zero or
// negative rate disables limiting.
class RateLimiter {
  public:
    explicit RateLimiter(double requests_per_second = 0.0) {
        if (requests_per_second > 0.0)
            min_interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                std::chrono::duration<double>(1.0 / requests_per_second));
    }

    void acquire() {
        if (min_interval_.count() == 0) return;
        std::chrono::steady_clock::time_point wake;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            const auto now = std::chrono::steady_clock::now();
            const auto earliest = last_ + min_interval_;
            wake = earliest > now ? earliest : now;
            last_ = wake;
        }
        std::this_thread::sleep_until(wake);
    }

  private:
    std::mutex mutex_;
    std::chrono::steady_clock::time_point last_{};
    std::chrono::steady_clock::duration min_interval_{};
};

}  // namespace agebench
