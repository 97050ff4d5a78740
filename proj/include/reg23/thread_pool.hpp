#pragma once

#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace reg23 {

/// Fixed-size pool for data-parallel loops. Work is split into one
/// contiguous chunk per worker, so results never depend on scheduling.
class ThreadPool {
 public:
  explicit ThreadPool(int n_threads) {
    n_threads = std::max(1, n_threads);
    for (int i = 1; i < n_threads; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }

  ~ThreadPool() {
    {
      std::unique_lock lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  int size() const { return (int)workers_.size() + 1; }

  /// Runs fn(begin, end) over [0, n) split into size() contiguous chunks.
  /// The calling thread executes the first chunk.
  void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    const int nw = size();
    const int64_t chunk = (n + nw - 1) / nw;
    if (nw == 1 || chunk >= n) {
      fn(0, n);
      return;
    }
    {
      std::unique_lock lk(mu_);
      pending_ = 0;
      for (int w = 1; w < nw; ++w) {
        const int64_t b = w * chunk, e = std::min<int64_t>(n, (w + 1) * chunk);
        if (b >= e) continue;
        tasks_.emplace_back([&fn, b, e] { fn(b, e); });
        ++pending_;
      }
    }
    cv_.notify_all();
    fn(0, std::min(chunk, n));
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0 && tasks_.empty(); });
  }

 private:
  void worker_loop() {
    for (;;) {
      std::function<void()> task;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [this] { return stop_ || !tasks_.empty(); });
        if (stop_ && tasks_.empty()) return;
        task = std::move(tasks_.back());
        tasks_.pop_back();
      }
      task();
      {
        std::unique_lock lk(mu_);
        if (--pending_ == 0 && tasks_.empty()) done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::vector<std::function<void()>> tasks_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  int pending_ = 0;
  bool stop_ = false;
};

}  // namespace reg23
