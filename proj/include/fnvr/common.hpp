#pragma once

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fnvr {

// Global worker-thread count. Set once at startup (CLI --threads / FNVR_THREADS);
// defaults to hardware concurrency.
inline int& thread_count() {
  static int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return n;
}

namespace detail {

// Persistent pool; tasks are half-open index ranges. Workers are lazily
// started on first parallel_for call. The pool holds one job at a time:
// nested or concurrent submissions run inline on the calling thread.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  static bool& in_pool_job() {
    thread_local bool flag = false;
    return flag;
  }

  void run(int64_t n, int workers, const std::function<void(int64_t, int64_t)>& fn) {
    if (in_pool_job() || busy_.exchange(true)) {
      fn(0, n);
      return;
    }
    ensure_workers(workers - 1);
    const int w = std::min<int>(workers, static_cast<int>(threads_.size()) + 1);
    const int64_t chunk = (n + w - 1) / w;

    std::unique_lock lk(mu_);
    job_fn_ = &fn;
    job_n_ = n;
    job_chunk_ = chunk;
    job_next_ = 0;
    pending_ = w - 1;
    ++epoch_;
    cv_.notify_all();
    lk.unlock();

    in_pool_job() = true;
    work(fn, n, chunk);  // caller participates
    in_pool_job() = false;

    lk.lock();
    done_cv_.wait(lk, [&] { return pending_ == 0; });
    job_fn_ = nullptr;
    lk.unlock();
    busy_.store(false);
  }

 private:
  ThreadPool() = default;
  ~ThreadPool() {
    {
      std::lock_guard lk(mu_);
      stop_ = true;
      ++epoch_;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void ensure_workers(int n) {
    std::lock_guard lk(spawn_mu_);
    while (static_cast<int>(threads_.size()) < n)
      threads_.emplace_back([this] { worker_loop(); });
  }

  void work(const std::function<void(int64_t, int64_t)>& fn, int64_t n, int64_t chunk) {
    for (;;) {
      const int64_t i0 = job_next_.fetch_add(chunk);
      if (i0 >= n) break;
      fn(i0, std::min(n, i0 + chunk));
    }
  }

  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      const std::function<void(int64_t, int64_t)>* fn = nullptr;
      int64_t n = 0, chunk = 0;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return epoch_ != seen; });
        seen = epoch_;
        if (stop_) return;
        fn = job_fn_;
        n = job_n_;
        chunk = job_chunk_;
      }
      if (fn) {
        in_pool_job() = true;
        work(*fn, n, chunk);
        in_pool_job() = false;
      }
      {
        std::lock_guard lk(mu_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_, spawn_mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(int64_t, int64_t)>* job_fn_ = nullptr;
  int64_t job_n_ = 0, job_chunk_ = 0;
  std::atomic<int64_t> job_next_{0};
  std::atomic<bool> busy_{false};
  int pending_ = 0;
  uint64_t epoch_ = 0;
  bool stop_ = false;
};

}  // namespace detail

// Runs fn over [0, n) split into at most thread_count() contiguous chunks.
// Chunk boundaries depend only on (n, thread_count()), so the element-to-chunk
// assignment is deterministic for a fixed configuration.
inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn,
                         int64_t min_per_thread = 2048) {
  const int tc = thread_count();
  if (n <= 0) return;
  if (tc <= 1 || n < 2 * min_per_thread) {
    fn(0, n);
    return;
  }
  const int workers = static_cast<int>(std::min<int64_t>(tc, (n + min_per_thread - 1) / min_per_thread));
  detail::ThreadPool::instance().run(n, workers, fn);
}

// SplitMix64-based generator. Used everywhere instead of <random> engines so
// streams are reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0x9e3779b97f4a7c15ull) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  uint64_t uniform_int(uint64_t n) { return n ? next_u64() % n : 0; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable seed mixing for per-pixel / per-ray streams.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) { return mix_seed(mix_seed(a, b), c); }
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return mix_seed(mix_seed(a, b, c), d);
}

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace fnvr
