#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

#include "pintda/errors.hpp"

namespace pintda {

/// Fixed set of persistent worker threads running index-parallel loops.
///
/// `workers` counts the calling thread, which takes part in every loop, so a
/// pool of 1 spawns no threads and runs loops inline in index order. The
/// requested count is honored even above hardware concurrency.
class WorkerPool {
public:
  explicit WorkerPool(std::size_t workers = 1) : workers_(workers) {
    if (workers_ < 1) {
      throw InvalidArgument("WorkerPool: at least one worker required");
    }
    threads_.reserve(workers_ - 1);
    for (std::size_t i = 1; i < workers_; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    start_cv_.notify_all();
    for (auto& t : threads_) {
      t.join();
    }
  }

  [[nodiscard]] std::size_t workers() const noexcept { return workers_; }

  /// Runs fn(i) for i in [0, count). Blocks until all finish; rethrows the
  /// first exception raised by any task.
  void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    std::lock_guard call_lock(call_mutex_);
    if (threads_.empty() || count == 1) {
      for (std::size_t i = 0; i < count; ++i) fn(i);
      return;
    }
    {
      std::lock_guard lock(mutex_);
      job_ = &fn;
      count_ = count;
      next_.store(0, std::memory_order_relaxed);
      busy_ = threads_.size();
      error_ = nullptr;
      ++generation_;
    }
    start_cv_.notify_all();
    run_tasks();
    std::unique_lock lock(mutex_);
    done_cv_.wait(lock, [this] { return busy_ == 0; });
    job_ = nullptr;
    if (error_) {
      std::rethrow_exception(std::exchange(error_, nullptr));
    }
  }

private:
  void run_tasks() {
    for (std::size_t i = next_.fetch_add(1); i < count_; i = next_.fetch_add(1)) {
      try {
        (*job_)(i);
      } catch (...) {
        std::lock_guard lock(mutex_);
        if (!error_) error_ = std::current_exception();
      }
    }
  }

  void worker_loop() {
    std::size_t seen = 0;
    while (true) {
      {
        std::unique_lock lock(mutex_);
        start_cv_.wait(lock, [&] { return stopping_ || generation_ != seen; });
        if (stopping_) return;
        seen = generation_;
      }
      run_tasks();
      std::lock_guard lock(mutex_);
      if (--busy_ == 0) done_cv_.notify_one();
    }
  }

  std::size_t workers_;
  std::vector<std::thread> threads_;
  std::mutex call_mutex_;
  std::mutex mutex_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t count_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t busy_ = 0;
  std::size_t generation_ = 0;
  bool stopping_ = false;
  std::exception_ptr error_;
};

} // namespace pintda
