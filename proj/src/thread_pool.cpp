#include "smcgen/thread_pool.hpp"

#include <exception>

namespace smcgen {

ThreadPool::ThreadPool(std::size_t workers) : workers_(workers == 0 ? 1 : workers) {
  if (workers_ == 1) return;
  threads_.reserve(workers_);
  for (std::size_t i = 0; i < workers_; ++i) threads_.emplace_back([this] { worker_loop(); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void ThreadPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (threads_.empty()) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::unique_lock<std::mutex> lock(mu_);
  job_ = &fn;
  job_size_ = n;
  next_ = 0;
  finished_ = 0;
  error_ = nullptr;
  ++generation_;
  cv_.notify_all();
  done_cv_.wait(lock, [&] { return finished_ == job_size_; });
  job_ = nullptr;
  if (error_) std::rethrow_exception(error_);
}

void ThreadPool::worker_loop() {
  std::size_t seen = 0;
  std::unique_lock<std::mutex> lock(mu_);
  for (;;) {
    cv_.wait(lock, [&] { return stop_ || (job_ && generation_ != seen && next_ < job_size_); });
    if (stop_) return;
    const auto* fn = job_;
    while (job_ == fn && next_ < job_size_) {
      const std::size_t i = next_++;
      lock.unlock();
      std::exception_ptr err;
      try {
        (*fn)(i);
      } catch (...) {
        err = std::current_exception();
      }
      lock.lock();
      if (err && !error_) error_ = err;
      if (++finished_ == job_size_) done_cv_.notify_all();
    }
    seen = generation_;
  }
}

}  // namespace smcgen
