#include "mvsde/parallel.hpp"

#include <algorithm>
#include <exception>

namespace mvsde {

namespace {

std::pair<std::size_t, std::size_t> chunk(std::size_t n, std::size_t parts, std::size_t index) {
  const std::size_t base = n / parts;
  const std::size_t extra = n % parts;
  const std::size_t begin = index * base + std::min(index, extra);
  return {begin, begin + base + (index < extra ? 1 : 0)};
}

}  // namespace

WorkerPool::WorkerPool(std::size_t workers) : workers_(std::max<std::size_t>(1, workers)) {
  // Worker 0 is the calling thread.
  for (std::size_t i = 1; i < workers_; ++i) threads_.emplace_back([this, i] { worker_loop(i); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::parallel_for(std::size_t n,
                              const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  if (workers_ == 1) {
    body(0, n);
    return;
  }
  {
    std::lock_guard lock(mutex_);
    body_ = &body;
    n_ = n;
    pending_ = workers_ - 1;
    error_ = nullptr;
    ++generation_;
  }
  start_cv_.notify_all();

  std::exception_ptr local;
  try {
    const auto [b, e] = chunk(n, workers_, 0);
    if (b < e) body(b, e);
  } catch (...) {
    local = std::current_exception();
  }

  std::unique_lock lock(mutex_);
  done_cv_.wait(lock, [this] { return pending_ == 0; });
  body_ = nullptr;
  if (local) std::rethrow_exception(local);
  if (error_) std::rethrow_exception(error_);
}

void WorkerPool::worker_loop(std::size_t index) {
  std::size_t seen = 0;
  for (;;) {
    const std::function<void(std::size_t, std::size_t)>* body = nullptr;
    std::size_t n = 0;
    {
      std::unique_lock lock(mutex_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      body = body_;
      n = n_;
    }
    try {
      const auto [b, e] = chunk(n, workers_, index);
      if (b < e) (*body)(b, e);
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!error_) error_ = std::current_exception();
    }
    {
      std::lock_guard lock(mutex_);
      --pending_;
    }
    done_cv_.notify_one();
  }
}

}  // namespace mvsde
