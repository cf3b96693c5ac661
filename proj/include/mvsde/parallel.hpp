#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mvsde {

/// Fixed-size worker pool with a fork/join `parallel_for`. Work is split into
/// contiguous index ranges; callers must make each index's work independent of
/// the partition so results do not depend on the worker count.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers = 1);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t workers() const { return workers_; }

  /// Calls body(begin, end) over a partition of [0, n); blocks until all ranges finish.
  /// Exceptions thrown by body are rethrown on the calling thread (first one wins).
  void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

 private:
  void worker_loop(std::size_t index);

  std::size_t workers_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t, std::size_t)>* body_ = nullptr;
  std::size_t n_ = 0;
  std::size_t generation_ = 0;
  std::size_t pending_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

}  // namespace mvsde
