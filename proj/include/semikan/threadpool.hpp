#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace semikan {

// Minimal persistent worker pool for intra-op parallelism.
//
// parallel_for splits [0, n) into one contiguous chunk per worker. Every
// index is processed by exactly one thread and ops never accumulate into the
// same element from two chunks, so results are bit-identical for any thread
// count.
class ThreadPool {
  public:
    static ThreadPool& instance();

    void set_threads(int n);
    int threads() const { return int(workers_.size()) + 1; }

    // fn(begin, end) is invoked once per chunk; the calling thread runs the
    // first chunk itself.
    void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

    ~ThreadPool();

  private:
    ThreadPool() = default;
    void stop();

    struct Task {
        const std::function<void(int64_t, int64_t)>* fn = nullptr;
        int64_t begin = 0, end = 0;
    };

    std::vector<std::thread> workers_;
    std::vector<Task> tasks_;
    std::mutex mu_;
    std::condition_variable cv_work_, cv_done_;
    uint64_t generation_ = 0;
    int pending_ = 0;
    bool quit_ = false;
};

} // namespace semikan
