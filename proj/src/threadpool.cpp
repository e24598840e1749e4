#include "semikan/threadpool.hpp"

#include <algorithm>

namespace semikan {

ThreadPool& ThreadPool::instance() {
    static ThreadPool pool;
    static bool init = [] {
        unsigned hw = std::thread::hardware_concurrency();
        pool.set_threads(int(std::clamp(hw, 1u, 8u)));
        return true;
    }();
    (void)init;
    return pool;
}

void ThreadPool::set_threads(int n) {
    if (n < 1) n = 1;
    stop();
    quit_ = false;
    int extra = n - 1;
    tasks_.assign(size_t(extra), Task{});
    workers_.reserve(size_t(extra));
    for (int w = 0; w < extra; ++w) {
        workers_.emplace_back([this, w] {
            uint64_t seen = 0;
            for (;;) {
                Task task;
                {
                    std::unique_lock lk(mu_);
                    cv_work_.wait(lk, [&] { return quit_ || generation_ != seen; });
                    if (quit_) return;
                    seen = generation_;
                    task = tasks_[size_t(w)];
                }
                if (task.fn && task.begin < task.end) (*task.fn)(task.begin, task.end);
                {
                    std::lock_guard lk(mu_);
                    if (--pending_ == 0) cv_done_.notify_one();
                }
            }
        });
    }
}

void ThreadPool::stop() {
    {
        std::lock_guard lk(mu_);
        quit_ = true;
        ++generation_;
    }
    cv_work_.notify_all();
    for (auto& t : workers_) t.join();
    workers_.clear();
    tasks_.clear();
}

ThreadPool::~ThreadPool() { stop(); }

void ThreadPool::parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    int nthreads = threads();
    if (nthreads == 1 || n == 1) {
        fn(0, n);
        return;
    }
    int chunks = int(std::min<int64_t>(nthreads, n));
    int64_t per = (n + chunks - 1) / chunks;
    {
        std::lock_guard lk(mu_);
        pending_ = int(workers_.size());
        for (size_t w = 0; w < workers_.size(); ++w) {
            int64_t b = std::min<int64_t>(n, per * int64_t(w + 1));
            int64_t e = std::min<int64_t>(n, b + per);
            tasks_[w] = Task{&fn, b, e};
        }
        ++generation_;
    }
    cv_work_.notify_all();
    fn(0, std::min<int64_t>(per, n));
    {
        std::unique_lock lk(mu_);
        cv_done_.wait(lk, [&] { return pending_ == 0; });
    }
}

} // namespace semikan
