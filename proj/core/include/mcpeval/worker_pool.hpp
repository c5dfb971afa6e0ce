#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace mcpeval {

/// Runs `work(i)` for i in [0, n) on up to `workers` threads and hands each
/// result to `commit(i, result)` strictly in index order, so output files can
/// be appended incrementally yet deterministically. The first exception
/// thrown by `work` or `commit` stops scheduling and is rethrown.
template <typename Result>
void ordered_parallel_for(std::size_t n, std::size_t workers, const std::function<Result(std::size_t)>& work,
                          const std::function<void(std::size_t, Result&)>& commit) {
  if (n == 0) return;
  workers = std::clamp<std::size_t>(workers, 1, n);

  std::mutex mu;
  std::map<std::size_t, Result> pending;
  std::size_t next_commit = 0;
  std::atomic<std::size_t> next_index{0};
  std::exception_ptr failure;
  std::atomic<bool> stop{false};

  auto drain = [&] {
    // Caller holds `mu`.
    for (auto it = pending.find(next_commit); it != pending.end(); it = pending.find(next_commit)) {
      commit(next_commit, it->second);
      pending.erase(it);
      ++next_commit;
    }
  };

  auto body = [&] {
    while (!stop) {
      std::size_t i = next_index++;
      if (i >= n) return;
      try {
        Result r = work(i);
        std::lock_guard lock(mu);
        pending.emplace(i, std::move(r));
        drain();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        stop = true;
        return;
      }
    }
  };

  if (workers == 1) {
    body();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(body);
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace mcpeval
