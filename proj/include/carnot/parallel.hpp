#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

namespace carnot {

/// Applies f to every element on a small thread pool. Results keep input order;
/// the first failure by index is rethrown after all workers finish.
template <class In, class F>
auto parallel_map(const std::vector<In>& xs, F f, unsigned threads = 0) {
  using Out = std::decay_t<decltype(f(xs.front()))>;
  std::vector<std::optional<Out>> slots(xs.size());
  std::vector<std::exception_ptr> errors(xs.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(xs.size(), 1)));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < xs.size();) {
      try {
        slots[i].emplace(f(xs[i]));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<Out> out;
  out.reserve(xs.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace carnot
