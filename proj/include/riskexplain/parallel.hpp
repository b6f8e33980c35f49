#pragma once

#include <cstddef>
#include <cstdint>

namespace riskexplain {

// Kernels take an Execution so the serial reference path stays callable
// next to the OpenMP one. Both write into index-addressed slots and reduce
// in index order, so results never depend on the thread count.
enum class Execution { kSerial, kParallel };

void set_thread_count(int threads);
int thread_count();

template <typename Fn>
void for_each_index(Execution exec, std::size_t n, Fn&& fn) {
  if (exec == Execution::kSerial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
}

// splitmix64 finalizer; derives independent per-task seeds from one seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace riskexplain
