#pragma once

#include <cstdint>
#include <functional>

namespace medusa {

// Worker parallelism. 0 means "use the machine default". The MEDUSA_THREADS
// environment variable, when set, wins over any programmatic setting.
void set_thread_count(int threads);
int thread_count();

// Runs body(i) for i in [0, n). Work is split into contiguous blocks; bodies
// must only write to their own slot so results are identical for any thread
// count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body);

}  // namespace medusa
