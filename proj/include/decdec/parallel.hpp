#pragma once

#include <cstddef>
#include <functional>

namespace decdec {

// Upper bound on worker threads used by parallel_for. 0 means one per hardware
// thread. Set once at startup (the CLI's --threads flag); results never depend
// on it.
void set_thread_limit(unsigned limit);
unsigned thread_limit();

// Runs body(i) for i in [0, n), splitting the range into contiguous blocks.
// body must only write state owned by index i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace decdec
