#pragma once

#include <cstddef>
#include <functional>

namespace spdyn::parallel {

// Worker count used by library routines. 0 resolves to hardware concurrency.
void set_threads(std::size_t n);
std::size_t threads();

// Runs body(i) for i in [0, n). Each index writes only its own output slot, so
// results never depend on the thread count. Nested calls run serially.
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace spdyn::parallel
