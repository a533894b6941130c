#pragma once

#include <cstddef>
#include <functional>

namespace drconv {

// Process-wide worker count used by batch-parallel kernels. Defaults to 1.
// Kernels only split work across batch items and reduce per-item partials in
// index order, so results do not depend on this setting.
void set_num_threads(std::size_t n);
std::size_t num_threads() noexcept;

// Calls fn(i) for i in [0, count), possibly concurrently.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace drconv
