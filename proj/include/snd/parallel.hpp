// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace snd {

/// Process-wide worker count used by the rasterizer, upscaler and metrics.
/// Defaults to $SND_THREADS when set, else 1.
int num_threads();
void set_num_threads(int n);

/// Calls body(begin, end) over contiguous chunks of [0, n). Chunks are disjoint;
/// callers must only write to per-index outputs so results do not depend on the
/// worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

} // namespace snd
