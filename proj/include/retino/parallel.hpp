#pragma once

#include <functional>

namespace retino {

/// Runs fn(0..n-1) with up to `jobs` worker threads. Work must write only to
/// per-index slots; the result is then identical for every job count. The
/// first exception thrown by any worker is rethrown after the join.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace retino
