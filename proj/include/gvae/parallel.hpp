#pragma once

#include <cstddef>
#include <functional>

namespace gvae {

// Worker count: GAMMA_VAE_THREADS if set and positive, else all cores.
int thread_count();

// Runs fn(i) for i in [0, n). Callers write results into per-index slots and
// reduce afterwards in index order, so results do not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gvae
