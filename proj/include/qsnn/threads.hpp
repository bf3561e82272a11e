#pragma once

namespace qsnn {

// Applies the QSNN_THREADS env var (if set) to the BLAS backend.
// Called once from every entry point; safe to call repeatedly.
void configure_threads();

}  // namespace qsnn
