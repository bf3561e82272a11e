#include "qsnn/threads.hpp"

#include <cstdlib>

extern "C" void openblas_set_num_threads(int);

namespace qsnn {

void configure_threads() {
  const char* env = std::getenv("QSNN_THREADS");
  if (!env) return;
  int n = std::atoi(env);
  if (n >= 1) openblas_set_num_threads(n);
}

}  // namespace qsnn
