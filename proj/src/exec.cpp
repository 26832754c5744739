#include "stlcal/exec.hpp"

namespace stlcal {

ExecMode& default_exec_mode() {
  static ExecMode mode = ExecMode::Parallel;
  return mode;
}

ExecMode configure_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
  default_exec_mode() = (threads == 1) ? ExecMode::Serial : ExecMode::Parallel;
#else
  (void)threads;
  default_exec_mode() = ExecMode::Serial;
#endif
  return default_exec_mode();
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace stlcal
