#include "cds/kernels.hpp"

#include <cstdlib>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cds::kernels {

namespace {

Backend initial_backend() {
  const char* env = std::getenv("CDS_KERNELS");
  if (env != nullptr) {
    if (std::strcmp(env, "serial") == 0) return Backend::Serial;
    if (std::strcmp(env, "parallel") == 0) return Backend::Parallel;
  }
#ifdef _OPENMP
  return Backend::Parallel;
#else
  return Backend::Serial;
#endif
}

Backend& backend_ref() {
  static Backend b = initial_backend();
  return b;
}

}  // namespace

Backend backend() { return backend_ref(); }

void set_backend(Backend b) { backend_ref() = b; }

const char* backend_name() {
  return backend() == Backend::Parallel ? "parallel" : "serial";
}

int thread_count() {
#ifdef _OPENMP
  return backend() == Backend::Parallel ? omp_get_max_threads() : 1;
#else
  return 1;
#endif
}

}  // namespace cds::kernels
