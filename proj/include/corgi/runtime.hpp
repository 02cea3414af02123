#pragma once

#include <cstdlib>
#include <string>

#include <Eigen/Core>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "corgi/error.hpp"

namespace corgi {

/// Training allocates and frees many large temporaries per epoch; keeping
/// freed memory in the heap instead of returning it to the OS avoids
/// repeated page faults.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, -1);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

/// Reads CORGI_THREADS (default 1) and caps Eigen's threads to it.
inline int apply_thread_limit() {
  int n = 1;
  if (const char* env = std::getenv("CORGI_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 1024) {
      throw Error(ErrorCode::InvalidConfig, "CORGI_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
    n = static_cast<int>(v);
  }
  Eigen::setNbThreads(n);
  return n;
}

}  // namespace corgi
