#pragma once

#if defined(__GLIBC__) || __has_include(<malloc.h>)
#include <malloc.h>
#endif

namespace dimdm {

/// Keeps freed blocks in the heap instead of returning them to the OS.
/// Training allocates and frees the same few hundred megabytes of activations
/// every step; with glibc defaults each of those is a fresh mmap whose pages
/// fault in again. Call once at program start. No-op elsewhere.
inline void retain_heap_memory() {
#if defined(__GLIBC__) && defined(M_MMAP_MAX)
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
#endif
}

} // namespace dimdm
