// Global allocation alignment.
//
// Numeric buffers here are plain std::vector<double>. Vectorized kernels
// (Eigen's and the compiler's) peel loops based on the runtime alignment of
// the data pointer, so two allocations of the same array at different
// addresses can sum in different orders and differ in the last bits. Seeded
// runs must be reproducible, including back-to-back trainings inside one
// process, so every allocation is pinned to one alignment class: 64 bytes.

#include <algorithm>
#include <cstdlib>
#include <new>

namespace {

constexpr std::size_t kAlign = 64;

void* aligned_new(std::size_t size) {
    if (size == 0) size = 1;
    void* p = nullptr;
    if (posix_memalign(&p, kAlign, size) != 0) throw std::bad_alloc();
    return p;
}

}  // namespace

void* operator new(std::size_t size) { return aligned_new(size); }
void* operator new[](std::size_t size) { return aligned_new(size); }

void* operator new(std::size_t size, const std::nothrow_t&) noexcept {
    if (size == 0) size = 1;
    void* p = nullptr;
    return posix_memalign(&p, kAlign, size) == 0 ? p : nullptr;
}
void* operator new[](std::size_t size, const std::nothrow_t& tag) noexcept {
    return operator new(size, tag);
}

void* operator new(std::size_t size, std::align_val_t align) {
    const std::size_t a = std::max(static_cast<std::size_t>(align), kAlign);
    if (size == 0) size = 1;
    void* p = nullptr;
    if (posix_memalign(&p, a, size) != 0) throw std::bad_alloc();
    return p;
}
void* operator new[](std::size_t size, std::align_val_t align) {
    return operator new(size, align);
}

void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t) noexcept { std::free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { std::free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { std::free(p); }
void operator delete(void* p, std::align_val_t) noexcept { std::free(p); }
void operator delete[](void* p, std::align_val_t) noexcept { std::free(p); }
void operator delete(void* p, std::size_t, std::align_val_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t, std::align_val_t) noexcept { std::free(p); }
