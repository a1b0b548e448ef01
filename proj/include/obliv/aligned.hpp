#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace obliv {

inline constexpr std::size_t kCacheLine = 64;

// Allocator handing out 64-byte aligned storage so 512-bit loads never split a line.
template <typename T>
struct AlignedAllocator {
    using value_type = T;

    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kCacheLine}));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{kCacheLine}); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

constexpr std::size_t RoundUp(std::size_t value, std::size_t multiple) {
    return multiple == 0 ? value : (value + multiple - 1) / multiple * multiple;
}

}  // namespace obliv
