#pragma once

#include <atomic>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace aop {

using Shape = std::vector<std::size_t>;

struct AllocStats {
    std::size_t current_bytes = 0;
    std::size_t peak_bytes = 0;
};

namespace alloc {

/// Snapshot of the process-wide tensor payload counters.
AllocStats stats();

/// Restart the high-water mark at the current live byte count and return that
/// count, so a caller can report `stats().peak_bytes - baseline` for a scope.
std::size_t reset_peak();

void on_allocate(std::size_t bytes);
void on_deallocate(std::size_t bytes);

} // namespace alloc

/// Cache-line aligned allocator that reports payload sizes to the alloc
/// counters. Fixed alignment keeps vectorized reductions bit-reproducible.
template <typename T>
struct TrackingAllocator {
    using value_type = T;

    TrackingAllocator() noexcept = default;
    template <typename U>
    TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        T* p = static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{64}));
        alloc::on_allocate(n * sizeof(T));
        return p;
    }
    void deallocate(T* p, std::size_t n) noexcept {
        alloc::on_deallocate(n * sizeof(T));
        ::operator delete(p, std::align_val_t{64});
    }

    template <typename U>
    bool operator==(const TrackingAllocator<U>&) const noexcept { return true; }
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major f32 n-d array.
class Tensor {
  public:
    using Storage = std::vector<float, TrackingAllocator<float>>;

    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::span<const float> values);
    Tensor(Shape shape, std::initializer_list<float> values);

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    std::size_t bytes() const { return data_.size() * sizeof(float); }
    bool empty() const { return data_.empty(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    float* ptr() { return data_.data(); }
    const float* ptr() const { return data_.data(); }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    template <typename... Idx>
    float& operator()(Idx... idx) { return data_[offset(idx...)]; }
    template <typename... Idx>
    float operator()(Idx... idx) const { return data_[offset(idx...)]; }

    /// Same payload viewed under a new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const;

  private:
    template <typename... Idx>
    std::size_t offset(Idx... idx) const {
        const std::size_t ids[] = {static_cast<std::size_t>(idx)...};
        std::size_t off = 0;
        for (std::size_t a = 0; a < sizeof...(Idx); ++a) off = off * shape_[a] + ids[a];
        return off;
    }

    Shape shape_;
    Storage data_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);

} // namespace aop
