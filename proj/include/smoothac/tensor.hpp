#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace smoothac {

// Error categories shared by every module.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

// Allocates on 64-byte boundaries.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlignment{64};

    AlignedAllocator() noexcept = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array of doubles with rank 0, 1 or 2.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, const std::vector<double>& data);

    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_, 0.0); }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty() && shape_.empty(); }

    // Rank-2 view helpers. A rank-1 tensor reads as a single row.
    [[nodiscard]] std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }
    [[nodiscard]] std::size_t cols() const noexcept {
        if (shape_.size() == 2) return shape_[1];
        return shape_.size() == 1 ? shape_[0] : 1;
    }

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

    // Value of a single-element tensor.
    [[nodiscard]] double item() const;

    void fill(double value);
    [[nodiscard]] bool all_finite() const noexcept;
    [[nodiscard]] bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double, AlignedAllocator<double>> data_;
};

}  // namespace smoothac
