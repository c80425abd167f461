#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "nemc/errors.hpp"

namespace nemc {

// Dense row-major float32 tensor of rank 1..4.  The canonical activation
// layout is N x C x H x W.  Every public operation in the library keeps
// tensor contents finite; check_finite() is the enforcement hook.
class TensorF32 {
public:
    TensorF32() = default;

    explicit TensorF32(std::vector<std::int64_t> shape, float fill = 0.0f)
        : shape_(std::move(shape)) {
        validate_shape(shape_);
        data_.assign(static_cast<std::size_t>(element_count(shape_)), fill);
    }

    TensorF32(std::vector<std::int64_t> shape, std::vector<float> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape(shape_);
        if (static_cast<std::int64_t>(data_.size()) != element_count(shape_)) {
            throw ConfigError("tensor data size does not match shape");
        }
    }

    const std::vector<std::int64_t>& shape() const noexcept { return shape_; }
    std::int64_t rank() const noexcept { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::int64_t size() const noexcept { return static_cast<std::int64_t>(data_.size()); }

    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }
    std::vector<float>& storage() noexcept { return data_; }
    const std::vector<float>& storage() const noexcept { return data_; }

    float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // Row-major accessors for the common ranks.
    float& at2(std::int64_t a, std::int64_t b) {
        return data_[static_cast<std::size_t>(a * shape_[1] + b)];
    }
    float at2(std::int64_t a, std::int64_t b) const {
        return data_[static_cast<std::size_t>(a * shape_[1] + b)];
    }
    float& at3(std::int64_t a, std::int64_t b, std::int64_t c) {
        return data_[static_cast<std::size_t>((a * shape_[1] + b) * shape_[2] + c)];
    }
    float at3(std::int64_t a, std::int64_t b, std::int64_t c) const {
        return data_[static_cast<std::size_t>((a * shape_[1] + b) * shape_[2] + c)];
    }
    float& at4(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
        return data_[static_cast<std::size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }
    float at4(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) const {
        return data_[static_cast<std::size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }

    bool same_shape(const TensorF32& other) const noexcept { return shape_ == other.shape_; }

    TensorF32 reshaped(std::vector<std::int64_t> new_shape) const {
        validate_shape(new_shape);
        if (element_count(new_shape) != size()) {
            throw ConfigError("reshape changes element count");
        }
        TensorF32 out;
        out.shape_ = std::move(new_shape);
        out.data_ = data_;
        return out;
    }

    void check_finite(const std::string& context) const {
        for (float v : data_) {
            if (!std::isfinite(v)) {
                throw IntegrityError("non_finite_values", context + ": tensor contains non-finite values");
            }
        }
    }

    static std::int64_t element_count(const std::vector<std::int64_t>& shape) {
        std::int64_t n = 1;
        for (std::int64_t d : shape) n *= d;
        return n;
    }

private:
    static void validate_shape(const std::vector<std::int64_t>& shape) {
        if (shape.empty() || shape.size() > 4) {
            throw ConfigError("tensor rank must be 1..4");
        }
        for (std::int64_t d : shape) {
            if (d <= 0) throw ConfigError("tensor dimensions must be positive");
        }
    }

    std::vector<std::int64_t> shape_;
    std::vector<float> data_;
};

// Dense row-major uint8 tensor (binary masks, label maps).  Same shape rules
// as TensorF32.
struct TensorU8 {
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> data;

    TensorU8() = default;
    TensorU8(std::vector<std::int64_t> s, std::uint8_t fill = 0)
        : shape(std::move(s)),
          data(static_cast<std::size_t>(TensorF32::element_count(shape)), fill) {}

    std::int64_t size() const noexcept { return static_cast<std::int64_t>(data.size()); }
    std::uint8_t& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    std::uint8_t operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
    bool operator==(const TensorU8& o) const { return shape == o.shape && data == o.data; }
};

inline std::string shape_to_string(const std::vector<std::int64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace nemc
