#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "tinysv/errors.hpp"

namespace tinysv {

// Row-major frames-by-channels float matrix. Row t is one time frame.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<float>> rows) {
        Matrix m;
        for (const auto& r : rows) {
            if (m.cols_ == 0) m.cols_ = r.size();
            require(r.size() == m.cols_, ErrorCode::shape_error, "ragged row list");
            m.data_.insert(m.data_.end(), r.begin(), r.end());
            ++m.rows_;
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    float& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    float at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }

    void append_row(std::span<const float> frame) {
        require(frame.size() == cols_, ErrorCode::shape_error,
                "append_row: frame width mismatch");
        data_.insert(data_.end(), frame.begin(), frame.end());
        ++rows_;
    }

    void append_rows(const Matrix& other) {
        if (other.rows_ == 0) return;
        require(other.cols_ == cols_, ErrorCode::shape_error,
                "append_rows: width mismatch");
        data_.insert(data_.end(), other.data_.begin(), other.data_.end());
        rows_ += other.rows_;
    }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

inline float max_abs_diff(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::shape_error,
            "max_abs_diff: shape mismatch");
    float worst = 0.0f;
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c)
            worst = std::max(worst, std::abs(a.at(r, c) - b.at(r, c)));
    return worst;
}

inline float max_abs_diff(std::span<const float> a, std::span<const float> b) {
    require(a.size() == b.size(), ErrorCode::shape_error, "max_abs_diff: size mismatch");
    float worst = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

} // namespace tinysv
