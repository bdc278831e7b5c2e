#pragma once

#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tinysv/errors.hpp"
#include "tinysv/matrix.hpp"

namespace tinysv {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t numel() const {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<>());
    }
};

inline std::string shape_string(std::span<const std::size_t> shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Named tensor store. Immutable once handed to a network builder; the map
// keeps names sorted so serialization order is deterministic.
class WeightSet {
public:
    void put(std::string name, Tensor t) {
        require(t.numel() == t.data.size(), ErrorCode::shape_error,
                name + ": data length does not match shape");
        tensors_.insert_or_assign(std::move(name), std::move(t));
    }

    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

    const Tensor& get(const std::string& name) const {
        const auto it = tensors_.find(name);
        require(it != tensors_.end(), ErrorCode::missing_tensor,
                "missing tensor: " + name);
        return it->second;
    }

    const Tensor& get(const std::string& name,
                      std::span<const std::size_t> expect_shape) const {
        const Tensor& t = get(name);
        require(std::equal(t.shape.begin(), t.shape.end(), expect_shape.begin(),
                           expect_shape.end()),
                ErrorCode::shape_error,
                name + ": expected shape " + shape_string(expect_shape) + ", found " +
                    shape_string(t.shape));
        return t;
    }

    std::size_t size() const { return tensors_.size(); }

    std::size_t total_scalars() const {
        std::size_t n = 0;
        for (const auto& [name, t] : tensors_) n += t.numel();
        return n;
    }

    const std::map<std::string, Tensor>& tensors() const { return tensors_; }
    std::map<std::string, Tensor>& tensors() { return tensors_; }

private:
    std::map<std::string, Tensor> tensors_;
};

inline Matrix tensor_as_matrix(const Tensor& t) {
    require(t.shape.size() == 2, ErrorCode::shape_error,
            "expected a rank-2 tensor, found " + shape_string(t.shape));
    Matrix m(t.shape[0], t.shape[1]);
    std::copy(t.data.begin(), t.data.end(), m.data());
    return m;
}

inline Tensor matrix_as_tensor(const Matrix& m) {
    Tensor t;
    t.shape = {m.rows(), m.cols()};
    t.data.assign(m.data(), m.data() + m.rows() * m.cols());
    return t;
}

inline Tensor vector_as_tensor(std::vector<float> v) {
    Tensor t;
    t.shape = {v.size()};
    t.data = std::move(v);
    return t;
}

} // namespace tinysv
