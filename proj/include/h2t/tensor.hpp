#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace h2t {

/// Dense row-major float32 tensor; the universal numeric carrier.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int64_t> shp, std::vector<float> values);

    static Tensor zeros(const std::vector<int64_t>& shape);
    static Tensor full(const std::vector<int64_t>& shape, float value);

    int64_t numel() const;
    int64_t extent(size_t dim) const { return shape.at(dim); }
    size_t rank() const { return shape.size(); }

    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }

    float& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    float at(int64_t i) const { return data[static_cast<size_t>(i)]; }
    float& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    float at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    float& at4(int64_t b, int64_t c, int64_t h, int64_t w) {
        return data[static_cast<size_t>(((b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    float at4(int64_t b, int64_t c, int64_t h, int64_t w) const {
        return data[static_cast<size_t>(((b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool bit_equal(const Tensor& other) const;
    bool all_finite() const;

    std::string shape_str() const;
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_to_string(const std::vector<int64_t>& shape);

/// New tensor holding the given rows of a rank-2 tensor, in order.
Tensor gather_rows(const Tensor& src, const std::vector<int64_t>& rows);

// Throws ShapeError naming expected vs actual when shapes differ.
void require_shape(const Tensor& t, const std::vector<int64_t>& expected, const std::string& what);

} // namespace h2t
