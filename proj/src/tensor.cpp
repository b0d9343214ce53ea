#include "h2t/tensor.hpp"

#include <cmath>
#include <sstream>

#include "h2t/errors.hpp"

namespace h2t {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> shp, std::vector<float> values)
    : shape(std::move(shp)), data(std::move(values)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw ShapeError("tensor with shape " + shape_to_string(shape) + " requires " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
    }
}

Tensor Tensor::zeros(const std::vector<int64_t>& shape) {
    return Tensor(shape, std::vector<float>(static_cast<size_t>(shape_numel(shape)), 0.0f));
}

Tensor Tensor::full(const std::vector<int64_t>& shape, float value) {
    return Tensor(shape, std::vector<float>(static_cast<size_t>(shape_numel(shape)), value));
}

int64_t Tensor::numel() const {
    return shape_numel(shape);
}

bool Tensor::bit_equal(const Tensor& other) const {
    if (shape != other.shape) return false;
    for (size_t i = 0; i < data.size(); ++i) {
        if (data[i] != other.data[i]) return false;
        // distinguish +0/-0 and propagate NaN mismatch as inequality
        if (std::signbit(data[i]) != std::signbit(other.data[i])) return false;
    }
    return true;
}

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    return shape_to_string(shape);
}

Tensor gather_rows(const Tensor& src, const std::vector<int64_t>& rows) {
    if (src.rank() != 2) throw ShapeError("gather_rows: expected rank-2, got " + src.shape_str());
    const int64_t width = src.shape[1];
    Tensor out = Tensor::zeros({static_cast<int64_t>(rows.size()), width});
    for (size_t r = 0; r < rows.size(); ++r) {
        const int64_t row = rows[r];
        if (row < 0 || row >= src.shape[0]) {
            throw ValidationError("gather_rows: row " + std::to_string(row) + " out of range");
        }
        for (int64_t c = 0; c < width; ++c) {
            out.at(static_cast<int64_t>(r), c) = src.at(row, c);
        }
    }
    return out;
}

void require_shape(const Tensor& t, const std::vector<int64_t>& expected, const std::string& what) {
    if (t.shape != expected) {
        throw ShapeError(what + ": expected shape " + shape_to_string(expected) + ", got " +
                         t.shape_str());
    }
}

} // namespace h2t
