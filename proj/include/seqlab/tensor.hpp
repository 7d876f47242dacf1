#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqlab {

// Dense row-major matrix of doubles. Column vectors are n x 1, scalars 1 x 1.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }

    static Tensor full(std::size_t rows, std::size_t cols, double v) {
        Tensor t(rows, cols);
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return full(1, 1, v); }

    static Tensor column(std::initializer_list<double> values) {
        Tensor t(values.size(), 1);
        std::size_t i = 0;
        for (double v : values) t.data_[i++] = v;
        return t;
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        Tensor t(r, c);
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != c) throw std::invalid_argument("Tensor::from_rows: ragged rows");
            for (double v : row) t.data_[i++] = v;
        }
        return t;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::vector<std::size_t> shape() const { return {rows_, cols_}; }
    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_value() const {
        double m = data_.empty() ? 0.0 : data_[0];
        for (double v : data_)
            if (v > m) m = v;
        return m;
    }

    std::size_t argmax() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < data_.size(); ++i)
            if (data_[i] > data_[best]) best = i;  // ties keep the lowest index
        return best;
    }

    bool operator==(const Tensor& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

}  // namespace seqlab
