#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace perfrl {

/// Dense row-major table of doubles. Rows index states, columns index actions.
class Table {
public:
    Table() = default;
    Table(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }

    bool same_shape(const Table& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const Table&, const Table&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(const Table& a, const Table& b);
double frobenius_norm(const Table& a);
/// Frobenius norm of a - b.
double distance(const Table& a, const Table& b);

/// a + scale * b
Table axpy(const Table& a, double scale, const Table& b);

} // namespace perfrl
