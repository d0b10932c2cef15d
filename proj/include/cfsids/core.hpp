#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cfsids
{

// Exit codes used by the command line tool map one-to-one onto these.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 2; }
};

class UsageError : public Error
{
public:
    using Error::Error;
    int exit_code() const noexcept override { return 1; }
};

class DataError : public Error
{
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class NumericError : public Error
{
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// Dense row-major matrix of doubles.
class Matrix
{
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill)
    {
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double> column(std::size_t c) const
    {
        std::vector<double> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            out[r] = (*this)(r, c);
        return out;
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    Matrix select_rows(std::span<const std::size_t> idx) const
    {
        Matrix out(idx.size(), cols_);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto src = row(idx[i]);
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
    }

    Matrix select_cols(std::span<const std::size_t> idx) const
    {
        Matrix out(rows_, idx.size());
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t j = 0; j < idx.size(); ++j)
                out(r, j) = (*this)(r, idx[j]);
        return out;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

template <typename T>
std::vector<T> gather(std::span<const T> values, std::span<const std::size_t> idx)
{
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx)
        out.push_back(values[i]);
    return out;
}

} // namespace cfsids
