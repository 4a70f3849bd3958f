#include "gcegnn/matrix.hpp"

#include <algorithm>
#include <stdexcept>

namespace gcegnn {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values)
    : Matrix(rows, cols, std::vector<double>(values)) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw std::invalid_argument("Matrix: " + std::to_string(data_.size()) +
                                " values do not fill shape [" + std::to_string(rows) + " x " +
                                std::to_string(cols) + "]");
  }
}

std::string Matrix::shape_string() const {
  return "[" + std::to_string(rows_) + " x " + std::to_string(cols_) + "]";
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix& Matrix::operator+=(const Matrix& other) {
  if (!same_shape(other)) {
    throw std::invalid_argument("Matrix +=: shape " + shape_string() + " vs " +
                                other.shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

bool operator==(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  return std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

}  // namespace gcegnn
