#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nrsfm {

using Shape = std::vector<std::size_t>;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Dense row-major tensor of 64-bit floats. Rank 0 is a scalar (one element).
class Tensor {
  public:
    Tensor() : shape_{}, data_(1, 0.0) {}

    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_))
            throw std::invalid_argument("tensor: data size " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str(shape_));
    }

    static Tensor scalar(double v) {
        Tensor t;
        t.data_[0] = v;
        return t;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor ones(Shape shape) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), 1.0);
        return t;
    }

    static Tensor from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m) {
        Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
        t.mat() = m;
        return t;
    }

    static Tensor from_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
        Tensor t({static_cast<std::size_t>(v.size())});
        for (Eigen::Index i = 0; i < v.size(); ++i) t.data_[static_cast<std::size_t>(i)] = v[i];
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : (shape_.empty() ? 1 : shape_[0]); }
    std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : 1; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double value() const {
        if (size() != 1) throw std::invalid_argument("tensor: value() on non-scalar " + shape_str(shape_));
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // 2-D Eigen views; 1-D tensors map as a column, scalars as 1x1.
    Eigen::Map<RowMat> mat() {
        return Eigen::Map<RowMat>(data_.data(), static_cast<Eigen::Index>(rows()),
                                  static_cast<Eigen::Index>(cols()));
    }
    Eigen::Map<const RowMat> mat() const {
        return Eigen::Map<const RowMat>(data_.data(), static_cast<Eigen::Index>(rows()),
                                        static_cast<Eigen::Index>(cols()));
    }

    Eigen::Map<Eigen::VectorXd> vec() {
        return Eigen::Map<Eigen::VectorXd>(data_.data(), static_cast<Eigen::Index>(size()));
    }
    Eigen::Map<const Eigen::VectorXd> vec() const {
        return Eigen::Map<const Eigen::VectorXd>(data_.data(), static_cast<Eigen::Index>(size()));
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

  private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace nrsfm
