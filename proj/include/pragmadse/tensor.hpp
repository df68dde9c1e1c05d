#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "pragmadse/util.hpp"

namespace pragmadse {

/// Dense row-major tensor of doubles. Everything in the model path is rank 1
/// or 2; shape is kept general for serialization.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::initializer_list<std::size_t> s) : shape(s) {
        data.assign(numel_of(shape), 0.0);
    }
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0);
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1},
                               std::multiplies<>());
    }

    std::size_t numel() const { return data.size(); }
    bool is_scalar() const { return numel() == 1; }

    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    static Tensor zeros(std::size_t r, std::size_t c) { return Tensor{{r, c}}; }

    static Tensor scalar(double v) {
        Tensor t{{1, 1}};
        t.data[0] = v;
        return t;
    }

    static Tensor from_rows(const std::vector<std::vector<double>>& rows) {
        Tensor t{{rows.size(), rows.empty() ? 0 : rows[0].size()}};
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < t.cols(); ++c) t.at(r, c) = rows[r][c];
        return t;
    }

    static Tensor column(const std::vector<double>& v) {
        Tensor t{{v.size(), 1}};
        t.data = v;
        return t;
    }
};

using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EigenMap = Eigen::Map<EigenRowMat>;
using EigenConstMap = Eigen::Map<const EigenRowMat>;

inline EigenConstMap as_eigen(const Tensor& t) {
    return EigenConstMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                         static_cast<Eigen::Index>(t.cols()));
}

inline EigenMap as_eigen(Tensor& t) {
    return EigenMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                    static_cast<Eigen::Index>(t.cols()));
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DataError(std::string(op) + ": shape mismatch");
}

/// Xavier-style init used for all weight matrices: scale 1/sqrt(fan_in).
inline Tensor random_init(std::size_t r, std::size_t c, Rng& rng) {
    Tensor t{{r, c}};
    const double scale = 1.0 / std::sqrt(static_cast<double>(r > 0 ? r : 1));
    for (double& v : t.data) v = rng.normal() * scale;
    return t;
}

}  // namespace pragmadse
