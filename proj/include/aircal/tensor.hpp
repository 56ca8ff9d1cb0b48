#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>

#include "aircal/types.hpp"

namespace aircal {

/// Dense row-major matrix. Element access is bounds-checked; bulk code
/// should go through data() and index arithmetic.
template <typename Scalar>
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, Scalar{}) {}

    static Matrix from_data(std::size_t rows, std::size_t cols, std::vector<Scalar> values) {
        require(values.size() == rows * cols, "Matrix::from_data: size mismatch");
        Matrix m;
        m.rows_ = rows;
        m.cols_ = cols;
        m.data_ = std::move(values);
        return m;
    }

    static Matrix constant(std::size_t rows, std::size_t cols, Scalar value) {
        Matrix m(rows, cols);
        std::fill(m.data_.begin(), m.data_.end(), value);
        return m;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = Scalar{1};
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    Scalar& operator()(std::size_t r, std::size_t c) {
        check(r, c);
        return data_[r * cols_ + c];
    }
    const Scalar& operator()(std::size_t r, std::size_t c) const {
        check(r, c);
        return data_[r * cols_ + c];
    }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }
    std::vector<Scalar>& values() { return data_; }
    const std::vector<Scalar>& values() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

  private:
    void check(std::size_t r, std::size_t c) const {
        if (r >= rows_ || c >= cols_) throw std::out_of_range("Matrix: index out of range");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Scalar> data_;
};

using ComplexMatrix = Matrix<Complex>;
using RealMatrix = Matrix<double>;

struct Dims4 {
    std::size_t n = 0; // transmitters
    std::size_t m = 0; // receivers
    std::size_t l = 0; // frequency bins
    std::size_t t = 0; // snapshots

    std::size_t count() const { return n * m * l * t; }
    friend bool operator==(const Dims4&, const Dims4&) = default;
};

/// Dense four-way complex array. Storage is row-major with the snapshot
/// index t varying fastest, so the (n,m) slice over (l,t) is contiguous.
class ComplexTensor4 {
  public:
    ComplexTensor4() = default;
    ComplexTensor4(std::size_t n, std::size_t m, std::size_t l, std::size_t t)
        : dims_{n, m, l, t}, data_(dims_.count(), Complex{}) {
        require(n >= 1 && m >= 1 && l >= 1 && t >= 1, "ComplexTensor4: dims must be positive");
    }

    static ComplexTensor4 from_data(Dims4 dims, CVec values) {
        require(values.size() == dims.count(), "ComplexTensor4::from_data: size mismatch");
        ComplexTensor4 x(dims.n, dims.m, dims.l, dims.t);
        x.data_ = std::move(values);
        return x;
    }

    const Dims4& dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }

    std::size_t flat_index(std::size_t n, std::size_t m, std::size_t l, std::size_t t) const {
        if (n >= dims_.n || m >= dims_.m || l >= dims_.l || t >= dims_.t)
            throw std::out_of_range("ComplexTensor4: index out of range");
        return ((n * dims_.m + m) * dims_.l + l) * dims_.t + t;
    }

    Complex& operator()(std::size_t n, std::size_t m, std::size_t l, std::size_t t) {
        return data_[flat_index(n, m, l, t)];
    }
    const Complex& operator()(std::size_t n, std::size_t m, std::size_t l, std::size_t t) const {
        return data_[flat_index(n, m, l, t)];
    }

    /// Contiguous (l,t) slice for fixed (n,m); length l*t, t fastest.
    std::span<const Complex> slice(std::size_t n, std::size_t m) const {
        if (n >= dims_.n || m >= dims_.m) throw std::out_of_range("ComplexTensor4: slice out of range");
        return {data_.data() + (n * dims_.m + m) * dims_.l * dims_.t, dims_.l * dims_.t};
    }
    std::span<Complex> slice(std::size_t n, std::size_t m) {
        if (n >= dims_.n || m >= dims_.m) throw std::out_of_range("ComplexTensor4: slice out of range");
        return {data_.data() + (n * dims_.m + m) * dims_.l * dims_.t, dims_.l * dims_.t};
    }

    Complex* data() { return data_.data(); }
    const Complex* data() const { return data_.data(); }
    CVec& values() { return data_; }
    const CVec& values() const { return data_; }

    friend bool operator==(const ComplexTensor4& a, const ComplexTensor4& b) {
        return a.dims_ == b.dims_ && a.data_ == b.data_;
    }

  private:
    Dims4 dims_;
    CVec data_;
};

// --- unfoldings -----------------------------------------------------------
//
// The four matricizations follow the cyclic permutation scheme. Column
// orders per mode (all indices zero-based):
//   mode 1: N  x MLT, column (t*L + l)*M + m   (m fastest, then l, then t)
//   mode 2: M  x NLT, column (n*T + t)*L + l   (l fastest, then t, then n)
//   mode 3: L  x NMT, column (m*N + n)*T + t   (t fastest within the (n,m)
//                                               slice, slices n fastest, then m)
//   mode 4: T  x NML, column (l*M + m)*N + n   (n fastest, then m, then l)

inline ComplexMatrix unfold(const ComplexTensor4& x, int mode) {
    const auto [N, M, L, T] = x.dims();
    const Complex* src = x.data();
    auto at = [&](std::size_t n, std::size_t m, std::size_t l, std::size_t t) {
        return src[((n * M + m) * L + l) * T + t];
    };
    switch (mode) {
        case 1: {
            ComplexMatrix out(N, M * L * T);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t l = 0; l < L; ++l)
                        for (std::size_t m = 0; m < M; ++m)
                            out.data()[n * (M * L * T) + (t * L + l) * M + m] = at(n, m, l, t);
            return out;
        }
        case 2: {
            ComplexMatrix out(M, N * L * T);
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t t = 0; t < T; ++t)
                        for (std::size_t l = 0; l < L; ++l)
                            out.data()[m * (N * L * T) + (n * T + t) * L + l] = at(n, m, l, t);
            return out;
        }
        case 3: {
            ComplexMatrix out(L, N * M * T);
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t m = 0; m < M; ++m)
                    for (std::size_t n = 0; n < N; ++n)
                        for (std::size_t t = 0; t < T; ++t)
                            out.data()[l * (N * M * T) + (m * N + n) * T + t] = at(n, m, l, t);
            return out;
        }
        case 4: {
            ComplexMatrix out(T, N * M * L);
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t l = 0; l < L; ++l)
                    for (std::size_t m = 0; m < M; ++m)
                        for (std::size_t n = 0; n < N; ++n)
                            out.data()[t * (N * M * L) + (l * M + m) * N + n] = at(n, m, l, t);
            return out;
        }
        default:
            throw validation_error("unfold: mode must be 1..4");
    }
}

/// Inverse of unfold for the shapes unfold produces.
inline ComplexTensor4 fold(const ComplexMatrix& mat, int mode, Dims4 dims) {
    const auto [N, M, L, T] = dims;
    std::size_t want_rows = 0, want_cols = 0;
    switch (mode) {
        case 1: want_rows = N; want_cols = M * L * T; break;
        case 2: want_rows = M; want_cols = N * L * T; break;
        case 3: want_rows = L; want_cols = N * M * T; break;
        case 4: want_rows = T; want_cols = N * M * L; break;
        default: throw validation_error("fold: mode must be 1..4");
    }
    require(mat.rows() == want_rows && mat.cols() == want_cols,
            "fold: matrix shape inconsistent with dims and mode");
    ComplexTensor4 x(N, M, L, T);
    Complex* dst = x.data();
    auto put = [&](std::size_t n, std::size_t m, std::size_t l, std::size_t t, Complex v) {
        dst[((n * M + m) * L + l) * T + t] = v;
    };
    const Complex* src = mat.data();
    const std::size_t cols = mat.cols();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t t = 0; t < T; ++t) {
                    std::size_t r = 0, c = 0;
                    switch (mode) {
                        case 1: r = n; c = (t * L + l) * M + m; break;
                        case 2: r = m; c = (n * T + t) * L + l; break;
                        case 3: r = l; c = (m * N + n) * T + t; break;
                        case 4: r = t; c = (l * M + m) * N + n; break;
                    }
                    put(n, m, l, t, src[r * cols + c]);
                }
    return x;
}

// --- products and norms ---------------------------------------------------

/// Column-wise Kronecker product; column j of the result is
/// kron(a[:,j], b[:,j]).
inline ComplexMatrix khatri_rao(const ComplexMatrix& a, const ComplexMatrix& b) {
    require(a.cols() == b.cols(), "khatri_rao: column counts differ");
    ComplexMatrix out(a.rows() * b.rows(), a.cols());
    for (std::size_t j = 0; j < a.cols(); ++j)
        for (std::size_t ia = 0; ia < a.rows(); ++ia)
            for (std::size_t ib = 0; ib < b.rows(); ++ib)
                out(ia * b.rows() + ib, j) = a(ia, j) * b(ib, j);
    return out;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
    ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::size_t ra = 0; ra < a.rows(); ++ra)
        for (std::size_t ca = 0; ca < a.cols(); ++ca)
            for (std::size_t rb = 0; rb < b.rows(); ++rb)
                for (std::size_t cb = 0; cb < b.cols(); ++cb)
                    out(ra * b.rows() + rb, ca * b.cols() + cb) = a(ra, ca) * b(rb, cb);
    return out;
}

inline CVec kron(const CVec& a, const CVec& b) {
    CVec out(a.size() * b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i * b.size() + j] = a[i] * b[j];
    return out;
}

inline CVec hadamard(const CVec& a, const CVec& b) {
    require(a.size() == b.size(), "hadamard: length mismatch");
    CVec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

inline ComplexMatrix hadamard(const ComplexMatrix& a, const ComplexMatrix& b) {
    require(a.same_shape(b), "hadamard: shape mismatch");
    ComplexMatrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

inline ComplexTensor4 hadamard(const ComplexTensor4& a, const ComplexTensor4& b) {
    require(a.dims() == b.dims(), "hadamard: shape mismatch");
    ComplexTensor4 out(a.dims().n, a.dims().m, a.dims().l, a.dims().t);
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

/// Four-way outer product; entry (n,m,l,t) = a[n] b[m] c[l] d[t].
inline ComplexTensor4 outer(const CVec& a, const CVec& b, const CVec& c, const CVec& d) {
    ComplexTensor4 out(a.size(), b.size(), c.size(), d.size());
    Complex* dst = out.data();
    std::size_t i = 0;
    for (std::size_t n = 0; n < a.size(); ++n)
        for (std::size_t m = 0; m < b.size(); ++m) {
            const Complex ab = a[n] * b[m];
            for (std::size_t l = 0; l < c.size(); ++l) {
                const Complex abc = ab * c[l];
                for (std::size_t t = 0; t < d.size(); ++t) dst[i++] = abc * d[t];
            }
        }
    return out;
}

inline double norm_sq(const CVec& v) {
    double s = 0;
    for (const Complex& x : v) s += std::norm(x);
    return s;
}

inline double frobenius_norm_sq(const ComplexTensor4& x) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::norm(x.data()[i]);
    return s;
}

inline double frobenius_norm_sq(const ComplexMatrix& x) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::norm(x.data()[i]);
    return s;
}

inline double frobenius_norm(const ComplexTensor4& x) { return std::sqrt(frobenius_norm_sq(x)); }
inline double frobenius_norm(const ComplexMatrix& x) { return std::sqrt(frobenius_norm_sq(x)); }
inline double frobenius_norm(const CVec& v) { return std::sqrt(norm_sq(v)); }

/// Conjugate-linear in the first argument: sum conj(a_i) b_i.
inline Complex inner_product(const CVec& a, const CVec& b) {
    require(a.size() == b.size(), "inner_product: length mismatch");
    Complex s{};
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

inline CVec ones(std::size_t n) { return CVec(n, Complex{1.0, 0.0}); }

inline ComplexMatrix diag(const CVec& v) {
    ComplexMatrix out(v.size(), v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out(i, i) = v[i];
    return out;
}

} // namespace aircal
