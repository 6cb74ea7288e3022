#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "rmpc/errors.hpp"

namespace rmpc {

using Vector = std::vector<double>;

inline double norm_inf(const Vector& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double norm2(const Vector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// y += alpha * x
inline void axpy(double alpha, const Vector& x, Vector& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// Dense row-major matrix.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

    static DenseMatrix identity(int n) {
        DenseMatrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    const std::vector<double>& data() const { return data_; }

    DenseMatrix transposed() const {
        DenseMatrix t(cols_, rows_);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Vector matvec(const Vector& x) const {
        Vector y(rows_, 0.0);
        for (int i = 0; i < rows_; ++i) {
            double s = 0.0;
            for (int j = 0; j < cols_; ++j) s += (*this)(i, j) * x[j];
            y[i] = s;
        }
        return y;
    }

    /// x^T * A, returned as a vector of length cols().
    Vector matvec_transpose(const Vector& x) const {
        Vector y(cols_, 0.0);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j) y[j] += (*this)(i, j) * x[i];
        return y;
    }

    DenseMatrix multiply(const DenseMatrix& other) const {
        DenseMatrix out(rows_, other.cols());
        for (int i = 0; i < rows_; ++i)
            for (int k = 0; k < cols_; ++k) {
                const double a = (*this)(i, k);
                if (a == 0.0) continue;
                for (int j = 0; j < other.cols(); ++j) out(i, j) += a * other(k, j);
            }
        return out;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

/// LU factorization with partial pivoting of a square dense matrix.
class DenseFactorization {
public:
    explicit DenseFactorization(const DenseMatrix& a, double pivot_tol = 0.0) : lu_(a), ipiv_(a.rows()) {
        if (a.rows() != a.cols())
            throw SingularError("dense factorization: matrix is not square (" + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + ")");
        const int n = a.rows();
        if (pivot_tol <= 0.0) pivot_tol = default_pivot_tol(a);
        min_pivot_ = std::numeric_limits<double>::infinity();
        for (int k = 0; k < n; ++k) {
            int p = k;
            for (int i = k + 1; i < n; ++i)
                if (std::abs(lu_(i, k)) > std::abs(lu_(p, k))) p = i;
            ipiv_[k] = p;
            const double piv = std::abs(lu_(p, k));
            min_pivot_ = std::min(min_pivot_, piv);
            if (piv < pivot_tol)
                throw SingularError("dense factorization: pivot " + std::to_string(piv) + " below tolerance " +
                                    std::to_string(pivot_tol) + " at column " + std::to_string(k));
            if (p != k)
                for (int j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
            const double inv = 1.0 / lu_(k, k);
            for (int i = k + 1; i < n; ++i) {
                lu_(i, k) *= inv;
                const double l = lu_(i, k);
                if (l == 0.0) continue;
                for (int j = k + 1; j < n; ++j) lu_(i, j) -= l * lu_(k, j);
            }
        }
    }

    int size() const { return lu_.rows(); }
    double min_pivot() const { return min_pivot_; }

    Vector solve(Vector b) const {
        const int n = size();
        for (int k = 0; k < n; ++k)
            if (ipiv_[k] != k) std::swap(b[k], b[ipiv_[k]]);
        for (int i = 1; i < n; ++i)
            for (int j = 0; j < i; ++j) b[i] -= lu_(i, j) * b[j];
        for (int i = n - 1; i >= 0; --i) {
            for (int j = i + 1; j < n; ++j) b[i] -= lu_(i, j) * b[j];
            b[i] /= lu_(i, i);
        }
        return b;
    }

    /// Solves A^T x = b using A = P^T L U: solve U^T y = b, L^T z = y, x = P^T z.
    Vector solve_transpose(Vector b) const {
        const int n = size();
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < j; ++i) b[j] -= lu_(i, j) * b[i];
            b[j] /= lu_(j, j);
        }
        for (int j = n - 2; j >= 0; --j)
            for (int i = j + 1; i < n; ++i) b[j] -= lu_(i, j) * b[i];
        for (int k = n - 1; k >= 0; --k)
            if (ipiv_[k] != k) std::swap(b[k], b[ipiv_[k]]);
        return b;
    }

    static double default_pivot_tol(const DenseMatrix& a) {
        double max_row_sum = 0.0;
        for (int i = 0; i < a.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < a.cols(); ++j) s += std::abs(a(i, j));
            max_row_sum = std::max(max_row_sum, s);
        }
        return 1e-10 * std::max(max_row_sum, 1e-300);
    }

private:
    DenseMatrix lu_;
    std::vector<int> ipiv_;
    double min_pivot_ = 0.0;
};

/// Banded square matrix. Entries are stored by diagonal: diagonal d of
/// A (d in [-lower_bw, upper_bw]) occupies row (d + lower_bw) of the band
/// array, so bands()(d + lower_bw, i) == A(i, i + d).
class BandedMatrix {
public:
    BandedMatrix() = default;
    BandedMatrix(int n, int lower_bw, int upper_bw)
        : n_(n), lower_(lower_bw), upper_(upper_bw),
          bands_(static_cast<std::size_t>(lower_bw + upper_bw + 1) * n, 0.0) {
        if (lower_bw >= n || upper_bw >= n)
            throw InvalidArgumentError("banded matrix: bandwidth must be less than the dimension");
    }

    int size() const { return n_; }
    int lower_bandwidth() const { return lower_; }
    int upper_bandwidth() const { return upper_; }

    bool in_band(int i, int j) const {
        const int d = j - i;
        return d >= -lower_ && d <= upper_;
    }

    double at(int i, int j) const {
        if (!in_band(i, j)) return 0.0;
        return bands_[static_cast<std::size_t>(j - i + lower_) * n_ + i];
    }

    /// Mutable access; (i, j) must lie inside the band.
    double& entry(int i, int j) {
        return bands_[static_cast<std::size_t>(j - i + lower_) * n_ + i];
    }

    void add(int i, int j, double v) { entry(i, j) += v; }

    DenseMatrix to_dense() const {
        DenseMatrix m(n_, n_);
        for (int i = 0; i < n_; ++i) {
            const int jlo = std::max(0, i - lower_);
            const int jhi = std::min(n_ - 1, i + upper_);
            for (int j = jlo; j <= jhi; ++j) m(i, j) = at(i, j);
        }
        return m;
    }

    double max_row_abs_sum() const {
        double m = 0.0;
        for (int i = 0; i < n_; ++i) {
            double s = 0.0;
            const int jlo = std::max(0, i - lower_);
            const int jhi = std::min(n_ - 1, i + upper_);
            for (int j = jlo; j <= jhi; ++j) s += std::abs(at(i, j));
            m = std::max(m, s);
        }
        return m;
    }

private:
    int n_ = 0;
    int lower_ = 0;
    int upper_ = 0;
    std::vector<double> bands_;
};

/// LU factorization with partial pivoting of a banded matrix. Row pivoting
/// creates fill in up to lower_bw extra superdiagonals, so the working array
/// holds 2*kl + ku + 1 diagonals per column (LAPACK *gbtrf layout).
class BandedFactorization {
public:
    explicit BandedFactorization(const BandedMatrix& a, double pivot_tol = 0.0)
        : n_(a.size()), kl_(a.lower_bandwidth()), ku_(a.upper_bandwidth()), ipiv_(a.size()) {
        if (pivot_tol <= 0.0) pivot_tol = 1e-10 * std::max(a.max_row_abs_sum(), 1e-300);
        const int kv = kl_ + ku_; // upper bandwidth of U including pivoting fill
        ld_ = 2 * kl_ + ku_ + 1;
        ab_.assign(static_cast<std::size_t>(ld_) * n_, 0.0);
        // copy A into working storage: ab(kv + i - j, j) = A(i, j)
        for (int j = 0; j < n_; ++j) {
            const int ilo = std::max(0, j - ku_);
            const int ihi = std::min(n_ - 1, j + kl_);
            for (int i = ilo; i <= ihi; ++i) at(kv + i - j, j) = a.at(i, j);
        }
        min_pivot_ = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n_; ++j) {
            const int km = std::min(kl_, n_ - 1 - j); // subdiagonal entries in column j
            int jp = 0;
            for (int p = 1; p <= km; ++p)
                if (std::abs(at(kv + p, j)) > std::abs(at(kv + jp, j))) jp = p;
            ipiv_[j] = j + jp;
            const double piv = std::abs(at(kv + jp, j));
            min_pivot_ = std::min(min_pivot_, piv);
            if (piv < pivot_tol)
                throw SingularError("banded factorization: pivot " + std::to_string(piv) +
                                    " below tolerance " + std::to_string(pivot_tol) + " at column " +
                                    std::to_string(j));
            const int ju = std::min(n_ - 1, j + kv); // last column touched by this stage
            if (jp != 0)
                for (int c = j; c <= ju; ++c) std::swap(at(kv + j - c, c), at(kv + j + jp - c, c));
            if (km > 0) {
                const double inv = 1.0 / at(kv, j);
                for (int p = 1; p <= km; ++p) at(kv + p, j) *= inv;
                for (int c = j + 1; c <= ju; ++c) {
                    const double f = at(kv + j - c, c);
                    if (f == 0.0) continue;
                    for (int p = 1; p <= km; ++p) at(kv + j + p - c, c) -= at(kv + p, j) * f;
                }
            }
        }
    }

    int size() const { return n_; }
    double min_pivot() const { return min_pivot_; }

    Vector solve(Vector b) const {
        const int kv = kl_ + ku_;
        // L (unit lower, bandwidth kl) with row interchanges
        for (int j = 0; j < n_ - 1; ++j) {
            const int lm = std::min(kl_, n_ - 1 - j);
            if (ipiv_[j] != j) std::swap(b[ipiv_[j]], b[j]);
            for (int p = 1; p <= lm; ++p) b[j + p] -= at(kv + p, j) * b[j];
        }
        // U (upper, bandwidth kv)
        for (int j = n_ - 1; j >= 0; --j) {
            b[j] /= at(kv, j);
            const int imin = std::max(0, j - kv);
            for (int i = imin; i < j; ++i) b[i] -= at(kv + i - j, j) * b[j];
        }
        return b;
    }

    /// Solves A^T x = b (A = P^T L U, so A^T = U^T L^T P).
    Vector solve_transpose(Vector b) const {
        const int kv = kl_ + ku_;
        for (int j = 0; j < n_; ++j) {
            const int imin = std::max(0, j - kv);
            double s = b[j];
            for (int i = imin; i < j; ++i) s -= at(kv + i - j, j) * b[i];
            b[j] = s / at(kv, j);
        }
        for (int j = n_ - 2; j >= 0; --j) {
            const int lm = std::min(kl_, n_ - 1 - j);
            double s = b[j];
            for (int p = 1; p <= lm; ++p) s -= at(kv + p, j) * b[j + p];
            b[j] = s;
            if (ipiv_[j] != j) std::swap(b[ipiv_[j]], b[j]);
        }
        return b;
    }

    /// Reconstructs P^T L U, for factorization verification.
    DenseMatrix reconstruct() const {
        const int kv = kl_ + ku_;
        DenseMatrix l = DenseMatrix::identity(n_);
        DenseMatrix u(n_, n_);
        for (int j = 0; j < n_; ++j) {
            const int imin = std::max(0, j - kv);
            for (int i = imin; i <= j; ++i) u(i, j) = at(kv + i - j, j);
            const int km = std::min(kl_, n_ - 1 - j);
            for (int p = 1; p <= km; ++p) l(j + p, j) = at(kv + p, j);
        }
        DenseMatrix a = l.multiply(u);
        // undo the interchanges: rows were swapped in order j = 0..n-1
        for (int j = n_ - 1; j >= 0; --j) {
            if (ipiv_[j] == j) continue;
            for (int c = 0; c < n_; ++c) std::swap(a(j, c), a(ipiv_[j], c));
        }
        return a;
    }

private:
    double& at(int r, int j) { return ab_[static_cast<std::size_t>(r) * n_ + j]; }
    double at(int r, int j) const { return ab_[static_cast<std::size_t>(r) * n_ + j]; }

    int n_ = 0, kl_ = 0, ku_ = 0, ld_ = 0;
    std::vector<double> ab_;
    std::vector<int> ipiv_;
    double min_pivot_ = 0.0;
};

inline BandedFactorization banded_lu_factor(const BandedMatrix& a, double pivot_tol = 0.0) {
    return BandedFactorization(a, pivot_tol);
}

inline Vector banded_solve(const BandedFactorization& f, const Vector& b) {
    if (static_cast<int>(b.size()) != f.size())
        throw InvalidArgumentError("banded solve: right-hand side has wrong length");
    return f.solve(b);
}

inline Vector banded_solve_transpose(const BandedFactorization& f, const Vector& b) {
    if (static_cast<int>(b.size()) != f.size())
        throw InvalidArgumentError("banded solve: right-hand side has wrong length");
    return f.solve_transpose(b);
}

/// Rank estimate via column-pivoted Householder QR: counts diagonal entries of
/// R whose magnitude exceeds tol times the largest one.
inline int numerical_rank(const DenseMatrix& a, double tol = 1e-10) {
    if (a.rows() == 0 || a.cols() == 0) throw InvalidArgumentError("numerical_rank: empty matrix");
    if (tol <= 0.0) throw InvalidArgumentError("numerical_rank: tolerance must be positive");
    const int m = a.rows(), n = a.cols();
    DenseMatrix r = a;
    std::vector<double> diag;
    const int kmax = std::min(m, n);
    for (int k = 0; k < kmax; ++k) {
        // pick the remaining column with the largest trailing norm
        int jbest = k;
        double best = -1.0;
        for (int j = k; j < n; ++j) {
            double s = 0.0;
            for (int i = k; i < m; ++i) s += r(i, j) * r(i, j);
            if (s > best) {
                best = s;
                jbest = j;
            }
        }
        if (jbest != k)
            for (int i = 0; i < m; ++i) std::swap(r(i, k), r(i, jbest));
        double nrm = std::sqrt(best);
        diag.push_back(nrm);
        if (nrm == 0.0) break;
        // Householder vector v for column k (rows k..m-1)
        std::vector<double> v(m - k);
        for (int i = k; i < m; ++i) v[i - k] = r(i, k);
        const double alpha = v[0] >= 0.0 ? -nrm : nrm;
        v[0] -= alpha;
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        r(k, k) = alpha;
        for (int i = k + 1; i < m; ++i) r(i, k) = 0.0;
        if (vnorm2 == 0.0) continue;
        for (int j = k + 1; j < n; ++j) {
            double s = 0.0;
            for (int i = k; i < m; ++i) s += v[i - k] * r(i, j);
            const double f = 2.0 * s / vnorm2;
            for (int i = k; i < m; ++i) r(i, j) -= f * v[i - k];
        }
    }
    double dmax = 0.0;
    for (double d : diag) dmax = std::max(dmax, std::abs(d));
    if (dmax == 0.0) return 0;
    int rank = 0;
    for (double d : diag)
        if (std::abs(d) > tol * dmax) ++rank;
    return rank;
}

} // namespace rmpc
