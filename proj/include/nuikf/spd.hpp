#pragma once

#include <utility>

#include "nuikf/matrix.hpp"

namespace nuikf {

/// Symmetric positive definite matrix, validated at construction.
///
/// The constructor accepts matrices that are symmetric to 1e-10 relative
/// Frobenius asymmetry, symmetrizes them exactly, and factorizes. When the
/// Cholesky factorization fails, a diagonal jitter ladder is applied:
/// starting at 1e-12 * trace/n and escalating by factors of 10 up to
/// 1e-6 * trace/n. The repaired matrix is the one stored. If no rung
/// succeeds, NotPositiveDefinite is thrown.
class SpdMatrix {
  public:
    explicit SpdMatrix(Matrix a) {
        if (a.rows() != a.cols() || a.rows() == 0) {
            throw DimensionMismatch("SpdMatrix: matrix must be square and non-empty");
        }
        if (!all_finite(a)) {
            throw NotPositiveDefinite("SpdMatrix: non-finite entries");
        }
        if (relative_asymmetry(a) > 1e-10) {
            throw NotPositiveDefinite("SpdMatrix: asymmetry exceeds tolerance");
        }
        m_ = symmetrize(a);
        if (!try_factorize()) {
            const double base = m_.trace() / static_cast<double>(m_.rows());
            bool repaired = false;
            if (base > 0.0) {
                for (double jitter = 1e-12 * base; jitter <= 1e-6 * base * (1.0 + 1e-12);
                     jitter *= 10.0) {
                    Matrix candidate = m_ + jitter * Matrix::Identity(m_.rows(), m_.cols());
                    m_.swap(candidate);
                    if (try_factorize()) {
                        repaired = true;
                        break;
                    }
                    m_.swap(candidate);
                }
            }
            if (!repaired) {
                throw NotPositiveDefinite("SpdMatrix: jitter ladder exhausted");
            }
        }
    }

    [[nodiscard]] static SpdMatrix identity(Index n, double scale = 1.0) {
        return SpdMatrix(scale * Matrix::Identity(n, n));
    }

    [[nodiscard]] const Matrix& matrix() const { return m_; }

    /// Lower-triangular L with L * L^T equal to the stored matrix.
    [[nodiscard]] const Matrix& cholesky() const { return l_; }

    [[nodiscard]] Index dim() const { return m_.rows(); }

    /// Solves M * X = B through the cached factorization.
    [[nodiscard]] Matrix solve(const Matrix& b) const {
        if (b.rows() != m_.rows()) {
            throw DimensionMismatch("SpdMatrix::solve: row count mismatch");
        }
        Matrix y = l_.triangularView<Eigen::Lower>().solve(b);
        return l_.transpose().triangularView<Eigen::Upper>().solve(y);
    }

    [[nodiscard]] double trace() const { return m_.trace(); }

  private:
    bool try_factorize() {
        Eigen::LLT<Matrix> llt(m_);
        if (llt.info() != Eigen::Success) {
            return false;
        }
        l_ = llt.matrixL();
        return true;
    }

    Matrix m_;
    Matrix l_;
};

/// Lower-triangular Cholesky factor of an SPD matrix.
[[nodiscard]] inline const Matrix& cholesky_sqrt(const SpdMatrix& p) {
    return p.cholesky();
}

}  // namespace nuikf
