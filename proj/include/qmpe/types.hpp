#ifndef QMPE_TYPES_HPP
#define QMPE_TYPES_HPP

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>

namespace qmpe {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dense complex matrix; constructors reject NaN/Inf entries.
class ComplexMatrix {
public:
    ComplexMatrix() = default;

    ComplexMatrix(CMat m) : m_(std::move(m)) {
        if (!m_.allFinite())
            throw std::invalid_argument("ComplexMatrix: non-finite entries");
    }

    const CMat& mat() const { return m_; }
    Index rows() const { return m_.rows(); }
    Index cols() const { return m_.cols(); }
    bool square() const { return m_.rows() == m_.cols(); }

private:
    CMat m_;
};

/// Square complex matrix validated Hermitian at construction:
/// ||A - A^dag||_max <= tol * ||A||_max.
class HermitianOperator {
public:
    static constexpr double kDefaultTol = 1e-12;

    HermitianOperator() = default;

    explicit HermitianOperator(CMat m, double hermiticity_tol = kDefaultTol)
        : m_(std::move(m)) {
        if (m_.rows() != m_.cols())
            throw std::invalid_argument("HermitianOperator: matrix not square");
        if (!m_.allFinite())
            throw std::invalid_argument("HermitianOperator: non-finite entries");
        const double scale = m_.cwiseAbs().maxCoeff();
        const double err = (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
        if (err > hermiticity_tol * scale)
            throw std::invalid_argument(
                "HermitianOperator: Hermiticity violated (|A-A^dag|_max = " +
                std::to_string(err) + ", |A|_max = " + std::to_string(scale) + ")");
    }

    /// Projects (A + A^dag)/2, which is Hermitian to the last bit. Intended for
    /// results that are Hermitian in exact arithmetic up to roundoff.
    static HermitianOperator symmetrized(const CMat& m) {
        if (m.rows() != m.cols())
            throw std::invalid_argument("HermitianOperator: matrix not square");
        HermitianOperator h;
        h.m_ = 0.5 * (m + m.adjoint().eval());
        if (!h.m_.allFinite())
            throw std::invalid_argument("HermitianOperator: non-finite entries");
        return h;
    }

    const CMat& mat() const { return m_; }
    Index dim() const { return m_.rows(); }

private:
    CMat m_;
};

inline double real_trace(const CMat& m) { return m.trace().real(); }

/// tr(rho A) for Hermitian rho, A (real by symmetry).
inline double expectation(const CMat& rho, const CMat& a) {
    return (rho * a).trace().real();
}

} // namespace qmpe

#endif
