#include "sopabn/numerics.hpp"

#include <string>

#include "sopabn/errors.hpp"

namespace sopabn {

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& m,
                                     const char* context) {
    const Eigen::Index n = m.rows();
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt.matrixL();

    double jitter = 1e-10 * m.trace() / static_cast<double>(n);
    if (jitter <= 0.0) jitter = 1e-14;
    for (int attempt = 0; attempt < 3; ++attempt) {
        Eigen::MatrixXd shifted = m;
        shifted.diagonal().array() += jitter;
        llt.compute(shifted);
        if (llt.info() == Eigen::Success) return llt.matrixL();
        jitter *= 10.0;
    }
    throw SingularSubmatrix(std::string("covariance block is numerically "
                                        "singular after jitter escalation: ") +
                            context);
}

Eigen::MatrixXd psd_sqrt_factor(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

Eigen::MatrixXd psd_project(const Eigen::MatrixXd& m, double floor) {
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
    const double lo = floor * (scale > 0.0 ? scale : 1.0);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(lo);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace sopabn
