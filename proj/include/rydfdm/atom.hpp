#pragma once

// Steady-state response of the four-level ladder to a microwave drive.
//
// Level order: |g> = 0, |e> = 1, |r> = 2, |s> = 3.  The probe couples
// g-e, the coupling laser e-r, and the microwave envelope r-s.  Decay runs
// down the ladder through three collapse channels with rates gamma_e,
// gamma_r, gamma_s.  We work in hbar = 1 units with every rate in rad/s.
//
// The kHz-scale beat of the envelope is slow against the MHz-scale atomic
// rates, so each sample of a transmission trace is the steady state of the
// master equation with the envelope frozen at that instant (quasi-static
// solve).  The steady state is found by vectorizing rho into 16 complex
// unknowns, building the 16x16 generator, swapping the rho_gg row for the
// trace constraint, and solving by LU with partial pivoting.  The system is
// solved in units of the largest rate, which keeps it well scaled; residual
// tolerances quoted in tests refer to that normalized equation.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rydfdm/codec.hpp"
#include "rydfdm/config.hpp"
#include "rydfdm/field.hpp"

namespace rydfdm {


using Matrix4c = Eigen::Matrix4cd;
using Matrix16c = Eigen::Matrix<std::complex<double>, 16, 16>;
using Vector16c = Eigen::Matrix<std::complex<double>, 16, 1>;

struct AtomParams {
    double omega_p = kTwoPi * 2.0e6;  // probe Rabi frequency (rad/s)
    double omega_c = kTwoPi * 4.0e6;  // coupling Rabi frequency (rad/s)
    double delta_p = 0.0;             // probe detuning (rad/s)
    double delta_c = 0.0;             // coupling detuning (rad/s)
    double delta_s = 0.0;             // microwave detuning (rad/s)
    double gamma_e = kTwoPi * 6.0e6;  // |e> -> |g> decay (rad/s)
    double gamma_r = kTwoPi * 50e3;   // |r> -> |e> decay (rad/s)
    double gamma_s = kTwoPi * 50e3;   // |s> -> |r> decay (rad/s)

    void validate() const {
        if (!(omega_p > 0.0) || !(omega_c > 0.0))
            throw std::invalid_argument("AtomParams: Rabi frequencies must be > 0");
        if (gamma_e < 0.0 || gamma_r < 0.0 || gamma_s < 0.0)
            throw std::invalid_argument("AtomParams: decay rates must be >= 0");
    }
};

struct TransmissionModel {
    // Lumps |mu_ge|^2/(eps0*hbar), density and cell length into one
    // dimensionless coefficient; downstream consumers min-max scale anyway.
    double contrast = 1.0;

    void validate() const {
        if (!(contrast > 0.0))
            throw std::invalid_argument("TransmissionModel: contrast must be > 0");
    }
};

class DensityMatrix {
  public:
    explicit DensityMatrix(const Matrix4c& entries) : rho_(entries) {}

    const Matrix4c& entries() const { return rho_; }
    std::complex<double> operator()(int i, int j) const { return rho_(i, j); }

    double hermiticity_error() const {
        return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff();
    }

    double trace_error() const { return std::abs(rho_.trace() - 1.0); }

    double min_eigenvalue() const {
        const Matrix4c sym = 0.5 * (rho_ + rho_.adjoint());
        Eigen::SelfAdjointEigenSolver<Matrix4c> es(sym);
        return es.eigenvalues().minCoeff();
    }

    /// Hermitian within 1e-10, unit trace within 1e-10, eigenvalues >= -1e-8.
    bool is_physical() const {
        return hermiticity_error() < 1e-10 && trace_error() < 1e-10 &&
               min_eigenvalue() >= -1e-8;
    }

  private:
    Matrix4c rho_;
};

/// Ladder Hamiltonian (divided by hbar) with the microwave Rabi frequency
/// frozen at omega_s.  Real symmetric by construction.
inline Matrix4c build_hamiltonian(const AtomParams& p, double omega_s) {
    Matrix4c h = Matrix4c::Zero();
    h(0, 1) = h(1, 0) = -0.5 * p.omega_p;
    h(1, 2) = h(2, 1) = -0.5 * p.omega_c;
    h(2, 3) = h(3, 2) = -0.5 * omega_s;
    h(1, 1) = p.delta_p;
    h(2, 2) = p.delta_p + p.delta_c;
    h(3, 3) = p.delta_p + p.delta_c + p.delta_s;
    return h;
}

namespace detail {

// vec(rho) is column-stacked: entry (i, j) sits at index i + 4j.
inline int vec_index(int i, int j) { return i + 4 * j; }

// Accumulate kron(b_t, a) * weight into g, i.e. the superoperator of
// rho -> a * rho * b with b given transposed.
inline void add_kron(Matrix16c& g, const Matrix4c& bt, const Matrix4c& a,
                     std::complex<double> weight) {
    for (int col = 0; col < 4; ++col)
        for (int row = 0; row < 4; ++row) {
            const std::complex<double> scale = weight * bt(col, row);
            if (scale == 0.0) continue;
            g.block<4, 4>(4 * row, 4 * col) += scale * a;
        }
}

}  // namespace detail

/// Precomputes the Liouvillian split G(omega_s) = G0 + (omega_s/s) * G1 for
/// one parameter set, so per-sample solves only refresh two couplings.
class SteadyStateSolver {
  public:
    SteadyStateSolver(const AtomParams& params, const TransmissionModel& model)
        : params_(params), model_(model) {
        params.validate();
        model.validate();
        if (params.gamma_e <= 0.0 && params.gamma_r <= 0.0 && params.gamma_s <= 0.0)
            throw std::invalid_argument(
                "steady_state: need at least one nonzero decay rate");

        scale_ = std::max({params.omega_p, params.omega_c, std::abs(params.delta_p),
                           std::abs(params.delta_c), std::abs(params.delta_s),
                           params.gamma_e, params.gamma_r, params.gamma_s});

        const std::complex<double> i_unit(0.0, 1.0);
        g0_.setZero();
        g1_.setZero();
        const Matrix4c ident = Matrix4c::Identity();

        // Hamiltonian part: -i (I (x) H - H^T (x) I), split into the
        // omega_s-independent piece and the unit-omega_s coupling.
        const Matrix4c h0 = build_hamiltonian(params, 0.0) / scale_;
        Matrix4c h1 = Matrix4c::Zero();
        h1(2, 3) = h1(3, 2) = -0.5;
        detail::add_kron(g0_, ident, h0, -i_unit);
        detail::add_kron(g0_, h0.transpose(), ident, i_unit);
        detail::add_kron(g1_, ident, h1, -i_unit);
        detail::add_kron(g1_, h1.transpose(), ident, i_unit);

        // Collapse channels: C rho C^+ - (C^+C rho + rho C^+C)/2, with
        // C1 = sqrt(gamma_e)|g><e|, C2 = sqrt(gamma_r)|e><r|,
        // C3 = sqrt(gamma_s)|r><s|.
        const double rates[3] = {params.gamma_e, params.gamma_r, params.gamma_s};
        const int from[3] = {1, 2, 3};
        const int to[3] = {0, 1, 2};
        for (int k = 0; k < 3; ++k) {
            if (rates[k] <= 0.0) continue;
            const double rate = rates[k] / scale_;
            Matrix4c c = Matrix4c::Zero();
            c(to[k], from[k]) = std::sqrt(rate);
            const Matrix4c cdc = c.adjoint() * c;
            detail::add_kron(g0_, c.conjugate().transpose(), c, 1.0);
            detail::add_kron(g0_, ident, cdc, -0.5);
            detail::add_kron(g0_, cdc.transpose(), ident, -0.5);
        }

        // Trace constraint replaces the rho_gg equation (row 0).
        rhs_.setZero();
        rhs_(0) = 1.0;
    }

    DensityMatrix solve(double omega_s) const {
        if (omega_s < 0.0)
            throw std::invalid_argument("steady_state: omega_s must be >= 0");
        Matrix16c g = g0_ + (omega_s / scale_) * g1_;
        for (int j = 0; j < 16; ++j) g(0, j) = 0.0;
        g(0, detail::vec_index(0, 0)) = 1.0;
        g(0, detail::vec_index(1, 1)) = 1.0;
        g(0, detail::vec_index(2, 2)) = 1.0;
        g(0, detail::vec_index(3, 3)) = 1.0;

        const Eigen::PartialPivLU<Matrix16c> lu(g);
        const auto& u_diag = lu.matrixLU().diagonal();
        double umin = u_diag.cwiseAbs().minCoeff();
        double umax = u_diag.cwiseAbs().maxCoeff();
        if (!(umin > umax * 1e-13))
            throw std::runtime_error(
                "steady_state: Liouvillian is numerically singular");

        const Vector16c x = lu.solve(rhs_);
        Matrix4c rho;
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i) rho(i, j) = x(detail::vec_index(i, j));
        return DensityMatrix(rho);
    }

    /// Transmission at one envelope value: T = exp(-c * Im rho_eg).
    double transmission(double omega_s) const {
        return std::exp(-model_.contrast * solve(omega_s)(1, 0).imag());
    }

    /// Frobenius norm of d(rho)/dt in units of the normalizing rate.
    double residual_norm(const DensityMatrix& rho, double omega_s) const {
        Matrix16c g = g0_ + (omega_s / scale_) * g1_;
        Vector16c v;
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i)
                v(detail::vec_index(i, j)) = rho.entries()(i, j);
        return (g * v).norm();
    }

    double scale() const { return scale_; }
    const AtomParams& params() const { return params_; }
    const TransmissionModel& model() const { return model_; }

  private:
    AtomParams params_;
    TransmissionModel model_;
    double scale_;
    Matrix16c g0_;
    Matrix16c g1_;
    Vector16c rhs_;
};

inline DensityMatrix steady_state(const AtomParams& params, double omega_s) {
    return SteadyStateSolver(params, TransmissionModel{}).solve(omega_s);
}

inline double transmission_point(const DensityMatrix& rho,
                                 const TransmissionModel& model) {
    model.validate();
    return std::exp(-model.contrast * rho(1, 0).imag());
}

// ---------------------------------------------------------------------------
// Probe transmission time series.

struct Spectrum {
    std::vector<double> samples;
    double dt = 1e-6;  // seconds per sample
    std::optional<PhaseLabel> label;

    void validate() const {
        if (samples.empty()) throw std::invalid_argument("Spectrum: empty");
        if (!(dt > 0.0)) throw std::invalid_argument("Spectrum: dt must be > 0");
        for (double v : samples)
            if (!std::isfinite(v))
                throw std::invalid_argument("Spectrum: non-finite sample");
    }
};

/// Quasi-static transmission trace: sample i is the steady-state
/// transmission with the envelope frozen at t = i * dt.  Valid when all
/// pairwise offset differences are small against the decay rates.
inline Spectrum simulate_spectrum(const MWField& field, const AtomParams& params,
                                  const TransmissionModel& model, std::size_t n,
                                  double dt) {
    if (n < 1) throw std::invalid_argument("simulate_spectrum: n must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("simulate_spectrum: dt must be > 0");
    const SteadyStateSolver solver(params, model);
    Spectrum spec;
    spec.dt = dt;
    spec.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        spec.samples[i] = solver.transmission(rabi_envelope(field, t));
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Key-value bindings for the physics config file.  Units: rad/s and seconds.

inline AtomParams atom_params_from_config(const Config& cfg) {
    AtomParams p;
    p.omega_p = cfg.get_double_or("omega_p", p.omega_p);
    p.omega_c = cfg.get_double_or("omega_c", p.omega_c);
    p.delta_p = cfg.get_double_or("delta_p", p.delta_p);
    p.delta_c = cfg.get_double_or("delta_c", p.delta_c);
    p.delta_s = cfg.get_double_or("delta_s", p.delta_s);
    p.gamma_e = cfg.get_double_or("gamma_e", p.gamma_e);
    p.gamma_r = cfg.get_double_or("gamma_r", p.gamma_r);
    p.gamma_s = cfg.get_double_or("gamma_s", p.gamma_s);
    p.validate();
    return p;
}

inline TransmissionModel transmission_model_from_config(const Config& cfg) {
    TransmissionModel m;
    m.contrast = cfg.get_double_or("contrast", m.contrast);
    m.validate();
    return m;
}

}  // namespace rydfdm
