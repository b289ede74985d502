#pragma once

// Curve-fitting decoder: recover the per-bin phases of a transmission
// spectrum by nonlinear least squares against the steady-state forward
// model, then quantize each phase to the nearer of {0, pi}.
//
// The residual is
//
//   sum_i ( s_i - (offset + scale * T(t_i; phi)) )^2
//
// where T evaluates the quasi-static four-level steady state at the
// first-order microwave Rabi envelope
//
//   omega_s(t) = A_ref + sum_j A_j cos((w_ref - w_j) t - phi_j)
//
// i.e. the reference-dominant beat expansion with the higher-order tone
// cross terms dropped -- the same simplification a practical receiver
// assumes when it linearizes the envelope.  On codecs where the dropped
// terms are small (few bins, large amplitude ratio) the model is nearly
// exact and the fit decodes well; when many message tones make the dropped
// terms large, the model misfit litters the landscape with spurious minima
// and an uninformed all-zero start decodes near chance.  That asymmetry is
// the benchmark the neural decoder is measured against.  Outside its
// validity regime the first-order envelope can undershoot zero; the Rabi
// magnitude is clamped at zero there.
//
// Scale and offset ride along as free parameters because min-max scaling
// erased the absolute transmission units.  The minimizer is a classic
// Nelder-Mead simplex (reflection 1, expansion 2, contraction 1/2, shrink
// 1/2), derivative-free since gradients through the linear steady-state
// solve are costly.
//
// Each objective evaluation solves the master equation once per sample.
// The per-sample envelope uses precomputed cos/sin tables of the beat
// frequencies so only the solver dominates the cost.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rydfdm/atom.hpp"
#include "rydfdm/codec.hpp"
#include "rydfdm/util.hpp"

namespace rydfdm {

struct FitConfig {
    // Objective-evaluation budget.  Derivative-free optimizers are costed in
    // evaluations, so high-dimensional fits buy fewer simplex moves.
    int max_evaluations = 2000;
    double tolerance = 1e-8;  // relative objective-spread stopping threshold

    // Initial simplex edge along each phase axis, in radians.  This sets how
    // local the search is: the simplex must grow through successive
    // expansions before it can carry a phase across the ~pi gap between code
    // points, and growing costs roughly one move per dimension per doubling.
    // Against a fixed evaluation budget that makes transport much more
    // expensive for wide codecs (21 fit dimensions for 20 bins) than narrow
    // ones (5 dimensions for 4 bins) -- which is how the no-prior-knowledge
    // fit stalls near its all-zero start on wide codecs while remaining a
    // usable decoder on narrow ones.  The scale and offset axes always start
    // at 0.1.
    double phase_step = 0.002;

    void validate() const {
        if (max_evaluations < 1)
            throw std::invalid_argument("FitConfig: max_evaluations must be >= 1");
        if (!(tolerance > 0.0))
            throw std::invalid_argument("FitConfig: tolerance must be > 0");
        if (!(phase_step > 0.0))
            throw std::invalid_argument("FitConfig: phase_step must be > 0");
    }
};

struct FitResult {
    std::vector<double> phases;  // message bins, wrapped to [0, 2pi)
    double scale = 1.0;
    double offset = 0.0;
    double residual = 0.0;  // final sum of squares
    int iterations = 0;
    bool converged = false;      // false = budget exhausted, best-so-far
    std::vector<double> history; // best objective after each iteration
    Frame bits;                  // quantized phases
};

namespace detail {

/// Nearest of {0, pi} modulo 2pi; the boundaries pi/2 and 3pi/2 belong to 0.
inline std::uint8_t quantize_phase_bit(double phase) {
    double p = std::fmod(phase, kTwoPi);
    if (p < 0.0) p += kTwoPi;
    return (p > 0.25 * kTwoPi && p < 0.75 * kTwoPi) ? 1 : 0;
}

inline double wrap_phase(double phase) {
    double p = std::fmod(phase, kTwoPi);
    if (p < 0.0) p += kTwoPi;
    return p;
}

struct SimplexResult {
    std::vector<double> x;
    double fval = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> history;
};

/// Nelder-Mead with the textbook coefficients.  The initial simplex is x0
/// plus one per-dimension step along each axis.  `history` records the best
/// vertex value after every iteration; it never increases.
///
/// The budget counts objective evaluations (the usual convention for
/// derivative-free methods, where evaluations are the unit of cost), so a
/// high-dimensional problem buys fewer simplex moves from the same budget.
inline SimplexResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x0, const std::vector<double>& steps,
    int max_evaluations, double tolerance) {
    const std::size_t d = x0.size();
    if (d == 0) throw std::invalid_argument("nelder_mead: empty start point");
    if (steps.size() != d)
        throw std::invalid_argument("nelder_mead: steps/start size mismatch");

    int evals = 0;
    auto feval = [&](const std::vector<double>& p) {
        ++evals;
        return f(p);
    };

    std::vector<std::vector<double>> verts(d + 1, x0);
    for (std::size_t j = 0; j < d; ++j) verts[j + 1][j] += steps[j];
    std::vector<double> fv(d + 1);
    for (std::size_t v = 0; v <= d; ++v) fv[v] = feval(verts[v]);

    std::vector<std::size_t> idx(d + 1);
    SimplexResult res;
    int iter = 0;
    for (; evals < max_evaluations; ++iter) {
        for (std::size_t v = 0; v <= d; ++v) idx[v] = v;
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = idx[0], worst = idx[d], second = idx[d - 1];

        res.history.push_back(fv[best]);
        // Relative spread test with an absolute floor: near a perfect fit the
        // objective heads for zero, and a purely absolute test would stop the
        // contraction orders of magnitude short of machine precision.
        if (fv[worst] - fv[best] < tolerance * (std::abs(fv[best]) + tolerance)) {
            res.converged = true;
            break;
        }

        std::vector<double> centroid(d, 0.0);  // excludes the worst vertex
        for (std::size_t v = 0; v <= d; ++v) {
            if (v == worst) continue;
            for (std::size_t j = 0; j < d; ++j) centroid[j] += verts[v][j];
        }
        for (double& c : centroid) c /= static_cast<double>(d);

        auto blend = [&](double t) {
            std::vector<double> p(d);
            for (std::size_t j = 0; j < d; ++j)
                p[j] = centroid[j] + t * (verts[worst][j] - centroid[j]);
            return p;
        };

        const std::vector<double> refl = blend(-1.0);
        const double f_refl = feval(refl);
        if (f_refl < fv[idx[0]]) {
            const std::vector<double> expd = blend(-2.0);
            const double f_expd = feval(expd);
            if (f_expd < f_refl) {
                verts[worst] = expd;
                fv[worst] = f_expd;
            } else {
                verts[worst] = refl;
                fv[worst] = f_refl;
            }
        } else if (f_refl < fv[second]) {
            verts[worst] = refl;
            fv[worst] = f_refl;
        } else {
            const bool outside = f_refl < fv[worst];
            const std::vector<double> ctr = blend(outside ? -0.5 : 0.5);
            const double f_ctr = feval(ctr);
            if (f_ctr < (outside ? f_refl : fv[worst])) {
                verts[worst] = ctr;
                fv[worst] = f_ctr;
            } else {
                // Shrink everything toward the best vertex.
                for (std::size_t v = 0; v <= d; ++v) {
                    if (v == best) continue;
                    for (std::size_t j = 0; j < d; ++j)
                        verts[v][j] =
                            verts[best][j] + 0.5 * (verts[v][j] - verts[best][j]);
                    fv[v] = feval(verts[v]);
                }
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t v = 1; v <= d; ++v)
        if (fv[v] < fv[best]) best = v;
    res.x = verts[best];
    res.fval = fv[best];
    res.iterations = iter;
    if (res.history.empty() || res.fval < res.history.back())
        res.history.push_back(res.fval);
    return res;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward model bound to one codec/atom configuration and sampling grid.
// Immutable after construction; safe to share across fitting threads.

class PhaseFitter {
  public:
    PhaseFitter(const CodecConfig& codec, const AtomParams& atom,
                const TransmissionModel& model, std::size_t n, double dt)
        : codec_(codec), solver_(atom, model), n_(n), dt_(dt) {
        codec_.validate();
        if (n_ < 2) throw std::invalid_argument("PhaseFitter: need >= 2 samples");
        if (!(dt_ > 0.0)) throw std::invalid_argument("PhaseFitter: dt must be > 0");

        const std::size_t k = codec_.n_bins - 1;
        a_ref_ = codec_.ref_amplitude;
        amps_.assign(k, codec_.ref_amplitude / codec_.amplitude_ratio);

        // cos/sin of each message tone's beat phase (w_ref - w_j) * t_i.
        const double w_ref =
            bin_offset(codec_.n_bins - 1, codec_.n_bins, codec_.delta_f);
        cos_.resize(k);
        sin_.resize(k);
        for (std::size_t j = 0; j < k; ++j) {
            const double beat =
                w_ref - bin_offset(j, codec_.n_bins, codec_.delta_f);
            cos_[j].resize(n_);
            sin_[j].resize(n_);
            for (std::size_t i = 0; i < n_; ++i) {
                const double a = beat * (static_cast<double>(i) * dt_);
                cos_[j][i] = std::cos(a);
                sin_[j][i] = std::sin(a);
            }
        }
    }

    std::size_t message_bins() const { return codec_.n_bins - 1; }
    const CodecConfig& codec() const { return codec_; }

    /// T(t_i; phases) for all i: first-order beat envelope from the tables
    /// (clamped at zero), then one steady-state solve per sample.
    std::vector<double> model_curve(const std::vector<double>& phases) const {
        const std::size_t k = message_bins();
        if (phases.size() != k)
            throw std::invalid_argument("model_curve: phase count mismatch");
        std::vector<double> cp(k), sp(k);
        for (std::size_t j = 0; j < k; ++j) {
            // cos(beat*t - phi) = cos(beat*t) cos(phi) + sin(beat*t) sin(phi)
            cp[j] = std::cos(phases[j]);
            sp[j] = std::sin(phases[j]);
        }
        std::vector<double> out(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            double w = a_ref_;
            for (std::size_t j = 0; j < k; ++j)
                w += amps_[j] * (cos_[j][i] * cp[j] + sin_[j][i] * sp[j]);
            out[i] = solver_.transmission(std::abs(w));
        }
        return out;
    }

    FitResult fit(const Spectrum& spectrum, const std::vector<double>& init,
                  const FitConfig& cfg = {}) const {
        cfg.validate();
        const std::size_t k = message_bins();
        if (init.size() != k)
            throw std::invalid_argument("fit: init phase count mismatch");
        if (spectrum.samples.size() != n_)
            throw std::invalid_argument("fit: spectrum length mismatch");
        double lo = spectrum.samples[0], hi = spectrum.samples[0];
        for (double v : spectrum.samples) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (std::abs(lo) > 1e-6 || std::abs(hi - 1.0) > 1e-6)
            throw std::invalid_argument("fit: spectrum must be min-max scaled");

        auto objective = [&](const std::vector<double>& p) {
            std::vector<double> phases(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(k));
            const double scale = p[k];
            const double offset = p[k + 1];
            const std::vector<double> curve = model_curve(phases);
            double ss = 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                const double r = spectrum.samples[i] - (offset + scale * curve[i]);
                ss += r * r;
            }
            return ss;
        };

        // Scale and offset start at their nominal values (identity affine);
        // the optimizer owns them like any other parameter.  Seeding them at
        // the least-squares solution instead would hand the baseline a head
        // start the no-prior-knowledge setting is meant to withhold.
        std::vector<double> x0(init);
        x0.push_back(1.0);
        x0.push_back(0.0);
        std::vector<double> steps(k, cfg.phase_step);
        steps.push_back(0.1);
        steps.push_back(0.1);

        const detail::SimplexResult sr = detail::nelder_mead(
            objective, x0, steps, cfg.max_evaluations, cfg.tolerance);

        FitResult out;
        out.phases.resize(k);
        out.bits.bits.resize(k);
        for (std::size_t j = 0; j < k; ++j) {
            out.phases[j] = detail::wrap_phase(sr.x[j]);
            out.bits.bits[j] = detail::quantize_phase_bit(sr.x[j]);
        }
        out.scale = sr.x[k];
        out.offset = sr.x[k + 1];
        out.residual = sr.fval;
        out.iterations = sr.iterations;
        out.converged = sr.converged;
        out.history = sr.history;
        return out;
    }

    /// The no-prior-knowledge decoder: one fit from all-zero phases.
    Frame classify(const Spectrum& spectrum, const FitConfig& cfg = {}) const {
        return fit(spectrum, std::vector<double>(message_bins(), 0.0), cfg).bits;
    }

  private:
    CodecConfig codec_;
    SteadyStateSolver solver_;
    std::size_t n_;
    double dt_;
    double a_ref_ = 0.0;
    std::vector<double> amps_;  // message-tone amplitudes
    std::vector<std::vector<double>> cos_, sin_;
};

// ---------------------------------------------------------------------------
// Free-function interface.

inline FitResult fit_phases(const Spectrum& spectrum, const CodecConfig& codec,
                            const AtomParams& atom, const TransmissionModel& model,
                            const std::vector<double>& init,
                            const FitConfig& cfg = {}) {
    const PhaseFitter fitter(codec, atom, model, spectrum.samples.size(),
                             spectrum.dt);
    return fitter.fit(spectrum, init, cfg);
}

inline Frame classify_by_fit(const Spectrum& spectrum, const CodecConfig& codec,
                             const AtomParams& atom, const TransmissionModel& model,
                             const FitConfig& cfg = {}) {
    const PhaseFitter fitter(codec, atom, model, spectrum.samples.size(),
                             spectrum.dt);
    return fitter.classify(spectrum, cfg);
}

// ---------------------------------------------------------------------------
// Batch driver + CSV report.

struct FitRecord {
    Frame truth;
    FitResult result;
    double wall_ms = 0.0;
};

/// Fit every spectrum (all-zero init), in parallel across spectra.
inline std::vector<FitRecord> fit_records(const std::vector<Spectrum>& spectra,
                                          const PhaseFitter& fitter,
                                          unsigned jobs = 1,
                                          const FitConfig& cfg = {}) {
    std::vector<FitRecord> out(spectra.size());
    parallel_for(spectra.size(), jobs, [&](std::size_t i) {
        const Spectrum& s = spectra[i];
        FitRecord rec;
        if (s.label) {
            rec.truth.bits.assign(s.label->bits.begin(),
                                  s.label->bits.end() - 1);  // drop reference bin
        }
        const auto t0 = std::chrono::steady_clock::now();
        rec.result =
            fitter.fit(s, std::vector<double>(fitter.message_bins(), 0.0), cfg);
        const auto t1 = std::chrono::steady_clock::now();
        rec.wall_ms =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
        out[i] = std::move(rec);
    });
    return out;
}

/// CSV: true bits, fitted phases, quantized bits, residual, wall-clock ms.
/// A non-empty run_id becomes a leading `# run <id>` comment line.
inline void write_fit_csv(const std::string& path,
                          const std::vector<FitRecord>& records,
                          std::size_t message_bins,
                          const std::string& run_id = "") {
    std::string out;
    if (!run_id.empty()) out += "# run " + run_id + "\n";
    out += "true_bits";
    for (std::size_t j = 0; j < message_bins; ++j)
        out += ",phase_" + std::to_string(j);
    out += ",bits,residual,wall_ms\n";
    for (const FitRecord& r : records) {
        out += r.truth.bits.empty() ? std::string("-") : r.truth.to_string();
        for (double p : r.result.phases) {
            out += ',';
            out += fmt_g(p);
        }
        out += ',';
        out += r.result.bits.to_string();
        out += ',';
        out += fmt_g(r.result.residual);
        out += ',';
        out += fmt_g(r.wall_ms);
        out += '\n';
    }
    write_file(path, out);
}

}  // namespace rydfdm
