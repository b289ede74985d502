#pragma once

// From-scratch neural-network layers with exact reverse-mode gradients.
//
// Activations live in "time-major" matrices: a sequence of T steps over a
// mini-batch of B samples with F features is a (T*B x F) matrix whose rows
// t*B .. t*B+B-1 hold step t for every sample.  Per-step blocks are then
// contiguous row ranges (middleRows), and the batch dimension disappears
// for single-step layers, which simply see rows as independent samples.
//
// Every layer comes as forward (optionally filling a cache) plus backward
// (consuming the cache, accumulating parameter gradients, returning the
// input gradient).  All math is 64-bit; gradients are checked against
// central finite differences in the test suite.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rydfdm/rng.hpp"

namespace rydfdm::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexMatrix = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// Small math helpers.

/// Numerically stable logistic sigmoid.
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Matrix sigmoid(const Matrix& x) {
    return x.unaryExpr([](double v) { return sigmoid(v); });
}

/// Min-max scale to [0,1]; a constant vector maps to all zeros so later
/// stages never divide by zero.
inline std::vector<double> minmax_scale(const std::vector<double>& x) {
    if (x.empty()) throw std::invalid_argument("minmax_scale: empty input");
    double lo = x[0], hi = x[0];
    for (double v : x) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<double> out(x.size(), 0.0);
    if (hi > lo) {
        // Divide rather than multiply by a reciprocal: the endpoints land on
        // exactly 0 and 1, which also makes a second pass a no-op.
        const double range = hi - lo;
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - lo) / range;
    }
    return out;
}

/// Row-wise min-max scale of a (B x N) matrix, one spectrum per row.
inline Matrix minmax_scale_rows(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double lo = x.row(r).minCoeff();
        const double hi = x.row(r).maxCoeff();
        if (hi > lo)
            out.row(r) = (x.row(r).array() - lo) / (hi - lo);
        else
            out.row(r).setZero();
    }
    return out;
}

/// Uniform Glorot-style init: U(-limit, limit), limit = sqrt(6/(fan_in+fan_out)).
inline void glorot_init(Matrix& w, double fan_in, double fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-limit, limit);
}

// ---------------------------------------------------------------------------
// 1-D convolution (valid, cross-correlation form).
//
// Input is one channel per sample: (B x N).  Output is time-major
// (L*B x C) with L = N - K + 1 and C filters.  The sliding dot product is
// assembled by im2col so the heavy lifting is a single GEMM.

struct Conv1DParams {
    Matrix w;  // filters x kernel_len
    Vector b;  // per-filter bias
};

struct Conv1DGrads {
    Matrix w;
    Vector b;
};

struct Conv1DCache {
    Matrix x_col;  // (L*B x K), row t*B+b = input[b, t..t+K-1]
    Eigen::Index batch = 0;
    Eigen::Index in_len = 0;
};

inline Conv1DParams conv1d_init(Eigen::Index filters, Eigen::Index kernel_len,
                                Rng& rng) {
    Conv1DParams p;
    p.w.resize(filters, kernel_len);
    glorot_init(p.w, static_cast<double>(kernel_len), static_cast<double>(filters),
                rng);
    p.b = Vector::Zero(filters);
    return p;
}

inline Matrix conv1d_forward(const Matrix& x, const Conv1DParams& p,
                             Conv1DCache* cache) {
    const Eigen::Index batch = x.rows();
    const Eigen::Index n = x.cols();
    const Eigen::Index k = p.w.cols();
    if (n < k)
        throw std::invalid_argument("conv1d: input shorter than the kernel");
    const Eigen::Index out_len = n - k + 1;

    Matrix x_col(out_len * batch, k);
    for (Eigen::Index t = 0; t < out_len; ++t)
        for (Eigen::Index j = 0; j < k; ++j)
            x_col.block(t * batch, j, batch, 1) = x.col(t + j);

    Matrix y = x_col * p.w.transpose();
    y.rowwise() += p.b.transpose();
    if (cache) {
        cache->x_col = std::move(x_col);
        cache->batch = batch;
        cache->in_len = n;
    }
    return y;
}

inline Matrix conv1d_backward(const Matrix& dy, const Conv1DParams& p,
                              const Conv1DCache& cache, Conv1DGrads& g) {
    const Eigen::Index k = p.w.cols();
    const Eigen::Index batch = cache.batch;
    const Eigen::Index out_len = dy.rows() / batch;

    g.w += dy.transpose() * cache.x_col;
    g.b += dy.colwise().sum().transpose();

    const Matrix dx_col = dy * p.w;  // (L*B x K)
    Matrix dx = Matrix::Zero(batch, cache.in_len);
    for (Eigen::Index t = 0; t < out_len; ++t)
        for (Eigen::Index j = 0; j < k; ++j)
            dx.col(t + j) += dx_col.block(t * batch, j, batch, 1);
    return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization, per channel (column) over every row of the batch.
// Training uses the biased batch variance; inference uses exponential
// running statistics.

struct BatchNormParams {
    Vector gamma, beta;
    Vector running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.99;  // weight of the old running value
};

struct BatchNormGrads {
    Vector gamma, beta;
};

struct BatchNormCache {
    Matrix xhat;
    Eigen::RowVectorXd inv_std;
};

inline BatchNormParams batchnorm_init(Eigen::Index channels) {
    BatchNormParams p;
    p.gamma = Vector::Ones(channels);
    p.beta = Vector::Zero(channels);
    p.running_mean = Vector::Zero(channels);
    p.running_var = Vector::Ones(channels);
    return p;
}

/// Training mode: normalize with batch statistics and update the running
/// statistics in place.
inline Matrix batchnorm_forward_train(const Matrix& x, BatchNormParams& p,
                                      BatchNormCache& cache) {
    const auto m = static_cast<double>(x.rows());
    if (x.rows() < 2)
        throw std::invalid_argument("batchnorm: training needs a batch of >= 2");

    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::RowVectorXd var =
        (x.rowwise() - mean).array().square().colwise().sum() / m;
    cache.inv_std = (var.array() + p.eps).rsqrt();

    cache.xhat = (x.rowwise() - mean).array().rowwise() * cache.inv_std.array();
    Matrix y = cache.xhat.array().rowwise() * p.gamma.transpose().array();
    y.rowwise() += p.beta.transpose();

    p.running_mean = p.momentum * p.running_mean + (1.0 - p.momentum) * mean.transpose();
    p.running_var = p.momentum * p.running_var + (1.0 - p.momentum) * var.transpose();
    return y;
}

/// Inference mode: normalize with the stored running statistics.
inline Matrix batchnorm_forward_infer(const Matrix& x, const BatchNormParams& p) {
    const Eigen::RowVectorXd inv_std =
        (p.running_var.transpose().array() + p.eps).rsqrt();
    Matrix y = (x.rowwise() - p.running_mean.transpose()).array().rowwise() *
               (inv_std.array() * p.gamma.transpose().array());
    y.rowwise() += p.beta.transpose();
    return y;
}

inline Matrix batchnorm_backward(const Matrix& dy, const BatchNormParams& p,
                                 const BatchNormCache& cache, BatchNormGrads& g) {
    const auto m = static_cast<double>(dy.rows());

    g.gamma += (dy.array() * cache.xhat.array()).colwise().sum().matrix().transpose();
    g.beta += dy.colwise().sum().transpose();

    // dx = (gamma * inv_std / m) * (m*dy - sum(dy) - xhat * sum(dy*xhat)),
    // the standard closed form for the biased-variance normalizer.
    const Eigen::RowVectorXd sum_dy = dy.colwise().sum();
    const Eigen::RowVectorXd sum_dy_xhat =
        (dy.array() * cache.xhat.array()).colwise().sum();
    Matrix dx = m * dy;
    dx.rowwise() -= sum_dy;
    dx -= (cache.xhat.array().rowwise() * sum_dy_xhat.array()).matrix();
    dx.array().rowwise() *=
        (p.gamma.transpose().array() * cache.inv_std.array()) / m;
    return dx;
}

// ---------------------------------------------------------------------------
// ReLU.

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

inline Matrix relu_forward(const Matrix& x, Matrix* mask) {
    if (mask) *mask = (x.array() > 0.0).cast<double>();
    return relu(x);
}

inline Matrix relu_backward(const Matrix& dy, const Matrix& mask) {
    return dy.cwiseProduct(mask);
}

// ---------------------------------------------------------------------------
// 1-D max pooling over the time dimension of a time-major sequence.
// Output length floor(T/window); a trailing remainder is dropped.

struct MaxPoolCache {
    IndexMatrix src_row;  // absolute input row of each output element
    Eigen::Index in_rows = 0;
};

inline Matrix maxpool1d_forward(const Matrix& x, Eigen::Index window,
                                Eigen::Index batch, MaxPoolCache* cache) {
    if (window < 1) throw std::invalid_argument("maxpool1d: window must be >= 1");
    if (x.rows() % batch != 0)
        throw std::invalid_argument("maxpool1d: rows not divisible by batch");
    const Eigen::Index t_in = x.rows() / batch;
    const Eigen::Index t_out = t_in / window;
    const Eigen::Index channels = x.cols();

    Matrix y(t_out * batch, channels);
    IndexMatrix src(t_out * batch, channels);
    for (Eigen::Index t = 0; t < t_out; ++t) {
        for (Eigen::Index b = 0; b < batch; ++b) {
            const Eigen::Index out_row = t * batch + b;
            for (Eigen::Index c = 0; c < channels; ++c) {
                Eigen::Index best = (t * window) * batch + b;
                double best_v = x(best, c);
                for (Eigen::Index j = 1; j < window; ++j) {
                    const Eigen::Index row = (t * window + j) * batch + b;
                    if (x(row, c) > best_v) {
                        best_v = x(row, c);
                        best = row;
                    }
                }
                y(out_row, c) = best_v;
                src(out_row, c) = best;
            }
        }
    }
    if (cache) {
        cache->src_row = std::move(src);
        cache->in_rows = x.rows();
    }
    return y;
}

inline Matrix maxpool1d_backward(const Matrix& dy, const MaxPoolCache& cache) {
    Matrix dx = Matrix::Zero(cache.in_rows, dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r)
        for (Eigen::Index c = 0; c < dy.cols(); ++c)
            dx(cache.src_row(r, c), c) += dy(r, c);
    return dx;
}

/// Convenience form for a single channel vector (batch 1).
inline std::vector<double> maxpool1d(const std::vector<double>& x,
                                     Eigen::Index window) {
    Matrix m(static_cast<Eigen::Index>(x.size()), 1);
    for (std::size_t i = 0; i < x.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = x[i];
    const Matrix y = maxpool1d_forward(m, window, 1, nullptr);
    std::vector<double> out(static_cast<std::size_t>(y.rows()));
    for (Eigen::Index i = 0; i < y.rows(); ++i) out[static_cast<std::size_t>(i)] = y(i, 0);
    return out;
}

// ---------------------------------------------------------------------------
// LSTM.  Four gate matrices act on the concatenation [h_prev, x_t]:
//
//   f = sigmoid([h,x] Wf^T + bf)        (forget)
//   i = sigmoid([h,x] Wi^T + bi)        (input)
//   c_bar = tanh([h,x] Wc^T + bc)       (candidate)
//   C = f (.) C_prev + i (.) c_bar      (cell)
//   o = sigmoid([h,x] Wo^T + bo)        (output)
//   h = o (.) tanh(C)

struct LSTMParams {
    Matrix w_f, w_i, w_c, w_o;  // hidden x (hidden + input)
    Vector b_f, b_i, b_c, b_o;

    Eigen::Index hidden() const { return w_f.rows(); }
    Eigen::Index input() const { return w_f.cols() - w_f.rows(); }
};

struct LSTMGrads {
    Matrix w_f, w_i, w_c, w_o;
    Vector b_f, b_i, b_c, b_o;
};

inline LSTMParams lstm_init(Eigen::Index input, Eigen::Index hidden, Rng& rng) {
    LSTMParams p;
    const Eigen::Index cols = hidden + input;
    for (Matrix* w : {&p.w_f, &p.w_i, &p.w_c, &p.w_o}) {
        w->resize(hidden, cols);
        glorot_init(*w, static_cast<double>(cols), static_cast<double>(hidden), rng);
    }
    p.b_f = Vector::Zero(hidden);
    p.b_i = Vector::Zero(hidden);
    p.b_c = Vector::Zero(hidden);
    p.b_o = Vector::Zero(hidden);
    return p;
}

inline LSTMGrads lstm_grads_like(const LSTMParams& p) {
    LSTMGrads g;
    g.w_f = Matrix::Zero(p.w_f.rows(), p.w_f.cols());
    g.w_i = g.w_f;
    g.w_c = g.w_f;
    g.w_o = g.w_f;
    g.b_f = Vector::Zero(p.b_f.size());
    g.b_i = g.b_f;
    g.b_c = g.b_f;
    g.b_o = g.b_f;
    return g;
}

struct LSTMStepCache {
    Matrix z;       // B x (H+F), the [h_prev, x_t] concatenation
    Matrix f, i, c_bar, o;
    Matrix c, tanh_c, c_prev;
};

/// One LSTM step for a batch of rows.  h_prev/c_prev are (B x H), x_t is
/// (B x F); outputs overwrite h_out/c_out.
inline void lstm_step(const Matrix& x_t, const Matrix& h_prev, const Matrix& c_prev,
                      const LSTMParams& p, Matrix& h_out, Matrix& c_out,
                      LSTMStepCache* cache) {
    const Eigen::Index batch = x_t.rows();
    const Eigen::Index hidden = p.hidden();
    if (x_t.cols() != p.input() || h_prev.cols() != hidden ||
        c_prev.cols() != hidden || h_prev.rows() != batch || c_prev.rows() != batch)
        throw std::invalid_argument("lstm_step: shape mismatch");

    Matrix z(batch, hidden + p.input());
    z << h_prev, x_t;

    Matrix f = sigmoid(((z * p.w_f.transpose()).rowwise() + p.b_f.transpose()).eval());
    Matrix i = sigmoid(((z * p.w_i.transpose()).rowwise() + p.b_i.transpose()).eval());
    Matrix c_bar =
        ((z * p.w_c.transpose()).rowwise() + p.b_c.transpose()).array().tanh();
    Matrix o = sigmoid(((z * p.w_o.transpose()).rowwise() + p.b_o.transpose()).eval());

    c_out = f.cwiseProduct(c_prev) + i.cwiseProduct(c_bar);
    Matrix tanh_c = c_out.array().tanh();
    h_out = o.cwiseProduct(tanh_c);

    if (cache) {
        cache->z = std::move(z);
        cache->f = std::move(f);
        cache->i = std::move(i);
        cache->c_bar = std::move(c_bar);
        cache->o = std::move(o);
        cache->c = c_out;
        cache->tanh_c = std::move(tanh_c);
        cache->c_prev = c_prev;
    }
}

/// Run an LSTM over a time-major sequence.  With `reversed` the steps are
/// visited last-to-first, but outputs are written back at their original
/// positions, so forward and reversed passes concatenate step-by-step.
inline Matrix lstm_sequence_forward(const Matrix& x, Eigen::Index batch,
                                    const LSTMParams& p, bool reversed,
                                    std::vector<LSTMStepCache>* caches) {
    if (x.rows() % batch != 0)
        throw std::invalid_argument("lstm: rows not divisible by batch");
    const Eigen::Index steps = x.rows() / batch;
    const Eigen::Index hidden = p.hidden();

    Matrix out(x.rows(), hidden);
    Matrix h = Matrix::Zero(batch, hidden);
    Matrix c = Matrix::Zero(batch, hidden);
    if (caches) caches->resize(static_cast<std::size_t>(steps));

    for (Eigen::Index s = 0; s < steps; ++s) {
        const Eigen::Index t = reversed ? steps - 1 - s : s;
        Matrix h_next, c_next;
        lstm_step(x.middleRows(t * batch, batch), h, c, p, h_next, c_next,
                  caches ? &(*caches)[static_cast<std::size_t>(s)] : nullptr);
        out.middleRows(t * batch, batch) = h_next;
        h = std::move(h_next);
        c = std::move(c_next);
    }
    return out;
}

/// Backpropagation through time for one direction.  `dh_seq` is aligned to
/// original positions (like the forward output); returns dx in the same
/// alignment and accumulates parameter gradients into `g`.
inline Matrix lstm_sequence_backward(const Matrix& dh_seq, Eigen::Index batch,
                                     const LSTMParams& p, bool reversed,
                                     const std::vector<LSTMStepCache>& caches,
                                     LSTMGrads& g) {
    const Eigen::Index steps = dh_seq.rows() / batch;
    const Eigen::Index hidden = p.hidden();
    const Eigen::Index input = p.input();

    Matrix dx(dh_seq.rows(), input);
    Matrix dh_carry = Matrix::Zero(batch, hidden);
    Matrix dc_carry = Matrix::Zero(batch, hidden);

    for (Eigen::Index s = steps - 1; s >= 0; --s) {
        const Eigen::Index t = reversed ? steps - 1 - s : s;
        const LSTMStepCache& cc = caches[static_cast<std::size_t>(s)];

        const Matrix dh = dh_seq.middleRows(t * batch, batch) + dh_carry;
        const Matrix d_o = dh.cwiseProduct(cc.tanh_c);
        Matrix dc = dc_carry + dh.cwiseProduct(cc.o).cwiseProduct(
                                   (1.0 - cc.tanh_c.array().square()).matrix());

        const Matrix df = dc.cwiseProduct(cc.c_prev);
        const Matrix di = dc.cwiseProduct(cc.c_bar);
        const Matrix dc_bar = dc.cwiseProduct(cc.i);
        dc_carry = dc.cwiseProduct(cc.f);

        // Through the gate nonlinearities to the pre-activations.
        const Matrix az_f =
            df.cwiseProduct(cc.f).cwiseProduct((1.0 - cc.f.array()).matrix());
        const Matrix az_i =
            di.cwiseProduct(cc.i).cwiseProduct((1.0 - cc.i.array()).matrix());
        const Matrix az_c =
            dc_bar.cwiseProduct((1.0 - cc.c_bar.array().square()).matrix());
        const Matrix az_o =
            d_o.cwiseProduct(cc.o).cwiseProduct((1.0 - cc.o.array()).matrix());

        g.w_f += az_f.transpose() * cc.z;
        g.w_i += az_i.transpose() * cc.z;
        g.w_c += az_c.transpose() * cc.z;
        g.w_o += az_o.transpose() * cc.z;
        g.b_f += az_f.colwise().sum().transpose();
        g.b_i += az_i.colwise().sum().transpose();
        g.b_c += az_c.colwise().sum().transpose();
        g.b_o += az_o.colwise().sum().transpose();

        const Matrix dz =
            az_f * p.w_f + az_i * p.w_i + az_c * p.w_c + az_o * p.w_o;
        dh_carry = dz.leftCols(hidden);
        dx.middleRows(t * batch, batch) = dz.rightCols(input);
    }
    return dx;
}

struct BiLSTMCache {
    std::vector<LSTMStepCache> fwd, bwd;
};

/// Bidirectional LSTM: per-step concatenation [forward(t), backward(t)],
/// both directions starting from zero state.
inline Matrix bilstm_forward(const Matrix& x, Eigen::Index batch,
                             const LSTMParams& fwd, const LSTMParams& bwd,
                             BiLSTMCache* cache) {
    const Matrix hf = lstm_sequence_forward(x, batch, fwd, false,
                                            cache ? &cache->fwd : nullptr);
    const Matrix hb = lstm_sequence_forward(x, batch, bwd, true,
                                            cache ? &cache->bwd : nullptr);
    Matrix out(x.rows(), hf.cols() + hb.cols());
    out << hf, hb;
    return out;
}

inline Matrix bilstm_backward(const Matrix& dy, Eigen::Index batch,
                              const LSTMParams& fwd, const LSTMParams& bwd,
                              const BiLSTMCache& cache, LSTMGrads& g_fwd,
                              LSTMGrads& g_bwd) {
    const Eigen::Index hidden = fwd.hidden();
    Matrix dx = lstm_sequence_backward(dy.leftCols(hidden), batch, fwd, false,
                                       cache.fwd, g_fwd);
    dx += lstm_sequence_backward(dy.rightCols(hidden), batch, bwd, true,
                                 cache.bwd, g_bwd);
    return dx;
}

// ---------------------------------------------------------------------------
// Dense layer with logistic outputs.

struct DenseParams {
    Matrix w;  // out x in
    Vector b;
};

struct DenseGrads {
    Matrix w;
    Vector b;
};

inline DenseParams dense_init(Eigen::Index input, Eigen::Index output, Rng& rng) {
    DenseParams p;
    p.w.resize(output, input);
    glorot_init(p.w, static_cast<double>(input), static_cast<double>(output), rng);
    p.b = Vector::Zero(output);
    return p;
}

struct DenseCache {
    Matrix x;  // forward input
    Matrix y;  // sigmoid output
};

inline Matrix dense_forward(const Matrix& x, const DenseParams& p,
                            DenseCache* cache) {
    if (x.cols() != p.w.cols())
        throw std::invalid_argument("dense: shape mismatch");
    Matrix y = sigmoid(((x * p.w.transpose()).rowwise() + p.b.transpose()).eval());
    if (cache) {
        cache->x = x;
        cache->y = y;
    }
    return y;
}

inline Matrix dense_backward(const Matrix& dy, const DenseParams& p,
                             const DenseCache& cache, DenseGrads& g) {
    // Through the sigmoid: dpre = dy * y * (1-y).
    const Matrix dpre =
        dy.cwiseProduct(cache.y).cwiseProduct((1.0 - cache.y.array()).matrix());
    g.w += dpre.transpose() * cache.x;
    g.b += dpre.colwise().sum().transpose();
    return dpre * p.w;
}

// ---------------------------------------------------------------------------
// Mean squared error over every entry: (1/(m*n)) sum of squared residuals
// with m entries per sample and n samples.

inline double mse_loss(const Matrix& pred, const Matrix& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw std::invalid_argument("mse_loss: shape mismatch");
    const double denom = static_cast<double>(pred.rows() * pred.cols());
    return (pred - truth).array().square().sum() / denom;
}

inline Matrix mse_grad(const Matrix& pred, const Matrix& truth) {
    const double denom = static_cast<double>(pred.rows() * pred.cols());
    return (2.0 / denom) * (pred - truth);
}

}  // namespace rydfdm::nn
