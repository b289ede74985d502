#pragma once

// Network assembly: conv1d -> batchnorm -> ReLU -> maxpool -> Bi-LSTM ->
// dense+sigmoid, with a flat parameter view in a fixed manifest order used
// by the optimizer, the finite-difference checks, and the checkpoint file.
//
// The dense layer reads the last time step of the Bi-LSTM output sequence;
// each sigmoid output is one bin's phase bit, thresholded at 0.5 when
// decoding.

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <vector>

#include "rydfdm/atom.hpp"
#include "rydfdm/codec.hpp"
#include "rydfdm/nn/layers.hpp"
#include "rydfdm/rng.hpp"

namespace rydfdm::nn {

struct NetConfig {
    Eigen::Index input_len = 1000;
    Eigen::Index conv_filters = 32;
    Eigen::Index kernel_len = 16;
    Eigen::Index pool_window = 4;
    Eigen::Index lstm_hidden = 32;
    Eigen::Index n_bins = 4;

    Eigen::Index conv_out_len() const { return input_len - kernel_len + 1; }
    Eigen::Index pooled_len() const { return conv_out_len() / pool_window; }

    void validate() const {
        if (input_len < kernel_len)
            throw std::invalid_argument("NetConfig: input shorter than kernel");
        if (conv_filters < 1 || kernel_len < 1 || pool_window < 1 ||
            lstm_hidden < 1 || n_bins < 2)
            throw std::invalid_argument("NetConfig: sizes must be positive");
        if (pooled_len() < 1)
            throw std::invalid_argument("NetConfig: pooling empties the sequence");
    }
};

struct NetworkState {
    NetConfig cfg;
    Conv1DParams conv;
    BatchNormParams bn;
    LSTMParams lstm_fwd, lstm_bwd;
    DenseParams dense;
};

inline NetworkState init_network(const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    NetworkState s;
    s.cfg = cfg;
    s.conv = conv1d_init(cfg.conv_filters, cfg.kernel_len, rng);
    s.bn = batchnorm_init(cfg.conv_filters);
    s.lstm_fwd = lstm_init(cfg.conv_filters, cfg.lstm_hidden, rng);
    s.lstm_bwd = lstm_init(cfg.conv_filters, cfg.lstm_hidden, rng);
    s.dense = dense_init(2 * cfg.lstm_hidden, cfg.n_bins, rng);
    return s;
}

struct Gradients {
    Conv1DGrads conv;
    BatchNormGrads bn;
    LSTMGrads lstm_fwd, lstm_bwd;
    DenseGrads dense;
};

inline Gradients zero_gradients(const NetworkState& s) {
    Gradients g;
    g.conv.w = Matrix::Zero(s.conv.w.rows(), s.conv.w.cols());
    g.conv.b = Vector::Zero(s.conv.b.size());
    g.bn.gamma = Vector::Zero(s.bn.gamma.size());
    g.bn.beta = Vector::Zero(s.bn.beta.size());
    g.lstm_fwd = lstm_grads_like(s.lstm_fwd);
    g.lstm_bwd = lstm_grads_like(s.lstm_bwd);
    g.dense.w = Matrix::Zero(s.dense.w.rows(), s.dense.w.cols());
    g.dense.b = Vector::Zero(s.dense.b.size());
    return g;
}

// ---------------------------------------------------------------------------
// Flat parameter traversal.  Everything that trains appears here, in the
// order that defines the checkpoint blob layout.  Batch-norm running
// statistics are state, not parameters, and are serialized separately.

template <typename State, typename Fn>
void for_each_param_matrix(State& s, Fn&& fn) {
    fn(s.conv.w);
    fn(s.conv.b);
    fn(s.bn.gamma);
    fn(s.bn.beta);
    for (auto* l : {&s.lstm_fwd, &s.lstm_bwd}) {
        fn(l->w_f);
        fn(l->w_i);
        fn(l->w_c);
        fn(l->w_o);
        fn(l->b_f);
        fn(l->b_i);
        fn(l->b_c);
        fn(l->b_o);
    }
    fn(s.dense.w);
    fn(s.dense.b);
}

/// Pointer+size views over every parameter, in manifest order.  Gradients
/// expose the identical structure, so zipping two view lists pairs each
/// parameter with its gradient.
struct ParamView {
    double* data;
    Eigen::Index size;
};

template <typename State>
std::vector<ParamView> param_views(State& s) {
    std::vector<ParamView> views;
    for_each_param_matrix(s, [&](auto& m) {
        views.push_back(ParamView{const_cast<double*>(m.data()), m.size()});
    });
    return views;
}

inline Eigen::Index param_count(const NetworkState& s) {
    Eigen::Index n = 0;
    for_each_param_matrix(const_cast<NetworkState&>(s),
                          [&](auto& m) { n += m.size(); });
    return n;
}

// ---------------------------------------------------------------------------
// Forward / backward.

struct Workspace {
    Conv1DCache conv;
    BatchNormCache bn;
    Matrix relu_mask;
    MaxPoolCache pool;
    BiLSTMCache bilstm;
    Matrix last_step;  // dense input (B x 2H)
    DenseCache dense;
    Eigen::Index batch = 0;
};

/// Training-mode forward: batch statistics in the normalizer (running stats
/// updated in place), caches filled for backward.
inline Matrix forward_train(NetworkState& s, const Matrix& x, Workspace& ws) {
    if (x.cols() != s.cfg.input_len)
        throw std::invalid_argument("forward: input length mismatch");
    ws.batch = x.rows();
    Matrix a = conv1d_forward(x, s.conv, &ws.conv);
    a = batchnorm_forward_train(a, s.bn, ws.bn);
    a = relu_forward(a, &ws.relu_mask);
    a = maxpool1d_forward(a, s.cfg.pool_window, ws.batch, &ws.pool);
    a = bilstm_forward(a, ws.batch, s.lstm_fwd, s.lstm_bwd, &ws.bilstm);
    const Eigen::Index steps = a.rows() / ws.batch;
    ws.last_step = a.middleRows((steps - 1) * ws.batch, ws.batch);
    return dense_forward(ws.last_step, s.dense, &ws.dense);
}

/// Inference-mode forward: running statistics, no caches, state untouched.
inline Matrix forward_infer(const NetworkState& s, const Matrix& x) {
    if (x.cols() != s.cfg.input_len)
        throw std::invalid_argument("forward: input length mismatch");
    const Eigen::Index batch = x.rows();
    Matrix a = conv1d_forward(x, s.conv, nullptr);
    a = batchnorm_forward_infer(a, s.bn);
    a = relu(a);
    a = maxpool1d_forward(a, s.cfg.pool_window, batch, nullptr);
    a = bilstm_forward(a, batch, s.lstm_fwd, s.lstm_bwd, nullptr);
    const Eigen::Index steps = a.rows() / batch;
    return dense_forward(a.middleRows((steps - 1) * batch, batch), s.dense, nullptr);
}

/// Reverse pass for the most recent forward_train call; accumulates into g.
inline void backward(const NetworkState& s, const Workspace& ws, const Matrix& dy,
                     Gradients& g) {
    Matrix d = dense_backward(dy, s.dense, ws.dense, g.dense);

    // Distribute the last-step gradient into the full Bi-LSTM sequence.
    const Eigen::Index seq_rows = s.cfg.pooled_len() * ws.batch;
    Matrix d_seq = Matrix::Zero(seq_rows, 2 * s.cfg.lstm_hidden);
    d_seq.bottomRows(ws.batch) = d;

    d = bilstm_backward(d_seq, ws.batch, s.lstm_fwd, s.lstm_bwd, ws.bilstm,
                        g.lstm_fwd, g.lstm_bwd);
    d = maxpool1d_backward(d, ws.pool);
    d = relu_backward(d, ws.relu_mask);
    d = batchnorm_backward(d, s.bn, ws.bn, g.bn);
    conv1d_backward(d, s.conv, ws.conv, g.conv);
}

// ---------------------------------------------------------------------------
// Decoding.

/// Scale, run in inference mode, threshold at 0.5 (ties decode to 0).
inline Frame predict_bits(const NetworkState& s, const Spectrum& spectrum) {
    if (static_cast<Eigen::Index>(spectrum.samples.size()) != s.cfg.input_len)
        throw std::invalid_argument("predict_bits: spectrum length mismatch");
    const std::vector<double> scaled = minmax_scale(spectrum.samples);
    Matrix x(1, s.cfg.input_len);
    for (Eigen::Index i = 0; i < s.cfg.input_len; ++i)
        x(0, i) = scaled[static_cast<std::size_t>(i)];
    const Matrix y = forward_infer(s, x);
    std::vector<double> raw(static_cast<std::size_t>(y.cols()));
    for (Eigen::Index j = 0; j < y.cols(); ++j)
        raw[static_cast<std::size_t>(j)] = y(0, j);
    return decode_label(raw, 0.5);
}

/// Batched variant used by the evaluation suite: rows of `x` are already
/// min-max scaled spectra; returns one frame per row.
inline std::vector<Frame> predict_bits_batch(const NetworkState& s, const Matrix& x) {
    const Matrix y = forward_infer(s, x);
    std::vector<Frame> frames;
    frames.reserve(static_cast<std::size_t>(y.rows()));
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        std::vector<double> raw(static_cast<std::size_t>(y.cols()));
        for (Eigen::Index j = 0; j < y.cols(); ++j)
            raw[static_cast<std::size_t>(j)] = y(r, j);
        frames.push_back(decode_label(raw, 0.5));
    }
    return frames;
}

}  // namespace rydfdm::nn
