#pragma once

// Training loop: seeded shuffling, per-epoch Gaussian augmentation,
// mini-batch RMSprop, validation tracking, and the reduce-on-plateau
// schedule.  Deterministic: two runs with one seed produce bit-identical
// parameters and loss curves.

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "rydfdm/nn/network.hpp"
#include "rydfdm/nn/optimizer.hpp"
#include "rydfdm/util.hpp"

namespace rydfdm::nn {

/// Mini-batch-ready dataset: one sample per row, inputs already scaled to
/// [0,1], labels as dense 0/1 bin vectors (reference column included).
struct LabeledData {
    Matrix x;  // samples x input_len
    Matrix y;  // samples x n_bins

    Eigen::Index size() const { return x.rows(); }

    void validate() const {
        if (x.rows() != y.rows())
            throw std::invalid_argument("LabeledData: input/label count mismatch");
        if (x.rows() < 1) throw std::invalid_argument("LabeledData: empty dataset");
    }
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_mse = 0.0;
    double val_mse = 0.0;
    double lr = 0.0;  // rate used during this epoch
};

struct TrainResult {
    NetworkState state;
    std::vector<EpochStats> curve;
};

/// Mean squared error of the inference-mode network over a dataset,
/// evaluated in fixed-size chunks to bound memory.
inline double evaluate_mse(const NetworkState& s, const LabeledData& data,
                           Eigen::Index chunk = 128) {
    double sum = 0.0;
    for (Eigen::Index start = 0; start < data.size(); start += chunk) {
        const Eigen::Index b = std::min(chunk, data.size() - start);
        const Matrix pred = forward_infer(s, data.x.middleRows(start, b));
        sum += mse_loss(pred, data.y.middleRows(start, b)) * static_cast<double>(b);
    }
    return sum / static_cast<double>(data.size());
}

inline TrainResult fit_model(const LabeledData& train, const LabeledData& val,
                             const NetConfig& net_cfg, const TrainConfig& cfg) {
    train.validate();
    val.validate();
    cfg.validate();
    if (train.y.cols() != net_cfg.n_bins || val.y.cols() != net_cfg.n_bins)
        throw std::invalid_argument("fit_model: label width != n_bins");

    Rng rng(cfg.seed);
    TrainResult result;
    result.state = init_network(net_cfg, rng);
    RmsState rms = rms_init(result.state);

    const Eigen::Index n = train.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> val_history;
    Workspace ws;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr =
            val_history.empty() ? cfg.lr : plateau_lr(val_history, cfg);

        shuffle(order, rng);
        double loss_sum = 0.0;
        for (Eigen::Index start = 0; start < n;) {
            Eigen::Index b = std::min(cfg.batch_size, n - start);
            // Batch normalization needs >= 2 rows; absorb an orphan trailing
            // sample into this batch instead of emitting a singleton batch.
            if (n - start - b == 1) ++b;
            Matrix xb(b, net_cfg.input_len);
            Matrix yb(b, net_cfg.n_bins);
            for (Eigen::Index r = 0; r < b; ++r) {
                const Eigen::Index src = order[static_cast<std::size_t>(start + r)];
                xb.row(r) = train.x.row(src);
                yb.row(r) = train.y.row(src);
            }
            if (cfg.augment_sigma > 0.0)
                for (Eigen::Index r = 0; r < b; ++r)
                    for (Eigen::Index c = 0; c < xb.cols(); ++c)
                        xb(r, c) += rng.normal(0.0, cfg.augment_sigma);

            const Matrix pred = forward_train(result.state, xb, ws);
            loss_sum += mse_loss(pred, yb) * static_cast<double>(b);

            Gradients g = zero_gradients(result.state);
            backward(result.state, ws, mse_grad(pred, yb), g);
            rmsprop_step(result.state, g, rms, lr, cfg);
            start += b;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_mse = loss_sum / static_cast<double>(n);
        stats.val_mse = evaluate_mse(result.state, val);
        stats.lr = lr;
        result.curve.push_back(stats);
        val_history.push_back(stats.val_mse);
    }
    return result;
}

/// Loss curves in the documented CSV layout: epoch, train_mse, val_mse, lr.
/// A non-empty run_id becomes a leading `# run <id>` comment line.
inline void write_loss_csv(const std::string& path,
                           const std::vector<EpochStats>& curve,
                           const std::string& run_id = "") {
    std::string out;
    if (!run_id.empty()) out += "# run " + run_id + "\n";
    out += "epoch,train_mse,val_mse,lr\n";
    for (const EpochStats& e : curve) {
        out += std::to_string(e.epoch);
        out += ',';
        out += fmt_g(e.train_mse);
        out += ',';
        out += fmt_g(e.val_mse);
        out += ',';
        out += fmt_g(e.lr);
        out += '\n';
    }
    write_file(path, out);
}

}  // namespace rydfdm::nn
