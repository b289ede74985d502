#pragma once

// RMSprop with a reduce-on-plateau learning-rate schedule.
//
//   acc <- decay * acc + (1 - decay) * g^2
//   w   <- w - lr * g / sqrt(acc + eps)
//
// The learning rate starts at `lr` and is multiplied by `plateau_factor`
// each time the minimum validation loss fails to improve for
// `plateau_patience` consecutive epochs.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rydfdm/nn/network.hpp"

namespace rydfdm::nn {

struct TrainConfig {
    Eigen::Index batch_size = 64;
    double lr = 0.001;
    int plateau_patience = 10;
    double plateau_factor = 0.1;
    int epochs = 60;
    std::uint64_t seed = 1;
    double augment_sigma = 0.5;
    double rmsprop_decay = 0.9;
    double rmsprop_eps = 1e-8;

    void validate() const {
        if (batch_size < 1 || epochs < 1 || plateau_patience < 1)
            throw std::invalid_argument("TrainConfig: counts must be positive");
        if (!(lr > 0.0) || !(rmsprop_decay > 0.0) || !(rmsprop_eps > 0.0))
            throw std::invalid_argument("TrainConfig: rates must be positive");
        if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
            throw std::invalid_argument("TrainConfig: plateau_factor must be in (0,1)");
        if (augment_sigma < 0.0)
            throw std::invalid_argument("TrainConfig: augment_sigma must be >= 0");
    }
};

/// Squared-gradient accumulators, mirroring the parameter layout.
struct RmsState {
    std::vector<Vector> acc;
};

inline RmsState rms_init(const NetworkState& s) {
    RmsState r;
    for_each_param_matrix(const_cast<NetworkState&>(s), [&](auto& m) {
        r.acc.push_back(Vector::Zero(m.size()));
    });
    return r;
}

/// One RMSprop update over every parameter, gradients zipped by position.
inline void rmsprop_step(NetworkState& s, const Gradients& g, RmsState& r,
                         double lr, const TrainConfig& cfg) {
    const std::vector<ParamView> params = param_views(s);
    const std::vector<ParamView> grads = param_views(const_cast<Gradients&>(g));
    if (params.size() != grads.size() || params.size() != r.acc.size())
        throw std::invalid_argument("rmsprop_step: state/gradient layout mismatch");

    for (std::size_t k = 0; k < params.size(); ++k) {
        double* w = params[k].data;
        const double* gv = grads[k].data;
        Vector& acc = r.acc[k];
        for (Eigen::Index i = 0; i < params[k].size; ++i) {
            acc[i] = cfg.rmsprop_decay * acc[i] +
                     (1.0 - cfg.rmsprop_decay) * gv[i] * gv[i];
            w[i] -= lr * gv[i] / std::sqrt(acc[i] + cfg.rmsprop_eps);
        }
    }
}

/// Learning rate implied by a validation-loss history under the
/// reduce-on-plateau rule.  Pure function of the history so the incremental
/// trainer and the tests share one definition.
inline double plateau_lr(const std::vector<double>& history, const TrainConfig& cfg) {
    if (history.empty())
        throw std::invalid_argument("plateau_lr: history must be nonempty");
    double lr = cfg.lr;
    double best = history[0];
    int streak = 0;
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (history[i] < best) {
            best = history[i];
            streak = 0;
        } else if (++streak >= cfg.plateau_patience) {
            lr *= cfg.plateau_factor;
            streak = 0;
        }
    }
    return lr;
}

}  // namespace rydfdm::nn
