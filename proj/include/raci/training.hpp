#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "raci/predictor.hpp"

namespace raci {

struct TrainConfig {
    double lr = 0.001;
    int batch_size = 32;
    int epochs = 0;
    std::uint64_t seed = 0;
    // adaptive-moment constants, pinned for determinism
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 0.0;  // max global gradient norm, 0 disables clipping

    void validate() const;  // throws std::invalid_argument
};

struct AdamState {
    std::vector<Eigen::MatrixXd> m, v;  // one per parameter block
    long step = 0;
};

struct EpochStats {
    double mean_loss = 0.0;      // observed-position-weighted over the epoch
    double fallback_rate = 0.0;  // share of forwards with an empty candidate set
};

// Full optimization state; save + resume reproduces the uninterrupted run
// bitwise (the optimizer moments, step and epoch counters all persist).
struct RunState {
    ParamStore params;
    AdamState opt;
    int epoch = 0;  // epochs completed so far
    std::vector<EpochStats> history;
    std::uint64_t pool_fingerprint = 0;  // pool of the last completed epoch
    RaciConfig model;
    TrainConfig train;
    FeatureScaler scaler;  // fit on the train split, applied to every forward
    bool baseline = false;
    long leakage_violations = 0;  // audited over every logged retrieval
};

// Mean of (yhat - y)^2 over mask = 1 positions; throws on an all-zero mask.
double masked_mse(const Eigen::VectorXd& yhat, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& mask);

// Per epoch: rebuild the retrieval pool from current parameters, shuffle the
// train keys with an epoch-derived stream, iterate sorted batches, minimize
// the pooled masked MSE with the adaptive-moment rule. Deterministic given
// (dataset, configs, seed).
RunState train(const Dataset& ds, const RaciConfig& mcfg, const TrainConfig& tcfg);

// Same loop for the plain-LSTM reference (no pool, no neighbor context).
RunState train_baseline(const Dataset& ds, const RaciConfig& mcfg, const TrainConfig& tcfg);

// Continues optimization from a checkpoint on a second dataset while the
// retrieval pool keeps being built from the first dataset's auxiliary split.
// Optimizer moments and the epoch counter carry over, so fine-tuning on the
// original dataset equals simply training for the extra epochs.
RunState fine_tune(const RunState& checkpoint, const Dataset& first_ds, const Dataset& second_ds,
                   const TrainConfig& tcfg);

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
};

// Central finite differences (default step 1e-5) of the pooled masked MSE on
// one batch vs. the tape gradient, dropout disabled, pool frozen. Relative
// error per scalar: |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8). Throws on a
// non-finite analytic gradient, naming the block.
GradCheckResult grad_check(const Dataset& ds, const std::vector<SampleKey>& batch,
                           const RaciConfig& cfg, ParamStore& params, double step = 1e-5);

struct McDropoutResult {
    Eigen::VectorXd mean;  // per day
    Eigen::VectorXd std;   // per day, sample (n-1) standard deviation
    double spread_ratio = 0.0;  // mean(std) / mean(|mean|)
};

// T stochastic forward passes with dropout active at rate p; deterministic
// given the seed (pass t draws its masks from stream (seed, "mc/t<t>", key)).
McDropoutResult mc_dropout_predict(const RunState& checkpoint, const Dataset& ds,
                                   const SampleKey& key, double p, int T, std::uint64_t seed);

}  // namespace raci
