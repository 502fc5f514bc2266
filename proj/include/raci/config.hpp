#pragma once

namespace raci {

// Model hyperparameters and ablation switches. Defaults follow the reference
// configuration (hidden width 32, 3-layer LSTM head, dropout 0.1, k-NN 8,
// 4 principal components, similarity threshold 0.99).
struct RaciConfig {
    int h = 32;
    int lstm_layers = 3;
    double dropout_p = 0.1;
    int k_neighbors = 8;
    int k_pca = 4;
    double tau = 0.99;

    // Ablations: use_temporal=false turns attention aggregation into
    // unweighted means and gated propagation into unit-gate addition;
    // use_monthly_ctx=false zeroes the neighbor context C^(M);
    // use_yearly_ctx=false zeroes the retrieved context C^(Y).
    bool use_temporal = true;
    bool use_monthly_ctx = true;
    bool use_yearly_ctx = true;

    void validate() const;  // throws std::invalid_argument
};

}  // namespace raci
