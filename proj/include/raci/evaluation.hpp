#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

#include "raci/training.hpp"

namespace raci {

// sqrt(mean squared error over mask = 1 positions); throws on an empty mask.
double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs, const Eigen::VectorXd& mask);

// One site's pooled series across every sample of a split.
struct SiteSeries {
    Eigen::VectorXd pred, obs, mask;
};

// R^2 = 1 - SSE/SST with numerator and denominator pooled across sites and
// the baseline mean computed per site over its masked positions. Sites whose
// within-site variance is exactly zero are excluded from both sums and
// counted into *n_skipped. Throws when every site is zero-variance.
double within_site_r2(const std::map<std::string, SiteSeries>& by_site, int* n_skipped = nullptr);

// Pearson correlation; a constant series on either side yields 0 with
// *flagged set (the convention for undefined correlations).
double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b, bool* flagged = nullptr);

struct GroupMetrics {
    double rmse = 0.0;
    double r2 = 0.0;  // NaN when every site in the group is zero-variance
    long n_obs = 0;
    int n_sites_skipped = 0;
};

struct MetricsReport {
    double rmse = 0.0;
    double r2 = 0.0;
    int n_sites_skipped = 0;
    double fallback_rate = 0.0;
    std::map<std::string, GroupMetrics> groups;  // by region_tag
    // provenance
    std::string checkpoint_id;  // parameter fingerprint, hex
    std::string split;
    RaciConfig config;
};

// Eval-mode forwards over the split with the retrieval pool rebuilt once from
// the checkpoint parameters; overall and per-region metrics. Deterministic.
MetricsReport evaluate(const RunState& st, const Dataset& ds, const std::vector<SampleKey>& split,
                       const std::string& split_name);

struct AblationRow {
    std::string variant;
    double rmse = 0.0;
    double r2 = 0.0;
    double fallback_rate = 0.0;
};

// Trains {Full, -Temporal, -Monthly, -Yearly, -Both} from the same seed and
// TrainConfig, evaluates each on the test split.
std::vector<AblationRow> ablation_suite(const Dataset& ds, const RaciConfig& base,
                                        const TrainConfig& tcfg);

struct SweepRow {
    std::string knob;  // "tau" or "k_pca"
    double value = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
};

// One-knob-at-a-time sweep around the base config; settings that coincide
// (the shared default cell) are trained once and reported in both sub-tables.
std::vector<SweepRow> sensitivity_sweep(const Dataset& ds, const RaciConfig& base,
                                        const TrainConfig& tcfg, const std::vector<double>& taus,
                                        const std::vector<int>& k_pcas);

struct AttentionExport {
    SampleKey key;
    Eigen::VectorXd alpha_daily;  // days; concatenated per-month aggregation weights
    Eigen::VectorXd alpha_m2y;    // 12
    Eigen::VectorXd beta_y2m;     // 12
    Eigen::VectorXd beta_m2d;     // days
    Eigen::VectorXd retr_sims;    // one per pool entry
    std::vector<int> retr_candidates;
    Eigen::VectorXd retr_weights;
    bool fallback = false;
    std::vector<std::string> driver_names;  // daily feature columns
    Eigen::VectorXd driver_corr;            // Pearson(alpha_daily, column)
    std::vector<bool> corr_flagged;         // constant-series convention hit
};

// Eval-mode attention/gate/retrieval records for one sample.
AttentionExport export_attention(const RunState& st, const Dataset& ds, const SampleKey& key);

}  // namespace raci
