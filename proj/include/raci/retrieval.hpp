#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "raci/config.hpp"
#include "raci/dataset.hpp"
#include "raci/params.hpp"
#include "raci/tape.hpp"

namespace raci {

double haversine_km(double lat1, double lon1, double lat2, double lon2);

// k nearest sites by great-circle distance (self excluded, ties by ascending
// site_id); lists are nearest-first with length min(k, n_sites - 1).
struct NeighborIndex {
    int k = 8;
    std::map<std::string, std::vector<std::string>> neighbors;
};

NeighborIndex build_neighbor_index(const std::map<std::string, SiteMeta>& sites, int k);

// ytilde = y / (mean |y| over mask=1 positions + 1e-6), masked positions 0.
Eigen::VectorXd normalize_trajectory(const Eigen::VectorXd& y, const Eigen::VectorXd& mask);

struct PoolEntry {
    std::string site_id;
    int year = 0;
    Eigen::VectorXd embedding;  // h, yearly embedding under the build parameters
    Eigen::VectorXd traj;       // days_per_year, magnitude-normalized target
};

// Frozen auxiliary retrieval pool: entries plus the PCA used for similarity
// filtering. param_fingerprint records the parameters the embeddings were
// computed under; queries against other parameters are a staleness error.
struct RetrievalPool {
    std::vector<PoolEntry> entries;
    Eigen::VectorXd pca_mean;  // h
    Eigen::MatrixXd pca_proj;  // h x k_pca, orthonormal columns
    double tau = 0.99;
    int k_pca = 4;
    std::string built_from;  // split identifier
    std::uint64_t param_fingerprint = 0;
    std::vector<SampleKey> skipped;  // all-masked trajectories, excluded

    // Never-matching pool (no entries) carrying a fingerprint; retrieval
    // against it always falls back to C^(Y) = 0.
    static RetrievalPool empty(const RaciConfig& cfg, std::uint64_t fingerprint);
};

// Encodes every auxiliary sample through the hierarchy (sorted by key,
// dropout-free), fits PCA on the centered yearly embeddings via SVD, and
// stores normalized trajectories.
RetrievalPool build_pool(const Dataset& ds, const ParamStore& params, const RaciConfig& cfg);

// Per-query log: similarity to every pool entry, the thresholded candidate
// set, attention weights over it, and the empty-set fallback flag.
struct RetrievalReport {
    Eigen::VectorXd sims;            // one per pool entry
    std::vector<int> candidates;     // indices into pool.entries
    Eigen::VectorXd weights;         // attention weights over candidates
    bool fallback = false;
};

// Builds the C^(Y) trajectory node (1 x days_per_year) for a target yearly
// embedding node. Candidate selection (cosine similarity in PCA space,
// sim > tau, leakage exclusions) runs on values; attention runs on the tape
// over full h-dimensional embeddings so gradients reach the query pathway.
// Throws std::runtime_error when pool.param_fingerprint != designated_fp.
int retrieve_yearly(Tape& t, int h_yearly, const SampleKey& target, const RetrievalPool& pool,
                    int days_per_year, std::uint64_t designated_fp, RetrievalReport* report);

// Value-level similarity of an embedding to every pool entry (PCA space).
Eigen::VectorXd pool_similarities(const RetrievalPool& pool, const Eigen::VectorXd& embedding);

// Frozen spatial-context table: refined monthly embeddings (12 x h) of every
// site-year, computed one-pass (no spatial context of their own, no dropout)
// under a parameter snapshot. Neighbor keys for C^(M) are read from here, so
// gradients never flow through neighbor subgraphs -- mirroring how the
// retrieval pool freezes yearly embeddings. Refreshed on the same cadence as
// the pool (every training epoch; once per evaluation).
struct MonthlyContextTable {
    std::map<SampleKey, Eigen::MatrixXd> rows;
    std::uint64_t param_fingerprint = 0;
};

MonthlyContextTable build_monthly_table(const Dataset& ds, const ParamStore& params,
                                        const RaciConfig& cfg);

}  // namespace raci
