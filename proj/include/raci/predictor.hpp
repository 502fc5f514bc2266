#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "raci/config.hpp"
#include "raci/dataset.hpp"
#include "raci/hierarchy.hpp"
#include "raci/retrieval.hpp"
#include "raci/rng.hpp"

namespace raci {

// train draws dropout masks from the supplied stream; eval is deterministic.
// MC-dropout inference is train mode with a dedicated stream.
enum class RunMode { train, eval };

// Everything a forward pass needs besides the sample itself. The designated
// fingerprint pins which parameter snapshot the frozen context structures
// (retrieval pool, monthly table) must have been built from (epoch start
// during training, the checkpoint at evaluation).
struct ForwardContext {
    const Dataset* ds = nullptr;
    const NeighborIndex* neighbors = nullptr;
    const RetrievalPool* pool = nullptr;
    const MonthlyContextTable* monthly = nullptr;  // required when use_monthly_ctx
    std::uint64_t designated_fingerprint = 0;
};

struct ForwardDiagnostics {
    HierarchicalEmbedding emb;
    RetrievalReport retrieval;
    Eigen::VectorXd spatial_gate;  // 12; zero where the neighbor set was empty
    Eigen::MatrixXd c_monthly;     // 12 x h neighbor context (zero when absent)
    int pred_node = -1;            // days x 1 node on the tape
};

// Registers every RACI parameter block in a fixed order (encoders, attention
// blocks, gates, retrieval attention, LSTM stack, readout).
void register_raci_params(ParamStore& ps, int d_daily, int d_monthly, int d_regime,
                          const RaciConfig& cfg);

// Registered + initialized uniform(+-1/sqrt(fan_in)) from stream (seed, "init").
ParamStore make_raci_params(const Dataset& ds, const RaciConfig& cfg, std::uint64_t seed);

// Full pipeline: embed -> aggregate (d->m, m->y) -> retrieve C^(Y) ->
// propagate (y->m) -> inject neighbor context C^(M) -> propagate (m->d) ->
// LSTM over [h_daily_tilde_t ; C^(Y)_t] -> affine readout. Returns the
// days x 1 prediction node; the tape must be bound to the parameter store.
int raci_forward(Tape& t, const SiteYearSample& s, const ForwardContext& ctx,
                 const RaciConfig& cfg, RunMode mode, RngStream* dropout_rng,
                 ForwardDiagnostics* diag);

// Value-level convenience wrapper (eval mode, no dropout).
Eigen::VectorXd raci_predict(const SiteYearSample& s, const ForwardContext& ctx,
                             const ParamStore& params, const RaciConfig& cfg,
                             ForwardDiagnostics* diag = nullptr);

// Reference baseline: the same stacked-LSTM head run directly on monthly/
// yearly/static blocks replicated to daily resolution (no hierarchy, no
// retrieval).
void register_baseline_params(ParamStore& ps, int d_input, const RaciConfig& cfg);
ParamStore make_baseline_params(const Dataset& ds, const RaciConfig& cfg, std::uint64_t seed);
int baseline_forward(Tape& t, const SiteYearSample& s, const CalendarSpec& cal,
                     const RaciConfig& cfg, RunMode mode, RngStream* dropout_rng);
Eigen::VectorXd baseline_predict(const SiteYearSample& s, const CalendarSpec& cal,
                                 const ParamStore& params, const RaciConfig& cfg);

}  // namespace raci
