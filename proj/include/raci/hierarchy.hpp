#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "raci/calendar.hpp"
#include "raci/dataset.hpp"
#include "raci/tape.hpp"

namespace raci {

// Diagnostics of one hierarchy pass: base and refined embeddings plus the
// attention weights (alpha, rows of a simplex) and propagation gates (beta,
// non-negative and unnormalized).
struct HierarchicalEmbedding {
    Eigen::MatrixXd h_daily;          // days x h
    Eigen::MatrixXd h_monthly;        // 12 x h
    Eigen::VectorXd h_yearly;         // h
    Eigen::MatrixXd h_monthly_tilde;  // 12 x h
    Eigen::MatrixXd h_daily_tilde;    // days x h
    Eigen::VectorXd alpha_m2y;        // 12
    std::vector<Eigen::VectorXd> alpha_d2m;  // per month, one weight per member day
    Eigen::VectorXd beta_y2m;         // 12
    Eigen::VectorXd beta_m2d;         // days
};

// Registers an attention block <prefix>.{wq,wk} (two h x h projections).
void register_attention(ParamStore& ps, const std::string& prefix, int h);

// Registers a gate network <prefix>.{g1,g1b,g2,g2b}: R^{2h} -> R^h -> R^1,
// tanh between the layers, softplus applied at use sites.
void register_gate(ParamStore& ps, const std::string& prefix, int h);

struct AttendNodes {
    int context;  // 1 x h
    int weights;  // 1 x n, sums to 1
};

// Scaled dot-product attention: scores_i = (Wq q) . (Wk k_i) / sqrt(h),
// weights = softmax(scores), context = sum_i weights_i k_i. Throws on an
// empty key set.
AttendNodes attend(Tape& t, int query, int keys, const std::string& prefix);

// beta = softplus(gate(concat(coarse_rows, fine_rows))) evaluated row-wise;
// returns an n x 1 node. Inputs must have matching row counts.
int gate_rows(Tape& t, int coarse_rows, int fine_rows, const std::string& prefix);

struct MonthlyAggNodes {
    int h_monthly;               // 12 x h
    std::vector<int> alpha_d2m;  // one 1 x len(month) weights node per month
};

// Per month m: query = phi_m row m, keys = h_daily rows of the month;
// h_monthly[m] = attention context + phi_m[m]. With attention=false the
// context is the unweighted day mean (uniform alphas).
MonthlyAggNodes aggregate_daily_to_monthly(Tape& t, int h_daily, int phi_m,
                                           const CalendarSpec& cal, bool attention);

struct YearlyAggNodes {
    int h_yearly;    // 1 x h
    int alpha_m2y;   // 1 x 12
};

// h_yearly = sum_m alpha_m h_monthly[m] + phi_r, alpha from attention with
// query phi_r (or uniform when attention=false).
YearlyAggNodes aggregate_monthly_to_yearly(Tape& t, int h_monthly, int phi_r, bool attention);

struct PropagateNodes {
    int refined;  // same shape as the fine input
    int beta;     // n x 1
};

// h_tilde[m] = h_monthly[m] + beta_m h_yearly with beta_m from the gate
// network (or exactly 1 when learned_gate=false).
PropagateNodes propagate_yearly_to_monthly(Tape& t, int h_yearly, int h_monthly,
                                           bool learned_gate);

// Per day t in month m: h_tilde[t] = h_daily[t] + beta_t h_monthly_eff[m].
PropagateNodes propagate_monthly_to_daily(Tape& t, int h_monthly_eff, int h_daily,
                                          const CalendarSpec& cal, bool learned_gate);

// Optional dropout masks for the encoder outputs feeding the hierarchy.
struct EncoderDropout {
    Eigen::MatrixXd daily;    // days x h
    Eigen::MatrixXd monthly;  // 12 x h
    Eigen::MatrixXd regime;   // 1 x h
};

struct YearlyPathNodes {
    int phi_m;      // 12 x h base monthly embeddings (post-dropout)
    int phi_r;      // 1 x h regime embedding (post-dropout)
    int h_daily;    // days x h (post-dropout)
    int h_monthly;  // 12 x h aggregated
    int h_yearly;   // 1 x h
    int alpha_m2y;
    std::vector<int> alpha_d2m;
};

// Shared pipeline prefix ending at the yearly embedding: encode all three
// scales, aggregate daily->monthly->yearly. Used by the full forward pass and
// by retrieval-pool construction.
YearlyPathNodes build_yearly_path(Tape& t, const SiteYearSample& s, const CalendarSpec& cal,
                                  int h, bool attention, const EncoderDropout* dropout);

// Registers every hierarchy parameter block (attention blocks and gates).
void register_hierarchy_params(ParamStore& ps, int h);

}  // namespace raci
