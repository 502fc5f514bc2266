#include "raci/predictor.hpp"

#include "raci/encoders.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace raci {

void RaciConfig::validate() const {
    if (h < 1) throw std::invalid_argument("RaciConfig: h must be >= 1");
    if (lstm_layers < 1) throw std::invalid_argument("RaciConfig: lstm_layers must be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw std::invalid_argument("RaciConfig: dropout_p outside [0, 1)");
    if (!(tau > -1.0 && tau <= 1.0)) throw std::invalid_argument("RaciConfig: tau outside (-1, 1]");
    if (k_neighbors < 1) throw std::invalid_argument("RaciConfig: k_neighbors must be >= 1");
    if (k_pca < 1) throw std::invalid_argument("RaciConfig: k_pca must be >= 1");
}

namespace {

std::string lstm_prefix(const std::string& base, int layer) {
    return base + ".lstm." + std::to_string(layer);
}

void register_lstm_stack(ParamStore& ps, const std::string& base, int d_input,
                         const RaciConfig& cfg) {
    for (int l = 0; l < cfg.lstm_layers; ++l) {
        const int in = l == 0 ? d_input : cfg.h;
        const std::string p = lstm_prefix(base, l);
        ps.add(p + ".wx", 4 * cfg.h, in, in);
        ps.add(p + ".wh", 4 * cfg.h, cfg.h, cfg.h);
        ps.add(p + ".b", 4 * cfg.h, 1, in);
    }
    ps.add(base + ".readout.w", 1, cfg.h, cfg.h);
    ps.add(base + ".readout.b", 1, 1, cfg.h);
}

// Inverted dropout mask: kept entries scaled by 1/(1-p).
Eigen::MatrixXd dropout_mask(int rows, int cols, double p, RngStream& rng) {
    Eigen::MatrixXd m(rows, cols);
    const double keep = 1.0 / (1.0 - p);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform() < p ? 0.0 : keep;
    return m;
}

// Stacked LSTM + readout; dropout between layers in train mode.
int lstm_head(Tape& t, int x, const std::string& base, const RaciConfig& cfg, bool train_dropout,
              RngStream* rng) {
    int cur = x;
    for (int l = 0; l < cfg.lstm_layers; ++l) {
        const std::string p = lstm_prefix(base, l);
        cur = t.lstm(cur, t.param(p + ".wx"), t.param(p + ".wh"), t.param(p + ".b"));
        if (train_dropout && l + 1 < cfg.lstm_layers)
            cur = t.hadamard_const(
                cur, dropout_mask(int(t.value(cur).rows()), cfg.h, cfg.dropout_p, *rng));
    }
    return t.affine_rows(cur, t.param(base + ".readout.w"), t.param(base + ".readout.b"));
}

}  // namespace

void register_raci_params(ParamStore& ps, int d_daily, int d_monthly, int d_regime,
                          const RaciConfig& cfg) {
    register_encoder(ps, "enc.daily", d_daily, cfg.h);
    register_encoder(ps, "enc.monthly", d_monthly, cfg.h);
    register_encoder(ps, "enc.regime", d_regime, cfg.h);
    register_hierarchy_params(ps, cfg.h);
    register_attention(ps, "spat.attn", cfg.h);
    register_gate(ps, "spat.gate", cfg.h);
    register_attention(ps, "retr.attn", cfg.h);
    register_lstm_stack(ps, "head", cfg.h + 1, cfg);
}

ParamStore make_raci_params(const Dataset& ds, const RaciConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParamStore ps;
    register_raci_params(ps, ds.d_daily(), ds.d_monthly(), ds.d_yearly() + ds.d_static(), cfg);
    RngStream rng = make_stream(seed, "init");
    ps.init_uniform(rng);
    return ps;
}

int raci_forward(Tape& t, const SiteYearSample& s, const ForwardContext& ctx,
                 const RaciConfig& cfg, RunMode mode, RngStream* dropout_rng,
                 ForwardDiagnostics* diag) {
    if (ctx.ds == nullptr || ctx.neighbors == nullptr || ctx.pool == nullptr)
        throw std::invalid_argument("raci_forward: incomplete forward context");
    const CalendarSpec& cal = ctx.ds->calendar;
    const int days = cal.days_per_year;
    const bool train_dropout = mode == RunMode::train && cfg.dropout_p > 0.0;
    if (train_dropout && dropout_rng == nullptr)
        throw std::invalid_argument("raci_forward: train mode with dropout needs an RNG stream");

    // Fixed mask draw order keeps a given stream reproducible: encoder outputs
    // first (daily, monthly, regime), then the LSTM inter-layer gaps.
    EncoderDropout masks;
    if (train_dropout) {
        masks.daily = dropout_mask(days, cfg.h, cfg.dropout_p, *dropout_rng);
        masks.monthly = dropout_mask(12, cfg.h, cfg.dropout_p, *dropout_rng);
        masks.regime = dropout_mask(1, cfg.h, cfg.dropout_p, *dropout_rng);
    }

    const YearlyPathNodes path = build_yearly_path(t, s, cal, cfg.h, cfg.use_temporal,
                                                   train_dropout ? &masks : nullptr);

    // Yearly functional retrieval happens on the aggregated yearly embedding,
    // before any coarse-to-fine refinement.
    const SampleKey key{s.site_id, s.year};
    int c_yearly;  // 1 x days
    RetrievalReport report;
    if (cfg.use_yearly_ctx) {
        c_yearly = retrieve_yearly(t, path.h_yearly, key, *ctx.pool, days,
                                   ctx.designated_fingerprint, &report);
    } else {
        c_yearly = t.constant(Eigen::MatrixXd::Zero(1, days));
        report.fallback = true;
    }

    const PropagateNodes y2m =
        propagate_yearly_to_monthly(t, path.h_yearly, path.h_monthly, cfg.use_temporal);

    // Neighbor context: refined monthly embeddings of geographic neighbors for
    // the same year, read from the frozen per-epoch snapshot table (one-pass,
    // no spatial context of their own, no dropout, no gradients upstream of
    // the keys), attended per month and injected through a softplus gate.
    int h_monthly_eff = y2m.refined;
    Eigen::VectorXd spatial_gate = Eigen::VectorXd::Zero(12);
    Eigen::MatrixXd c_monthly_val = Eigen::MatrixXd::Zero(12, cfg.h);
    if (cfg.use_monthly_ctx) {
        if (ctx.monthly == nullptr)
            throw std::invalid_argument("raci_forward: monthly context table missing");
        if (ctx.monthly->param_fingerprint != ctx.designated_fingerprint)
            throw std::runtime_error("raci_forward: stale monthly context table");
        std::vector<const Eigen::MatrixXd*> nbr_rows;  // each 12 x h
        const auto it = ctx.neighbors->neighbors.find(s.site_id);
        if (it != ctx.neighbors->neighbors.end()) {
            for (const std::string& nid : it->second) {
                const auto row = ctx.monthly->rows.find({nid, s.year});
                if (row != ctx.monthly->rows.end()) nbr_rows.push_back(&row->second);
            }
        }
        if (!nbr_rows.empty()) {
            const int n = int(nbr_rows.size());
            std::vector<int> ctx_rows;
            ctx_rows.reserve(12);
            for (int m = 0; m < 12; ++m) {
                Eigen::MatrixXd keys(n, cfg.h);
                for (int j = 0; j < n; ++j) keys.row(j) = nbr_rows[std::size_t(j)]->row(m);
                const AttendNodes a = attend(t, t.slice_rows(y2m.refined, m, 1),
                                             t.constant(std::move(keys)), "spat.attn");
                ctx_rows.push_back(a.context);
            }
            const int c_monthly = t.concat_rows(ctx_rows);
            const int gate = gate_rows(t, c_monthly, y2m.refined, "spat.gate");
            h_monthly_eff = t.add(y2m.refined, t.row_scale(c_monthly, gate));
            spatial_gate = t.value(gate).col(0);
            c_monthly_val = t.value(c_monthly);
        }
    }

    const PropagateNodes m2d =
        propagate_monthly_to_daily(t, h_monthly_eff, path.h_daily, cal, cfg.use_temporal);

    const int lstm_in = t.concat_cols(m2d.refined, t.transpose(c_yearly));
    const int pred = lstm_head(t, lstm_in, "head", cfg, train_dropout, dropout_rng);

    if (diag != nullptr) {
        diag->retrieval = std::move(report);
        diag->spatial_gate = std::move(spatial_gate);
        diag->c_monthly = std::move(c_monthly_val);
        diag->pred_node = pred;
        HierarchicalEmbedding& e = diag->emb;
        e.h_daily = t.value(path.h_daily);
        e.h_monthly = t.value(path.h_monthly);
        e.h_yearly = t.value(path.h_yearly).row(0).transpose();
        e.h_monthly_tilde = t.value(y2m.refined);
        e.h_daily_tilde = t.value(m2d.refined);
        e.alpha_m2y = t.value(path.alpha_m2y).row(0).transpose();
        e.alpha_d2m.clear();
        for (int a : path.alpha_d2m) e.alpha_d2m.push_back(t.value(a).row(0).transpose());
        e.beta_y2m = t.value(y2m.beta).col(0);
        e.beta_m2d = t.value(m2d.beta).col(0);
    }
    return pred;
}

Eigen::VectorXd raci_predict(const SiteYearSample& s, const ForwardContext& ctx,
                             const ParamStore& params, const RaciConfig& cfg,
                             ForwardDiagnostics* diag) {
    Tape t(&params);
    const int pred = raci_forward(t, s, ctx, cfg, RunMode::eval, nullptr, diag);
    return t.value(pred).col(0);
}

void register_baseline_params(ParamStore& ps, int d_input, const RaciConfig& cfg) {
    register_lstm_stack(ps, "base", d_input, cfg);
}

ParamStore make_baseline_params(const Dataset& ds, const RaciConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParamStore ps;
    const int d_input = ds.d_daily() + ds.d_monthly() + ds.d_yearly() + ds.d_static();
    register_baseline_params(ps, d_input, cfg);
    RngStream rng = make_stream(seed, "init");
    ps.init_uniform(rng);
    return ps;
}

int baseline_forward(Tape& t, const SiteYearSample& s, const CalendarSpec& cal,
                     const RaciConfig& cfg, RunMode mode, RngStream* dropout_rng) {
    const bool train_dropout = mode == RunMode::train && cfg.dropout_p > 0.0;
    if (train_dropout && dropout_rng == nullptr)
        throw std::invalid_argument("baseline_forward: train mode with dropout needs an RNG stream");
    const int x = t.constant(replicate_for_baseline(s, cal));
    return lstm_head(t, x, "base", cfg, train_dropout, dropout_rng);
}

Eigen::VectorXd baseline_predict(const SiteYearSample& s, const CalendarSpec& cal,
                                 const ParamStore& params, const RaciConfig& cfg) {
    Tape t(&params);
    const int pred = baseline_forward(t, s, cal, cfg, RunMode::eval, nullptr);
    return t.value(pred).col(0);
}

}  // namespace raci
