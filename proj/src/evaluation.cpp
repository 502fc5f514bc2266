#include "raci/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace raci {

double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs, const Eigen::VectorXd& mask) {
    if (pred.size() != obs.size() || obs.size() != mask.size())
        throw std::invalid_argument("rmse: length mismatch");
    const double cnt = mask.sum();
    if (cnt < 1.0) throw std::invalid_argument("rmse: empty mask");
    const Eigen::ArrayXd d = pred.array() - obs.array();
    return std::sqrt((mask.array() * d * d).sum() / cnt);
}

namespace {

// Pooled SSE/SST over sites; false when every site has zero variance.
bool r2_core(const std::map<std::string, SiteSeries>& by_site, double& r2, int& skipped) {
    double sse = 0.0, sst = 0.0;
    skipped = 0;
    bool any = false;
    for (const auto& [site, s] : by_site) {
        if (s.pred.size() != s.obs.size() || s.obs.size() != s.mask.size())
            throw std::invalid_argument("within_site_r2: length mismatch at site " + site);
        const double cnt = s.mask.sum();
        if (cnt < 1.0) {
            ++skipped;
            continue;
        }
        const double mean = (s.mask.array() * s.obs.array()).sum() / cnt;
        const double site_sst = (s.mask.array() * (s.obs.array() - mean).square()).sum();
        if (site_sst == 0.0) {
            ++skipped;
            continue;
        }
        sse += (s.mask.array() * (s.pred.array() - s.obs.array()).square()).sum();
        sst += site_sst;
        any = true;
    }
    if (!any) return false;
    r2 = 1.0 - sse / sst;
    return true;
}

}  // namespace

double within_site_r2(const std::map<std::string, SiteSeries>& by_site, int* n_skipped) {
    double r2 = 0.0;
    int skipped = 0;
    if (!r2_core(by_site, r2, skipped))
        throw std::invalid_argument("within_site_r2: every site has zero within-site variance");
    if (n_skipped) *n_skipped = skipped;
    return r2;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b, bool* flagged) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: bad lengths");
    if (flagged) *flagged = false;
    const Eigen::ArrayXd da = a.array() - a.mean();
    const Eigen::ArrayXd db = b.array() - b.mean();
    const double denom = std::sqrt(da.square().sum() * db.square().sum());
    if (denom == 0.0) {
        if (flagged) *flagged = true;
        return 0.0;
    }
    return (da * db).sum() / denom;
}

namespace {

struct EvalAccum {
    std::map<std::string, SiteSeries> by_site;
    double sq = 0.0, cnt = 0.0;
    long fallbacks = 0, forwards = 0;
};

void append_series(SiteSeries& dst, const Eigen::VectorXd& pred, const Eigen::VectorXd& obs,
                   const Eigen::VectorXd& mask) {
    const Eigen::Index old = dst.pred.size(), add = pred.size();
    dst.pred.conservativeResize(old + add);
    dst.obs.conservativeResize(old + add);
    dst.mask.conservativeResize(old + add);
    dst.pred.tail(add) = pred;
    dst.obs.tail(add) = obs;
    dst.mask.tail(add) = mask;
}

std::string fingerprint_hex(std::uint64_t fp) {
    std::ostringstream os;
    os << std::hex << fp;
    return os.str();
}

}  // namespace

MetricsReport evaluate(const RunState& st, const Dataset& raw, const std::vector<SampleKey>& split,
                       const std::string& split_name) {
    if (split.empty()) throw std::invalid_argument("evaluate: empty split");
    const RaciConfig& cfg = st.model;
    const Dataset ds = scale_features(raw, st.scaler);

    NeighborIndex nbr;
    RetrievalPool pool;
    MonthlyContextTable monthly;
    ForwardContext ctx;
    if (!st.baseline) {
        if (ds.sites.size() >= 2) nbr = build_neighbor_index(ds.sites, cfg.k_neighbors);
        pool = cfg.use_yearly_ctx ? build_pool(ds, st.params, cfg)
                                  : RetrievalPool::empty(cfg, st.params.fingerprint());
        if (cfg.use_monthly_ctx) monthly = build_monthly_table(ds, st.params, cfg);
        ctx = {&ds, &nbr, &pool, &monthly, pool.param_fingerprint};
    }

    std::vector<SampleKey> keys = split;
    std::sort(keys.begin(), keys.end());

    EvalAccum acc;
    for (const SampleKey& key : keys) {
        const SiteYearSample& s = ds.sample(key);
        Eigen::VectorXd yhat;
        if (st.baseline) {
            yhat = baseline_predict(s, ds.calendar, st.params, cfg);
        } else {
            ForwardDiagnostics diag;
            yhat = raci_predict(s, ctx, st.params, cfg, &diag);
            ++acc.forwards;
            if (diag.retrieval.fallback) ++acc.fallbacks;
        }
        append_series(acc.by_site[key.site_id], yhat, s.y, s.mask);
        const Eigen::ArrayXd d = yhat.array() - s.y.array();
        acc.sq += (s.mask.array() * d * d).sum();
        acc.cnt += s.mask.sum();
    }
    if (acc.cnt < 1.0) throw std::invalid_argument("evaluate: split has no observed targets");

    MetricsReport rep;
    rep.rmse = std::sqrt(acc.sq / acc.cnt);
    rep.r2 = within_site_r2(acc.by_site, &rep.n_sites_skipped);
    rep.fallback_rate = acc.forwards > 0 ? double(acc.fallbacks) / double(acc.forwards) : 0.0;
    rep.checkpoint_id = fingerprint_hex(st.params.fingerprint());
    rep.split = split_name;
    rep.config = cfg;

    // Group by region tag; a group whose every site is zero-variance gets a
    // NaN R^2 rather than failing the whole report.
    std::map<std::string, std::map<std::string, SiteSeries>> grouped;
    for (const auto& [site, series] : acc.by_site) {
        std::string tag = ds.sites.at(site).region_tag;
        if (tag.empty()) tag = "ungrouped";
        grouped[tag][site] = series;
    }
    for (const auto& [tag, sites] : grouped) {
        GroupMetrics gm;
        double sq = 0.0, cnt = 0.0;
        for (const auto& [site, s] : sites) {
            const Eigen::ArrayXd d = s.pred.array() - s.obs.array();
            sq += (s.mask.array() * d * d).sum();
            cnt += s.mask.sum();
        }
        gm.rmse = cnt > 0.0 ? std::sqrt(sq / cnt) : 0.0;
        gm.n_obs = long(cnt);
        double r2 = std::numeric_limits<double>::quiet_NaN();
        r2_core(sites, r2, gm.n_sites_skipped);
        gm.r2 = r2;
        rep.groups[tag] = gm;
    }
    return rep;
}

std::vector<AblationRow> ablation_suite(const Dataset& ds, const RaciConfig& base,
                                        const TrainConfig& tcfg) {
    struct Variant {
        const char* name;
        bool temporal, monthly, yearly;
    };
    static constexpr Variant kVariants[] = {
        {"Full", true, true, true},      {"-Temporal", false, true, true},
        {"-Monthly", true, false, true}, {"-Yearly", true, true, false},
        {"-Both", true, false, false},
    };
    std::vector<AblationRow> rows;
    for (const Variant& v : kVariants) {
        RaciConfig cfg = base;
        cfg.use_temporal = v.temporal;
        cfg.use_monthly_ctx = v.monthly;
        cfg.use_yearly_ctx = v.yearly;
        const RunState st = train(ds, cfg, tcfg);
        const MetricsReport rep = evaluate(st, ds, ds.test_split, "test");
        rows.push_back({v.name, rep.rmse, rep.r2, rep.fallback_rate});
    }
    return rows;
}

std::vector<SweepRow> sensitivity_sweep(const Dataset& ds, const RaciConfig& base,
                                        const TrainConfig& tcfg, const std::vector<double>& taus,
                                        const std::vector<int>& k_pcas) {
    std::map<std::pair<double, int>, std::pair<double, double>> cache;
    const auto run = [&](double tau, int k_pca) {
        const std::pair<double, int> key{tau, k_pca};
        const auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        RaciConfig cfg = base;
        cfg.tau = tau;
        cfg.k_pca = k_pca;
        const RunState st = train(ds, cfg, tcfg);
        const MetricsReport rep = evaluate(st, ds, ds.test_split, "test");
        return cache[key] = {rep.rmse, rep.r2};
    };
    std::vector<SweepRow> rows;
    for (const double tau : taus) {
        const auto [r, r2] = run(tau, base.k_pca);
        rows.push_back({"tau", tau, r, r2});
    }
    for (const int k : k_pcas) {
        const auto [r, r2] = run(base.tau, k);
        rows.push_back({"k_pca", double(k), r, r2});
    }
    return rows;
}

AttentionExport export_attention(const RunState& st, const Dataset& raw, const SampleKey& key) {
    if (st.baseline)
        throw std::invalid_argument("export_attention: baseline checkpoints have no attention");
    const RaciConfig& cfg = st.model;
    const Dataset ds = scale_features(raw, st.scaler);
    const SiteYearSample& s = ds.sample(key);

    NeighborIndex nbr;
    if (ds.sites.size() >= 2) nbr = build_neighbor_index(ds.sites, cfg.k_neighbors);
    const RetrievalPool pool = cfg.use_yearly_ctx
                                   ? build_pool(ds, st.params, cfg)
                                   : RetrievalPool::empty(cfg, st.params.fingerprint());
    MonthlyContextTable monthly;
    if (cfg.use_monthly_ctx) monthly = build_monthly_table(ds, st.params, cfg);
    const ForwardContext ctx{&ds, &nbr, &pool, &monthly, pool.param_fingerprint};

    ForwardDiagnostics diag;
    raci_predict(s, ctx, st.params, cfg, &diag);

    AttentionExport out;
    out.key = key;
    out.alpha_daily.resize(ds.calendar.days_per_year);
    Eigen::Index at = 0;
    for (const Eigen::VectorXd& a : diag.emb.alpha_d2m) {
        out.alpha_daily.segment(at, a.size()) = a;
        at += a.size();
    }
    out.alpha_m2y = diag.emb.alpha_m2y;
    out.beta_y2m = diag.emb.beta_y2m;
    out.beta_m2d = diag.emb.beta_m2d;
    out.retr_sims = diag.retrieval.sims;
    out.retr_candidates = diag.retrieval.candidates;
    out.retr_weights = diag.retrieval.weights;
    out.fallback = diag.retrieval.fallback;

    out.driver_names = ds.feature_names.daily;
    out.driver_corr.resize(s.x_daily.cols());
    out.corr_flagged.assign(std::size_t(s.x_daily.cols()), false);
    for (Eigen::Index j = 0; j < s.x_daily.cols(); ++j) {
        bool flagged = false;
        out.driver_corr[j] = pearson(out.alpha_daily, s.x_daily.col(j), &flagged);
        out.corr_flagged[std::size_t(j)] = flagged;
    }
    return out;
}

}  // namespace raci
