#include "raci/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace raci {

void TrainConfig::validate() const {
    // lr = 0 is allowed: it freezes the parameters (useful as a control)
    if (!(lr >= 0.0) || !std::isfinite(lr))
        throw std::invalid_argument("TrainConfig: lr must be finite and >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("TrainConfig: moment decays outside [0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("TrainConfig: eps must be positive");
    if (grad_clip < 0.0) throw std::invalid_argument("TrainConfig: grad_clip must be >= 0");
}

double masked_mse(const Eigen::VectorXd& yhat, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& mask) {
    if (yhat.size() != y.size() || y.size() != mask.size())
        throw std::invalid_argument("masked_mse: length mismatch");
    const double count = mask.sum();
    if (count < 1.0) throw std::invalid_argument("masked_mse: no observed positions in batch");
    const Eigen::ArrayXd diff = yhat.array() - y.array();
    return (mask.array() * diff * diff).sum() / count;
}

namespace {

void shuffle_keys(std::vector<SampleKey>& keys, RngStream& rng) {
    for (std::size_t i = keys.size(); i > 1; --i) {
        const std::size_t j = std::size_t(rng.below(i));
        std::swap(keys[i - 1], keys[j]);
    }
}

void adam_step(ParamStore& params, AdamState& opt, const std::vector<Eigen::MatrixXd>& grads,
               const TrainConfig& cfg) {
    opt.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(opt.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(opt.step));
    for (int s = 0; s < params.size(); ++s) {
        const Eigen::MatrixXd& g = grads[std::size_t(s)];
        Eigen::MatrixXd& m = opt.m[std::size_t(s)];
        Eigen::MatrixXd& v = opt.v[std::size_t(s)];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        params.block(s).value.array() -=
            cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
    }
}

void clip_gradients(std::vector<Eigen::MatrixXd>& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const Eigen::MatrixXd& g : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (Eigen::MatrixXd& g : grads) g *= scale;
    }
}

// Audits one retrieval report against the leakage guard; returns violations.
long audit_report(const RetrievalReport& rep, const RetrievalPool& pool, const SampleKey& target,
                  const std::set<SampleKey>& aux_keys) {
    long bad = 0;
    for (const int idx : rep.candidates) {
        const PoolEntry& e = pool.entries.at(std::size_t(idx));
        if (!(rep.sims[idx] > pool.tau)) ++bad;
        if (e.site_id == target.site_id && e.year == target.year) ++bad;
        if (e.year == target.year) ++bad;
        if (!aux_keys.count({e.site_id, e.year})) ++bad;
    }
    return bad;
}

void check_trainable(const Dataset& ds, bool needs_aux) {
    if (ds.train_split.empty()) throw std::invalid_argument("train: empty train split");
    double observed = 0.0;
    for (const SampleKey& k : ds.train_split) observed += ds.sample(k).mask.sum();
    if (observed < 1.0)
        throw std::invalid_argument("train: no observed targets anywhere in the train split");
    if (needs_aux && ds.aux_split.empty())
        throw std::invalid_argument("train: empty auxiliary split");
}

// Runs tcfg.epochs additional epochs on st (st.epoch continues counting).
// pool_ds supplies the auxiliary split for retrieval; ds supplies batches and
// neighbor context.
void run_epochs(RunState& st, const Dataset& ds, const Dataset& pool_ds) {
    const RaciConfig& mcfg = st.model;
    const TrainConfig& tcfg = st.train;
    const NeighborIndex nbr = st.baseline || ds.sites.size() < 2
                                  ? NeighborIndex{}
                                  : build_neighbor_index(ds.sites, mcfg.k_neighbors);
    std::set<SampleKey> aux_keys(pool_ds.aux_split.begin(), pool_ds.aux_split.end());

    if (st.opt.m.empty()) {
        st.opt.m = st.params.zero_grads();
        st.opt.v = st.params.zero_grads();
    }

    for (int pass = 0; pass < tcfg.epochs; ++pass) {
        const int epoch = st.epoch;
        RetrievalPool pool;
        MonthlyContextTable monthly;
        ForwardContext ctx;
        if (!st.baseline) {
            pool = mcfg.use_yearly_ctx ? build_pool(pool_ds, st.params, mcfg)
                                       : RetrievalPool::empty(mcfg, st.params.fingerprint());
            if (mcfg.use_monthly_ctx) monthly = build_monthly_table(ds, st.params, mcfg);
            ctx = {&ds, &nbr, &pool, &monthly, pool.param_fingerprint};
        }

        std::vector<SampleKey> keys = ds.train_split;
        std::sort(keys.begin(), keys.end());
        RngStream shuffle_rng = make_stream(tcfg.seed, "shuffle/e" + std::to_string(epoch));
        shuffle_keys(keys, shuffle_rng);

        double epoch_sq = 0.0, epoch_cnt = 0.0;
        long fallbacks = 0, forwards = 0;
        for (std::size_t b0 = 0; b0 < keys.size(); b0 += std::size_t(tcfg.batch_size)) {
            std::vector<SampleKey> batch(
                keys.begin() + long(b0),
                keys.begin() + long(std::min(b0 + std::size_t(tcfg.batch_size), keys.size())));
            std::sort(batch.begin(), batch.end());  // fixed serial summation order

            std::vector<Eigen::MatrixXd> grads = st.params.zero_grads();
            double batch_sq = 0.0, batch_cnt = 0.0;
            for (const SampleKey& key : batch) {
                const SiteYearSample& s = ds.sample(key);
                const double cnt = s.mask.sum();
                if (cnt == 0.0) continue;  // skipped upstream
                RngStream drop = make_stream(tcfg.seed, "dropout/e" + std::to_string(epoch),
                                             key.site_id, key.year);
                Tape t(&st.params);
                int pred;
                if (st.baseline) {
                    pred = baseline_forward(t, s, ds.calendar, mcfg, RunMode::train, &drop);
                } else {
                    ForwardDiagnostics diag;
                    pred = raci_forward(t, s, ctx, mcfg, RunMode::train, &drop, &diag);
                    ++forwards;
                    if (diag.retrieval.fallback) ++fallbacks;
                    st.leakage_violations +=
                        audit_report(diag.retrieval, pool, key, aux_keys);
                }
                const int loss = t.masked_sq_err_sum(pred, s.y, s.mask);
                batch_sq += t.value(loss)(0, 0);
                batch_cnt += cnt;
                t.backward(loss, grads);
            }
            if (batch_cnt < 1.0)
                throw std::runtime_error("train: degenerate batch with zero observed positions");
            const double inv = 1.0 / batch_cnt;
            for (Eigen::MatrixXd& g : grads) g *= inv;
            clip_gradients(grads, tcfg.grad_clip);
            adam_step(st.params, st.opt, grads, tcfg);
            epoch_sq += batch_sq;
            epoch_cnt += batch_cnt;
        }

        EpochStats stats;
        stats.mean_loss = epoch_sq / epoch_cnt;
        stats.fallback_rate = forwards > 0 ? double(fallbacks) / double(forwards) : 0.0;
        st.history.push_back(stats);
        if (!st.baseline) st.pool_fingerprint = pool.param_fingerprint;
        st.epoch += 1;
    }
}

void check_compatible(const ParamStore& have, const Dataset& ds, const RaciConfig& cfg,
                      bool baseline) {
    ParamStore expect;
    if (baseline)
        register_baseline_params(expect,
                                 ds.d_daily() + ds.d_monthly() + ds.d_yearly() + ds.d_static(), cfg);
    else
        register_raci_params(expect, ds.d_daily(), ds.d_monthly(), ds.d_yearly() + ds.d_static(),
                             cfg);
    if (expect.size() != have.size())
        throw std::invalid_argument("fine_tune: parameter block count mismatch");
    for (int s = 0; s < expect.size(); ++s) {
        const ParamBlock& e = expect.block(s);
        const ParamBlock& h = have.block(s);
        if (e.name != h.name || e.value.rows() != h.value.rows() ||
            e.value.cols() != h.value.cols())
            throw std::invalid_argument("fine_tune: incompatible parameter block " + e.name);
    }
}

}  // namespace

RunState train(const Dataset& ds, const RaciConfig& mcfg, const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    check_trainable(ds, mcfg.use_yearly_ctx);
    RunState st;
    st.params = make_raci_params(ds, mcfg, tcfg.seed);
    st.model = mcfg;
    st.train = tcfg;
    st.scaler = fit_scaler(ds, ds.train_split);
    const Dataset scaled = scale_features(ds, st.scaler);
    run_epochs(st, scaled, scaled);
    return st;
}

RunState train_baseline(const Dataset& ds, const RaciConfig& mcfg, const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    check_trainable(ds, false);
    RunState st;
    st.params = make_baseline_params(ds, mcfg, tcfg.seed);
    st.model = mcfg;
    st.train = tcfg;
    st.baseline = true;
    st.scaler = fit_scaler(ds, ds.train_split);
    const Dataset scaled = scale_features(ds, st.scaler);
    run_epochs(st, scaled, scaled);
    return st;
}

RunState fine_tune(const RunState& checkpoint, const Dataset& first_ds, const Dataset& second_ds,
                   const TrainConfig& tcfg) {
    checkpoint.model.validate();
    tcfg.validate();
    check_compatible(checkpoint.params, second_ds, checkpoint.model, checkpoint.baseline);
    check_trainable(second_ds, false);
    if (!checkpoint.baseline && checkpoint.model.use_yearly_ctx && first_ds.aux_split.empty())
        throw std::invalid_argument("fine_tune: first dataset has no auxiliary split");
    RunState st = checkpoint;
    st.train = tcfg;
    // The checkpoint's feature statistics stay in force: fine-tuning continues
    // the same function, so inputs must keep the scale the weights were fit to.
    run_epochs(st, scale_features(second_ds, st.scaler), scale_features(first_ds, st.scaler));
    return st;
}

GradCheckResult grad_check(const Dataset& raw, const std::vector<SampleKey>& batch,
                           const RaciConfig& cfg, ParamStore& params, double step) {
    if (batch.empty()) throw std::invalid_argument("grad_check: empty batch");
    std::vector<SampleKey> keys = batch;
    std::sort(keys.begin(), keys.end());

    const Dataset ds =
        scale_features(raw, fit_scaler(raw, raw.train_split.empty() ? keys : raw.train_split));
    const NeighborIndex nbr = build_neighbor_index(ds.sites, cfg.k_neighbors);
    const RetrievalPool pool = build_pool(ds, params, cfg);
    // Context structures stay frozen across the finite-difference probes, the
    // same snapshot semantics the training loop uses within one epoch.
    const MonthlyContextTable monthly = build_monthly_table(ds, params, cfg);
    const ForwardContext ctx{&ds, &nbr, &pool, &monthly, pool.param_fingerprint};

    const auto batch_loss = [&]() {
        double sq = 0.0, cnt = 0.0;
        for (const SampleKey& key : keys) {
            const SiteYearSample& s = ds.sample(key);
            if (s.mask.sum() == 0.0) continue;
            Tape t(&params);
            const int pred = raci_forward(t, s, ctx, cfg, RunMode::eval, nullptr, nullptr);
            const int loss = t.masked_sq_err_sum(pred, s.y, s.mask);
            sq += t.value(loss)(0, 0);
            cnt += s.mask.sum();
        }
        if (cnt < 1.0) throw std::invalid_argument("grad_check: batch has no observed positions");
        return sq / cnt;
    };

    // analytic gradient of the pooled batch mean
    std::vector<Eigen::MatrixXd> grads = params.zero_grads();
    double cnt = 0.0;
    for (const SampleKey& key : keys) {
        const SiteYearSample& s = ds.sample(key);
        if (s.mask.sum() == 0.0) continue;
        Tape t(&params);
        const int pred = raci_forward(t, s, ctx, cfg, RunMode::eval, nullptr, nullptr);
        t.backward(t.masked_sq_err_sum(pred, s.y, s.mask), grads);
        cnt += s.mask.sum();
    }
    for (Eigen::MatrixXd& g : grads) g /= cnt;

    GradCheckResult out;
    for (int s = 0; s < params.size(); ++s) {
        const std::string& name = params.block(s).name;
        if (!grads[std::size_t(s)].allFinite())
            throw std::runtime_error("grad_check: non-finite analytic gradient in block " + name);
        Eigen::MatrixXd& v = params.block(s).value;
        for (Eigen::Index r = 0; r < v.rows(); ++r) {
            for (Eigen::Index c = 0; c < v.cols(); ++c) {
                const double keep = v(r, c);
                v(r, c) = keep + step;
                const double lp = batch_loss();
                v(r, c) = keep - step;
                const double lm = batch_loss();
                v(r, c) = keep;
                const double fd = (lp - lm) / (2.0 * step);
                const double ga = grads[std::size_t(s)](r, c);
                const double rel =
                    std::abs(ga - fd) / std::max({std::abs(ga), std::abs(fd), 1e-8});
                if (rel > out.max_rel_err) {
                    out.max_rel_err = rel;
                    out.worst_param = name + "(" + std::to_string(r) + "," + std::to_string(c) + ")";
                }
            }
        }
    }
    return out;
}

McDropoutResult mc_dropout_predict(const RunState& checkpoint, const Dataset& raw,
                                   const SampleKey& key, double p, int T, std::uint64_t seed) {
    if (T < 2) throw std::invalid_argument("mc_dropout_predict: T must be >= 2");
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("mc_dropout_predict: p outside [0, 1)");
    RaciConfig cfg = checkpoint.model;
    cfg.dropout_p = p;

    const Dataset ds = scale_features(raw, checkpoint.scaler);
    const SiteYearSample& s = ds.sample(key);
    const int days = ds.calendar.days_per_year;

    NeighborIndex nbr;
    RetrievalPool pool;
    MonthlyContextTable monthly;
    ForwardContext ctx;
    if (!checkpoint.baseline) {
        if (ds.sites.size() >= 2) nbr = build_neighbor_index(ds.sites, cfg.k_neighbors);
        pool = cfg.use_yearly_ctx ? build_pool(ds, checkpoint.params, cfg)
                                  : RetrievalPool::empty(cfg, checkpoint.params.fingerprint());
        if (cfg.use_monthly_ctx) monthly = build_monthly_table(ds, checkpoint.params, cfg);
        ctx = {&ds, &nbr, &pool, &monthly, checkpoint.params.fingerprint()};
    }

    Eigen::MatrixXd passes(T, days);
    for (int ti = 0; ti < T; ++ti) {
        RngStream drop = make_stream(seed, "mc/t" + std::to_string(ti), key.site_id, key.year);
        Tape t(&checkpoint.params);
        int pred;
        if (checkpoint.baseline)
            pred = baseline_forward(t, s, ds.calendar, cfg, RunMode::train, &drop);
        else
            pred = raci_forward(t, s, ctx, cfg, RunMode::train, &drop, nullptr);
        passes.row(ti) = t.value(pred).col(0).transpose();
    }

    McDropoutResult out;
    out.mean = passes.colwise().mean().transpose();
    out.std.resize(days);
    for (int d = 0; d < days; ++d) {
        const double lo = passes.col(d).minCoeff(), hi = passes.col(d).maxCoeff();
        if (lo == hi) {
            out.std[d] = 0.0;  // identical passes: the sample deviation is exactly zero
            continue;
        }
        out.std[d] = std::sqrt((passes.col(d).array() - out.mean[d]).square().sum() / (T - 1));
    }
    const double denom = out.mean.array().abs().mean();
    out.spread_ratio = out.std.mean() / denom;
    return out;
}

}  // namespace raci
