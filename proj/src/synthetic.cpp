#include "raci/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace raci {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void RegimeParams::validate() const {
    require(std::isfinite(m_g0) && m_g0 > 0.0, "RegimeParams: m_g0 must be positive");
    require(std::isfinite(ph) && ph >= 3.0 && ph <= 9.0, "RegimeParams: ph outside [3, 9]");
    require(std::isfinite(ph_opt), "RegimeParams: ph_opt must be finite");
    require(std::isfinite(sigma_ph) && sigma_ph > 0.0, "RegimeParams: sigma_ph must be positive");
    require(std::isfinite(q10) && q10 > 0.0, "RegimeParams: q10 must be positive");
    require(std::isfinite(t_ref), "RegimeParams: t_ref must be finite");
    require(std::isfinite(w_thr) && w_thr >= 0.0 && w_thr <= 1.0, "RegimeParams: w_thr outside [0, 1]");
    require(std::isfinite(kappa) && kappa > 0.0, "RegimeParams: kappa must be positive");
    require(std::isfinite(k_s) && k_s > 0.0, "RegimeParams: k_s must be positive");
    require(std::isfinite(som_decay) && som_decay > 0.0 && som_decay < 1.0,
            "RegimeParams: som_decay outside (0, 1)");
}

ResponseFactors response_functions(double t_c, double w, double som, const RegimeParams& regime) {
    require(std::isfinite(t_c), "response_functions: temperature must be finite");
    require(std::isfinite(w) && w >= 0.0 && w <= 1.0, "response_functions: w outside [0, 1]");
    require(std::isfinite(som) && som >= 0.0, "response_functions: som must be >= 0");
    ResponseFactors f;
    f.f_mst = std::pow(regime.q10, (t_c - regime.t_ref) / 10.0) * w;
    f.f_rx = 1.0 / (1.0 + std::exp(-regime.kappa * (w - regime.w_thr)));
    f.f_som = som / (som + regime.k_s);
    const double dph = regime.ph - regime.ph_opt;
    f.f_ph = std::exp(-dph * dph / (2.0 * regime.sigma_ph * regime.sigma_ph));
    return f;
}

Eigen::VectorXd npp_proxy(const ProcessOptions& opt) {
    Eigen::VectorXd npp(12);
    for (int m = 0; m < 12; ++m)
        npp[m] = opt.npp_scale * std::max(0.0, std::sin(2.0 * kPi * (m + opt.npp_phase) / 12.0));
    return npp;
}

SimResult simulate_site_year(const SimInputs& in, const RegimeParams& regime, int regime_id,
                             int n_regimes, const CalendarSpec& cal, double noise_std,
                             RngStream* noise_rng, const ProcessOptions& opt) {
    cal.validate();
    regime.validate();
    const int days = cal.days_per_year;
    require(in.temperature.size() == days, "simulate_site_year: temperature length != days_per_year");
    require(in.precip.size() == days, "simulate_site_year: precip length != days_per_year");
    require(in.npp.size() == 0 || in.npp.size() == 12, "simulate_site_year: npp must have 12 entries");
    require(n_regimes >= 1 && regime_id >= 0 && regime_id < n_regimes,
            "simulate_site_year: regime_id outside [0, n_regimes)");
    require(noise_std >= 0.0, "simulate_site_year: noise_std must be >= 0");
    require(noise_std == 0.0 || noise_rng != nullptr,
            "simulate_site_year: noise_std > 0 needs an RNG stream");
    require(opt.w_init >= 0.0 && opt.w_init <= 1.0, "simulate_site_year: w_init outside [0, 1]");

    const Eigen::VectorXd npp = in.npp.size() == 12 ? in.npp : npp_proxy(opt);

    SimResult out;
    out.w.resize(days);
    out.som.resize(12);

    // Monthly substrate: EMA of the NPP proxy, seeded at the first month's input.
    double som = npp[0];
    for (int m = 0; m < 12; ++m) {
        som = regime.som_decay * som + (1.0 - regime.som_decay) * npp[m];
        out.som[m] = som;
    }

    SiteYearSample& s = out.sample;
    s.x_daily.resize(days, 2);
    s.x_daily.col(0) = in.temperature;
    s.x_daily.col(1) = in.precip;
    s.x_monthly.resize(12, 1);
    s.x_monthly.col(0) = npp;
    s.x_yearly.resize(1);
    s.x_yearly[0] = in.year_trend;
    s.x_static.resize(1 + n_regimes);
    s.x_static[0] = regime.ph;
    s.x_static.tail(n_regimes).setZero();
    s.x_static[1 + regime_id] = 1.0;
    s.y.resize(days);
    s.mask = Eigen::VectorXd::Ones(days);

    // Daily bucket model; flux reads the post-update moisture of the day.
    double w = opt.w_init;
    for (int t = 0; t < days; ++t) {
        w = std::clamp(w + opt.bucket_a * in.precip[t] - opt.bucket_b, 0.0, 1.0);
        out.w[t] = w;
        const ResponseFactors f =
            response_functions(in.temperature[t], w, out.som[cal.month_of_day(t)], regime);
        double y = f.product(regime.m_g0);
        if (noise_std > 0.0) y += noise_std * noise_rng->gaussian();
        s.y[t] = y;
    }
    return out;
}

void GeneratorConfig::validate() const {
    calendar.validate();
    base_regime.validate();
    require(grid_rows >= 1 && grid_cols >= 1, "GeneratorConfig: grid must be non-empty");
    require(grid_rows <= 100 && grid_cols <= 100, "GeneratorConfig: grid axis above 100 cells");
    require(n_regimes >= 1, "GeneratorConfig: n_regimes must be >= 1");
    require(n_regimes <= n_sites(), "GeneratorConfig: more regimes than grid cells");
    require(n_train_years >= 1, "GeneratorConfig: need at least one training year");
    require(n_aux_years == 1, "GeneratorConfig: exactly one auxiliary year is supported");
    require(n_test_years >= 1, "GeneratorConfig: need at least one test year");
    require(std::isfinite(smooth_len) && smooth_len > 0.0, "GeneratorConfig: smooth_len must be positive");
    require(std::isfinite(noise_std) && noise_std >= 0.0, "GeneratorConfig: noise_std must be >= 0");
    require(m_g0_ratio > 0.0, "GeneratorConfig: m_g0_ratio must be positive");
    require(train_obs_fraction > 0.0 && train_obs_fraction <= 1.0,
            "GeneratorConfig: train_obs_fraction outside (0, 1]");
    require(x_noise_t >= 0.0 && x_noise_p >= 0.0 && x_noise_npp >= 0.0,
            "GeneratorConfig: driver measurement noise must be >= 0");
    require(npp_fluct >= 0.0, "GeneratorConfig: npp_fluct must be >= 0");
    require(trend_gain >= 0.0 && trend_wthr >= 0.0 && wthr_jitter >= 0.0 && ph_jitter >= 0.0,
            "GeneratorConfig: trend/jitter magnitudes must be >= 0");
    require(std::abs(dlat) > 0.0 && std::abs(dlon) > 0.0, "GeneratorConfig: zero grid spacing");
    const double lat_max = lat0 + dlat * (grid_rows - 1);
    require(std::min(lat0, lat_max) >= -90.0 && std::max(lat0, lat_max) <= 90.0,
            "GeneratorConfig: grid leaves the valid latitude band");
    const double lon_max = lon0 + dlon * (grid_cols - 1);
    require(std::min(lon0, lon_max) >= -180.0 && std::max(lon0, lon_max) <= 180.0,
            "GeneratorConfig: grid leaves the valid longitude band");
    require(std::isfinite(p_lon_slope) && 1.0 + p_lon_slope * (lon_max - lon0) > 0.0,
            "GeneratorConfig: p_lon_slope makes mean precipitation non-positive");
    for (int k = 0; k < n_regimes; ++k) regime_for(*this, k).validate();
}

RegimeParams regime_for(const GeneratorConfig& cfg, int regime_id) {
    RegimeParams r = cfg.base_regime;
    r.m_g0 *= std::pow(cfg.m_g0_ratio, regime_id);
    r.ph += cfg.ph_offset * regime_id;
    return r;
}

std::vector<int> regime_map(const GeneratorConfig& cfg) {
    const int n = cfg.n_sites();
    std::vector<int> map(n, 0);
    if (cfg.layout == RegimeLayout::checkerboard) {
        for (int r = 0; r < cfg.grid_rows; ++r)
            for (int c = 0; c < cfg.grid_cols; ++c) map[r * cfg.grid_cols + c] = (r + c) % cfg.n_regimes;
        return map;
    }
    // Voronoi mosaic: distinct seed cells, nearest-seed assignment, ties to the
    // lowest regime index.
    RngStream rng = make_stream(cfg.seed, "regime-layout");
    std::vector<int> seeds;
    std::set<int> used;
    while ((int)seeds.size() < cfg.n_regimes) {
        const int cell = (int)rng.below((std::uint64_t)n);
        if (used.insert(cell).second) seeds.push_back(cell);
    }
    for (int r = 0; r < cfg.grid_rows; ++r) {
        for (int c = 0; c < cfg.grid_cols; ++c) {
            int best = 0;
            long best_d = -1;
            for (int k = 0; k < cfg.n_regimes; ++k) {
                const long dr = r - seeds[k] / cfg.grid_cols;
                const long dc = c - seeds[k] % cfg.grid_cols;
                const long d = dr * dr + dc * dc;
                if (best_d < 0 || d < best_d) {
                    best_d = d;
                    best = k;
                }
            }
            map[r * cfg.grid_cols + c] = best;
        }
    }
    return map;
}

namespace {

// Row-normalized Gaussian mixing matrix over grid distance; rows have unit
// L2 norm so mixed iid noise keeps unit variance.
Eigen::MatrixXd smoothing_matrix(const GeneratorConfig& cfg) {
    const int n = cfg.n_sites();
    Eigen::MatrixXd k(n, n);
    const double inv = 1.0 / (2.0 * cfg.smooth_len * cfg.smooth_len);
    for (int i = 0; i < n; ++i) {
        const int ri = i / cfg.grid_cols, ci = i % cfg.grid_cols;
        for (int j = 0; j < n; ++j) {
            const int rj = j / cfg.grid_cols, cj = j % cfg.grid_cols;
            const double d2 = double((ri - rj) * (ri - rj) + (ci - cj) * (ci - cj));
            k(i, j) = std::exp(-d2 * inv);
        }
        k.row(i) /= k.row(i).norm();
    }
    return k;
}

std::string grid_site_id(int r, int c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "g%02d%02d", r, c);
    return buf;
}

}  // namespace

Dataset build_benchmark(const GeneratorConfig& cfg) {
    cfg.validate();
    const int n = cfg.n_sites();
    const int days = cfg.calendar.days_per_year;
    const std::vector<int> regimes = regime_map(cfg);
    const Eigen::MatrixXd mix = smoothing_matrix(cfg);

    Dataset ds;
    ds.calendar = cfg.calendar;
    ds.feature_names.daily = {"temperature", "precip"};
    ds.feature_names.monthly = {"npp"};
    ds.feature_names.yearly = {"t_mean_norm", "p_mean_norm"};
    ds.feature_names.static_ = {"ph"};
    for (int k = 0; k < cfg.n_regimes; ++k)
        ds.feature_names.static_.push_back("regime_" + std::to_string(k));

    std::vector<SiteMeta> metas(n);  // grid order; ids sort the same way
    for (int r = 0; r < cfg.grid_rows; ++r) {
        for (int c = 0; c < cfg.grid_cols; ++c) {
            SiteMeta& m = metas[r * cfg.grid_cols + c];
            m.site_id = grid_site_id(r, c);
            m.lat = cfg.lat0 + cfg.dlat * r;
            m.lon = cfg.lon0 + cfg.dlon * c;
            m.region_tag = std::string(2 * r >= cfg.grid_rows ? "N" : "S") +
                           (2 * c >= cfg.grid_cols ? "E" : "W");
            ds.sites[m.site_id] = m;
        }
    }

    const int n_years = cfg.n_train_years + cfg.n_aux_years + cfg.n_test_years;
    for (int yi = 0; yi < n_years; ++yi) {
        const int year = cfg.first_year + yi;
        // iid driver noise per site, mixed across the grid for spatial coherence
        Eigen::MatrixXd eps_t(n, days), eps_p(n, days);
        for (int i = 0; i < n; ++i) {
            RngStream st = make_stream(cfg.seed, "driver-noise-t", metas[i].site_id, year);
            RngStream sp = make_stream(cfg.seed, "driver-noise-p", metas[i].site_id, year);
            for (int t = 0; t < days; ++t) {
                eps_t(i, t) = st.gaussian();
                eps_p(i, t) = sp.gaussian();
            }
        }
        eps_t = mix * eps_t;
        eps_p = mix * eps_p;

        for (int i = 0; i < n; ++i) {
            const SiteMeta& site = metas[i];
            const double t_mean = cfg.t_base - cfg.t_lat_slope * site.lat;
            const double t_amp = cfg.t_amp_base + cfg.t_amp_lat * (site.lat - cfg.lat0);
            const double p_site = cfg.p_mean * (1.0 + cfg.p_lon_slope * (site.lon - cfg.lon0));
            SimInputs in;
            in.temperature.resize(days);
            in.precip.resize(days);
            for (int t = 0; t < days; ++t) {
                const double frac = double(t) / days;
                in.temperature[t] = t_mean + t_amp * std::cos(2.0 * kPi * (frac - cfg.t_peak_frac)) +
                                    cfg.t_noise * eps_t(i, t);
                in.precip[t] = std::max(
                    0.0, p_site * (1.0 + cfg.p_amp * std::cos(2.0 * kPi * (frac - cfg.p_peak_frac))) +
                             cfg.p_noise * eps_p(i, t));
            }
            in.year_trend = 0.1 * yi;

            ProcessOptions opt = cfg.process;
            opt.npp_scale = cfg.process.npp_scale * (1.0 + cfg.npp_scale_step * regimes[i]);
            if (cfg.npp_fluct > 0.0) {
                // Interannual productivity roughness, identical across the
                // regime: spatial pooling can recover it, temporal smoothing
                // within one site-year cannot.
                RngStream nf = make_stream(cfg.seed, "npp-fluct",
                                           "r" + std::to_string(regimes[i]), year);
                in.npp = npp_proxy(opt);
                for (int m = 0; m < 12; ++m)
                    in.npp[m] = std::max(0.0, in.npp[m] * (1.0 + cfg.npp_fluct * nf.gaussian()));
            }
            RegimeParams reg = regime_for(cfg, regimes[i]);
            reg.m_g0 *= 1.0 + cfg.trend_gain * in.year_trend;
            double wthr = reg.w_thr + cfg.trend_wthr * in.year_trend;
            if (cfg.wthr_jitter > 0.0) {
                RngStream wj = make_stream(cfg.seed, "site-wthr", site.site_id, 0);
                wthr += wj.uniform(-cfg.wthr_jitter, cfg.wthr_jitter);
            }
            reg.w_thr = std::clamp(wthr, 0.0, 1.0);
            if (cfg.ph_jitter > 0.0) {
                RngStream pj = make_stream(cfg.seed, "site-ph", site.site_id, 0);
                reg.ph = std::clamp(reg.ph + pj.uniform(-cfg.ph_jitter, cfg.ph_jitter), 3.0, 9.0);
            }
            RngStream noise = make_stream(cfg.seed, "target-noise", site.site_id, year);
            SimResult sim = simulate_site_year(in, reg, regimes[i],
                                               cfg.n_regimes, cfg.calendar, cfg.noise_std,
                                               cfg.noise_std > 0.0 ? &noise : nullptr, opt);
            sim.sample.site_id = site.site_id;
            sim.sample.year = year;

            const SampleKey key{site.site_id, year};
            if (cfg.x_noise_t > 0.0 || cfg.x_noise_p > 0.0) {
                RngStream mn = make_stream(cfg.seed, "meas-noise", site.site_id, year);
                for (int t = 0; t < days; ++t) {
                    if (cfg.x_noise_t > 0.0)
                        sim.sample.x_daily(t, 0) += cfg.x_noise_t * mn.gaussian();
                    if (cfg.x_noise_p > 0.0)
                        sim.sample.x_daily(t, 1) =
                            std::max(0.0, sim.sample.x_daily(t, 1) + cfg.x_noise_p * mn.gaussian());
                }
            }
            if (cfg.x_noise_npp > 0.0) {
                RngStream mn = make_stream(cfg.seed, "meas-noise-npp", site.site_id, year);
                for (int m = 0; m < 12; ++m)
                    sim.sample.x_monthly(m, 0) =
                        std::max(0.0, sim.sample.x_monthly(m, 0) + cfg.x_noise_npp * mn.gaussian());
            }
            // Yearly-scale covariates are climatological normals (true site
            // means, constant across years), not the latent year trend: models
            // never see the year index, so inter-annual response drift is a
            // distribution shift they must absorb (or mitigate through
            // retrieval), exactly as with real tower records and WorldClim-
            // style covariate stacks.
            sim.sample.x_yearly.resize(2);
            sim.sample.x_yearly[0] = t_mean;
            sim.sample.x_yearly[1] = p_site;
            if (yi < cfg.n_train_years && cfg.train_obs_fraction < 1.0) {
                RngStream sparse = make_stream(cfg.seed, "sparsify", site.site_id, year);
                for (int t = 0; t < days; ++t) {
                    if (sparse.uniform() >= cfg.train_obs_fraction) {
                        sim.sample.mask[t] = 0.0;
                        sim.sample.y[t] = 0.0;
                    }
                }
            }
            ds.samples.emplace(key, std::move(sim.sample));
            if (yi < cfg.n_train_years)
                ds.train_split.push_back(key);
            else if (yi < cfg.n_train_years + cfg.n_aux_years)
                ds.aux_split.push_back(key);
            else
                ds.test_split.push_back(key);
        }
    }
    return ds;
}

Dataset make_sparse_subset(const Dataset& ds, const std::vector<std::string>& site_ids,
                           double keep_fraction, std::uint64_t seed) {
    require(keep_fraction > 0.0 && keep_fraction <= 1.0,
            "make_sparse_subset: keep_fraction outside (0, 1]");
    std::set<std::string> keep(site_ids.begin(), site_ids.end());
    for (const std::string& id : site_ids)
        require(ds.sites.count(id) > 0, "make_sparse_subset: unknown site " + id);

    Dataset out;
    out.calendar = ds.calendar;
    out.feature_names = ds.feature_names;
    for (const auto& [id, meta] : ds.sites)
        if (keep.count(id)) out.sites[id] = meta;

    for (const auto& [key, s] : ds.samples) {
        if (!keep.count(key.site_id)) continue;
        SiteYearSample c = s;
        RngStream rng = make_stream(seed, "sparsify", key.site_id, key.year);
        for (Eigen::Index t = 0; t < c.mask.size(); ++t) {
            if (c.mask[t] == 1.0 && rng.uniform() >= keep_fraction) {
                c.mask[t] = 0.0;
                c.y[t] = 0.0;
            }
        }
        out.samples.emplace(key, std::move(c));
    }

    auto filter = [&](const std::vector<SampleKey>& keys) {
        std::vector<SampleKey> kept;
        for (const SampleKey& k : keys)
            if (keep.count(k.site_id)) kept.push_back(k);
        return kept;
    };
    out.train_split = filter(ds.train_split);
    out.aux_split = filter(ds.aux_split);
    out.test_split = filter(ds.test_split);
    return out;
}

}  // namespace raci
