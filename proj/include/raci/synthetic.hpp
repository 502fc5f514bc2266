#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "raci/dataset.hpp"
#include "raci/rng.hpp"

namespace raci {

// Conditioners of one biophysical regime. Flux production is the product
//   m_g0 * f_pH * f_MST(T, W) * f_RX(W) * f_SOM(SOM)
// with the standard response shapes below (Q10 temperature-moisture, logistic
// redox switch, Michaelis-Menten substrate limitation, Gaussian pH bell).
struct RegimeParams {
    double m_g0 = 1.0;       // baseline production potential (flux units)
    double ph = 6.2;         // site pH, [3, 9]
    double ph_opt = 6.2;
    double sigma_ph = 1.5;
    double q10 = 2.0;
    double t_ref = 10.0;     // deg C
    double w_thr = 0.5;      // redox moisture threshold
    double kappa = 10.0;     // redox steepness
    double k_s = 1.0;        // substrate half-saturation
    double som_decay = 0.8;  // monthly EMA coefficient, (0, 1)

    void validate() const;  // throws std::invalid_argument
};

struct ResponseFactors {
    double f_mst = 0.0;  // q10^((T - t_ref)/10) * W
    double f_rx = 0.0;   // 1 / (1 + exp(-kappa (W - w_thr)))
    double f_som = 0.0;  // SOM / (SOM + k_s)
    double f_ph = 0.0;   // exp(-(ph - ph_opt)^2 / (2 sigma_ph^2))

    double product(double m_g0) const { return m_g0 * f_ph * f_mst * f_rx * f_som; }
};

// Preconditions: finite inputs, w in [0,1], som >= 0.
ResponseFactors response_functions(double t_c, double w, double som, const RegimeParams& regime);

// Latent-state update rules and the seasonal NPP proxy.
struct ProcessOptions {
    double bucket_a = 0.1;   // moisture gain per mm precipitation
    double bucket_b = 0.05;  // daily moisture drawdown
    double w_init = 0.5;
    double npp_phase = 9.5;  // month offset of the NPP sinusoid
    double npp_scale = 1.0;  // amplitude (set per regime by the generator)
};

struct SimInputs {
    Eigen::VectorXd temperature;  // days_per_year
    Eigen::VectorXd precip;       // days_per_year, mm/day
    Eigen::VectorXd npp;          // 12; empty -> seasonal proxy from ProcessOptions
    double year_trend = 0.0;
};

struct SimResult {
    SiteYearSample sample;
    Eigen::VectorXd w;    // daily moisture trajectory
    Eigen::VectorXd som;  // monthly substrate trajectory
};

// Single-layer realization of the production process. The one-hot regime id
// (regime_id of n_regimes) lands in x_static after ph. noise_rng may be null
// when noise_std == 0.
SimResult simulate_site_year(const SimInputs& in, const RegimeParams& regime, int regime_id,
                             int n_regimes, const CalendarSpec& cal, double noise_std,
                             RngStream* noise_rng, const ProcessOptions& opt = {});

// Seasonal NPP proxy: npp_scale * max(0, sin(2 pi (m + npp_phase) / 12)).
Eigen::VectorXd npp_proxy(const ProcessOptions& opt);

enum class RegimeLayout { checkerboard, voronoi };

// Spatially smooth drivers over a lat/lon grid, mosaic regime conditioners,
// year-based train/auxiliary/test splits.
struct GeneratorConfig {
    int grid_rows = 8;
    int grid_cols = 8;
    double lat0 = 40.0;
    double lon0 = -100.0;
    double dlat = 0.5;
    double dlon = 0.5;

    int n_regimes = 2;
    RegimeLayout layout = RegimeLayout::checkerboard;
    RegimeParams base_regime;
    double m_g0_ratio = 3.0;       // regime k: m_g0 *= ratio^k
    double ph_offset = 0.8;        // regime k: ph += k * offset
    double npp_scale_step = 0.25;  // regime k: npp amplitude = 1 + k * step

    int first_year = 2000;
    int n_train_years = 5;
    int n_aux_years = 1;  // must be exactly 1
    int n_test_years = 2;

    // The yearly trend is a conditioner, not a driver: production potential
    // scales as m_g0 * (1 + trend_gain * year_trend) and the redox threshold
    // drifts as w_thr + trend_wthr * year_trend, so later (test) years sit
    // outside the response family seen in training, in scale and in shape.
    double trend_gain = 1.0;
    double trend_wthr = 0.3;

    // Per-site redox-threshold offset, uniform in [-wthr_jitter, +wthr_jitter]
    // and constant across years: an unmeasured site property (water table,
    // microtopography) that shapes the response but appears in no feature.
    double wthr_jitter = 0.15;

    // Per-site pH offset, uniform in [-ph_jitter, +ph_jitter], constant
    // across years and stored in x_static: a measured soil property that
    // fingerprints each site, so retrieval can single out functionally
    // matching site-years.
    double ph_jitter = 0.25;

    // Fraction of train-year days observed (mask = 1); the auxiliary and
    // test years stay fully observed. Mirrors sparse-tower campaigns where
    // the retrieval pool comes from a densely simulated year.
    double train_obs_fraction = 1.0;

    // Sensor noise on the *stored* daily driver features (additive Gaussian,
    // std in feature units; noisy precipitation clamps at 0). The simulation
    // always runs on the true smooth fields, so each site's stored drivers
    // are an imperfect measurement of what produced its flux -- neighboring
    // sites sample the same field independently, which is what makes spatial
    // context informative rather than redundant.
    double x_noise_t = 0.0;
    double x_noise_p = 0.0;
    double x_noise_npp = 0.0;  // same, for stored monthly NPP (clamped at 0)
    double npp_fluct = 0.0;    // relative month-to-month NPP roughness, shared within a regime

    double smooth_len = 2.0;  // Gaussian length-scale of driver noise, grid cells
    double noise_std = 0.05;  // observation noise on the target
    std::uint64_t seed = 42;

    CalendarSpec calendar = CalendarSpec::standard();
    ProcessOptions process;

    // latitudinal seasonal cycle of the drivers
    double t_base = 24.0, t_lat_slope = 0.35;   // mean temperature = t_base - slope * lat
    double t_amp_base = 9.0, t_amp_lat = 0.15;  // amplitude = amp_base + amp_lat * (lat - lat0)
    double t_peak_frac = 0.55;                  // fraction of the year at peak temperature
    double t_noise = 2.0;
    double p_mean = 0.6, p_amp = 0.7;           // precip mean and relative seasonal amplitude
    double p_lon_slope = 0.05;                  // continentality: mean *= 1 + slope * (lon - lon0)
    double p_peak_frac = 0.40;
    double p_noise = 0.35;

    int n_sites() const { return grid_rows * grid_cols; }
    void validate() const;  // throws std::invalid_argument on infeasible configs
};

// Derived per-regime conditioners.
RegimeParams regime_for(const GeneratorConfig& cfg, int regime_id);

// Regime id per grid cell under the configured mosaic layout.
std::vector<int> regime_map(const GeneratorConfig& cfg);

Dataset build_benchmark(const GeneratorConfig& cfg);

// Restricts a dataset to a site subset and randomly hides a fraction of the
// daily observations (mask = 0, y stored as 0). Split keys of dropped sites
// are removed. Used for sparse fine-tuning experiments.
Dataset make_sparse_subset(const Dataset& ds, const std::vector<std::string>& site_ids,
                           double keep_fraction, std::uint64_t seed);

}  // namespace raci
