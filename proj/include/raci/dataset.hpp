#pragma once

#include <Eigen/Core>
#include <compare>
#include <map>
#include <string>
#include <vector>

#include "raci/calendar.hpp"

namespace raci {

struct SiteMeta {
    std::string site_id;
    double lat = 0.0;  // degrees, [-90, 90]
    double lon = 0.0;  // degrees, [-180, 180]
    std::string region_tag;
};

// One location-year of hierarchical inputs and a daily target.
// mask is 0/1; y is stored as 0 where mask == 0.
struct SiteYearSample {
    std::string site_id;
    int year = 0;
    Eigen::MatrixXd x_daily;    // days_per_year x d_D
    Eigen::MatrixXd x_monthly;  // 12 x d_M
    Eigen::VectorXd x_yearly;   // d_Y
    Eigen::VectorXd x_static;   // d_S
    Eigen::VectorXd y;          // days_per_year
    Eigen::VectorXd mask;       // days_per_year, entries 0 or 1
};

struct SampleKey {
    std::string site_id;
    int year = 0;
    auto operator<=>(const SampleKey&) const = default;
};

struct FeatureNames {
    std::vector<std::string> daily;
    std::vector<std::string> monthly;
    std::vector<std::string> yearly;
    std::vector<std::string> static_;
};

struct Dataset {
    CalendarSpec calendar;
    std::map<std::string, SiteMeta> sites;
    std::map<SampleKey, SiteYearSample> samples;
    std::vector<SampleKey> train_split;
    std::vector<SampleKey> aux_split;
    std::vector<SampleKey> test_split;
    FeatureNames feature_names;

    int d_daily() const { return static_cast<int>(feature_names.daily.size()); }
    int d_monthly() const { return static_cast<int>(feature_names.monthly.size()); }
    int d_yearly() const { return static_cast<int>(feature_names.yearly.size()); }
    int d_static() const { return static_cast<int>(feature_names.static_.size()); }

    const SiteYearSample& sample(const SampleKey& key) const;
    const SiteYearSample* find_sample(const SampleKey& key) const;
};

// Returns every invariant violation as a human-readable description;
// an empty list means the dataset is well formed.
std::vector<std::string> validate_dataset(const Dataset& ds);

// Baseline input convention: monthly/yearly/static blocks replicated to the
// daily resolution and concatenated with the daily drivers.
// Row t = [x_daily[t], x_monthly[month_of_day(t)], x_yearly, x_static].
Eigen::MatrixXd replicate_for_baseline(const SiteYearSample& s, const CalendarSpec& cal);

// Feature-wise standardization, fit on the training split and applied to
// every sample a model consumes (targets, masks and site metadata stay in
// physical units). Constant columns keep std 1, so they are only centered.
struct FeatureScaler {
    Eigen::VectorXd daily_mean, daily_std;
    Eigen::VectorXd monthly_mean, monthly_std;
    Eigen::VectorXd yearly_mean, yearly_std;
    Eigen::VectorXd static_mean, static_std;
};

// Column means/stds over every sample of `split`. Throws on an empty split.
FeatureScaler fit_scaler(const Dataset& ds, const std::vector<SampleKey>& split);

SiteYearSample scale_sample(const SiteYearSample& s, const FeatureScaler& sc);

// Copy of the dataset with standardized features in every sample.
Dataset scale_features(const Dataset& ds, const FeatureScaler& sc);

}  // namespace raci
