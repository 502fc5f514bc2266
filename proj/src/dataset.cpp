#include "raci/dataset.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace raci {

namespace {

std::string key_str(const SampleKey& k) {
    return "(" + k.site_id + ", " + std::to_string(k.year) + ")";
}

bool all_finite(const Eigen::MatrixXd& m) {
    return m.allFinite();
}

void check_split(const Dataset& ds, const std::vector<SampleKey>& split, const char* name,
                 std::vector<std::string>& out) {
    for (const auto& key : split) {
        if (!ds.samples.count(key))
            out.push_back(std::string("missing sample: ") + name + " split lists " + key_str(key) +
                          " but no such sample exists");
    }
}

void check_overlap(const std::vector<SampleKey>& a, const char* an, const std::vector<SampleKey>& b,
                   const char* bn, std::vector<std::string>& out) {
    std::set<SampleKey> sa(a.begin(), a.end());
    for (const auto& key : b) {
        if (sa.count(key))
            out.push_back("split overlap: " + key_str(key) + " appears in both " + an + " and " +
                          bn);
    }
}

}  // namespace

const SiteYearSample& Dataset::sample(const SampleKey& key) const {
    auto it = samples.find(key);
    if (it == samples.end())
        throw std::out_of_range("dataset: no sample for " + key.site_id + ":" +
                                std::to_string(key.year));
    return it->second;
}

const SiteYearSample* Dataset::find_sample(const SampleKey& key) const {
    auto it = samples.find(key);
    return it == samples.end() ? nullptr : &it->second;
}

std::vector<std::string> validate_dataset(const Dataset& ds) {
    std::vector<std::string> v;

    try {
        ds.calendar.validate();
    } catch (const std::exception& e) {
        v.push_back(e.what());
        return v;  // nothing else is checkable against a broken calendar
    }
    const int days = ds.calendar.days_per_year;

    for (const auto& [id, meta] : ds.sites) {
        if (id != meta.site_id) v.push_back("site table: key '" + id + "' != site_id field");
        if (meta.lat < -90.0 || meta.lat > 90.0 || !std::isfinite(meta.lat))
            v.push_back("site " + id + ": lat out of [-90, 90]");
        if (meta.lon < -180.0 || meta.lon > 180.0 || !std::isfinite(meta.lon))
            v.push_back("site " + id + ": lon out of [-180, 180]");
    }

    for (const auto& [key, s] : ds.samples) {
        const std::string at = key_str(key);
        if (key.site_id != s.site_id || key.year != s.year)
            v.push_back("sample " + at + ": key does not match stored site_id/year");
        if (!ds.sites.count(s.site_id)) v.push_back("sample " + at + ": unknown site");

        if (s.x_daily.rows() != days)
            v.push_back("sample " + at + ": x_daily has " + std::to_string(s.x_daily.rows()) +
                        " rows, calendar has " + std::to_string(days) + " days");
        if (s.x_monthly.rows() != 12) v.push_back("sample " + at + ": x_monthly must have 12 rows");
        if (s.x_daily.cols() != ds.d_daily())
            v.push_back("sample " + at + ": x_daily column count != feature_names.daily size");
        if (s.x_monthly.cols() != ds.d_monthly())
            v.push_back("sample " + at + ": x_monthly column count != feature_names.monthly size");
        if (s.x_yearly.size() != ds.d_yearly())
            v.push_back("sample " + at + ": x_yearly size != feature_names.yearly size");
        if (s.x_static.size() != ds.d_static())
            v.push_back("sample " + at + ": x_static size != feature_names.static size");

        if (!all_finite(s.x_daily)) v.push_back("sample " + at + ": non-finite value in x_daily");
        if (!all_finite(s.x_monthly))
            v.push_back("sample " + at + ": non-finite value in x_monthly");
        if (!all_finite(s.x_yearly)) v.push_back("sample " + at + ": non-finite value in x_yearly");
        if (!all_finite(s.x_static)) v.push_back("sample " + at + ": non-finite value in x_static");

        if (s.mask.size() != days)
            v.push_back("sample " + at + ": mask length != days_per_year");
        if (s.y.size() != days) v.push_back("sample " + at + ": y length != days_per_year");
        const int n = static_cast<int>(std::min(s.mask.size(), s.y.size()));
        for (int t = 0; t < n; ++t) {
            const double m = s.mask[t];
            if (m != 0.0 && m != 1.0) {
                v.push_back("sample " + at + ": mask entry not 0/1 at day " + std::to_string(t));
                break;
            }
        }
        for (int t = 0; t < n; ++t) {
            if (s.mask[t] == 1.0 && !std::isfinite(s.y[t])) {
                v.push_back("sample " + at + ": non-finite y at observed day " + std::to_string(t));
                break;
            }
        }
    }

    check_split(ds, ds.train_split, "train", v);
    check_split(ds, ds.aux_split, "auxiliary", v);
    check_split(ds, ds.test_split, "test", v);
    check_overlap(ds.train_split, "train", ds.aux_split, "auxiliary", v);
    check_overlap(ds.train_split, "train", ds.test_split, "test", v);
    check_overlap(ds.aux_split, "auxiliary", ds.test_split, "test", v);

    return v;
}

namespace {

// Accumulates column sums / squared sums of a block across samples.
struct ColumnStats {
    Eigen::VectorXd sum, sq;
    long n = 0;

    void init(Eigen::Index cols) {
        sum = Eigen::VectorXd::Zero(cols);
        sq = Eigen::VectorXd::Zero(cols);
    }
    void add_rows(const Eigen::MatrixXd& block) {
        sum += block.colwise().sum().transpose();
        sq += block.array().square().colwise().sum().matrix().transpose();
        n += block.rows();
    }
    void finish(Eigen::VectorXd& mean, Eigen::VectorXd& std_out) const {
        mean = sum / double(n);
        Eigen::VectorXd var = sq / double(n) - mean.cwiseProduct(mean);
        std_out = var.cwiseMax(0.0).cwiseSqrt();
        for (Eigen::Index i = 0; i < std_out.size(); ++i)
            if (std_out[i] < 1e-12) std_out[i] = 1.0;
    }
};

}  // namespace

FeatureScaler fit_scaler(const Dataset& ds, const std::vector<SampleKey>& split) {
    if (split.empty()) throw std::invalid_argument("fit_scaler: empty split");
    ColumnStats daily, monthly, yearly, statics;
    daily.init(ds.d_daily());
    monthly.init(ds.d_monthly());
    yearly.init(ds.d_yearly());
    statics.init(ds.d_static());
    for (const auto& key : split) {
        const SiteYearSample& s = ds.sample(key);
        daily.add_rows(s.x_daily);
        monthly.add_rows(s.x_monthly);
        yearly.add_rows(s.x_yearly.transpose());
        statics.add_rows(s.x_static.transpose());
    }
    FeatureScaler sc;
    daily.finish(sc.daily_mean, sc.daily_std);
    monthly.finish(sc.monthly_mean, sc.monthly_std);
    yearly.finish(sc.yearly_mean, sc.yearly_std);
    statics.finish(sc.static_mean, sc.static_std);
    return sc;
}

SiteYearSample scale_sample(const SiteYearSample& s, const FeatureScaler& sc) {
    if (sc.daily_mean.size() != s.x_daily.cols() || sc.monthly_mean.size() != s.x_monthly.cols() ||
        sc.yearly_mean.size() != s.x_yearly.size() || sc.static_mean.size() != s.x_static.size())
        throw std::invalid_argument("scale_sample: scaler does not match the feature layout of " +
                                    s.site_id + ":" + std::to_string(s.year));
    SiteYearSample out = s;
    out.x_daily = (s.x_daily.rowwise() - sc.daily_mean.transpose()).array().rowwise() /
                  sc.daily_std.transpose().array();
    out.x_monthly = (s.x_monthly.rowwise() - sc.monthly_mean.transpose()).array().rowwise() /
                    sc.monthly_std.transpose().array();
    out.x_yearly = (s.x_yearly - sc.yearly_mean).cwiseQuotient(sc.yearly_std);
    out.x_static = (s.x_static - sc.static_mean).cwiseQuotient(sc.static_std);
    return out;
}

Dataset scale_features(const Dataset& ds, const FeatureScaler& sc) {
    Dataset out = ds;
    for (auto& [key, s] : out.samples) s = scale_sample(s, sc);
    return out;
}

Eigen::MatrixXd replicate_for_baseline(const SiteYearSample& s, const CalendarSpec& cal) {
    const int days = cal.days_per_year;
    const auto d_d = s.x_daily.cols();
    const auto d_m = s.x_monthly.cols();
    const auto d_y = s.x_yearly.size();
    const auto d_s = s.x_static.size();
    Eigen::MatrixXd out(days, d_d + d_m + d_y + d_s);
    for (int t = 0; t < days; ++t) {
        const int m = cal.month_of_day(t);
        out.row(t).segment(0, d_d) = s.x_daily.row(t);
        out.row(t).segment(d_d, d_m) = s.x_monthly.row(m);
        out.row(t).segment(d_d + d_m, d_y) = s.x_yearly.transpose();
        out.row(t).segment(d_d + d_m + d_y, d_s) = s.x_static.transpose();
    }
    return out;
}

}  // namespace raci
