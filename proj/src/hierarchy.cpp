#include "raci/hierarchy.hpp"

#include <cmath>
#include <stdexcept>

#include "raci/encoders.hpp"

namespace raci {

void register_attention(ParamStore& ps, const std::string& prefix, int h) {
    ps.add(prefix + ".wq", h, h, h);
    ps.add(prefix + ".wk", h, h, h);
}

void register_gate(ParamStore& ps, const std::string& prefix, int h) {
    ps.add(prefix + ".g1", h, 2 * h, 2 * h);
    ps.add(prefix + ".g1b", h, 1, 2 * h);
    ps.add(prefix + ".g2", 1, h, h);
    ps.add(prefix + ".g2b", 1, 1, h);
}

AttendNodes attend(Tape& t, int query, int keys, const std::string& prefix) {
    if (t.value(keys).rows() < 1) throw std::invalid_argument("attend: empty key set");
    if (t.value(query).rows() != 1 || t.value(query).cols() != t.value(keys).cols())
        throw std::invalid_argument("attend: query must be one row matching the key width");
    const double inv_sqrt_h = 1.0 / std::sqrt(double(t.value(keys).cols()));
    const int qq = t.matmul(query, t.param(prefix + ".wq"), false, true);
    const int kk = t.matmul(keys, t.param(prefix + ".wk"), false, true);
    const int scores = t.scale(t.matmul(qq, kk, false, true), inv_sqrt_h);
    const int weights = t.softmax_rows(scores);
    return {t.matmul(weights, keys), weights};
}

int gate_rows(Tape& t, int coarse_rows, int fine_rows, const std::string& prefix) {
    const int joint = t.concat_cols(coarse_rows, fine_rows);
    const int hidden =
        t.tanh_(t.affine_rows(joint, t.param(prefix + ".g1"), t.param(prefix + ".g1b")));
    return t.softplus_(t.affine_rows(hidden, t.param(prefix + ".g2"), t.param(prefix + ".g2b")));
}

MonthlyAggNodes aggregate_daily_to_monthly(Tape& t, int h_daily, int phi_m,
                                           const CalendarSpec& cal, bool attention) {
    if (t.value(phi_m).rows() != 12)
        throw std::invalid_argument("aggregate_daily_to_monthly: phi_m must have 12 rows");
    if (t.value(h_daily).rows() != cal.days_per_year)
        throw std::invalid_argument("aggregate_daily_to_monthly: day count != calendar");
    MonthlyAggNodes out;
    std::vector<int> rows;
    rows.reserve(12);
    for (int m = 0; m < 12; ++m) {
        const auto [start, len] = cal.month_span(m);
        const int keys = t.slice_rows(h_daily, start, len);
        const int query = t.slice_rows(phi_m, m, 1);
        int context;
        if (attention) {
            const AttendNodes a = attend(t, query, keys, "agg.d2m");
            context = a.context;
            out.alpha_d2m.push_back(a.weights);
        } else {
            context = t.mean_rows(keys);
            out.alpha_d2m.push_back(
                t.constant(Eigen::MatrixXd::Constant(1, len, 1.0 / double(len))));
        }
        rows.push_back(t.add(context, query));
    }
    out.h_monthly = t.concat_rows(rows);
    return out;
}

YearlyAggNodes aggregate_monthly_to_yearly(Tape& t, int h_monthly, int phi_r, bool attention) {
    if (t.value(h_monthly).rows() != 12)
        throw std::invalid_argument("aggregate_monthly_to_yearly: need 12 monthly embeddings");
    YearlyAggNodes out;
    int context;
    if (attention) {
        const AttendNodes a = attend(t, phi_r, h_monthly, "agg.m2y");
        context = a.context;
        out.alpha_m2y = a.weights;
    } else {
        context = t.mean_rows(h_monthly);
        out.alpha_m2y = t.constant(Eigen::MatrixXd::Constant(1, 12, 1.0 / 12.0));
    }
    out.h_yearly = t.add(context, phi_r);
    return out;
}

PropagateNodes propagate_yearly_to_monthly(Tape& t, int h_yearly, int h_monthly,
                                           bool learned_gate) {
    const int coarse = t.repeat_row(h_yearly, 12);
    PropagateNodes out;
    out.beta = learned_gate ? gate_rows(t, coarse, h_monthly, "prop.y2m")
                            : t.constant(Eigen::MatrixXd::Ones(12, 1));
    out.refined = t.add(h_monthly, t.row_scale(coarse, out.beta));
    return out;
}

PropagateNodes propagate_monthly_to_daily(Tape& t, int h_monthly_eff, int h_daily,
                                          const CalendarSpec& cal, bool learned_gate) {
    if (t.value(h_daily).rows() != cal.days_per_year)
        throw std::invalid_argument("propagate_monthly_to_daily: day count != calendar");
    std::vector<int> month_of(std::size_t(cal.days_per_year));
    for (int d = 0; d < cal.days_per_year; ++d) month_of[std::size_t(d)] = cal.month_of_day(d);
    const int coarse = t.gather_rows(h_monthly_eff, std::move(month_of));
    PropagateNodes out;
    out.beta = learned_gate
                   ? gate_rows(t, coarse, h_daily, "prop.m2d")
                   : t.constant(Eigen::MatrixXd::Ones(cal.days_per_year, 1));
    out.refined = t.add(h_daily, t.row_scale(coarse, out.beta));
    return out;
}

YearlyPathNodes build_yearly_path(Tape& t, const SiteYearSample& s, const CalendarSpec& cal,
                                  int h, bool attention, const EncoderDropout* dropout) {
    YearlyPathNodes out;
    const int x_daily = t.constant(s.x_daily);
    const int x_monthly = t.constant(s.x_monthly);
    Eigen::MatrixXd regime(1, s.x_yearly.size() + s.x_static.size());
    regime << s.x_yearly.transpose(), s.x_static.transpose();
    const int x_regime = t.constant(regime);

    out.h_daily = encode_rows(t, x_daily, "enc.daily");
    out.phi_m = encode_rows(t, x_monthly, "enc.monthly");
    out.phi_r = encode_rows(t, x_regime, "enc.regime");
    if (t.value(out.h_daily).cols() != h)
        throw std::invalid_argument("build_yearly_path: encoder width != configured h");
    if (dropout != nullptr) {
        out.h_daily = t.hadamard_const(out.h_daily, dropout->daily);
        out.phi_m = t.hadamard_const(out.phi_m, dropout->monthly);
        out.phi_r = t.hadamard_const(out.phi_r, dropout->regime);
    }

    MonthlyAggNodes agg = aggregate_daily_to_monthly(t, out.h_daily, out.phi_m, cal, attention);
    out.h_monthly = agg.h_monthly;
    out.alpha_d2m = std::move(agg.alpha_d2m);

    const YearlyAggNodes yearly = aggregate_monthly_to_yearly(t, out.h_monthly, out.phi_r, attention);
    out.h_yearly = yearly.h_yearly;
    out.alpha_m2y = yearly.alpha_m2y;
    return out;
}

void register_hierarchy_params(ParamStore& ps, int h) {
    register_attention(ps, "agg.d2m", h);
    register_attention(ps, "agg.m2y", h);
    register_gate(ps, "prop.y2m", h);
    register_gate(ps, "prop.m2d", h);
}

}  // namespace raci
