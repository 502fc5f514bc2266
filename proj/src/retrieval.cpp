#include "raci/retrieval.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "raci/hierarchy.hpp"

namespace raci {

namespace {
constexpr double kEarthRadiusKm = 6371.0;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
    const double p1 = lat1 * kPi / 180.0, p2 = lat2 * kPi / 180.0;
    const double dp = (lat2 - lat1) * kPi / 180.0, dl = (lon2 - lon1) * kPi / 180.0;
    const double a = std::sin(dp / 2) * std::sin(dp / 2) +
                     std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

NeighborIndex build_neighbor_index(const std::map<std::string, SiteMeta>& sites, int k) {
    if (sites.size() < 2)
        throw std::invalid_argument("build_neighbor_index: need at least 2 sites");
    if (k < 1) throw std::invalid_argument("build_neighbor_index: k must be >= 1");
    NeighborIndex idx;
    idx.k = k;
    for (const auto& [id, meta] : sites) {
        std::vector<std::pair<double, std::string>> dist;
        dist.reserve(sites.size() - 1);
        for (const auto& [oid, ometa] : sites) {
            if (oid == id) continue;
            dist.emplace_back(haversine_km(meta.lat, meta.lon, ometa.lat, ometa.lon), oid);
        }
        // pair ordering = distance then ascending site_id, the tie-break rule
        std::sort(dist.begin(), dist.end());
        const std::size_t n = std::min(std::size_t(k), dist.size());
        std::vector<std::string>& out = idx.neighbors[id];
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.push_back(dist[i].second);
    }
    return idx;
}

Eigen::VectorXd normalize_trajectory(const Eigen::VectorXd& y, const Eigen::VectorXd& mask) {
    if (y.size() != mask.size())
        throw std::invalid_argument("normalize_trajectory: length mismatch");
    double sum_abs = 0.0;
    double count = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (mask[i] == 1.0) {
            sum_abs += std::abs(y[i]);
            count += 1.0;
        }
    }
    const double denom = (count > 0.0 ? sum_abs / count : 0.0) + 1e-6;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (mask[i] == 1.0) out[i] = y[i] / denom;
    return out;
}

RetrievalPool RetrievalPool::empty(const RaciConfig& cfg, std::uint64_t fingerprint) {
    RetrievalPool p;
    p.tau = cfg.tau;
    p.k_pca = cfg.k_pca;
    p.built_from = "empty";
    p.param_fingerprint = fingerprint;
    return p;
}

RetrievalPool build_pool(const Dataset& ds, const ParamStore& params, const RaciConfig& cfg) {
    if (ds.aux_split.empty()) throw std::invalid_argument("build_pool: auxiliary split is empty");

    RetrievalPool pool;
    pool.tau = cfg.tau;
    pool.k_pca = cfg.k_pca;
    pool.built_from = "aux";
    pool.param_fingerprint = params.fingerprint();

    std::vector<SampleKey> keys = ds.aux_split;
    std::sort(keys.begin(), keys.end());
    for (const SampleKey& key : keys) {
        const SiteYearSample& s = ds.sample(key);
        if (s.mask.sum() == 0.0) {
            pool.skipped.push_back(key);
            continue;
        }
        Tape t(&params);
        const YearlyPathNodes path =
            build_yearly_path(t, s, ds.calendar, cfg.h, cfg.use_temporal, nullptr);
        PoolEntry e;
        e.site_id = key.site_id;
        e.year = key.year;
        e.embedding = t.value(path.h_yearly).row(0).transpose();
        e.traj = normalize_trajectory(s.y, s.mask);
        pool.entries.push_back(std::move(e));
    }
    if (pool.entries.empty())
        throw std::invalid_argument("build_pool: every auxiliary trajectory is fully masked");

    const int n = int(pool.entries.size());
    if (cfg.k_pca > std::min(cfg.h, n))
        throw std::invalid_argument("build_pool: k_pca exceeds min(h, pool size)");

    Eigen::MatrixXd emb(n, cfg.h);
    for (int i = 0; i < n; ++i) emb.row(i) = pool.entries[std::size_t(i)].embedding.transpose();
    pool.pca_mean = emb.colwise().mean().transpose();
    const Eigen::MatrixXd centered = emb.rowwise() - pool.pca_mean.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    pool.pca_proj = svd.matrixV().leftCols(cfg.k_pca);
    return pool;
}

MonthlyContextTable build_monthly_table(const Dataset& ds, const ParamStore& params,
                                        const RaciConfig& cfg) {
    MonthlyContextTable table;
    table.param_fingerprint = params.fingerprint();
    for (const auto& [key, s] : ds.samples) {
        Tape t(&params);
        const YearlyPathNodes path =
            build_yearly_path(t, s, ds.calendar, cfg.h, cfg.use_temporal, nullptr);
        const PropagateNodes y2m =
            propagate_yearly_to_monthly(t, path.h_yearly, path.h_monthly, cfg.use_temporal);
        table.rows.emplace(key, t.value(y2m.refined));
    }
    return table;
}

Eigen::VectorXd pool_similarities(const RetrievalPool& pool, const Eigen::VectorXd& embedding) {
    // Embeddings are projected without centering: the shared component of the
    // pool stays in the coordinates, so the cosine acts as a relative-distance
    // gate around it. Centering first would make the angle of near-centroid
    // embeddings noise-dominated and the threshold meaningless for them.
    const int n = int(pool.entries.size());
    Eigen::VectorXd sims(n);
    const Eigen::VectorXd zq = pool.pca_proj.transpose() * embedding;
    const double nq = zq.norm();
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd zi = pool.pca_proj.transpose() * pool.entries[std::size_t(i)].embedding;
        const double ni = zi.norm();
        if (nq == 0.0 || ni == 0.0) {
            sims[i] = 0.0;
            continue;
        }
        sims[i] = std::clamp(zq.dot(zi) / (nq * ni), -1.0, 1.0);
    }
    return sims;
}

int retrieve_yearly(Tape& t, int h_yearly, const SampleKey& target, const RetrievalPool& pool,
                    int days_per_year, std::uint64_t designated_fp, RetrievalReport* report) {
    if (pool.param_fingerprint != designated_fp)
        throw std::runtime_error(
            "retrieve_yearly: stale retrieval pool (parameter fingerprint mismatch); rebuild it");

    const Eigen::VectorXd query = t.value(h_yearly).row(0).transpose();
    const Eigen::VectorXd sims =
        pool.entries.empty() ? Eigen::VectorXd() : pool_similarities(pool, query);

    std::vector<int> candidates;
    for (int i = 0; i < sims.size(); ++i) {
        const PoolEntry& e = pool.entries[std::size_t(i)];
        if (e.site_id == target.site_id && e.year == target.year) continue;
        if (e.year == target.year) continue;
        if (sims[i] > pool.tau) candidates.push_back(i);
    }

    if (report != nullptr) {
        report->sims = sims;
        report->candidates = candidates;
        report->weights.resize(0);
        report->fallback = candidates.empty();
    }

    if (candidates.empty()) return t.constant(Eigen::MatrixXd::Zero(1, days_per_year));

    const int nc = int(candidates.size());
    Eigen::MatrixXd keys(nc, query.size());
    Eigen::MatrixXd trajs(nc, days_per_year);
    for (int i = 0; i < nc; ++i) {
        const PoolEntry& e = pool.entries[std::size_t(candidates[std::size_t(i)])];
        keys.row(i) = e.embedding.transpose();
        if (e.traj.size() != days_per_year)
            throw std::invalid_argument("retrieve_yearly: pool trajectory length != calendar");
        trajs.row(i) = e.traj.transpose();
    }

    const AttendNodes a = attend(t, h_yearly, t.constant(std::move(keys)), "retr.attn");
    if (report != nullptr) report->weights = t.value(a.weights).row(0).transpose();
    // weights mix the stored trajectories, not the embeddings
    return t.matmul(a.weights, t.constant(std::move(trajs)));
}

}  // namespace raci
