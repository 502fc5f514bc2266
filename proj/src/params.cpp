#include "raci/params.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace raci {

int ParamStore::add(const std::string& name, int rows, int cols, int fan_in) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("ParamStore::add: empty shape for " + name);
    if (fan_in < 1) throw std::invalid_argument("ParamStore::add: fan_in < 1 for " + name);
    if (index_.count(name)) throw std::invalid_argument("ParamStore::add: duplicate block " + name);
    const int slot = size();
    blocks_.push_back({name, Eigen::MatrixXd::Zero(rows, cols), fan_in});
    index_[name] = slot;
    return slot;
}

int ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

int ParamStore::slot(const std::string& name) const {
    const int s = find(name);
    if (s < 0) throw std::out_of_range("ParamStore: no block named " + name);
    return s;
}

void ParamStore::init_uniform(RngStream& rng) {
    for (ParamBlock& b : blocks_) {
        const double bound = 1.0 / std::sqrt(double(b.fan_in));
        for (Eigen::Index r = 0; r < b.value.rows(); ++r)
            for (Eigen::Index c = 0; c < b.value.cols(); ++c)
                b.value(r, c) = rng.uniform(-bound, bound);
    }
}

std::vector<Eigen::MatrixXd> ParamStore::zero_grads() const {
    std::vector<Eigen::MatrixXd> g;
    g.reserve(blocks_.size());
    for (const ParamBlock& b : blocks_) g.push_back(Eigen::MatrixXd::Zero(b.value.rows(), b.value.cols()));
    return g;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const ParamBlock& b : blocks_) n += std::size_t(b.value.size());
    return n;
}

std::uint64_t ParamStore::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix_bytes = [&h](const void* p, std::size_t n) {
        const unsigned char* c = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= c[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const ParamBlock& b : blocks_) {
        mix_bytes(b.name.data(), b.name.size());
        const std::int64_t shape[2] = {b.value.rows(), b.value.cols()};
        mix_bytes(shape, sizeof(shape));
        for (Eigen::Index r = 0; r < b.value.rows(); ++r) {
            for (Eigen::Index c = 0; c < b.value.cols(); ++c) {
                std::uint64_t bits;
                const double v = b.value(r, c);
                std::memcpy(&bits, &v, sizeof(bits));
                mix_bytes(&bits, sizeof(bits));
            }
        }
    }
    return h;
}

void ParamStore::check_finite() const {
    for (const ParamBlock& b : blocks_)
        if (!b.value.allFinite())
            throw std::runtime_error("ParamStore: non-finite values in block " + b.name);
}

}  // namespace raci
