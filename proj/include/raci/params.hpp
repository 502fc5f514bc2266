#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "raci/rng.hpp"

namespace raci {

struct ParamBlock {
    std::string name;
    Eigen::MatrixXd value;
    int fan_in = 1;  // init scale: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
};

// Named parameter tensors in a fixed registration order. Gradients live in a
// parallel vector of matrices (see Tape::backward) so the store itself stays
// read-only during a forward pass.
class ParamStore {
  public:
    // Registers a zero-initialized block; returns its slot. Names are unique.
    int add(const std::string& name, int rows, int cols, int fan_in);

    int find(const std::string& name) const;  // -1 when absent
    int slot(const std::string& name) const;  // throws when absent

    int size() const { return static_cast<int>(blocks_.size()); }
    const ParamBlock& block(int slot) const { return blocks_.at(slot); }
    ParamBlock& block(int slot) { return blocks_.at(slot); }
    const Eigen::MatrixXd& value(const std::string& name) const { return blocks_.at(slot(name)).value; }
    Eigen::MatrixXd& value(const std::string& name) { return blocks_.at(slot(name)).value; }

    // Draws every block in registration order from one stream: uniform in
    // [-1/sqrt(fan_in), 1/sqrt(fan_in)], row-major within a block.
    void init_uniform(RngStream& rng);

    std::vector<Eigen::MatrixXd> zero_grads() const;
    std::size_t scalar_count() const;

    // FNV-1a over names, shapes, and raw 64-bit values; changes whenever any
    // parameter changes. Used to detect stale retrieval pools.
    std::uint64_t fingerprint() const;

    // Throws std::runtime_error naming the first non-finite block.
    void check_finite() const;

  private:
    std::vector<ParamBlock> blocks_;
    std::map<std::string, int> index_;
};

}  // namespace raci
