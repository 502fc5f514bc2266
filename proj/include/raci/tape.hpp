#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "raci/params.hpp"

namespace raci {

// Reverse-mode automatic differentiation over dense 64-bit matrices.
//
// A Tape is built once per forward pass through the builder methods below
// (each returns a node id), then backward(root) walks the tape in reverse
// creation order and accumulates d(root)/d(parameter) into a gradient buffer
// aligned with ParamStore slots. Creation order is a topological order by
// construction, so a single reverse sweep suffices. Everything is
// single-threaded and deterministic.
class Tape {
  public:
    explicit Tape(const ParamStore* params = nullptr);
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int param(int slot);
    int param(const std::string& name);
    int constant(Eigen::MatrixXd v);

    // Y = X W^T + 1 b^T  with X: n x in, W: out x in, b: out x 1.
    int affine_rows(int x, int w, int b);
    int matmul(int a, int b, bool trans_a = false, bool trans_b = false);
    int add(int a, int b);
    int sub(int a, int b);
    int scale(int a, double factor);
    int hadamard(int a, int b);
    int hadamard_const(int a, Eigen::MatrixXd mask);  // e.g. dropout
    int tanh_(int a);
    int sigmoid_(int a);
    int softplus_(int a);
    int softmax_rows(int a);  // row-wise softmax
    int transpose(int a);
    int concat_cols(int a, int b);
    int concat_rows(const std::vector<int>& parts);
    int slice_rows(int a, int r0, int n);
    int slice_cols(int a, int c0, int n);
    int gather_rows(int a, std::vector<int> row_ids);  // duplicates allowed
    int repeat_row(int a, int n);                      // a: 1 x d -> n x d
    int mean_rows(int a);                              // n x d -> 1 x d
    int sum_all(int a);                                // -> 1 x 1
    int row_scale(int x, int s);                       // row i of x times s(i, 0)

    // One fused LSTM layer over a row-per-step sequence: x: T x in,
    // wx: 4h x in, wh: 4h x h, b: 4h x 1 -> hidden states T x h. Gate row
    // blocks of wx/wh/b are [input; forget; cell; output]; h_0 = c_0 = 0.
    int lstm(int x, int wx, int wh, int b);

    // sum_t mask_t (pred_t - y_t)^2 as a 1 x 1 node; pred: n x 1.
    int masked_sq_err_sum(int pred, const Eigen::VectorXd& y, const Eigen::VectorXd& mask);

    const Eigen::MatrixXd& value(int id) const;
    std::size_t node_count() const;

    // Seeds d(root) = 1 (root must be 1 x 1) and adds parameter gradients
    // into param_grads (one matrix per ParamStore slot, matching shapes).
    void backward(int root, std::vector<Eigen::MatrixXd>& param_grads);

  private:
    struct Node;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace raci
