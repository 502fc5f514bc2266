#include "raci/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace raci {

namespace {

enum class Op : std::uint8_t {
    Const,
    Param,
    AffineRows,
    MatMul,
    Add,
    Sub,
    Scale,
    Hadamard,
    HadamardConst,
    Tanh,
    Sigmoid,
    Softplus,
    SoftmaxRows,
    Transpose,
    ConcatCols,
    ConcatRows,
    SliceRows,
    SliceCols,
    GatherRows,
    RepeatRow,
    MeanRows,
    SumAll,
    RowScale,
    Lstm,
    MaskedSqErrSum,
};

struct LstmCache {
    Eigen::MatrixXd i, f, g, o, c, tc;  // T x h each
};

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
    throw std::invalid_argument(std::string("Tape::") + op + ": " + detail);
}

void check(bool ok, const char* op, const std::string& detail) {
    if (!ok) shape_error(op, detail);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

struct Tape::Node {
    Op op;
    Eigen::MatrixXd val;
    Eigen::MatrixXd grad;  // allocated lazily during backward
    bool requires_grad = false;
    int a = -1, b = -1, c = -1, d = -1;
    std::vector<int> many;  // ConcatRows parts or GatherRows indices
    double factor = 1.0;
    bool ta = false, tb = false;
    int r0 = 0, n = 0;
    int slot = -1;
    Eigen::MatrixXd aux;  // HadamardConst mask; MaskedSqErrSum [y, mask]
    std::unique_ptr<LstmCache> cache;
};

struct Tape::Impl {
    const ParamStore* params = nullptr;
    std::vector<Node> nodes;
    std::unordered_map<int, int> param_nodes;  // slot -> node id

    Node& at(int id) { return nodes.at(std::size_t(id)); }
    int push(Node n) {
        nodes.push_back(std::move(n));
        return int(nodes.size()) - 1;
    }
    Eigen::MatrixXd& grad_of(Node& n) {
        if (n.grad.size() == 0) n.grad = Eigen::MatrixXd::Zero(n.val.rows(), n.val.cols());
        return n.grad;
    }
    void add_grad(int id, const Eigen::MatrixXd& g) {
        Node& n = at(id);
        if (n.requires_grad) grad_of(n) += g;
    }
};

Tape::Tape(const ParamStore* params) : impl_(std::make_unique<Impl>()) { impl_->params = params; }
Tape::~Tape() = default;

const Eigen::MatrixXd& Tape::value(int id) const { return impl_->at(id).val; }
std::size_t Tape::node_count() const { return impl_->nodes.size(); }

int Tape::param(int slot) {
    check(impl_->params != nullptr, "param", "tape has no parameter store");
    auto it = impl_->param_nodes.find(slot);
    if (it != impl_->param_nodes.end()) return it->second;
    Node n;
    n.op = Op::Param;
    n.slot = slot;
    n.val = impl_->params->block(slot).value;
    n.requires_grad = true;
    const int id = impl_->push(std::move(n));
    impl_->param_nodes[slot] = id;
    return id;
}

int Tape::param(const std::string& name) {
    check(impl_->params != nullptr, "param", "tape has no parameter store");
    return param(impl_->params->slot(name));
}

int Tape::constant(Eigen::MatrixXd v) {
    Node n;
    n.op = Op::Const;
    n.val = std::move(v);
    return impl_->push(std::move(n));
}

int Tape::affine_rows(int x, int w, int b) {
    const Node& nx = impl_->at(x);
    const Node& nw = impl_->at(w);
    const Node& nb = impl_->at(b);
    check(nx.val.cols() == nw.val.cols(), "affine_rows", "input width != weight fan-in");
    check(nb.val.rows() == nw.val.rows() && nb.val.cols() == 1, "affine_rows", "bias shape");
    Node n;
    n.op = Op::AffineRows;
    n.a = x;
    n.b = w;
    n.c = b;
    n.val = nx.val * nw.val.transpose();
    n.val.rowwise() += nb.val.col(0).transpose();
    n.requires_grad = nx.requires_grad || nw.requires_grad || nb.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::matmul(int a, int b, bool trans_a, bool trans_b) {
    const Node& na = impl_->at(a);
    const Node& nb = impl_->at(b);
    const Eigen::Index ak = trans_a ? na.val.rows() : na.val.cols();
    const Eigen::Index bk = trans_b ? nb.val.cols() : nb.val.rows();
    check(ak == bk, "matmul", "inner dimensions disagree");
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.ta = trans_a;
    n.tb = trans_b;
    if (!trans_a && !trans_b)
        n.val = na.val * nb.val;
    else if (!trans_a && trans_b)
        n.val = na.val * nb.val.transpose();
    else if (trans_a && !trans_b)
        n.val = na.val.transpose() * nb.val;
    else
        n.val = na.val.transpose() * nb.val.transpose();
    n.requires_grad = na.requires_grad || nb.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::add(int a, int b) {
    const Node& na = impl_->at(a);
    const Node& nb = impl_->at(b);
    check(na.val.rows() == nb.val.rows() && na.val.cols() == nb.val.cols(), "add", "shape mismatch");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.val = na.val + nb.val;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::sub(int a, int b) {
    const Node& na = impl_->at(a);
    const Node& nb = impl_->at(b);
    check(na.val.rows() == nb.val.rows() && na.val.cols() == nb.val.cols(), "sub", "shape mismatch");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.val = na.val - nb.val;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::scale(int a, double factor) {
    const Node& na = impl_->at(a);
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.factor = factor;
    n.val = factor * na.val;
    n.requires_grad = na.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::hadamard(int a, int b) {
    const Node& na = impl_->at(a);
    const Node& nb = impl_->at(b);
    check(na.val.rows() == nb.val.rows() && na.val.cols() == nb.val.cols(), "hadamard",
          "shape mismatch");
    Node n;
    n.op = Op::Hadamard;
    n.a = a;
    n.b = b;
    n.val = na.val.cwiseProduct(nb.val);
    n.requires_grad = na.requires_grad || nb.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::hadamard_const(int a, Eigen::MatrixXd mask) {
    const Node& na = impl_->at(a);
    check(na.val.rows() == mask.rows() && na.val.cols() == mask.cols(), "hadamard_const",
          "mask shape mismatch");
    Node n;
    n.op = Op::HadamardConst;
    n.a = a;
    n.aux = std::move(mask);
    n.val = na.val.cwiseProduct(n.aux);
    n.requires_grad = na.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::tanh_(int a) {
    Node n;
    n.op = Op::Tanh;
    n.a = a;
    n.val = impl_->at(a).val.array().tanh().matrix();
    n.requires_grad = impl_->at(a).requires_grad;
    return impl_->push(std::move(n));
}

int Tape::sigmoid_(int a) {
    Node n;
    n.op = Op::Sigmoid;
    n.a = a;
    n.val = (1.0 / (1.0 + (-impl_->at(a).val.array()).exp())).matrix();
    n.requires_grad = impl_->at(a).requires_grad;
    return impl_->push(std::move(n));
}

int Tape::softplus_(int a) {
    const Node& na = impl_->at(a);
    Node n;
    n.op = Op::Softplus;
    n.a = a;
    n.val = na.val.unaryExpr([](double x) { return stable_softplus(x); });
    n.requires_grad = na.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::softmax_rows(int a) {
    const Node& na = impl_->at(a);
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = a;
    n.val = na.val;
    for (Eigen::Index r = 0; r < n.val.rows(); ++r) {
        const double m = n.val.row(r).maxCoeff();
        Eigen::ArrayXd e = (n.val.row(r).array() - m).exp();
        n.val.row(r) = (e / e.sum()).matrix();
    }
    n.requires_grad = na.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::transpose(int a) {
    Node n;
    n.op = Op::Transpose;
    n.a = a;
    n.val = impl_->at(a).val.transpose();
    n.requires_grad = impl_->at(a).requires_grad;
    return impl_->push(std::move(n));
}

int Tape::concat_cols(int a, int b) {
    const Node& na = impl_->at(a);
    const Node& nb = impl_->at(b);
    check(na.val.rows() == nb.val.rows(), "concat_cols", "row counts disagree");
    Node n;
    n.op = Op::ConcatCols;
    n.a = a;
    n.b = b;
    n.val.resize(na.val.rows(), na.val.cols() + nb.val.cols());
    n.val << na.val, nb.val;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::concat_rows(const std::vector<int>& parts) {
    check(!parts.empty(), "concat_rows", "no parts");
    Eigen::Index rows = 0;
    const Eigen::Index cols = impl_->at(parts[0]).val.cols();
    bool rg = false;
    for (int p : parts) {
        const Node& np = impl_->at(p);
        check(np.val.cols() == cols, "concat_rows", "column counts disagree");
        rows += np.val.rows();
        rg = rg || np.requires_grad;
    }
    Node n;
    n.op = Op::ConcatRows;
    n.many = parts;
    n.val.resize(rows, cols);
    Eigen::Index off = 0;
    for (int p : parts) {
        const Node& np = impl_->at(p);
        n.val.middleRows(off, np.val.rows()) = np.val;
        off += np.val.rows();
    }
    n.requires_grad = rg;
    return impl_->push(std::move(n));
}

int Tape::slice_rows(int a, int r0, int nrows) {
    const Node& na = impl_->at(a);
    check(r0 >= 0 && nrows >= 1 && r0 + nrows <= na.val.rows(), "slice_rows", "range out of bounds");
    Node n;
    n.op = Op::SliceRows;
    n.a = a;
    n.r0 = r0;
    n.n = nrows;
    n.val = na.val.middleRows(r0, nrows);
    n.requires_grad = na.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::slice_cols(int a, int c0, int ncols) {
    const Node& na = impl_->at(a);
    check(c0 >= 0 && ncols >= 1 && c0 + ncols <= na.val.cols(), "slice_cols", "range out of bounds");
    Node n;
    n.op = Op::SliceCols;
    n.a = a;
    n.r0 = c0;
    n.n = ncols;
    n.val = na.val.middleCols(c0, ncols);
    n.requires_grad = na.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::gather_rows(int a, std::vector<int> row_ids) {
    const Node& na = impl_->at(a);
    check(!row_ids.empty(), "gather_rows", "no rows requested");
    for (int r : row_ids)
        check(r >= 0 && r < na.val.rows(), "gather_rows", "row index out of bounds");
    Node n;
    n.op = Op::GatherRows;
    n.a = a;
    n.val.resize(Eigen::Index(row_ids.size()), na.val.cols());
    for (std::size_t i = 0; i < row_ids.size(); ++i) n.val.row(Eigen::Index(i)) = na.val.row(row_ids[i]);
    n.many = std::move(row_ids);
    n.requires_grad = na.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::repeat_row(int a, int nrows) {
    const Node& na = impl_->at(a);
    check(na.val.rows() == 1, "repeat_row", "input must be a single row");
    check(nrows >= 1, "repeat_row", "need at least one copy");
    Node n;
    n.op = Op::RepeatRow;
    n.a = a;
    n.n = nrows;
    n.val = na.val.replicate(nrows, 1);
    n.requires_grad = na.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::mean_rows(int a) {
    const Node& na = impl_->at(a);
    Node n;
    n.op = Op::MeanRows;
    n.a = a;
    n.val = na.val.colwise().mean();
    n.requires_grad = na.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::sum_all(int a) {
    Node n;
    n.op = Op::SumAll;
    n.a = a;
    n.val = Eigen::MatrixXd::Constant(1, 1, impl_->at(a).val.sum());
    n.requires_grad = impl_->at(a).requires_grad;
    return impl_->push(std::move(n));
}

int Tape::row_scale(int x, int s) {
    const Node& nx = impl_->at(x);
    const Node& ns = impl_->at(s);
    check(ns.val.cols() == 1 && ns.val.rows() == nx.val.rows(), "row_scale",
          "scale must be a column matching the row count");
    Node n;
    n.op = Op::RowScale;
    n.a = x;
    n.b = s;
    n.val = nx.val.array().colwise() * ns.val.col(0).array();
    n.requires_grad = nx.requires_grad || ns.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::lstm(int x, int wx, int wh, int b) {
    const Node& nx = impl_->at(x);
    const Node& nwx = impl_->at(wx);
    const Node& nwh = impl_->at(wh);
    const Node& nb = impl_->at(b);
    const Eigen::Index h = nwh.val.cols();
    check(nwx.val.rows() == 4 * h && nwh.val.rows() == 4 * h, "lstm", "gate block height != 4h");
    check(nwx.val.cols() == nx.val.cols(), "lstm", "input width != wx fan-in");
    check(nb.val.rows() == 4 * h && nb.val.cols() == 1, "lstm", "bias shape");
    const Eigen::Index T = nx.val.rows();
    check(T >= 1, "lstm", "empty sequence");

    Node n;
    n.op = Op::Lstm;
    n.a = x;
    n.b = wx;
    n.c = wh;
    n.d = b;
    n.cache = std::make_unique<LstmCache>();
    LstmCache& cc = *n.cache;
    cc.i.resize(T, h);
    cc.f.resize(T, h);
    cc.g.resize(T, h);
    cc.o.resize(T, h);
    cc.c.resize(T, h);
    cc.tc.resize(T, h);
    n.val.resize(T, h);

    Eigen::VectorXd hprev = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd cprev = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd z(4 * h);
    for (Eigen::Index t = 0; t < T; ++t) {
        z.noalias() = nwx.val * nx.val.row(t).transpose();
        z.noalias() += nwh.val * hprev;
        z += nb.val.col(0);
        const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
        for (Eigen::Index j = 0; j < h; ++j) {
            cc.i(t, j) = sig(z[j]);
            cc.f(t, j) = sig(z[h + j]);
            cc.g(t, j) = std::tanh(z[2 * h + j]);
            cc.o(t, j) = sig(z[3 * h + j]);
        }
        for (Eigen::Index j = 0; j < h; ++j) {
            cc.c(t, j) = cc.f(t, j) * cprev[j] + cc.i(t, j) * cc.g(t, j);
            cc.tc(t, j) = std::tanh(cc.c(t, j));
            n.val(t, j) = cc.o(t, j) * cc.tc(t, j);
        }
        hprev = n.val.row(t);
        cprev = cc.c.row(t);
    }
    n.requires_grad =
        nx.requires_grad || nwx.requires_grad || nwh.requires_grad || nb.requires_grad;
    return impl_->push(std::move(n));
}

int Tape::masked_sq_err_sum(int pred, const Eigen::VectorXd& y, const Eigen::VectorXd& mask) {
    const Node& np = impl_->at(pred);
    check(np.val.cols() == 1, "masked_sq_err_sum", "prediction must be a column");
    check(np.val.rows() == y.size() && y.size() == mask.size(), "masked_sq_err_sum",
          "length mismatch");
    Node n;
    n.op = Op::MaskedSqErrSum;
    n.a = pred;
    n.aux.resize(y.size(), 2);
    n.aux.col(0) = y;
    n.aux.col(1) = mask;
    const Eigen::ArrayXd diff = np.val.col(0).array() - y.array();
    n.val = Eigen::MatrixXd::Constant(1, 1, (mask.array() * diff * diff).sum());
    n.requires_grad = np.requires_grad;
    return impl_->push(std::move(n));
}

void Tape::backward(int root, std::vector<Eigen::MatrixXd>& param_grads) {
    check(impl_->params != nullptr, "backward", "tape has no parameter store");
    check(int(param_grads.size()) == impl_->params->size(), "backward",
          "gradient buffer size != parameter store size");
    Node& rn = impl_->at(root);
    check(rn.val.rows() == 1 && rn.val.cols() == 1, "backward", "root must be a scalar node");
    check(rn.requires_grad, "backward", "root does not depend on any parameter");
    impl_->grad_of(rn)(0, 0) += 1.0;

    for (int id = root; id >= 0; --id) {
        Node& n = impl_->at(id);
        if (!n.requires_grad || n.grad.size() == 0) continue;
        const Eigen::MatrixXd& gy = n.grad;
        switch (n.op) {
            case Op::Const:
                break;
            case Op::Param:
                param_grads[std::size_t(n.slot)] += gy;
                break;
            case Op::AffineRows: {
                Node& x = impl_->at(n.a);
                Node& w = impl_->at(n.b);
                Node& b = impl_->at(n.c);
                if (x.requires_grad) impl_->grad_of(x).noalias() += gy * w.val;
                if (w.requires_grad) impl_->grad_of(w).noalias() += gy.transpose() * x.val;
                if (b.requires_grad) impl_->grad_of(b).col(0) += gy.colwise().sum().transpose();
                break;
            }
            case Op::MatMul: {
                Node& a = impl_->at(n.a);
                Node& b = impl_->at(n.b);
                if (a.requires_grad) {
                    Eigen::MatrixXd da;
                    if (n.tb)
                        da.noalias() = gy * b.val;
                    else
                        da.noalias() = gy * b.val.transpose();
                    if (n.ta)
                        impl_->grad_of(a) += da.transpose();
                    else
                        impl_->grad_of(a) += da;
                }
                if (b.requires_grad) {
                    Eigen::MatrixXd db;
                    if (n.ta)
                        db.noalias() = a.val * gy;
                    else
                        db.noalias() = a.val.transpose() * gy;
                    if (n.tb)
                        impl_->grad_of(b) += db.transpose();
                    else
                        impl_->grad_of(b) += db;
                }
                break;
            }
            case Op::Add:
                impl_->add_grad(n.a, gy);
                impl_->add_grad(n.b, gy);
                break;
            case Op::Sub:
                impl_->add_grad(n.a, gy);
                impl_->add_grad(n.b, -gy);
                break;
            case Op::Scale:
                impl_->add_grad(n.a, n.factor * gy);
                break;
            case Op::Hadamard:
                impl_->add_grad(n.a, gy.cwiseProduct(impl_->at(n.b).val));
                impl_->add_grad(n.b, gy.cwiseProduct(impl_->at(n.a).val));
                break;
            case Op::HadamardConst:
                impl_->add_grad(n.a, gy.cwiseProduct(n.aux));
                break;
            case Op::Tanh:
                impl_->add_grad(n.a, (gy.array() * (1.0 - n.val.array().square())).matrix());
                break;
            case Op::Sigmoid:
                impl_->add_grad(n.a, (gy.array() * n.val.array() * (1.0 - n.val.array())).matrix());
                break;
            case Op::Softplus: {
                const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-impl_->at(n.a).val.array()).exp());
                impl_->add_grad(n.a, (gy.array() * sig).matrix());
                break;
            }
            case Op::SoftmaxRows: {
                Node& a = impl_->at(n.a);
                if (a.requires_grad) {
                    Eigen::MatrixXd& ga = impl_->grad_of(a);
                    for (Eigen::Index r = 0; r < n.val.rows(); ++r) {
                        const double dot = gy.row(r).dot(n.val.row(r));
                        ga.row(r).array() +=
                            n.val.row(r).array() * (gy.row(r).array() - dot);
                    }
                }
                break;
            }
            case Op::Transpose:
                impl_->add_grad(n.a, gy.transpose());
                break;
            case Op::ConcatCols: {
                Node& a = impl_->at(n.a);
                Node& b = impl_->at(n.b);
                if (a.requires_grad) impl_->grad_of(a) += gy.leftCols(a.val.cols());
                if (b.requires_grad) impl_->grad_of(b) += gy.rightCols(b.val.cols());
                break;
            }
            case Op::ConcatRows: {
                Eigen::Index off = 0;
                for (int p : n.many) {
                    Node& np = impl_->at(p);
                    if (np.requires_grad) impl_->grad_of(np) += gy.middleRows(off, np.val.rows());
                    off += np.val.rows();
                }
                break;
            }
            case Op::SliceRows: {
                Node& a = impl_->at(n.a);
                if (a.requires_grad) impl_->grad_of(a).middleRows(n.r0, n.n) += gy;
                break;
            }
            case Op::SliceCols: {
                Node& a = impl_->at(n.a);
                if (a.requires_grad) impl_->grad_of(a).middleCols(n.r0, n.n) += gy;
                break;
            }
            case Op::GatherRows: {
                Node& a = impl_->at(n.a);
                if (a.requires_grad) {
                    Eigen::MatrixXd& ga = impl_->grad_of(a);
                    for (std::size_t i = 0; i < n.many.size(); ++i)
                        ga.row(n.many[i]) += gy.row(Eigen::Index(i));
                }
                break;
            }
            case Op::RepeatRow:
                impl_->add_grad(n.a, gy.colwise().sum());
                break;
            case Op::MeanRows: {
                Node& a = impl_->at(n.a);
                if (a.requires_grad) {
                    const double inv = 1.0 / double(a.val.rows());
                    impl_->grad_of(a).rowwise() += (inv * gy.row(0)).eval();
                }
                break;
            }
            case Op::SumAll: {
                Node& a = impl_->at(n.a);
                if (a.requires_grad) impl_->grad_of(a).array() += gy(0, 0);
                break;
            }
            case Op::RowScale: {
                Node& x = impl_->at(n.a);
                Node& s = impl_->at(n.b);
                if (x.requires_grad)
                    impl_->grad_of(x) +=
                        (gy.array().colwise() * s.val.col(0).array()).matrix();
                if (s.requires_grad)
                    impl_->grad_of(s).col(0) += gy.cwiseProduct(x.val).rowwise().sum();
                break;
            }
            case Op::Lstm: {
                Node& x = impl_->at(n.a);
                Node& wx = impl_->at(n.b);
                Node& wh = impl_->at(n.c);
                Node& b = impl_->at(n.d);
                const LstmCache& cc = *n.cache;
                const Eigen::Index T = n.val.rows();
                const Eigen::Index h = n.val.cols();
                Eigen::VectorXd dh_carry = Eigen::VectorXd::Zero(h);
                Eigen::VectorXd dc_carry = Eigen::VectorXd::Zero(h);
                Eigen::VectorXd dz(4 * h);
                Eigen::MatrixXd* gx = x.requires_grad ? &impl_->grad_of(x) : nullptr;
                Eigen::MatrixXd* gwx = wx.requires_grad ? &impl_->grad_of(wx) : nullptr;
                Eigen::MatrixXd* gwh = wh.requires_grad ? &impl_->grad_of(wh) : nullptr;
                Eigen::MatrixXd* gb = b.requires_grad ? &impl_->grad_of(b) : nullptr;
                for (Eigen::Index t = T - 1; t >= 0; --t) {
                    for (Eigen::Index j = 0; j < h; ++j) {
                        const double dht = gy(t, j) + dh_carry[j];
                        const double i = cc.i(t, j), f = cc.f(t, j), g = cc.g(t, j),
                                     o = cc.o(t, j), tc = cc.tc(t, j);
                        const double cprev = t > 0 ? cc.c(t - 1, j) : 0.0;
                        const double do_ = dht * tc;
                        const double dc = dc_carry[j] + dht * o * (1.0 - tc * tc);
                        const double di = dc * g;
                        const double dg = dc * i;
                        const double df = dc * cprev;
                        dc_carry[j] = dc * f;
                        dz[j] = di * i * (1.0 - i);
                        dz[h + j] = df * f * (1.0 - f);
                        dz[2 * h + j] = dg * (1.0 - g * g);
                        dz[3 * h + j] = do_ * o * (1.0 - o);
                    }
                    if (gb) gb->col(0) += dz;
                    if (gwx) gwx->noalias() += dz * x.val.row(t);
                    if (gwh && t > 0) gwh->noalias() += dz * n.val.row(t - 1);
                    if (gx) gx->row(t).noalias() += (wx.val.transpose() * dz).transpose();
                    if (t > 0) dh_carry.noalias() = wh.val.transpose() * dz;
                }
                break;
            }
            case Op::MaskedSqErrSum: {
                Node& p = impl_->at(n.a);
                if (p.requires_grad) {
                    const Eigen::ArrayXd diff = p.val.col(0).array() - n.aux.col(0).array();
                    impl_->grad_of(p).col(0) +=
                        (2.0 * gy(0, 0) * n.aux.col(1).array() * diff).matrix();
                }
                break;
            }
        }
    }
}

}  // namespace raci
