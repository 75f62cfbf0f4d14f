#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "deformcast/mesh.hpp"
#include "deformcast/types.hpp"

namespace deformcast {

/// Symmetrically normalized adjacency D^(-1/2) (A + I) D^(-1/2) of a mesh
/// graph, in coordinate form sorted by (row, col).
struct SparseAdjacency {
    struct Entry {
        int row;
        int col;
        double weight;
    };
    int node_count = 0;
    std::vector<Entry> entries;
};

SparseAdjacency build_adjacency(const MeshGraph& graph);

/// Dense product S * X. S is constant with respect to differentiation.
template <class Scalar>
MatX<Scalar> adjacency_apply(const SparseAdjacency& s, const MatX<Scalar>& x) {
    if (x.rows() != s.node_count)
        throw std::invalid_argument("spmm: adjacency has " + std::to_string(s.node_count) +
                                    " nodes but features are " + shape_str(x.rows(), x.cols()));
    MatX<Scalar> y = MatX<Scalar>::Zero(s.node_count, x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        Scalar* yj = y.col(j).data();
        const Scalar* xj = x.col(j).data();
        for (const auto& e : s.entries) yj[e.row] += static_cast<Scalar>(e.weight) * xj[e.col];
    }
    return y;
}

template <class Scalar>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; values/gradients live on the tape.
template <class Scalar>
class Var {
public:
    Var() = default;
    Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

    bool valid() const { return tape_ != nullptr; }
    int id() const { return id_; }
    Tape<Scalar>& tape() const { return *tape_; }

    const MatX<Scalar>& value() const;
    const MatX<Scalar>& grad() const;
    bool requires_grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }

private:
    Tape<Scalar>* tape_ = nullptr;
    int id_ = -1;
};

/// Append-only expression tape for reverse-mode differentiation. Creation
/// order is a topological order, so backward is a single reverse sweep.
/// One tape is confined to one thread.
template <class Scalar>
class Tape {
public:
    /// Reverse rule: receives the tape, the node's own id (so saved outputs
    /// can be read back), and the accumulated output gradient.
    using BackwardFn = std::function<void(Tape&, int, const MatX<Scalar>&)>;

    Var<Scalar> leaf(MatX<Scalar> value, bool requires_grad) {
        return push(std::move(value), requires_grad, nullptr, /*check_finite=*/true);
    }
    Var<Scalar> constant(MatX<Scalar> value) { return leaf(std::move(value), false); }

    /// Registers a node with a custom reverse rule; used by the built-in op
    /// suite and by composite loss ops. `backward` receives the accumulated
    /// output gradient and must call accumulate() on each parent.
    Var<Scalar> make_node(MatX<Scalar> value, bool requires_grad, BackwardFn backward,
                          bool check_finite = true) {
        return push(std::move(value), requires_grad, std::move(backward), check_finite);
    }

    const MatX<Scalar>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool wants_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    const MatX<Scalar>& grad(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.grad_materialized)
            throw std::logic_error("gradient not materialized; run backward() first");
        return n.grad;
    }

    /// Adds `g` into the node's gradient. No-op for nodes that do not require
    /// gradients, so reverse rules may call it unconditionally.
    void accumulate(int id, const MatX<Scalar>& g) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad) return;
        if (!n.grad_materialized) {
            n.grad = g;
            n.grad_materialized = true;
        } else {
            n.grad += g;
        }
    }

    void backward(const Var<Scalar>& loss) {
        if (loss.rows() != 1 || loss.cols() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got " +
                                        shape_str(loss.rows(), loss.cols()));
        if (backward_done_)
            throw std::logic_error("gradients already materialized; call reset_gradients() first");
        backward_done_ = true;

        Node& root = nodes_[static_cast<std::size_t>(loss.id())];
        root.grad = MatX<Scalar>::Ones(1, 1);
        root.grad_materialized = true;
        for (int id = loss.id(); id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.grad_materialized && n.backward) n.backward(*this, id, n.grad);
        }
    }

    void reset_gradients() {
        for (Node& n : nodes_) {
            n.grad.resize(0, 0);
            n.grad_materialized = false;
        }
        backward_done_ = false;
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        MatX<Scalar> value;
        MatX<Scalar> grad;
        bool grad_materialized = false;
        bool requires_grad = false;
        BackwardFn backward;
    };

    Var<Scalar> push(MatX<Scalar> value, bool requires_grad, BackwardFn backward,
                     bool check_finite) {
        if (check_finite && !value.allFinite())
            throw NumericFault("non-finite values produced at tape node " +
                               std::to_string(nodes_.size()));
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

template <class Scalar>
const MatX<Scalar>& Var<Scalar>::value() const {
    return tape_->value(id_);
}
template <class Scalar>
const MatX<Scalar>& Var<Scalar>::grad() const {
    return tape_->grad(id_);
}
template <class Scalar>
bool Var<Scalar>::requires_grad() const {
    return tape_->wants_grad(id_);
}

// ---- op suite -------------------------------------------------------------

namespace detail {
template <class Scalar>
void require_same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
    if (&a.tape() != &b.tape())
        throw std::invalid_argument("operands live on different tapes");
}
}  // namespace detail

template <class Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
    detail::require_same_tape(a, b);
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions differ, " +
                                    shape_str(a.rows(), a.cols()) + " * " +
                                    shape_str(b.rows(), b.cols()));
    Tape<Scalar>& t = a.tape();
    const int ia = a.id(), ib = b.id();
    return t.make_node(
        a.value() * b.value(), a.requires_grad() || b.requires_grad(),
        [ia, ib](Tape<Scalar>& t, int, const MatX<Scalar>& g) {
            if (t.wants_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
            if (t.wants_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
        });
}

template <class Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
    Tape<Scalar>& t = a.tape();
    const int ia = a.id();
    return t.make_node(a.value().transpose(), a.requires_grad(),
                       [ia](Tape<Scalar>& t, int, const MatX<Scalar>& g) {
                           t.accumulate(ia, g.transpose());
                       });
}

template <class Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
    detail::require_same_tape(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("add: shapes differ, " + shape_str(a.rows(), a.cols()) +
                                    " vs " + shape_str(b.rows(), b.cols()));
    Tape<Scalar>& t = a.tape();
    const int ia = a.id(), ib = b.id();
    return t.make_node(a.value() + b.value(), a.requires_grad() || b.requires_grad(),
                       [ia, ib](Tape<Scalar>& t, int, const MatX<Scalar>& g) {
                           t.accumulate(ia, g);
                           t.accumulate(ib, g);
                       });
}

/// Broadcast-adds a 1 x F row vector to every row of A.
template <class Scalar>
Var<Scalar> add_rowvec(const Var<Scalar>& a, const Var<Scalar>& b) {
    detail::require_same_tape(a, b);
    if (b.rows() != 1 || a.cols() != b.cols())
        throw std::invalid_argument("add_rowvec: expected 1x" + std::to_string(a.cols()) +
                                    " row vector, got " + shape_str(b.rows(), b.cols()));
    Tape<Scalar>& t = a.tape();
    const int ia = a.id(), ib = b.id();
    MatX<Scalar> v = a.value();
    v.rowwise() += b.value().row(0);
    return t.make_node(std::move(v), a.requires_grad() || b.requires_grad(),
                       [ia, ib](Tape<Scalar>& t, int, const MatX<Scalar>& g) {
                           t.accumulate(ia, g);
                           if (t.wants_grad(ib)) t.accumulate(ib, g.colwise().sum());
                       });
}

template <class Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar c) {
    Tape<Scalar>& t = a.tape();
    const int ia = a.id();
    return t.make_node((a.value().array() * c).matrix(), a.requires_grad(),
                       [ia, c](Tape<Scalar>& t, int, const MatX<Scalar>& g) {
                           t.accumulate(ia, (g.array() * c).matrix());
                       });
}

/// Gradient at exactly 0 is defined as 0.
template <class Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
    Tape<Scalar>& t = a.tape();
    const int ia = a.id();
    return t.make_node(a.value().cwiseMax(Scalar(0)), a.requires_grad(),
                       [ia](Tape<Scalar>& t, int, const MatX<Scalar>& g) {
                           if (!t.wants_grad(ia)) return;
                           MatX<Scalar> masked =
                               (t.value(ia).array() > Scalar(0)).template cast<Scalar>() * g.array();
                           t.accumulate(ia, masked);
                       });
}

template <class Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& a) {
    Tape<Scalar>& t = a.tape();
    const int ia = a.id();
    MatX<Scalar> y = a.value();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        auto row = y.row(r).array();
        row -= row.maxCoeff();
        row = row.exp();
        row /= row.sum();
        y.row(r) = row;
    }
    return t.make_node(std::move(y), a.requires_grad(),
                       [ia](Tape<Scalar>& t, int self, const MatX<Scalar>& g) {
                           if (!t.wants_grad(ia)) return;
                           const MatX<Scalar>& y = t.value(self);
                           MatX<Scalar> dx(y.rows(), y.cols());
                           for (Eigen::Index r = 0; r < y.rows(); ++r) {
                               const Scalar dot = g.row(r).dot(y.row(r));
                               dx.row(r) = y.row(r).array() * (g.row(r).array() - dot);
                           }
                           t.accumulate(ia, dx);
                       });
}

template <class Scalar>
Var<Scalar> concat_cols(const Var<Scalar>& a, const Var<Scalar>& b) {
    detail::require_same_tape(a, b);
    if (a.rows() != b.rows())
        throw std::invalid_argument("concat_cols: row counts differ, " +
                                    shape_str(a.rows(), a.cols()) + " vs " +
                                    shape_str(b.rows(), b.cols()));
    Tape<Scalar>& t = a.tape();
    const int ia = a.id(), ib = b.id();
    const Eigen::Index ca = a.cols(), cb = b.cols();
    MatX<Scalar> v(a.rows(), ca + cb);
    v.leftCols(ca) = a.value();
    v.rightCols(cb) = b.value();
    return t.make_node(std::move(v), a.requires_grad() || b.requires_grad(),
                       [ia, ib, ca, cb](Tape<Scalar>& t, int, const MatX<Scalar>& g) {
                           t.accumulate(ia, g.leftCols(ca));
                           t.accumulate(ib, g.rightCols(cb));
                       });
}

/// S is a fixed propagation operator; only X receives gradients. S is
/// symmetric, so the reverse rule multiplies by S again.
template <class Scalar>
Var<Scalar> spmm(const SparseAdjacency& s, const Var<Scalar>& x) {
    Tape<Scalar>& t = x.tape();
    const int ix = x.id();
    const SparseAdjacency* sp = &s;
    return t.make_node(adjacency_apply(s, x.value()), x.requires_grad(),
                       [ix, sp](Tape<Scalar>& t, int, const MatX<Scalar>& g) {
                           if (t.wants_grad(ix)) t.accumulate(ix, adjacency_apply(*sp, g));
                       });
}

template <class Scalar>
Var<Scalar> mean_all(const Var<Scalar>& a) {
    Tape<Scalar>& t = a.tape();
    const int ia = a.id();
    const Eigen::Index r = a.rows(), c = a.cols();
    MatX<Scalar> v(1, 1);
    v(0, 0) = a.value().mean();
    return t.make_node(std::move(v), a.requires_grad(),
                       [ia, r, c](Tape<Scalar>& t, int, const MatX<Scalar>& g) {
                           const Scalar w = g(0, 0) / static_cast<Scalar>(r * c);
                           t.accumulate(ia, MatX<Scalar>::Constant(r, c, w));
                       });
}

/// Sums the rows of A into a single 1 x F row vector.
template <class Scalar>
Var<Scalar> sum_rows(const Var<Scalar>& a) {
    Tape<Scalar>& t = a.tape();
    const int ia = a.id();
    const Eigen::Index r = a.rows();
    return t.make_node(a.value().colwise().sum(), a.requires_grad(),
                       [ia, r](Tape<Scalar>& t, int, const MatX<Scalar>& g) {
                           t.accumulate(ia, g.replicate(r, 1));
                       });
}

}  // namespace deformcast
