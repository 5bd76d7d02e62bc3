#pragma once

// Minimal tape-based reverse-mode differentiation over dense Eigen matrices.
// Scalars are 1x1 matrices. One Tape per forward pass; backward() seeds the
// output with 1 and walks the tape in reverse. Values are immutable after
// creation, so backward closures capture node indices and read values from
// the tape.

#include "rana/common.hpp"

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace rana::ad {

class Tape;

struct Var {
    Tape* tape = nullptr;
    int idx = -1;

    const Mat& value() const;
    const Mat& grad() const;
    double scalar() const { return value()(0, 0); }
};

class Tape {
  public:
    Var constant(Mat v) { return push(std::move(v), nullptr); }
    Var leaf(Mat v) { return push(std::move(v), nullptr); }

    Var push(Mat value, std::function<void(Tape&, int)> backward) {
        nodes_.push_back({std::move(value), Mat(), std::move(backward)});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    const Mat& value(int idx) const { return nodes_[static_cast<std::size_t>(idx)].value; }

    Mat& grad(int idx) {
        auto& n = nodes_[static_cast<std::size_t>(idx)];
        if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    // Reverse sweep from a scalar output. May be called more than once per
    // tape; call zero_grad() in between to keep accumulations separate.
    void backward(Var output) {
        if (output.value().size() != 1)
            throw ContractError("backward: output must be a scalar");
        grad(output.idx)(0, 0) += 1.0;
        for (int i = output.idx; i >= 0; --i) {
            auto& n = nodes_[static_cast<std::size_t>(i)];
            if (n.backward && n.grad.size() != 0) n.backward(*this, i);
        }
    }

    void zero_grad() {
        for (auto& n : nodes_) n.grad.resize(0, 0);
    }

    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Mat value;
        Mat grad;  // empty until touched
        std::function<void(Tape&, int)> backward;
    };
    std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return tape->value(idx); }
inline const Mat& Var::grad() const { return const_cast<Tape*>(tape)->grad(idx); }

// ---- elementwise and structural ops ----

inline Var add(Var a, Var b) {
    Mat v = a.value() + b.value();
    int ai = a.idx, bi = b.idx;
    return a.tape->push(std::move(v), [ai, bi](Tape& t, int self) {
        t.grad(ai) += t.grad(self);
        t.grad(bi) += t.grad(self);
    });
}

inline Var sub(Var a, Var b) {
    Mat v = a.value() - b.value();
    int ai = a.idx, bi = b.idx;
    return a.tape->push(std::move(v), [ai, bi](Tape& t, int self) {
        t.grad(ai) += t.grad(self);
        t.grad(bi) -= t.grad(self);
    });
}

inline Var scale(Var a, double c) {
    Mat v = c * a.value();
    int ai = a.idx;
    return a.tape->push(std::move(v),
                        [ai, c](Tape& t, int self) { t.grad(ai) += c * t.grad(self); });
}

inline Var add_const(Var a, double c) {
    Mat v = a.value().array() + c;
    int ai = a.idx;
    return a.tape->push(std::move(v), [ai](Tape& t, int self) { t.grad(ai) += t.grad(self); });
}

inline Var matmul(Var a, Var b) {
    Mat v = a.value() * b.value();
    int ai = a.idx, bi = b.idx;
    return a.tape->push(std::move(v), [ai, bi](Tape& t, int self) {
        t.grad(ai) += t.grad(self) * t.value(bi).transpose();
        t.grad(bi) += t.value(ai).transpose() * t.grad(self);
    });
}

inline Var cwise_mul(Var a, Var b) {
    Mat v = a.value().cwiseProduct(b.value());
    int ai = a.idx, bi = b.idx;
    return a.tape->push(std::move(v), [ai, bi](Tape& t, int self) {
        t.grad(ai) += t.grad(self).cwiseProduct(t.value(bi));
        t.grad(bi) += t.grad(self).cwiseProduct(t.value(ai));
    });
}

// Vertical concatenation of two column blocks.
inline Var vcat(Var a, Var b) {
    Mat v(a.value().rows() + b.value().rows(), a.value().cols());
    v << a.value(), b.value();
    int ai = a.idx, bi = b.idx;
    Eigen::Index ra = a.value().rows();
    return a.tape->push(std::move(v), [ai, bi, ra](Tape& t, int self) {
        const Mat& g = t.grad(self);
        t.grad(ai) += g.topRows(ra);
        t.grad(bi) += g.bottomRows(g.rows() - ra);
    });
}

// Column vectors side by side into a (dim x k) matrix.
inline Var hcat(Tape& tape, const std::vector<Var>& cols) {
    if (cols.empty()) throw ContractError("hcat: empty column list");
    Mat v(cols[0].value().rows(), static_cast<Eigen::Index>(cols.size()));
    std::vector<int> idx;
    idx.reserve(cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) {
        v.col(static_cast<Eigen::Index>(i)) = cols[i].value();
        idx.push_back(cols[i].idx);
    }
    return tape.push(std::move(v), [idx](Tape& t, int self) {
        const Mat& g = t.grad(self);
        for (std::size_t i = 0; i < idx.size(); ++i)
            t.grad(idx[i]) += g.col(static_cast<Eigen::Index>(i));
    });
}

// 1x1 vars stacked into a column vector.
inline Var stack_scalars(Tape& tape, const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractError("stack_scalars: empty list");
    Mat v(static_cast<Eigen::Index>(xs.size()), 1);
    std::vector<int> idx;
    idx.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        v(static_cast<Eigen::Index>(i), 0) = xs[i].value()(0, 0);
        idx.push_back(xs[i].idx);
    }
    return tape.push(std::move(v), [idx](Tape& t, int self) {
        const Mat& g = t.grad(self);
        for (std::size_t i = 0; i < idx.size(); ++i)
            t.grad(idx[i])(0, 0) += g(static_cast<Eigen::Index>(i), 0);
    });
}

// ---- nonlinearities ----

inline Var tanh_(Var a) {
    Mat v = a.value().array().tanh();
    int ai = a.idx;
    return a.tape->push(std::move(v), [ai](Tape& t, int self) {
        const Mat& y = t.value(self);
        t.grad(ai) += t.grad(self).cwiseProduct((1.0 - y.array().square()).matrix());
    });
}

inline Var sigmoid_(Var a) {
    Mat v = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    int ai = a.idx;
    return a.tape->push(std::move(v), [ai](Tape& t, int self) {
        const Mat& y = t.value(self);
        t.grad(ai) += t.grad(self).cwiseProduct((y.array() * (1.0 - y.array())).matrix());
    });
}

inline Var leaky_relu(Var a, double slope) {
    Mat v = a.value().unaryExpr([slope](double x) { return x >= 0 ? x : slope * x; });
    int ai = a.idx;
    return a.tape->push(std::move(v), [ai, slope](Tape& t, int self) {
        const Mat& x = t.value(ai);
        t.grad(ai) += t.grad(self).cwiseProduct(
            x.unaryExpr([slope](double e) { return e >= 0 ? 1.0 : slope; }));
    });
}

inline double softplus_value(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline Var softplus_(Var a) {
    Mat v = a.value().unaryExpr([](double x) { return softplus_value(x); });
    int ai = a.idx;
    return a.tape->push(std::move(v), [ai](Tape& t, int self) {
        const Mat& x = t.value(ai);
        t.grad(ai) += t.grad(self).cwiseProduct(
            x.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); }));
    });
}

// Column-vector softmax with max subtraction.
inline Var softmax_col(Var a) {
    const Mat& x = a.value();
    double m = x.maxCoeff();
    Mat e = (x.array() - m).exp();
    Mat v = e / e.sum();
    int ai = a.idx;
    return a.tape->push(std::move(v), [ai](Tape& t, int self) {
        const Mat& y = t.value(self);
        const Mat& g = t.grad(self);
        double gy = (g.array() * y.array()).sum();
        t.grad(ai) += (y.array() * (g.array() - gy)).matrix();
    });
}

// ---- reductions ----

inline Var dot(Var a, Var b) {
    Mat v(1, 1);
    v(0, 0) = (a.value().array() * b.value().array()).sum();
    int ai = a.idx, bi = b.idx;
    return a.tape->push(std::move(v), [ai, bi](Tape& t, int self) {
        double g = t.grad(self)(0, 0);
        t.grad(ai) += g * t.value(bi);
        t.grad(bi) += g * t.value(ai);
    });
}

inline Var sum(Var a) {
    Mat v(1, 1);
    v(0, 0) = a.value().sum();
    int ai = a.idx;
    return a.tape->push(std::move(v), [ai](Tape& t, int self) {
        t.grad(ai).array() += t.grad(self)(0, 0);
    });
}

// Euclidean norm of a column vector (subgradient 0 at the origin).
inline Var l2norm(Var a) {
    Mat v(1, 1);
    v(0, 0) = a.value().norm();
    int ai = a.idx;
    return a.tape->push(std::move(v), [ai](Tape& t, int self) {
        double n = t.value(self)(0, 0);
        if (n > 0) t.grad(ai) += (t.grad(self)(0, 0) / n) * t.value(ai);
    });
}

// Cuts the graph: same value, no gradient flow.
inline Var detach(Var a) { return a.tape->constant(a.value()); }

inline Var mean(Tape& tape, const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractError("mean: empty list");
    Var acc = xs[0];
    for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
    return scale(acc, 1.0 / static_cast<double>(xs.size()));
}

}  // namespace rana::ad
