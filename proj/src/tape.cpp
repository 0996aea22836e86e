#include "nrsfm/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "nrsfm/geometry.hpp"

namespace nrsfm {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
    throw std::invalid_argument(std::string(op) + ": bad operand shape " + shape_str(a.shape()));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": operand shapes " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()) + " do not conform");
}

}  // namespace

int Tape::check(Var v) const {
    if (v.index < 0 || v.index >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("tape: variable does not belong to this tape");
    return v.index;
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&, const Tensor&)> back,
               const char* op) {
    if (!value.all_finite())
        throw std::domain_error(std::string(op) + ": non-finite result");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int index, const Tensor& delta) {
    if (!nodes_[index].requires_grad) return;
    if (!has_grad_[index]) {
        grads_[index] = Tensor::zeros(nodes_[index].value.shape());
        has_grad_[index] = 1;
    }
    grads_[index].vec() += delta.vec();
}

Var Tape::leaf(Tensor value) { return push(std::move(value), true, nullptr, "leaf"); }

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr, "constant"); }

Var Tape::add(Var a, Var b) {
    const int ia = check(a), ib = check(b);
    const Tensor& ta = nodes_[ia].value;
    const Tensor& tb = nodes_[ib].value;
    if (!ta.same_shape(tb)) shape_error("add", ta, tb);
    Tensor out(ta.shape());
    out.vec() = ta.vec() + tb.vec();
    const bool rg = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(out), rg,
                [ia, ib](Tape& t, const Tensor& g) {
                    t.accumulate(ia, g);
                    t.accumulate(ib, g);
                },
                "add");
}

Var Tape::sub(Var a, Var b) {
    const int ia = check(a), ib = check(b);
    const Tensor& ta = nodes_[ia].value;
    const Tensor& tb = nodes_[ib].value;
    if (!ta.same_shape(tb)) shape_error("sub", ta, tb);
    Tensor out(ta.shape());
    out.vec() = ta.vec() - tb.vec();
    const bool rg = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(out), rg,
                [ia, ib](Tape& t, const Tensor& g) {
                    t.accumulate(ia, g);
                    if (t.nodes_[ib].requires_grad) {
                        Tensor neg(g.shape());
                        neg.vec() = -g.vec();
                        t.accumulate(ib, neg);
                    }
                },
                "sub");
}

Var Tape::mul(Var a, Var b) {
    const int ia = check(a), ib = check(b);
    const Tensor& ta = nodes_[ia].value;
    const Tensor& tb = nodes_[ib].value;
    if (!ta.same_shape(tb)) shape_error("mul", ta, tb);
    Tensor out(ta.shape());
    out.vec() = ta.vec().cwiseProduct(tb.vec());
    const bool rg = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(out), rg,
                [ia, ib](Tape& t, const Tensor& g) {
                    if (t.nodes_[ia].requires_grad) {
                        Tensor da(g.shape());
                        da.vec() = g.vec().cwiseProduct(t.nodes_[ib].value.vec());
                        t.accumulate(ia, da);
                    }
                    if (t.nodes_[ib].requires_grad) {
                        Tensor db(g.shape());
                        db.vec() = g.vec().cwiseProduct(t.nodes_[ia].value.vec());
                        t.accumulate(ib, db);
                    }
                },
                "mul");
}

Var Tape::scale(Var a, double s) {
    const int ia = check(a);
    if (!std::isfinite(s)) throw std::domain_error("scale: non-finite factor");
    Tensor out(nodes_[ia].value.shape());
    out.vec() = s * nodes_[ia].value.vec();
    return push(std::move(out), nodes_[ia].requires_grad,
                [ia, s](Tape& t, const Tensor& g) {
                    Tensor da(g.shape());
                    da.vec() = s * g.vec();
                    t.accumulate(ia, da);
                },
                "scale");
}

Var Tape::add_rowvec(Var a, Var b) {
    const int ia = check(a), ib = check(b);
    const Tensor& ta = nodes_[ia].value;
    const Tensor& tb = nodes_[ib].value;
    if (ta.rank() != 2 || tb.rank() != 1 || ta.shape()[1] != tb.shape()[0])
        shape_error("add_rowvec", ta, tb);
    Tensor out(ta.shape());
    out.mat() = ta.mat().rowwise() + tb.vec().transpose();
    const bool rg = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(out), rg,
                [ia, ib](Tape& t, const Tensor& g) {
                    t.accumulate(ia, g);
                    if (t.nodes_[ib].requires_grad) {
                        Tensor db(t.nodes_[ib].value.shape());
                        db.vec() = g.mat().colwise().sum().transpose();
                        t.accumulate(ib, db);
                    }
                },
                "add_rowvec");
}

Var Tape::matmul(Var a, Var b) {
    const int ia = check(a), ib = check(b);
    const Tensor& ta = nodes_[ia].value;
    const Tensor& tb = nodes_[ib].value;
    if (ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0])
        shape_error("matmul", ta, tb);
    Tensor out({ta.shape()[0], tb.shape()[1]});
    out.mat().noalias() = ta.mat() * tb.mat();
    const bool rg = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    return push(std::move(out), rg,
                [ia, ib](Tape& t, const Tensor& g) {
                    if (t.nodes_[ia].requires_grad) {
                        Tensor da(t.nodes_[ia].value.shape());
                        da.mat().noalias() = g.mat() * t.nodes_[ib].value.mat().transpose();
                        t.accumulate(ia, da);
                    }
                    if (t.nodes_[ib].requires_grad) {
                        Tensor db(t.nodes_[ib].value.shape());
                        db.mat().noalias() = t.nodes_[ia].value.mat().transpose() * g.mat();
                        t.accumulate(ib, db);
                    }
                },
                "matmul");
}

Var Tape::relu(Var a) {
    const int ia = check(a);
    const Tensor& ta = nodes_[ia].value;
    Tensor out(ta.shape());
    out.vec() = ta.vec().cwiseMax(0.0);
    return push(std::move(out), nodes_[ia].requires_grad,
                [ia](Tape& t, const Tensor& g) {
                    const Tensor& x = t.nodes_[ia].value;
                    Tensor da(g.shape());
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] = x[i] > 0.0 ? g[i] : 0.0;
                    t.accumulate(ia, da);
                },
                "relu");
}

Var Tape::tanh(Var a) {
    const int ia = check(a);
    Tensor out(nodes_[ia].value.shape());
    out.vec() = nodes_[ia].value.vec().array().tanh().matrix();
    const int iy = static_cast<int>(nodes_.size());
    return push(std::move(out), nodes_[ia].requires_grad,
                [ia, iy](Tape& t, const Tensor& g) {
                    const Tensor& y = t.nodes_[iy].value;
                    Tensor da(g.shape());
                    da.vec() = (g.vec().array() * (1.0 - y.vec().array().square())).matrix();
                    t.accumulate(ia, da);
                },
                "tanh");
}

Var Tape::sum(Var a) {
    const int ia = check(a);
    Tensor out = Tensor::scalar(nodes_[ia].value.vec().sum());
    return push(std::move(out), nodes_[ia].requires_grad,
                [ia](Tape& t, const Tensor& g) {
                    Tensor da(t.nodes_[ia].value.shape());
                    da.vec().setConstant(g[0]);
                    t.accumulate(ia, da);
                },
                "sum");
}

Var Tape::colsum(Var a) {
    const int ia = check(a);
    const Tensor& ta = nodes_[ia].value;
    if (ta.rank() != 2) shape_error("colsum", ta);
    Tensor out({ta.shape()[1]});
    out.vec() = ta.mat().colwise().sum().transpose();
    return push(std::move(out), nodes_[ia].requires_grad,
                [ia](Tape& t, const Tensor& g) {
                    Tensor da(t.nodes_[ia].value.shape());
                    da.mat() = g.vec().transpose().replicate(da.mat().rows(), 1);
                    t.accumulate(ia, da);
                },
                "colsum");
}

Var Tape::reshape(Var a, Shape shape) {
    const int ia = check(a);
    const Tensor& ta = nodes_[ia].value;
    if (shape_size(shape) != ta.size())
        throw std::invalid_argument("reshape: element count mismatch " + shape_str(ta.shape()) +
                                    " -> " + shape_str(shape));
    Tensor out(shape);
    out.vec() = ta.vec();
    return push(std::move(out), nodes_[ia].requires_grad,
                [ia](Tape& t, const Tensor& g) {
                    Tensor da(t.nodes_[ia].value.shape());
                    da.vec() = g.vec();
                    t.accumulate(ia, da);
                },
                "reshape");
}

Var Tape::row(Var a, std::size_t i) {
    const int ia = check(a);
    const Tensor& ta = nodes_[ia].value;
    if (ta.rank() != 2 || i >= ta.shape()[0]) shape_error("row", ta);
    const std::size_t f = ta.shape()[1];
    Tensor out({f});
    for (std::size_t j = 0; j < f; ++j) out[j] = ta(i, j);
    return push(std::move(out), nodes_[ia].requires_grad,
                [ia, i, f](Tape& t, const Tensor& g) {
                    Tensor da(t.nodes_[ia].value.shape());
                    for (std::size_t j = 0; j < f; ++j) da(i, j) = g[j];
                    t.accumulate(ia, da);
                },
                "row");
}

Var Tape::slice_rows(Var a, std::size_t r0, std::size_t r1) {
    const int ia = check(a);
    const Tensor& ta = nodes_[ia].value;
    if (ta.rank() != 2 || r0 >= r1 || r1 > ta.shape()[0]) shape_error("slice_rows", ta);
    const std::size_t f = ta.shape()[1];
    Tensor out({r1 - r0, f});
    out.mat() = ta.mat().middleRows(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(r1 - r0));
    return push(std::move(out), nodes_[ia].requires_grad,
                [ia, r0, r1](Tape& t, const Tensor& g) {
                    Tensor da(t.nodes_[ia].value.shape());
                    da.mat().middleRows(static_cast<Eigen::Index>(r0),
                                        static_cast<Eigen::Index>(r1 - r0)) = g.mat();
                    t.accumulate(ia, da);
                },
                "slice_rows");
}

Var Tape::stack_rows(std::span<const Var> rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
    std::vector<int> idx;
    idx.reserve(rows.size());
    bool rg = false;
    const std::size_t f = nodes_[check(rows[0])].value.size();
    for (Var v : rows) {
        const int i = check(v);
        const Tensor& t = nodes_[i].value;
        if (t.rank() != 1 || t.size() != f) shape_error("stack_rows", t);
        idx.push_back(i);
        rg = rg || nodes_[i].requires_grad;
    }
    Tensor out({rows.size(), f});
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < f; ++j) out(r, j) = nodes_[idx[r]].value[j];
    return push(std::move(out), rg,
                [idx, f](Tape& t, const Tensor& g) {
                    for (std::size_t r = 0; r < idx.size(); ++r) {
                        if (!t.nodes_[idx[r]].requires_grad) continue;
                        Tensor dr({f});
                        for (std::size_t j = 0; j < f; ++j) dr[j] = g(r, j);
                        t.accumulate(idx[r], dr);
                    }
                },
                "stack_rows");
}

Var Tape::detach(Var a) {
    const int ia = check(a);
    return constant(nodes_[ia].value);
}

Var Tape::pseudo_huber_sq(Var s, double eps) {
    const int is = check(s);
    if (!(eps > 0)) throw std::invalid_argument("pseudo_huber_sq: eps must be positive");
    const Tensor& ts = nodes_[is].value;
    Tensor out(ts.shape());
    const double inv_eps2 = 1.0 / (eps * eps);
    for (std::size_t i = 0; i < ts.size(); ++i)
        out[i] = eps * (std::sqrt(1.0 + ts[i] * inv_eps2) - 1.0);
    return push(std::move(out), nodes_[is].requires_grad,
                [is, eps, inv_eps2](Tape& t, const Tensor& g) {
                    const Tensor& x = t.nodes_[is].value;
                    Tensor da(g.shape());
                    for (std::size_t i = 0; i < g.size(); ++i)
                        da[i] = g[i] / (2.0 * eps * std::sqrt(1.0 + x[i] * inv_eps2));
                    t.accumulate(is, da);
                },
                "pseudo_huber_sq");
}

Var Tape::batchnorm(Var x, Var gamma, Var beta, BatchNormState* state, bool training,
                    double momentum, double eps) {
    const int ix = check(x), ig = check(gamma), ib = check(beta);
    const Tensor& tx = nodes_[ix].value;
    if (tx.rank() != 2) shape_error("batchnorm", tx);
    const std::size_t n = tx.shape()[0], f = tx.shape()[1];
    const Tensor& tg = nodes_[ig].value;
    const Tensor& tb = nodes_[ib].value;
    if (tg.size() != f || tb.size() != f) shape_error("batchnorm", tg, tb);
    if (state == nullptr) throw std::invalid_argument("batchnorm: null state");

    Eigen::VectorXd mean(f), var(f);
    if (training) {
        mean = tx.mat().colwise().mean().transpose();
        const RowMat centered = tx.mat().rowwise() - mean.transpose();
        var = centered.array().square().matrix().colwise().mean().transpose();
        state->running_mean.vec() = (1.0 - momentum) * state->running_mean.vec() + momentum * mean;
        state->running_var.vec() = (1.0 - momentum) * state->running_var.vec() + momentum * var;
    } else {
        mean = state->running_mean.vec();
        var = state->running_var.vec();
    }
    Eigen::VectorXd inv_std = (var.array() + eps).rsqrt().matrix();

    // xhat is shared with the backward pass
    auto xhat = std::make_shared<RowMat>(
        ((tx.mat().rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose().array())
            .matrix());
    Tensor out({n, f});
    out.mat() = ((xhat->array().rowwise() * tg.vec().transpose().array()).rowwise() +
                 tb.vec().transpose().array())
                    .matrix();

    const bool rg = nodes_[ix].requires_grad || nodes_[ig].requires_grad || nodes_[ib].requires_grad;
    auto inv_std_sh = std::make_shared<Eigen::VectorXd>(std::move(inv_std));
    return push(std::move(out), rg,
                [ix, ig, ib, xhat, inv_std_sh, training, n](Tape& t, const Tensor& g) {
                    const Eigen::VectorXd dbeta = g.mat().colwise().sum().transpose();
                    const Eigen::VectorXd dgamma =
                        (g.mat().array() * xhat->array()).matrix().colwise().sum().transpose();
                    if (t.nodes_[ib].requires_grad) {
                        Tensor d(t.nodes_[ib].value.shape());
                        d.vec() = dbeta;
                        t.accumulate(ib, d);
                    }
                    if (t.nodes_[ig].requires_grad) {
                        Tensor d(t.nodes_[ig].value.shape());
                        d.vec() = dgamma;
                        t.accumulate(ig, d);
                    }
                    if (t.nodes_[ix].requires_grad) {
                        const Eigen::VectorXd gvec = t.nodes_[ig].value.vec();
                        Tensor dx(t.nodes_[ix].value.shape());
                        if (training) {
                            // dL/dx = gamma*inv_std*(g - mean(g) - xhat*mean(g.xhat))
                            const double inv_n = 1.0 / static_cast<double>(n);
                            Eigen::RowVectorXd mg = dbeta.transpose() * inv_n;
                            Eigen::RowVectorXd mgx = dgamma.transpose() * inv_n;
                            dx.mat() = (((g.mat().rowwise() - mg).array() -
                                         xhat->array().rowwise() * mgx.array())
                                            .rowwise() *
                                        (gvec.array() * inv_std_sh->array()).transpose())
                                           .matrix();
                        } else {
                            dx.mat() = (g.mat().array().rowwise() *
                                        (gvec.array() * inv_std_sh->array()).transpose())
                                           .matrix();
                        }
                        t.accumulate(ix, dx);
                    }
                },
                "batchnorm");
}

Var Tape::rot_expm(Var theta) {
    const int it = check(theta);
    const Tensor& tt = nodes_[it].value;
    if (tt.size() != 3) shape_error("rot_expm", tt);
    const Eigen::Vector3d th(tt[0], tt[1], tt[2]);
    Tensor out({3, 3});
    out.mat() = nrsfm::rot_expm(th);
    return push(std::move(out), nodes_[it].requires_grad,
                [it, th](Tape& t, const Tensor& g) {
                    const auto jac = rot_expm_jacobian(th);
                    Tensor da(t.nodes_[it].value.shape());
                    for (int i = 0; i < 3; ++i)
                        da[static_cast<std::size_t>(i)] = (g.mat().array() * jac[i].array()).sum();
                    t.accumulate(it, da);
                },
                "rot_expm");
}

void Tape::backward(Var loss) {
    const int il = check(loss);
    if (consumed_) throw std::logic_error("backward: tape already consumed");
    if (nodes_[il].value.size() != 1)
        throw std::invalid_argument("backward: loss is not scalar, shape " +
                                    shape_str(nodes_[il].value.shape()));
    consumed_ = true;
    grads_.assign(nodes_.size(), Tensor());
    has_grad_.assign(nodes_.size(), 0);
    if (!nodes_[il].requires_grad) return;  // loss independent of every leaf
    grads_[il] = Tensor::ones(nodes_[il].value.shape());
    has_grad_[il] = 1;
    for (int i = il; i >= 0; --i) {
        if (!has_grad_[i] || !nodes_[i].backward) continue;
        nodes_[i].backward(*this, grads_[i]);
    }
}

Tensor Tape::grad(Var v) const {
    const int iv = check(v);
    if (!consumed_) throw std::logic_error("grad: backward has not run");
    if (iv < static_cast<int>(has_grad_.size()) && has_grad_[iv]) return grads_[iv];
    return Tensor::zeros(nodes_[iv].value.shape());
}

}  // namespace nrsfm
