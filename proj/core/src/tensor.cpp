#include "tsgen/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace tsgen {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream s;
    s << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? "," : "") << shape[i];
    s << "]";
    return s.str();
}

namespace {

thread_local int no_grad_depth = 0;

void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

std::shared_ptr<TensorNode> new_node(Shape shape, std::vector<double> values) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->v = std::move(values);
    return n;
}

}  // namespace

bool grad_enabled() { return no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

Tensor Tensor::zeros(const Shape& shape) {
    return Tensor(new_node(shape, std::vector<double>(shape_numel(shape), 0.0)));
}

Tensor Tensor::full(const Shape& shape, double value) {
    return Tensor(new_node(shape, std::vector<double>(shape_numel(shape), value)));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values) {
    check(static_cast<std::int64_t>(values.size()) == shape_numel(shape),
          "from: value count does not match shape " + shape_str(shape));
    return Tensor(new_node(shape, std::move(values)));
}

Tensor Tensor::param(const Shape& shape, std::vector<double> values) {
    Tensor t = from(shape, std::move(values));
    t.node()->requires_grad = true;
    return t;
}

double Tensor::item() const {
    check(numel() == 1, "item: tensor has " + std::to_string(numel()) + " elements");
    return node_->v[0];
}

namespace detail {

Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward_fn) {
    auto n = new_node(std::move(shape), std::move(values));
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& p : parents)
            if (p.defined() && p.requires_grad()) { needs = true; break; }
    }
    if (needs) {
        n->requires_grad = true;
        for (const auto& p : parents)
            if (p.defined()) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(n);
}

}  // namespace detail

using detail::make_op;

void backward(const Tensor& loss) {
    check(loss.defined() && loss.numel() == 1, "backward: loss must be a scalar");
    if (!loss.requires_grad()) return;

    // Iterative post-order topological sort over grad-requiring nodes.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* parent = node->parents[idx++].get();
            if (parent->requires_grad && !seen.count(parent)) {
                seen.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (TensorNode* n : order) n->ensure_grad();
    loss.node()->g[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---- elementwise --------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
    std::vector<double> v(a.numel());
    const auto &av = a.values(), &bv = b.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
    auto an = a.node().get(), bn = b.node().get();
    return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& n) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < n.g.size(); ++i) an->g[i] += n.g[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < n.g.size(); ++i) bn->g[i] += n.g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), "sub: shape mismatch");
    std::vector<double> v(a.numel());
    const auto &av = a.values(), &bv = b.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
    auto an = a.node().get(), bn = b.node().get();
    return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& n) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < n.g.size(); ++i) an->g[i] += n.g[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < n.g.size(); ++i) bn->g[i] -= n.g[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), "mul: shape mismatch");
    std::vector<double> v(a.numel());
    const auto &av = a.values(), &bv = b.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
    auto an = a.node().get(), bn = b.node().get();
    return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& n) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < n.g.size(); ++i) an->g[i] += n.g[i] * bn->v[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < n.g.size(); ++i) bn->g[i] += n.g[i] * an->v[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> v(a.numel());
    const auto& av = a.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * c;
    auto an = a.node().get();
    return make_op(a.shape(), std::move(v), {a}, [an, c](TensorNode& n) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n.g.size(); ++i) an->g[i] += n.g[i] * c;
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> v(a.numel());
    const auto& av = a.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + c;
    auto an = a.node().get();
    return make_op(a.shape(), std::move(v), {a}, [an](TensorNode& n) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n.g.size(); ++i) an->g[i] += n.g[i];
    });
}

Tensor mul_rows(const Tensor& x, const std::vector<double>& c) {
    check(!x.shape().empty(), "mul_rows: needs at least 1-d input");
    const int b_dim = x.dim(0);
    check(static_cast<int>(c.size()) == b_dim, "mul_rows: row count mismatch");
    const std::int64_t inner = x.numel() / b_dim;
    std::vector<double> v(x.numel());
    const auto& xv = x.values();
    for (int b = 0; b < b_dim; ++b)
        for (std::int64_t i = 0; i < inner; ++i) v[b * inner + i] = xv[b * inner + i] * c[b];
    auto xn = x.node().get();
    return make_op(x.shape(), std::move(v), {x}, [xn, c, b_dim, inner](TensorNode& n) {
        xn->ensure_grad();
        for (int b = 0; b < b_dim; ++b)
            for (std::int64_t i = 0; i < inner; ++i)
                xn->g[b * inner + i] += n.g[b * inner + i] * c[b];
    });
}

Tensor add_axis_bias(const Tensor& x, const Tensor& bias, int axis) {
    check(bias.shape().size() == 1, "add_axis_bias: bias must be 1-d");
    check(axis >= 0 && axis < static_cast<int>(x.shape().size()), "add_axis_bias: bad axis");
    check(bias.dim(0) == x.dim(axis), "add_axis_bias: size mismatch on axis");
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < static_cast<int>(x.shape().size()); ++i) inner *= x.dim(i);
    const int c_dim = x.dim(axis);

    std::vector<double> v(x.numel());
    const auto &xv = x.values(), &bv = bias.values();
    for (std::int64_t o = 0; o < outer; ++o)
        for (int c = 0; c < c_dim; ++c) {
            const std::int64_t base = (o * c_dim + c) * inner;
            for (std::int64_t i = 0; i < inner; ++i) v[base + i] = xv[base + i] + bv[c];
        }
    auto xn = x.node().get(), bn = bias.node().get();
    return make_op(x.shape(), std::move(v), {x, bias},
                   [xn, bn, outer, c_dim, inner](TensorNode& n) {
                       if (xn->requires_grad) {
                           xn->ensure_grad();
                           for (std::size_t i = 0; i < n.g.size(); ++i) xn->g[i] += n.g[i];
                       }
                       if (bn->requires_grad) {
                           bn->ensure_grad();
                           for (std::int64_t o = 0; o < outer; ++o)
                               for (int c = 0; c < c_dim; ++c) {
                                   const std::int64_t base = (o * c_dim + c) * inner;
                                   double s = 0.0;
                                   for (std::int64_t i = 0; i < inner; ++i) s += n.g[base + i];
                                   bn->g[c] += s;
                               }
                       }
                   });
}

Tensor add_suffix(const Tensor& x, const Tensor& p) {
    const auto& xs = x.shape();
    const auto& ps = p.shape();
    check(ps.size() <= xs.size(), "add_suffix: suffix rank too large");
    for (std::size_t i = 0; i < ps.size(); ++i)
        check(ps[ps.size() - 1 - i] == xs[xs.size() - 1 - i], "add_suffix: shape mismatch");
    const std::int64_t inner = p.numel();
    const std::int64_t rows = x.numel() / inner;

    std::vector<double> v(x.numel());
    const auto &xv = x.values(), &pv = p.values();
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t i = 0; i < inner; ++i) v[r * inner + i] = xv[r * inner + i] + pv[i];
    auto xn = x.node().get(), pn = p.node().get();
    return make_op(x.shape(), std::move(v), {x, p}, [xn, pn, rows, inner](TensorNode& n) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < n.g.size(); ++i) xn->g[i] += n.g[i];
        }
        if (pn->requires_grad) {
            pn->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t i = 0; i < inner; ++i) pn->g[i] += n.g[r * inner + i];
        }
    });
}

// ---- matmul family ------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    check(w.shape().size() == 2, "linear: weight must be 2-d");
    const int k = w.dim(0), nout = w.dim(1);
    check(!x.shape().empty() && x.shape().back() == k,
          "linear: inner dim mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    const std::int64_t m = x.numel() / k;
    if (b.defined()) check(b.shape().size() == 1 && b.dim(0) == nout, "linear: bad bias");

    std::vector<double> v(m * nout);
    {
        CMapMat xm(x.values().data(), m, k);
        CMapMat wm(w.values().data(), k, nout);
        MapMat ym(v.data(), m, nout);
        ym.noalias() = xm * wm;
        if (b.defined()) {
            Eigen::Map<const Eigen::RowVectorXd> bm(b.values().data(), nout);
            ym.rowwise() += bm;
        }
    }
    Shape out_shape = x.shape();
    out_shape.back() = nout;

    auto xn = x.node().get(), wn = w.node().get();
    auto bn = b.defined() ? b.node().get() : nullptr;
    return make_op(out_shape, std::move(v), {x, w, b}, [xn, wn, bn, m, k, nout](TensorNode& n) {
        CMapMat gy(n.g.data(), m, nout);
        if (xn->requires_grad) {
            xn->ensure_grad();
            MapMat gx(xn->g.data(), m, k);
            CMapMat wm(wn->v.data(), k, nout);
            gx.noalias() += gy * wm.transpose();
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            MapMat gw(wn->g.data(), k, nout);
            CMapMat xm(xn->v.data(), m, k);
            gw.noalias() += xm.transpose() * gy;
        }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            Eigen::Map<Eigen::RowVectorXd> gb(bn->g.data(), nout);
            gb += gy.colwise().sum();
        }
    });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    check(a.shape().size() == 3 && b.shape().size() == 3, "bmm: expects 3-d tensors");
    const int nb = a.dim(0);
    check(b.dim(0) == nb, "bmm: batch mismatch");
    const int m = trans_a ? a.dim(2) : a.dim(1);
    const int ka = trans_a ? a.dim(1) : a.dim(2);
    const int kb = trans_b ? b.dim(2) : b.dim(1);
    const int p = trans_b ? b.dim(1) : b.dim(2);
    check(ka == kb, "bmm: inner dim mismatch");
    const int k = ka;

    std::vector<double> v(static_cast<std::int64_t>(nb) * m * p);
    const std::int64_t sa = static_cast<std::int64_t>(a.dim(1)) * a.dim(2);
    const std::int64_t sb = static_cast<std::int64_t>(b.dim(1)) * b.dim(2);
    const std::int64_t sy = static_cast<std::int64_t>(m) * p;
    for (int i = 0; i < nb; ++i) {
        CMapMat am(a.values().data() + i * sa, a.dim(1), a.dim(2));
        CMapMat bm(b.values().data() + i * sb, b.dim(1), b.dim(2));
        MapMat ym(v.data() + i * sy, m, p);
        if (!trans_a && !trans_b) ym.noalias() = am * bm;
        else if (trans_a && !trans_b) ym.noalias() = am.transpose() * bm;
        else if (!trans_a && trans_b) ym.noalias() = am * bm.transpose();
        else ym.noalias() = am.transpose() * bm.transpose();
    }

    auto an = a.node().get(), bn = b.node().get();
    Shape out_shape{nb, m, p};
    return make_op(out_shape, std::move(v), {a, b},
                   [an, bn, nb, sa, sb, sy, trans_a, trans_b](TensorNode& n) {
                       const int a1 = an->shape[1], a2 = an->shape[2];
                       const int b1 = bn->shape[1], b2 = bn->shape[2];
                       const int m = n.shape[1], p = n.shape[2];
                       if (an->requires_grad) an->ensure_grad();
                       if (bn->requires_grad) bn->ensure_grad();
                       for (int i = 0; i < nb; ++i) {
                           CMapMat gy(n.g.data() + i * sy, m, p);
                           CMapMat am(an->v.data() + i * sa, a1, a2);
                           CMapMat bm(bn->v.data() + i * sb, b1, b2);
                           if (an->requires_grad) {
                               MapMat ga(an->g.data() + i * sa, a1, a2);
                               if (!trans_a && !trans_b) ga.noalias() += gy * bm.transpose();
                               else if (trans_a && !trans_b) ga.noalias() += bm * gy.transpose();
                               else if (!trans_a && trans_b) ga.noalias() += gy * bm;
                               else ga.noalias() += bm.transpose() * gy.transpose();
                           }
                           if (bn->requires_grad) {
                               MapMat gb(bn->g.data() + i * sb, b1, b2);
                               if (!trans_a && !trans_b) gb.noalias() += am.transpose() * gy;
                               else if (trans_a && !trans_b) gb.noalias() += am * gy;
                               else if (!trans_a && trans_b) gb.noalias() += gy.transpose() * am;
                               else gb.noalias() += gy.transpose() * am.transpose();
                           }
                       }
                   });
}

// ---- convolution ---------------------------------------------------------

namespace {

struct ConvDims {
    int b, cin, h, w, cout, kh, kw, ho, wo;
};

void im2col(const double* x, const ConvDims& d, int stride, int pad, double* col) {
    // col layout: [b*ho*wo, cin*kh*kw]
    const int K = d.cin * d.kh * d.kw;
    for (int b = 0; b < d.b; ++b) {
        const double* xb = x + static_cast<std::int64_t>(b) * d.cin * d.h * d.w;
        for (int oy = 0; oy < d.ho; ++oy)
            for (int ox = 0; ox < d.wo; ++ox) {
                double* crow =
                    col + (static_cast<std::int64_t>(b) * d.ho * d.wo + oy * d.wo + ox) * K;
                int idx = 0;
                for (int c = 0; c < d.cin; ++c)
                    for (int ky = 0; ky < d.kh; ++ky) {
                        const int iy = oy * stride + ky - pad;
                        for (int kx = 0; kx < d.kw; ++kx, ++idx) {
                            const int ix = ox * stride + kx - pad;
                            crow[idx] = (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                                            ? xb[(c * d.h + iy) * d.w + ix]
                                            : 0.0;
                        }
                    }
            }
    }
}

void col2im_add(const double* col, const ConvDims& d, int stride, int pad, double* gx) {
    const int K = d.cin * d.kh * d.kw;
    for (int b = 0; b < d.b; ++b) {
        double* gxb = gx + static_cast<std::int64_t>(b) * d.cin * d.h * d.w;
        for (int oy = 0; oy < d.ho; ++oy)
            for (int ox = 0; ox < d.wo; ++ox) {
                const double* crow =
                    col + (static_cast<std::int64_t>(b) * d.ho * d.wo + oy * d.wo + ox) * K;
                int idx = 0;
                for (int c = 0; c < d.cin; ++c)
                    for (int ky = 0; ky < d.kh; ++ky) {
                        const int iy = oy * stride + ky - pad;
                        for (int kx = 0; kx < d.kw; ++kx, ++idx) {
                            const int ix = ox * stride + kx - pad;
                            if (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                                gxb[(c * d.h + iy) * d.w + ix] += crow[idx];
                        }
                    }
            }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    check(x.shape().size() == 4, "conv2d: input must be [B,C,H,W]");
    check(w.shape().size() == 4, "conv2d: weight must be [Cout,Cin,kh,kw]");
    ConvDims d;
    d.b = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = w.dim(0);
    d.kh = w.dim(2);
    d.kw = w.dim(3);
    check(w.dim(1) == d.cin, "conv2d: channel mismatch");
    d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
    d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
    check(d.ho >= 1 && d.wo >= 1, "conv2d: kernel larger than padded input");
    if (b.defined()) check(b.shape().size() == 1 && b.dim(0) == d.cout, "conv2d: bad bias");

    const int K = d.cin * d.kh * d.kw;
    const std::int64_t rows = static_cast<std::int64_t>(d.b) * d.ho * d.wo;
    std::vector<double> col(rows * K);
    im2col(x.values().data(), d, stride, pad, col.data());

    // y_mat [rows, cout] = col [rows, K] * W^T [K, cout]; then rearrange to NCHW.
    std::vector<double> ymat(rows * d.cout);
    {
        CMapMat cm(col.data(), rows, K);
        CMapMat wm(w.values().data(), d.cout, K);
        MapMat ym(ymat.data(), rows, d.cout);
        ym.noalias() = cm * wm.transpose();
        if (b.defined()) {
            Eigen::Map<const Eigen::RowVectorXd> bm(b.values().data(), d.cout);
            ym.rowwise() += bm;
        }
    }
    std::vector<double> v(static_cast<std::int64_t>(d.b) * d.cout * d.ho * d.wo);
    const int hw = d.ho * d.wo;
    for (int bi = 0; bi < d.b; ++bi)
        for (int p = 0; p < hw; ++p) {
            const double* src = ymat.data() + (static_cast<std::int64_t>(bi) * hw + p) * d.cout;
            for (int c = 0; c < d.cout; ++c)
                v[(static_cast<std::int64_t>(bi) * d.cout + c) * hw + p] = src[c];
        }

    auto xn = x.node().get(), wn = w.node().get();
    auto bn = b.defined() ? b.node().get() : nullptr;
    Shape out_shape{d.b, d.cout, d.ho, d.wo};
    return make_op(out_shape, std::move(v), {x, w, b}, [xn, wn, bn, d, stride, pad,
                                                        K, rows, hw](TensorNode& n) {
        // Gather grad back into the matmul layout.
        std::vector<double> gymat(rows * d.cout);
        for (int bi = 0; bi < d.b; ++bi)
            for (int p = 0; p < hw; ++p) {
                double* dst = gymat.data() + (static_cast<std::int64_t>(bi) * hw + p) * d.cout;
                for (int c = 0; c < d.cout; ++c)
                    dst[c] = n.g[(static_cast<std::int64_t>(bi) * d.cout + c) * hw + p];
            }
        CMapMat gy(gymat.data(), rows, d.cout);

        if (wn->requires_grad || xn->requires_grad) {
            std::vector<double> col(rows * K);
            im2col(xn->v.data(), d, stride, pad, col.data());
            if (wn->requires_grad) {
                wn->ensure_grad();
                MapMat gw(wn->g.data(), d.cout, K);
                CMapMat cm(col.data(), rows, K);
                gw.noalias() += gy.transpose() * cm;
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                std::vector<double> gcol(rows * K);
                MapMat gc(gcol.data(), rows, K);
                CMapMat wm(wn->v.data(), d.cout, K);
                gc.noalias() = gy * wm;
                col2im_add(gcol.data(), d, stride, pad, xn->g.data());
            }
        }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            Eigen::Map<Eigen::RowVectorXd> gb(bn->g.data(), d.cout);
            gb += gy.colwise().sum();
        }
    });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    check(x.shape().size() == 4, "conv_transpose2d: input must be [B,C,H,W]");
    check(w.shape().size() == 4, "conv_transpose2d: weight must be [Cin,Cout,kh,kw]");
    const int B = x.dim(0), cin = x.dim(1), h = x.dim(2), wdim = x.dim(3);
    check(w.dim(0) == cin, "conv_transpose2d: channel mismatch");
    const int cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int ho = h + kh - 1, wo = wdim + kw - 1;
    if (b.defined()) check(b.shape().size() == 1 && b.dim(0) == cout, "conv_transpose2d: bad bias");

    std::vector<double> v(static_cast<std::int64_t>(B) * cout * ho * wo, 0.0);
    const auto& xv = x.values();
    const auto& wv = w.values();
    for (int bi = 0; bi < B; ++bi)
        for (int ci = 0; ci < cin; ++ci)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < wdim; ++ix) {
                    const double xval =
                        xv[((static_cast<std::int64_t>(bi) * cin + ci) * h + iy) * wdim + ix];
                    for (int co = 0; co < cout; ++co)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx)
                                v[((static_cast<std::int64_t>(bi) * cout + co) * ho + iy + ky) *
                                      wo +
                                  ix + kx] +=
                                    xval * wv[((static_cast<std::int64_t>(ci) * cout + co) * kh +
                                               ky) *
                                                  kw +
                                              kx];
                }
    if (b.defined()) {
        const auto& bv = b.values();
        for (int bi = 0; bi < B; ++bi)
            for (int co = 0; co < cout; ++co) {
                double* base = v.data() + (static_cast<std::int64_t>(bi) * cout + co) * ho * wo;
                for (int p = 0; p < ho * wo; ++p) base[p] += bv[co];
            }
    }

    auto xn = x.node().get(), wn = w.node().get();
    auto bn = b.defined() ? b.node().get() : nullptr;
    Shape out_shape{B, cout, ho, wo};
    return make_op(out_shape, std::move(v), {x, w, b},
                   [xn, wn, bn, B, cin, cout, h, wdim, kh, kw, ho, wo](TensorNode& n) {
                       if (xn->requires_grad) xn->ensure_grad();
                       if (wn->requires_grad) wn->ensure_grad();
                       for (int bi = 0; bi < B; ++bi)
                           for (int ci = 0; ci < cin; ++ci)
                               for (int iy = 0; iy < h; ++iy)
                                   for (int ix = 0; ix < wdim; ++ix) {
                                       const std::int64_t xidx =
                                           ((static_cast<std::int64_t>(bi) * cin + ci) * h + iy) *
                                               wdim +
                                           ix;
                                       double gx_acc = 0.0;
                                       for (int co = 0; co < cout; ++co)
                                           for (int ky = 0; ky < kh; ++ky)
                                               for (int kx = 0; kx < kw; ++kx) {
                                                   const double gy =
                                                       n.g[((static_cast<std::int64_t>(bi) * cout +
                                                             co) *
                                                                ho +
                                                            iy + ky) *
                                                               wo +
                                                           ix + kx];
                                                   const std::int64_t widx =
                                                       ((static_cast<std::int64_t>(ci) * cout +
                                                         co) *
                                                            kh +
                                                        ky) *
                                                           kw +
                                                       kx;
                                                   if (xn->requires_grad)
                                                       gx_acc += gy * wn->v[widx];
                                                   if (wn->requires_grad)
                                                       wn->g[widx] += gy * xn->v[xidx];
                                               }
                                       if (xn->requires_grad) xn->g[xidx] += gx_acc;
                                   }
                       if (bn && bn->requires_grad) {
                           bn->ensure_grad();
                           for (int bi = 0; bi < B; ++bi)
                               for (int co = 0; co < cout; ++co) {
                                   const double* base =
                                       n.g.data() +
                                       (static_cast<std::int64_t>(bi) * cout + co) * ho * wo;
                                   double s = 0.0;
                                   for (int p = 0; p < ho * wo; ++p) s += base[p];
                                   bn->g[co] += s;
                               }
                       }
                   });
}

Tensor upsample_nearest2(const Tensor& x) {
    check(x.shape().size() == 4, "upsample_nearest2: input must be [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    std::vector<double> v(static_cast<std::int64_t>(B) * C * 4 * H * W);
    const auto& xv = x.values();
    for (int bc = 0; bc < B * C; ++bc) {
        const double* src = xv.data() + static_cast<std::int64_t>(bc) * H * W;
        double* dst = v.data() + static_cast<std::int64_t>(bc) * 4 * H * W;
        for (int y = 0; y < 2 * H; ++y)
            for (int x2 = 0; x2 < 2 * W; ++x2)
                dst[y * 2 * W + x2] = src[(y / 2) * W + x2 / 2];
    }
    auto xn = x.node().get();
    Shape out_shape{B, C, 2 * H, 2 * W};
    return make_op(out_shape, std::move(v), {x}, [xn, B, C, H, W](TensorNode& n) {
        xn->ensure_grad();
        for (int bc = 0; bc < B * C; ++bc) {
            double* gdst = xn->g.data() + static_cast<std::int64_t>(bc) * H * W;
            const double* gsrc = n.g.data() + static_cast<std::int64_t>(bc) * 4 * H * W;
            for (int y = 0; y < 2 * H; ++y)
                for (int x2 = 0; x2 < 2 * W; ++x2)
                    gdst[(y / 2) * W + x2 / 2] += gsrc[y * 2 * W + x2];
        }
    });
}

// ---- nonlinearities -------------------------------------------------------

namespace {

template <typename F, typename DF>
Tensor unary_op(const Tensor& x, F f, DF df, const char*) {
    std::vector<double> v(x.numel());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(xv[i]);
    auto xn = x.node().get();
    return make_op(x.shape(), std::move(v), {x}, [xn, df](TensorNode& n) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < n.g.size(); ++i) xn->g[i] += n.g[i] * df(xn->v[i], n.v[i]);
    });
}

}  // namespace

Tensor relu(const Tensor& x) {
    return unary_op(
        x, [](double v) { return v > 0 ? v : 0.0; },
        [](double v, double) { return v > 0 ? 1.0 : 0.0; }, "relu");
}

Tensor silu(const Tensor& x) {
    return unary_op(
        x, [](double v) { return v / (1.0 + std::exp(-v)); },
        [](double v, double) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        },
        "silu");
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return unary_op(
        x, [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [=](double v, double) {
            const double phi = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            return phi + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
        },
        "gelu");
}

Tensor tanh_t(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor abs_t(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }, "abs");
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    return unary_op(
        x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; }, "clamp");
}

// ---- normalization / softmax ----------------------------------------------

Tensor softmax_lastdim(const Tensor& x) {
    const int dlast = x.shape().back();
    const std::int64_t rows = x.numel() / dlast;
    std::vector<double> v(x.numel());
    const auto& xv = x.values();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* src = xv.data() + r * dlast;
        double* dst = v.data() + r * dlast;
        double mx = src[0];
        for (int i = 1; i < dlast; ++i) mx = std::max(mx, src[i]);
        double sum = 0.0;
        for (int i = 0; i < dlast; ++i) {
            dst[i] = std::exp(src[i] - mx);
            sum += dst[i];
        }
        const double inv = 1.0 / sum;
        for (int i = 0; i < dlast; ++i) dst[i] *= inv;
    }
    auto xn = x.node().get();
    return make_op(x.shape(), std::move(v), {x}, [xn, rows, dlast](TensorNode& n) {
        xn->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* y = n.v.data() + r * dlast;
            const double* gy = n.g.data() + r * dlast;
            double dot = 0.0;
            for (int i = 0; i < dlast; ++i) dot += y[i] * gy[i];
            double* gx = xn->g.data() + r * dlast;
            for (int i = 0; i < dlast; ++i) gx[i] += y[i] * (gy[i] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const int dlast = x.shape().back();
    check(gamma.numel() == dlast && beta.numel() == dlast, "layer_norm: affine size mismatch");
    const std::int64_t rows = x.numel() / dlast;
    std::vector<double> v(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(rows);
    const auto &xv = x.values(), &gv = gamma.values(), &bv = beta.values();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* src = xv.data() + r * dlast;
        double mean = 0.0;
        for (int i = 0; i < dlast; ++i) mean += src[i];
        mean /= dlast;
        double var = 0.0;
        for (int i = 0; i < dlast; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= dlast;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (int i = 0; i < dlast; ++i) {
            const double h = (src[i] - mean) * is;
            xhat[r * dlast + i] = h;
            v[r * dlast + i] = gv[i] * h + bv[i];
        }
    }
    auto xn = x.node().get(), gn = gamma.node().get(), bn = beta.node().get();
    return make_op(x.shape(), std::move(v), {x, gamma, beta},
                   [xn, gn, bn, rows, dlast, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](TensorNode& n) {
                       if (gn->requires_grad) gn->ensure_grad();
                       if (bn->requires_grad) bn->ensure_grad();
                       if (xn->requires_grad) xn->ensure_grad();
                       for (std::int64_t r = 0; r < rows; ++r) {
                           const double* gy = n.g.data() + r * dlast;
                           const double* h = xhat.data() + r * dlast;
                           if (gn->requires_grad || bn->requires_grad) {
                               for (int i = 0; i < dlast; ++i) {
                                   if (gn->requires_grad) gn->g[i] += gy[i] * h[i];
                                   if (bn->requires_grad) bn->g[i] += gy[i];
                               }
                           }
                           if (xn->requires_grad) {
                               double mean_gh = 0.0, mean_ghh = 0.0;
                               for (int i = 0; i < dlast; ++i) {
                                   const double gh = gy[i] * gn->v[i];
                                   mean_gh += gh;
                                   mean_ghh += gh * h[i];
                               }
                               mean_gh /= dlast;
                               mean_ghh /= dlast;
                               double* gx = xn->g.data() + r * dlast;
                               for (int i = 0; i < dlast; ++i) {
                                   const double gh = gy[i] * gn->v[i];
                                   gx[i] += inv_std[r] * (gh - mean_gh - h[i] * mean_ghh);
                               }
                           }
                       }
                   });
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  double eps) {
    check(x.shape().size() == 4, "group_norm: input must be [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(C % groups == 0, "group_norm: channels not divisible by groups");
    check(gamma.numel() == C && beta.numel() == C, "group_norm: affine size mismatch");
    const int cg = C / groups;
    const std::int64_t gsize = static_cast<std::int64_t>(cg) * H * W;

    std::vector<double> v(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(static_cast<std::int64_t>(B) * groups);
    const auto &xv = x.values(), &gv = gamma.values(), &bv = beta.values();
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < groups; ++g) {
            const std::int64_t base =
                (static_cast<std::int64_t>(b) * C + static_cast<std::int64_t>(g) * cg) * H * W;
            double mean = 0.0;
            for (std::int64_t i = 0; i < gsize; ++i) mean += xv[base + i];
            mean /= static_cast<double>(gsize);
            double var = 0.0;
            for (std::int64_t i = 0; i < gsize; ++i)
                var += (xv[base + i] - mean) * (xv[base + i] - mean);
            var /= static_cast<double>(gsize);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[b * groups + g] = is;
            for (std::int64_t i = 0; i < gsize; ++i) {
                const int c = g * cg + static_cast<int>(i / (H * W));
                const double h = (xv[base + i] - mean) * is;
                xhat[base + i] = h;
                v[base + i] = gv[c] * h + bv[c];
            }
        }
    auto xn = x.node().get(), gn = gamma.node().get(), bn = beta.node().get();
    return make_op(x.shape(), std::move(v), {x, gamma, beta},
                   [xn, gn, bn, B, C, H, W, groups, cg, gsize, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](TensorNode& n) {
                       if (gn->requires_grad) gn->ensure_grad();
                       if (bn->requires_grad) bn->ensure_grad();
                       if (xn->requires_grad) xn->ensure_grad();
                       const int hw = H * W;
                       for (int b = 0; b < B; ++b)
                           for (int g = 0; g < groups; ++g) {
                               const std::int64_t base =
                                   (static_cast<std::int64_t>(b) * C +
                                    static_cast<std::int64_t>(g) * cg) *
                                   hw;
                               if (gn->requires_grad || bn->requires_grad) {
                                   for (std::int64_t i = 0; i < gsize; ++i) {
                                       const int c = g * cg + static_cast<int>(i / hw);
                                       if (gn->requires_grad)
                                           gn->g[c] += n.g[base + i] * xhat[base + i];
                                       if (bn->requires_grad) bn->g[c] += n.g[base + i];
                                   }
                               }
                               if (xn->requires_grad) {
                                   double mean_gh = 0.0, mean_ghh = 0.0;
                                   for (std::int64_t i = 0; i < gsize; ++i) {
                                       const int c = g * cg + static_cast<int>(i / hw);
                                       const double gh = n.g[base + i] * gn->v[c];
                                       mean_gh += gh;
                                       mean_ghh += gh * xhat[base + i];
                                   }
                                   mean_gh /= static_cast<double>(gsize);
                                   mean_ghh /= static_cast<double>(gsize);
                                   const double is = inv_std[b * groups + g];
                                   for (std::int64_t i = 0; i < gsize; ++i) {
                                       const int c = g * cg + static_cast<int>(i / hw);
                                       const double gh = n.g[base + i] * gn->v[c];
                                       xn->g[base + i] +=
                                           is * (gh - mean_gh - xhat[base + i] * mean_ghh);
                                   }
                               }
                           }
                   });
}

// ---- shape ops -------------------------------------------------------------

Tensor reshape(const Tensor& x, const Shape& shape) {
    check(shape_numel(shape) == x.numel(), "reshape: element count mismatch");
    std::vector<double> v = x.values();
    auto xn = x.node().get();
    return make_op(shape, std::move(v), {x}, [xn](TensorNode& n) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < n.g.size(); ++i) xn->g[i] += n.g[i];
    });
}

namespace {

std::vector<std::int64_t> row_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& dims) {
    const auto& xs = x.shape();
    check(dims.size() == xs.size(), "permute: rank mismatch");
    Shape out_shape(xs.size());
    for (std::size_t i = 0; i < dims.size(); ++i) out_shape[i] = xs[dims[i]];
    const auto in_st = row_strides(xs);
    const auto out_st = row_strides(out_shape);
    const std::int64_t n_elem = x.numel();

    // For each output position, the matching input offset.
    std::vector<double> v(n_elem);
    const auto& xv = x.values();
    const int rank = static_cast<int>(xs.size());
    std::vector<int> idx(rank, 0);
    for (std::int64_t o = 0; o < n_elem; ++o) {
        std::int64_t rem = o, src = 0;
        for (int i = 0; i < rank; ++i) {
            const std::int64_t q = rem / out_st[i];
            rem -= q * out_st[i];
            src += q * in_st[dims[i]];
        }
        v[o] = xv[src];
    }
    auto xn = x.node().get();
    return make_op(out_shape, std::move(v), {x}, [xn, dims, in_st, out_st, rank](TensorNode& n) {
        xn->ensure_grad();
        const std::int64_t n_elem = n.numel();
        for (std::int64_t o = 0; o < n_elem; ++o) {
            std::int64_t rem = o, src = 0;
            for (int i = 0; i < rank; ++i) {
                const std::int64_t q = rem / out_st[i];
                rem -= q * out_st[i];
                src += q * in_st[dims[i]];
            }
            xn->g[src] += n.g[o];
        }
    });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
    check(!xs.empty(), "concat: empty input");
    const auto& s0 = xs[0].shape();
    check(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: bad axis");
    int axis_total = 0;
    for (const auto& t : xs) {
        const auto& s = t.shape();
        check(s.size() == s0.size(), "concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i)
            if (static_cast<int>(i) != axis)
                check(s[i] == s0[i], "concat: shape mismatch off-axis");
        axis_total += s[axis];
    }
    Shape out_shape = s0;
    out_shape[axis] = axis_total;

    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s0[i];
    for (int i = axis + 1; i < static_cast<int>(s0.size()); ++i) inner *= s0[i];

    std::vector<double> v(shape_numel(out_shape));
    std::vector<std::int64_t> offsets;  // axis offset of each input
    {
        std::int64_t off = 0;
        for (const auto& t : xs) {
            offsets.push_back(off);
            const int a = t.dim(axis);
            const auto& tv = t.values();
            for (std::int64_t o = 0; o < outer; ++o)
                std::memcpy(v.data() + (o * axis_total + off) * inner,
                            tv.data() + o * a * inner,
                            static_cast<std::size_t>(a) * inner * sizeof(double));
            off += a;
        }
    }
    std::vector<TensorNode*> raw;
    for (const auto& t : xs) raw.push_back(t.node().get());
    return make_op(out_shape, std::move(v), xs,
                   [raw, offsets, outer, inner, axis_total, axis](TensorNode& n) {
                       for (std::size_t k = 0; k < raw.size(); ++k) {
                           TensorNode* p = raw[k];
                           if (!p->requires_grad) continue;
                           p->ensure_grad();
                           const int a = p->shape[axis];
                           for (std::int64_t o = 0; o < outer; ++o) {
                               const double* src = n.g.data() + (o * axis_total + offsets[k]) * inner;
                               double* dst = p->g.data() + o * a * inner;
                               for (std::int64_t i = 0; i < a * inner; ++i) dst[i] += src[i];
                           }
                       }
                   });
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
    const auto& xs = x.shape();
    check(axis >= 0 && axis < static_cast<int>(xs.size()), "slice: bad axis");
    check(start >= 0 && len >= 1 && start + len <= xs[axis], "slice: range out of bounds");
    Shape out_shape = xs;
    out_shape[axis] = len;
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= xs[i];
    for (int i = axis + 1; i < static_cast<int>(xs.size()); ++i) inner *= xs[i];
    const int a = xs[axis];

    std::vector<double> v(shape_numel(out_shape));
    const auto& xv = x.values();
    for (std::int64_t o = 0; o < outer; ++o)
        std::memcpy(v.data() + o * len * inner, xv.data() + (o * a + start) * inner,
                    static_cast<std::size_t>(len) * inner * sizeof(double));
    auto xn = x.node().get();
    return make_op(out_shape, std::move(v), {x},
                   [xn, outer, inner, a, start, len](TensorNode& n) {
                       xn->ensure_grad();
                       for (std::int64_t o = 0; o < outer; ++o) {
                           const double* src = n.g.data() + o * len * inner;
                           double* dst = xn->g.data() + (o * a + start) * inner;
                           for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                       }
                   });
}

// ---- reductions -------------------------------------------------------------

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    auto xn = x.node().get();
    return make_op(Shape{1}, {s}, {x}, [xn](TensorNode& n) {
        xn->ensure_grad();
        const double g = n.g[0];
        for (auto& gi : xn->g) gi += g;
    });
}

Tensor mean_all(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.numel());
    double s = 0.0;
    for (double v : x.values()) s += v;
    s *= inv;
    auto xn = x.node().get();
    return make_op(Shape{1}, {s}, {x}, [xn, inv](TensorNode& n) {
        xn->ensure_grad();
        const double g = n.g[0] * inv;
        for (auto& gi : xn->g) gi += g;
    });
}

Tensor sum_per_sample(const Tensor& x) {
    check(!x.shape().empty(), "sum_per_sample: needs at least 1-d input");
    const int B = x.dim(0);
    const std::int64_t inner = x.numel() / B;
    std::vector<double> v(B, 0.0);
    const auto& xv = x.values();
    for (int b = 0; b < B; ++b) {
        double s = 0.0;
        for (std::int64_t i = 0; i < inner; ++i) s += xv[b * inner + i];
        v[b] = s;
    }
    auto xn = x.node().get();
    return make_op(Shape{B}, std::move(v), {x}, [xn, B, inner](TensorNode& n) {
        xn->ensure_grad();
        for (int b = 0; b < B; ++b) {
            const double g = n.g[b];
            for (std::int64_t i = 0; i < inner; ++i) xn->g[b * inner + i] += g;
        }
    });
}

Tensor dot_const(const Tensor& x, const std::vector<double>& c) {
    check(x.numel() == static_cast<std::int64_t>(c.size()), "dot_const: size mismatch");
    double s = 0.0;
    const auto& xv = x.values();
    for (std::size_t i = 0; i < c.size(); ++i) s += xv[i] * c[i];
    auto xn = x.node().get();
    return make_op(Shape{1}, {s}, {x}, [xn, c](TensorNode& n) {
        xn->ensure_grad();
        const double g = n.g[0];
        for (std::size_t i = 0; i < c.size(); ++i) xn->g[i] += g * c[i];
    });
}

Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets) {
    check(logits.numel() == static_cast<std::int64_t>(targets.size()),
          "bce_with_logits: size mismatch");
    const auto& zv = logits.values();
    const double inv_n = 1.0 / static_cast<double>(targets.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double z = zv[i], y = targets[i];
        loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    loss *= inv_n;
    auto zn = logits.node().get();
    return make_op(Shape{1}, {loss}, {logits}, [zn, targets, inv_n](TensorNode& n) {
        zn->ensure_grad();
        const double g = n.g[0] * inv_n;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-zn->v[i]));
            zn->g[i] += g * (s - targets[i]);
        }
    });
}

Tensor scale_shift_2d(const Tensor& x, const Tensor& s, const Tensor& t) {
    check(x.shape().size() == 4, "scale_shift_2d: input must be [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(s.shape() == Shape({B, C}) && t.shape() == Shape({B, C}),
          "scale_shift_2d: scale/shift must be [B,C]");
    const int hw = H * W;
    std::vector<double> v(x.numel());
    const auto &xv = x.values(), &sv = s.values(), &tv = t.values();
    for (int bc = 0; bc < B * C; ++bc) {
        const double m = 1.0 + sv[bc], a = tv[bc];
        const double* src = xv.data() + static_cast<std::int64_t>(bc) * hw;
        double* dst = v.data() + static_cast<std::int64_t>(bc) * hw;
        for (int i = 0; i < hw; ++i) dst[i] = src[i] * m + a;
    }
    auto xn = x.node().get(), sn = s.node().get(), tn = t.node().get();
    return make_op(x.shape(), std::move(v), {x, s, t}, [xn, sn, tn, B, C, hw](TensorNode& n) {
        if (xn->requires_grad) xn->ensure_grad();
        if (sn->requires_grad) sn->ensure_grad();
        if (tn->requires_grad) tn->ensure_grad();
        for (int bc = 0; bc < B * C; ++bc) {
            const double* gy = n.g.data() + static_cast<std::int64_t>(bc) * hw;
            const double* xvp = xn->v.data() + static_cast<std::int64_t>(bc) * hw;
            if (xn->requires_grad) {
                const double m = 1.0 + sn->v[bc];
                double* gx = xn->g.data() + static_cast<std::int64_t>(bc) * hw;
                for (int i = 0; i < hw; ++i) gx[i] += gy[i] * m;
            }
            if (sn->requires_grad || tn->requires_grad) {
                double gs = 0.0, gt = 0.0;
                for (int i = 0; i < hw; ++i) {
                    gs += gy[i] * xvp[i];
                    gt += gy[i];
                }
                if (sn->requires_grad) sn->g[bc] += gs;
                if (tn->requires_grad) tn->g[bc] += gt;
            }
        }
    });
}

}  // namespace tsgen
