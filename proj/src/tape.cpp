#include "astream/tape.hpp"

#include <cmath>
#include <memory>
#include <utility>

#include "astream/kernels.hpp"

namespace astream {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": operand shapes " + a.shape_str() + " and " +
                         b.shape_str() + " differ");
    }
}

void require_rank(const char* op, const Tensor& t, int rank) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank-" + std::to_string(rank) +
                         " operand, got " + t.shape_str());
    }
}

}  // namespace

void Tape::clear() {
    nodes_.clear();
    backward_done_ = false;
}

NodeId Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&, NodeId)> backfn,
                  const char* op_name) {
    if (!value.all_finite()) {
        throw Error(std::string(op_name) + ": produced a non-finite value");
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = grad_enabled_ && requires_grad;
    if (n.requires_grad) n.backfn = std::move(backfn);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

NodeId Tape::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr, "leaf");
}

Tensor& Tape::grad_mut(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() && n.value.size() > 0) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

const Tensor& Tape::grad(NodeId id) { return grad_mut(id); }

void Tape::backward(NodeId loss) {
    if (!grad_enabled_) throw Error("backward: tape was built with gradients disabled");
    if (backward_done_) throw Error("backward: tape already swept; one backward per tape");
    const Tensor& lv = value(loss);
    if (lv.size() != 1) {
        throw Error("backward: loss node must be scalar, got shape " + lv.shape_str());
    }
    backward_done_ = true;
    grad_mut(loss)[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad || !n.backfn || n.grad.empty()) continue;
        n.backfn(*this, id);
    }
}

// --------------------------------------------------------------------------
// Elementwise ops
// --------------------------------------------------------------------------

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape("add", va, vb);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
    return push(std::move(out), wants_grad(a) || wants_grad(b),
                [a, b](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    if (t.wants_grad(a)) {
                        Tensor& ga = t.grad_mut(a);
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                    }
                    if (t.wants_grad(b)) {
                        Tensor& gb = t.grad_mut(b);
                        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                    }
                },
                "add");
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape("sub", va, vb);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
    return push(std::move(out), wants_grad(a) || wants_grad(b),
                [a, b](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    if (t.wants_grad(a)) {
                        Tensor& ga = t.grad_mut(a);
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                    }
                    if (t.wants_grad(b)) {
                        Tensor& gb = t.grad_mut(b);
                        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                    }
                },
                "sub");
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape("mul", va, vb);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    return push(std::move(out), wants_grad(a) || wants_grad(b),
                [a, b](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    const Tensor& va = t.value(a);
                    const Tensor& vb = t.value(b);
                    if (t.wants_grad(a)) {
                        Tensor& ga = t.grad_mut(a);
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
                    }
                    if (t.wants_grad(b)) {
                        Tensor& gb = t.grad_mut(b);
                        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
                    }
                },
                "mul");
}

NodeId Tape::max(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape("max", va, vb);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] >= vb[i] ? va[i] : vb[i];
    return push(std::move(out), wants_grad(a) || wants_grad(b),
                [a, b](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    const Tensor& va = t.value(a);
                    const Tensor& vb = t.value(b);
                    if (t.wants_grad(a)) {
                        Tensor& ga = t.grad_mut(a);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            if (va[i] >= vb[i]) ga[i] += g[i];
                        }
                    }
                    if (t.wants_grad(b)) {
                        Tensor& gb = t.grad_mut(b);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            if (va[i] < vb[i]) gb[i] += g[i];
                        }
                    }
                },
                "max");
}

NodeId Tape::scale(NodeId a, double c) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * c;
    return push(std::move(out), wants_grad(a),
                [a, c](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
                },
                "scale");
}

NodeId Tape::add_scalar(NodeId a, double c) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + c;
    return push(std::move(out), wants_grad(a),
                [a](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                },
                "add_scalar");
}

NodeId Tape::rsub_scalar(double c, NodeId a) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c - va[i];
    return push(std::move(out), wants_grad(a),
                [a](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
                },
                "rsub_scalar");
}

NodeId Tape::sigmoid(NodeId a) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-va[i]));
    return push(std::move(out), wants_grad(a),
                [a](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    const Tensor& s = t.value(self);
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s[i] * (1.0 - s[i]);
                },
                "sigmoid");
}

NodeId Tape::tanh(NodeId a) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(va[i]);
    return push(std::move(out), wants_grad(a),
                [a](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    const Tensor& y = t.value(self);
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
                },
                "tanh");
}

NodeId Tape::log(NodeId a) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(va[i]);
    return push(std::move(out), wants_grad(a),
                [a](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    const Tensor& va = t.value(a);
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
                },
                "log");
}

NodeId Tape::exp(NodeId a) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(va[i]);
    return push(std::move(out), wants_grad(a),
                [a](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    const Tensor& y = t.value(self);
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                },
                "exp");
}

NodeId Tape::pow(NodeId a, double exponent) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(va[i], exponent);
    return push(std::move(out), wants_grad(a),
                [a, exponent](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    const Tensor& va = t.value(a);
                    Tensor& ga = t.grad_mut(a);
                    if (exponent == 0.0) return;  // derivative identically 0
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        ga[i] += g[i] * exponent * std::pow(va[i], exponent - 1.0);
                    }
                },
                "pow");
}

NodeId Tape::relu(NodeId a) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] > 0.0 ? va[i] : 0.0;
    return push(std::move(out), wants_grad(a),
                [a](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    const Tensor& va = t.value(a);
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        if (va[i] > 0.0) ga[i] += g[i];
                    }
                },
                "relu");
}

NodeId Tape::clamp(NodeId a, double lo, double hi) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = va[i] < lo ? lo : (va[i] > hi ? hi : va[i]);
    }
    return push(std::move(out), wants_grad(a),
                [a, lo, hi](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    const Tensor& va = t.value(a);
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        if (va[i] > lo && va[i] < hi) ga[i] += g[i];
                    }
                },
                "clamp");
}

NodeId Tape::mul_const(NodeId a, Tensor coeffs) {
    const Tensor& va = value(a);
    require_same_shape("mul_const", va, coeffs);
    Tensor out = Tensor::zeros(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * coeffs[i];
    auto shared = std::make_shared<Tensor>(std::move(coeffs));
    return push(std::move(out), wants_grad(a),
                [a, shared](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*shared)[i];
                },
                "mul_const");
}

// --------------------------------------------------------------------------
// Linear algebra & convolution
// --------------------------------------------------------------------------

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_rank("matmul", va, 2);
    require_rank("matmul", vb, 2);
    if (va.dim(1) != vb.dim(0)) {
        throw ShapeError("matmul: inner dimensions of " + va.shape_str() + " and " +
                         vb.shape_str() + " do not match");
    }
    const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Tensor out = Tensor::zeros({m, n});
    kernels::gemm_nn(va.data(), vb.data(), out.data(), m, k, n, false);
    return push(std::move(out), wants_grad(a) || wants_grad(b),
                [a, b, m, k, n](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    if (t.wants_grad(a)) {
                        kernels::gemm_nt(g.data(), t.value(b).data(), t.grad_mut(a).data(), m, n, k, true);
                    }
                    if (t.wants_grad(b)) {
                        kernels::gemm_tn(t.value(a).data(), g.data(), t.grad_mut(b).data(), m, k, n, true);
                    }
                },
                "matmul");
}

NodeId Tape::add_rowvec(NodeId a, NodeId v) {
    const Tensor& va = value(a);
    const Tensor& vv = value(v);
    require_rank("add_rowvec", va, 2);
    require_rank("add_rowvec", vv, 1);
    if (va.dim(1) != vv.dim(0)) {
        throw ShapeError("add_rowvec: matrix " + va.shape_str() + " vs vector " + vv.shape_str());
    }
    const int m = va.dim(0), n = va.dim(1);
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out.at(i, j) = va.at(i, j) + vv[static_cast<std::size_t>(j)];
    }
    return push(std::move(out), wants_grad(a) || wants_grad(v),
                [a, v, m, n](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    if (t.wants_grad(a)) {
                        Tensor& ga = t.grad_mut(a);
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                    }
                    if (t.wants_grad(v)) {
                        Tensor& gv = t.grad_mut(v);
                        for (int j = 0; j < n; ++j) {
                            double acc = 0.0;
                            for (int i = 0; i < m; ++i) acc += g.at(i, j);
                            gv[static_cast<std::size_t>(j)] += acc;
                        }
                    }
                },
                "add_rowvec");
}

NodeId Tape::dwconv1d(NodeId x, NodeId w, NodeId bias, int dilation) {
    const Tensor& vx = value(x);
    const Tensor& vw = value(w);
    const Tensor& vb = value(bias);
    require_rank("dwconv1d", vx, 3);
    require_rank("dwconv1d", vw, 2);
    require_rank("dwconv1d", vb, 1);
    const int b = vx.dim(0), t = vx.dim(1), c = vx.dim(2), k = vw.dim(1);
    if (vw.dim(0) != c || vb.dim(0) != c) {
        throw ShapeError("dwconv1d: input " + vx.shape_str() + " vs kernel " + vw.shape_str() +
                         " vs bias " + vb.shape_str());
    }
    if (dilation < 1) throw ShapeError("dwconv1d: dilation must be >= 1");
    Tensor out = Tensor::zeros({b, t, c});
    kernels::dwconv_fwd(vx.data(), vw.data(), vb.data(), out.data(), b, t, c, k, dilation);
    return push(std::move(out), wants_grad(x) || wants_grad(w) || wants_grad(bias),
                [x, w, bias, b, t, c, k, dilation](Tape& tp, NodeId self) {
                    const Tensor& g = tp.grad_mut(self);
                    Tensor dx_local;
                    double* dxp = nullptr;
                    if (tp.wants_grad(x)) {
                        dx_local = Tensor::zeros({b, t, c});
                        dxp = dx_local.data();
                    }
                    kernels::dwconv_bwd(tp.value(x).data(), tp.value(w).data(), g.data(), dxp,
                                        tp.wants_grad(w) ? tp.grad_mut(w).data() : nullptr,
                                        tp.wants_grad(bias) ? tp.grad_mut(bias).data() : nullptr,
                                        b, t, c, k, dilation);
                    if (dxp) {
                        Tensor& gx = tp.grad_mut(x);
                        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dx_local[i];
                    }
                },
                "dwconv1d");
}

NodeId Tape::conv1d(NodeId x, NodeId w, NodeId bias, int dilation) {
    const Tensor& vx = value(x);
    const Tensor& vw = value(w);
    const Tensor& vb = value(bias);
    require_rank("conv1d", vx, 3);
    require_rank("conv1d", vw, 3);
    require_rank("conv1d", vb, 1);
    const int b = vx.dim(0), t = vx.dim(1), ci = vx.dim(2);
    const int co = vw.dim(0), k = vw.dim(2);
    if (vw.dim(1) != ci || vb.dim(0) != co) {
        throw ShapeError("conv1d: input " + vx.shape_str() + " vs kernel " + vw.shape_str() +
                         " vs bias " + vb.shape_str());
    }
    if (dilation < 1) throw ShapeError("conv1d: dilation must be >= 1");
    Tensor out = Tensor::zeros({b, t, co});
    kernels::conv1d_fwd(vx.data(), vw.data(), vb.data(), out.data(), b, t, ci, co, k, dilation);
    return push(std::move(out), wants_grad(x) || wants_grad(w) || wants_grad(bias),
                [x, w, bias, b, t, ci, co, k, dilation](Tape& tp, NodeId self) {
                    const Tensor& g = tp.grad_mut(self);
                    Tensor dx_local;
                    double* dxp = nullptr;
                    if (tp.wants_grad(x)) {
                        dx_local = Tensor::zeros({b, t, ci});
                        dxp = dx_local.data();
                    }
                    kernels::conv1d_bwd(tp.value(x).data(), tp.value(w).data(), g.data(), dxp,
                                        tp.wants_grad(w) ? tp.grad_mut(w).data() : nullptr,
                                        tp.wants_grad(bias) ? tp.grad_mut(bias).data() : nullptr,
                                        b, t, ci, co, k, dilation);
                    if (dxp) {
                        Tensor& gx = tp.grad_mut(x);
                        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dx_local[i];
                    }
                },
                "conv1d");
}

// --------------------------------------------------------------------------
// Fused recurrent layers
// --------------------------------------------------------------------------

namespace {

// Cached forward activations for BPTT.
struct LstmCache {
    Tensor gates;   // [B,T,4H] post-activation, order i,f,g,o
    Tensor cell;    // [B,T,H]
    Tensor hidden;  // [B,T,H]
};

struct GruCache {
    Tensor gates;   // [B,T,3H] post-activation, order r,z,n
    Tensor hh_n;    // [B,T,H]: the (h_{t-1} * Wh)_n slice fed through the reset gate
    Tensor hidden;  // [B,T,H]
};

inline double sigmoid_s(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

NodeId Tape::lstm(NodeId x, NodeId wx, NodeId wh, NodeId b) {
    const Tensor& vx = value(x);
    const Tensor& vwx = value(wx);
    const Tensor& vwh = value(wh);
    const Tensor& vb = value(b);
    require_rank("lstm", vx, 3);
    const int batch = vx.dim(0), tlen = vx.dim(1), in_dim = vx.dim(2);
    const int h = vwh.dim(0);
    if (vwx.rank() != 2 || vwx.dim(0) != in_dim || vwx.dim(1) != 4 * h || vwh.dim(1) != 4 * h ||
        vb.rank() != 1 || vb.dim(0) != 4 * h) {
        throw ShapeError("lstm: x " + vx.shape_str() + ", wx " + vwx.shape_str() + ", wh " +
                         vwh.shape_str() + ", b " + vb.shape_str() + " are inconsistent");
    }

    auto cache = std::make_shared<LstmCache>();
    cache->gates = Tensor::zeros({batch, tlen, 4 * h});
    cache->cell = Tensor::zeros({batch, tlen, h});
    cache->hidden = Tensor::zeros({batch, tlen, h});

    // Input projection for every frame at once, then the serial recurrence.
    Tensor pre = Tensor::zeros({batch, tlen, 4 * h});
    kernels::gemm_nn(vx.data(), vwx.data(), pre.data(), batch * tlen, in_dim, 4 * h, false);

    Tensor hprev = Tensor::zeros({batch, h});
    Tensor cprev = Tensor::zeros({batch, h});
    Tensor hw = Tensor::zeros({batch, 4 * h});
    for (int t = 0; t < tlen; ++t) {
        kernels::gemm_nn(hprev.data(), vwh.data(), hw.data(), batch, h, 4 * h, false);
        for (int bi = 0; bi < batch; ++bi) {
            const double* px = pre.data() + (static_cast<std::size_t>(bi) * tlen + t) * 4 * h;
            const double* ph = hw.data() + static_cast<std::size_t>(bi) * 4 * h;
            double* gate = cache->gates.data() + (static_cast<std::size_t>(bi) * tlen + t) * 4 * h;
            double* cell = cache->cell.data() + (static_cast<std::size_t>(bi) * tlen + t) * h;
            double* hid = cache->hidden.data() + (static_cast<std::size_t>(bi) * tlen + t) * h;
            double* hp = hprev.data() + static_cast<std::size_t>(bi) * h;
            double* cp = cprev.data() + static_cast<std::size_t>(bi) * h;
            for (int j = 0; j < h; ++j) {
                const double gi = sigmoid_s(px[j] + ph[j] + vb[static_cast<std::size_t>(j)]);
                const double gf = sigmoid_s(px[h + j] + ph[h + j] + vb[static_cast<std::size_t>(h + j)]);
                const double gg = std::tanh(px[2 * h + j] + ph[2 * h + j] + vb[static_cast<std::size_t>(2 * h + j)]);
                const double go = sigmoid_s(px[3 * h + j] + ph[3 * h + j] + vb[static_cast<std::size_t>(3 * h + j)]);
                const double c = gf * cp[j] + gi * gg;
                const double hv = go * std::tanh(c);
                gate[j] = gi;
                gate[h + j] = gf;
                gate[2 * h + j] = gg;
                gate[3 * h + j] = go;
                cell[j] = c;
                hid[j] = hv;
                hp[j] = hv;
                cp[j] = c;
            }
        }
    }

    Tensor out = cache->hidden;  // copy; the cache stays with the closure
    return push(std::move(out), wants_grad(x) || wants_grad(wx) || wants_grad(wh) || wants_grad(b),
                [x, wx, wh, b, batch, tlen, in_dim, h, cache](Tape& tp, NodeId self) {
                    const Tensor& g = tp.grad_mut(self);  // [B,T,H]
                    const Tensor& vwx = tp.value(wx);
                    const Tensor& vwh = tp.value(wh);
                    Tensor dpre = Tensor::zeros({batch, tlen, 4 * h});
                    Tensor dh = Tensor::zeros({batch, h});
                    Tensor dc = Tensor::zeros({batch, h});
                    Tensor dh_rec = Tensor::zeros({batch, h});
                    for (int t = tlen - 1; t >= 0; --t) {
                        for (int bi = 0; bi < batch; ++bi) {
                            const double* gate = cache->gates.data() + (static_cast<std::size_t>(bi) * tlen + t) * 4 * h;
                            const double* cell = cache->cell.data() + (static_cast<std::size_t>(bi) * tlen + t) * h;
                            const double* cprev = t > 0 ? cache->cell.data() + (static_cast<std::size_t>(bi) * tlen + t - 1) * h : nullptr;
                            const double* gout = g.data() + (static_cast<std::size_t>(bi) * tlen + t) * h;
                            double* dhb = dh.data() + static_cast<std::size_t>(bi) * h;
                            double* dcb = dc.data() + static_cast<std::size_t>(bi) * h;
                            double* dp = dpre.data() + (static_cast<std::size_t>(bi) * tlen + t) * 4 * h;
                            for (int j = 0; j < h; ++j) {
                                const double gi = gate[j], gf = gate[h + j], gg = gate[2 * h + j], go = gate[3 * h + j];
                                const double tc = std::tanh(cell[j]);
                                const double dht = gout[j] + dhb[j];
                                const double dct = dht * go * (1.0 - tc * tc) + dcb[j];
                                dp[3 * h + j] = dht * tc * go * (1.0 - go);
                                dp[j] = dct * gg * gi * (1.0 - gi);
                                dp[2 * h + j] = dct * gi * (1.0 - gg * gg);
                                const double cp = cprev ? cprev[j] : 0.0;
                                dp[h + j] = dct * cp * gf * (1.0 - gf);
                                dcb[j] = dct * gf;
                            }
                        }
                        // dh_{t-1} = dpre_t * wh^T, rows strided per batch
                        for (int bi = 0; bi < batch; ++bi) {
                            const double* dp = dpre.data() + (static_cast<std::size_t>(bi) * tlen + t) * 4 * h;
                            double* dst = dh_rec.data() + static_cast<std::size_t>(bi) * h;
                            for (int j = 0; j < h; ++j) {
                                double acc = 0.0;
                                for (int q = 0; q < 4 * h; ++q) acc += dp[q] * vwh.at(j, q);
                                dst[j] = acc;
                            }
                        }
                        std::swap(dh, dh_rec);
                        if (tp.wants_grad(wh) && t > 0) {
                            // dwh += h_{t-1}^T * dpre_t, rows gathered per batch
                            Tensor& gwh = tp.grad_mut(wh);
                            for (int bi = 0; bi < batch; ++bi) {
                                const double* hp = cache->hidden.data() + (static_cast<std::size_t>(bi) * tlen + t - 1) * h;
                                const double* dp = dpre.data() + (static_cast<std::size_t>(bi) * tlen + t) * 4 * h;
                                for (int j = 0; j < h; ++j) {
                                    double* row = gwh.data() + static_cast<std::size_t>(j) * 4 * h;
                                    const double hv = hp[j];
                                    for (int q = 0; q < 4 * h; ++q) row[q] += hv * dp[q];
                                }
                            }
                        }
                    }
                    if (tp.wants_grad(x)) {
                        Tensor dx = Tensor::zeros({batch, tlen, in_dim});
                        kernels::gemm_nt(dpre.data(), vwx.data(), dx.data(), batch * tlen, 4 * h, in_dim, false);
                        Tensor& gx = tp.grad_mut(x);
                        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dx[i];
                    }
                    if (tp.wants_grad(wx)) {
                        kernels::gemm_tn(tp.value(x).data(), dpre.data(), tp.grad_mut(wx).data(),
                                         batch * tlen, in_dim, 4 * h, true);
                    }
                    if (tp.wants_grad(b)) {
                        Tensor& gb = tp.grad_mut(b);
                        for (int q = 0; q < 4 * h; ++q) {
                            double acc = 0.0;
                            for (long f = 0; f < static_cast<long>(batch) * tlen; ++f) {
                                acc += dpre[static_cast<std::size_t>(f) * 4 * h + q];
                            }
                            gb[static_cast<std::size_t>(q)] += acc;
                        }
                    }
                },
                "lstm");
}

NodeId Tape::gru(NodeId x, NodeId wx, NodeId wh, NodeId b) {
    const Tensor& vx = value(x);
    const Tensor& vwx = value(wx);
    const Tensor& vwh = value(wh);
    const Tensor& vb = value(b);
    require_rank("gru", vx, 3);
    const int batch = vx.dim(0), tlen = vx.dim(1), in_dim = vx.dim(2);
    const int h = vwh.dim(0);
    if (vwx.rank() != 2 || vwx.dim(0) != in_dim || vwx.dim(1) != 3 * h || vwh.dim(1) != 3 * h ||
        vb.rank() != 1 || vb.dim(0) != 3 * h) {
        throw ShapeError("gru: x " + vx.shape_str() + ", wx " + vwx.shape_str() + ", wh " +
                         vwh.shape_str() + ", b " + vb.shape_str() + " are inconsistent");
    }

    auto cache = std::make_shared<GruCache>();
    cache->gates = Tensor::zeros({batch, tlen, 3 * h});
    cache->hh_n = Tensor::zeros({batch, tlen, h});
    cache->hidden = Tensor::zeros({batch, tlen, h});

    Tensor pre = Tensor::zeros({batch, tlen, 3 * h});
    kernels::gemm_nn(vx.data(), vwx.data(), pre.data(), batch * tlen, in_dim, 3 * h, false);

    Tensor hprev = Tensor::zeros({batch, h});
    Tensor hw = Tensor::zeros({batch, 3 * h});
    for (int t = 0; t < tlen; ++t) {
        kernels::gemm_nn(hprev.data(), vwh.data(), hw.data(), batch, h, 3 * h, false);
        for (int bi = 0; bi < batch; ++bi) {
            const double* px = pre.data() + (static_cast<std::size_t>(bi) * tlen + t) * 3 * h;
            const double* ph = hw.data() + static_cast<std::size_t>(bi) * 3 * h;
            double* gate = cache->gates.data() + (static_cast<std::size_t>(bi) * tlen + t) * 3 * h;
            double* hhn = cache->hh_n.data() + (static_cast<std::size_t>(bi) * tlen + t) * h;
            double* hid = cache->hidden.data() + (static_cast<std::size_t>(bi) * tlen + t) * h;
            double* hp = hprev.data() + static_cast<std::size_t>(bi) * h;
            for (int j = 0; j < h; ++j) {
                const double r = sigmoid_s(px[j] + ph[j] + vb[static_cast<std::size_t>(j)]);
                const double z = sigmoid_s(px[h + j] + ph[h + j] + vb[static_cast<std::size_t>(h + j)]);
                const double hn = ph[2 * h + j];
                const double n = std::tanh(px[2 * h + j] + r * hn + vb[static_cast<std::size_t>(2 * h + j)]);
                const double hv = (1.0 - z) * n + z * hp[j];
                gate[j] = r;
                gate[h + j] = z;
                gate[2 * h + j] = n;
                hhn[j] = hn;
                hid[j] = hv;
                hp[j] = hv;
            }
        }
    }

    Tensor out = cache->hidden;
    return push(std::move(out), wants_grad(x) || wants_grad(wx) || wants_grad(wh) || wants_grad(b),
                [x, wx, wh, b, batch, tlen, in_dim, h, cache](Tape& tp, NodeId self) {
                    const Tensor& g = tp.grad_mut(self);
                    const Tensor& vwx = tp.value(wx);
                    const Tensor& vwh = tp.value(wh);
                    Tensor dpre = Tensor::zeros({batch, tlen, 3 * h});  // grads of pre_x + b slots
                    Tensor dhh = Tensor::zeros({batch, 3 * h});         // grads of the h*Wh product
                    Tensor dh = Tensor::zeros({batch, h});
                    Tensor dh_rec = Tensor::zeros({batch, h});
                    for (int t = tlen - 1; t >= 0; --t) {
                        for (int bi = 0; bi < batch; ++bi) {
                            const double* gate = cache->gates.data() + (static_cast<std::size_t>(bi) * tlen + t) * 3 * h;
                            const double* hhn = cache->hh_n.data() + (static_cast<std::size_t>(bi) * tlen + t) * h;
                            const double* hprev = t > 0 ? cache->hidden.data() + (static_cast<std::size_t>(bi) * tlen + t - 1) * h : nullptr;
                            const double* gout = g.data() + (static_cast<std::size_t>(bi) * tlen + t) * h;
                            double* dhb = dh.data() + static_cast<std::size_t>(bi) * h;
                            double* dp = dpre.data() + (static_cast<std::size_t>(bi) * tlen + t) * 3 * h;
                            double* dhhb = dhh.data() + static_cast<std::size_t>(bi) * 3 * h;
                            for (int j = 0; j < h; ++j) {
                                const double r = gate[j], z = gate[h + j], n = gate[2 * h + j];
                                const double hp = hprev ? hprev[j] : 0.0;
                                const double dht = gout[j] + dhb[j];
                                const double dz = dht * (hp - n);
                                const double dn = dht * (1.0 - z);
                                const double dpre_n = dn * (1.0 - n * n);
                                const double dr = dpre_n * hhn[j];
                                const double dpre_r = dr * r * (1.0 - r);
                                const double dpre_z = dz * z * (1.0 - z);
                                dp[j] = dpre_r;
                                dp[h + j] = dpre_z;
                                dp[2 * h + j] = dpre_n;
                                dhhb[j] = dpre_r;
                                dhhb[h + j] = dpre_z;
                                dhhb[2 * h + j] = dpre_n * r;
                                dhb[j] = dht * z;  // direct carry; recurrent part added below
                            }
                        }
                        for (int bi = 0; bi < batch; ++bi) {
                            const double* dhhb = dhh.data() + static_cast<std::size_t>(bi) * 3 * h;
                            double* dst = dh_rec.data() + static_cast<std::size_t>(bi) * h;
                            for (int j = 0; j < h; ++j) {
                                double acc = 0.0;
                                for (int q = 0; q < 3 * h; ++q) acc += dhhb[q] * vwh.at(j, q);
                                dst[j] = acc;
                            }
                        }
                        for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dh_rec[i];
                        if (tp.wants_grad(wh) && t > 0) {
                            Tensor& gwh = tp.grad_mut(wh);
                            for (int bi = 0; bi < batch; ++bi) {
                                const double* hp = cache->hidden.data() + (static_cast<std::size_t>(bi) * tlen + t - 1) * h;
                                const double* dhhb = dhh.data() + static_cast<std::size_t>(bi) * 3 * h;
                                for (int j = 0; j < h; ++j) {
                                    double* row = gwh.data() + static_cast<std::size_t>(j) * 3 * h;
                                    const double hv = hp[j];
                                    for (int q = 0; q < 3 * h; ++q) row[q] += hv * dhhb[q];
                                }
                            }
                        }
                    }
                    if (tp.wants_grad(x)) {
                        Tensor dx = Tensor::zeros({batch, tlen, in_dim});
                        kernels::gemm_nt(dpre.data(), vwx.data(), dx.data(), batch * tlen, 3 * h, in_dim, false);
                        Tensor& gx = tp.grad_mut(x);
                        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dx[i];
                    }
                    if (tp.wants_grad(wx)) {
                        kernels::gemm_tn(tp.value(x).data(), dpre.data(), tp.grad_mut(wx).data(),
                                         batch * tlen, in_dim, 3 * h, true);
                    }
                    if (tp.wants_grad(b)) {
                        Tensor& gb = tp.grad_mut(b);
                        for (int q = 0; q < 3 * h; ++q) {
                            double acc = 0.0;
                            for (long f = 0; f < static_cast<long>(batch) * tlen; ++f) {
                                acc += dpre[static_cast<std::size_t>(f) * 3 * h + q];
                            }
                            gb[static_cast<std::size_t>(q)] += acc;
                        }
                    }
                },
                "gru");
}

// --------------------------------------------------------------------------
// Shape ops
// --------------------------------------------------------------------------

NodeId Tape::reshape(NodeId a, std::vector<int> shape) {
    const Tensor& va = value(a);
    if (shape_size(shape) != va.size()) {
        throw ShapeError("reshape: cannot view " + va.shape_str() + " as " + shape_str(shape));
    }
    Tensor out = Tensor::from(std::move(shape), va.values());
    return push(std::move(out), wants_grad(a),
                [a](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                },
                "reshape");
}

NodeId Tape::slice_time(NodeId x, int t) {
    const Tensor& vx = value(x);
    require_rank("slice_time", vx, 3);
    const int b = vx.dim(0), tlen = vx.dim(1), d = vx.dim(2);
    if (t < 0 || t >= tlen) {
        throw ShapeError("slice_time: frame " + std::to_string(t) + " out of range for " + vx.shape_str());
    }
    Tensor out = Tensor::zeros({b, d});
    for (int bi = 0; bi < b; ++bi) {
        for (int j = 0; j < d; ++j) out.at(bi, j) = vx.at(bi, t, j);
    }
    return push(std::move(out), wants_grad(x),
                [x, t, b, d](Tape& tp, NodeId self) {
                    const Tensor& g = tp.grad_mut(self);
                    Tensor& gx = tp.grad_mut(x);
                    for (int bi = 0; bi < b; ++bi) {
                        for (int j = 0; j < d; ++j) gx.at(bi, t, j) += g.at(bi, j);
                    }
                },
                "slice_time");
}

NodeId Tape::slice_time_range(NodeId x, int t0, int t1) {
    const Tensor& vx = value(x);
    require_rank("slice_time_range", vx, 3);
    const int b = vx.dim(0), tlen = vx.dim(1), d = vx.dim(2);
    if (t0 < 0 || t1 > tlen || t0 >= t1) {
        throw ShapeError("slice_time_range: [" + std::to_string(t0) + "," + std::to_string(t1) +
                         ") invalid for " + vx.shape_str());
    }
    const int span = t1 - t0;
    Tensor out = Tensor::zeros({b, span, d});
    for (int bi = 0; bi < b; ++bi) {
        for (int t = 0; t < span; ++t) {
            for (int j = 0; j < d; ++j) out.at(bi, t, j) = vx.at(bi, t0 + t, j);
        }
    }
    return push(std::move(out), wants_grad(x),
                [x, t0, b, span, d](Tape& tp, NodeId self) {
                    const Tensor& g = tp.grad_mut(self);
                    Tensor& gx = tp.grad_mut(x);
                    for (int bi = 0; bi < b; ++bi) {
                        for (int t = 0; t < span; ++t) {
                            for (int j = 0; j < d; ++j) gx.at(bi, t0 + t, j) += g.at(bi, t, j);
                        }
                    }
                },
                "slice_time_range");
}

NodeId Tape::concat_time(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw ShapeError("concat_time: empty input list");
    const Tensor& first = value(xs[0]);
    require_rank("concat_time", first, 2);
    const int b = first.dim(0), d = first.dim(1);
    bool any_grad = false;
    for (NodeId id : xs) {
        require_same_shape("concat_time", value(id), first);
        any_grad = any_grad || wants_grad(id);
    }
    const int tlen = static_cast<int>(xs.size());
    Tensor out = Tensor::zeros({b, tlen, d});
    for (int t = 0; t < tlen; ++t) {
        const Tensor& vt = value(xs[static_cast<std::size_t>(t)]);
        for (int bi = 0; bi < b; ++bi) {
            for (int j = 0; j < d; ++j) out.at(bi, t, j) = vt.at(bi, j);
        }
    }
    auto ids = std::make_shared<std::vector<NodeId>>(xs);
    return push(std::move(out), any_grad,
                [ids, b, d](Tape& tp, NodeId self) {
                    const Tensor& g = tp.grad_mut(self);
                    for (int t = 0; t < static_cast<int>(ids->size()); ++t) {
                        NodeId src = (*ids)[static_cast<std::size_t>(t)];
                        if (!tp.wants_grad(src)) continue;
                        Tensor& gs = tp.grad_mut(src);
                        for (int bi = 0; bi < b; ++bi) {
                            for (int j = 0; j < d; ++j) gs.at(bi, j) += g.at(bi, t, j);
                        }
                    }
                },
                "concat_time");
}

// --------------------------------------------------------------------------
// Reductions & heads
// --------------------------------------------------------------------------

NodeId Tape::sum(NodeId a) {
    const Tensor& va = value(a);
    double acc = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) acc += va[i];
    return push(Tensor::scalar(acc), wants_grad(a),
                [a](Tape& t, NodeId self) {
                    const double g = t.grad_mut(self)[0];
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
                },
                "sum");
}

NodeId Tape::mean(NodeId a) {
    const Tensor& va = value(a);
    if (va.size() == 0) throw ShapeError("mean: empty tensor");
    double acc = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) acc += va[i];
    const double inv = 1.0 / static_cast<double>(va.size());
    return push(Tensor::scalar(acc * inv), wants_grad(a),
                [a, inv](Tape& t, NodeId self) {
                    const double g = t.grad_mut(self)[0] * inv;
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
                },
                "mean");
}

NodeId Tape::dot_const(NodeId a, Tensor coeffs) {
    const Tensor& va = value(a);
    require_same_shape("dot_const", va, coeffs);
    double acc = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) acc += va[i] * coeffs[i];
    auto shared = std::make_shared<Tensor>(std::move(coeffs));
    return push(Tensor::scalar(acc), wants_grad(a),
                [a, shared](Tape& t, NodeId self) {
                    const double g = t.grad_mut(self)[0];
                    Tensor& ga = t.grad_mut(a);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (*shared)[i];
                },
                "dot_const");
}

NodeId Tape::pair_softmax_p1(NodeId logits) {
    const Tensor& vl = value(logits);
    if (vl.rank() < 1 || vl.dim(vl.rank() - 1) != 2) {
        throw ShapeError("pair_softmax_p1: last dimension must be 2, got " + vl.shape_str());
    }
    std::vector<int> out_shape(vl.shape().begin(), vl.shape().end() - 1);
    const std::size_t n = vl.size() / 2;
    Tensor out = Tensor::zeros(out_shape);
    // softmax over two logits == sigmoid of their difference
    for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid_s(vl[2 * i + 1] - vl[2 * i]);
    return push(std::move(out), wants_grad(logits),
                [logits, n](Tape& t, NodeId self) {
                    const Tensor& g = t.grad_mut(self);
                    const Tensor& p = t.value(self);
                    Tensor& gl = t.grad_mut(logits);
                    for (std::size_t i = 0; i < n; ++i) {
                        const double d = g[i] * p[i] * (1.0 - p[i]);
                        gl[2 * i + 1] += d;
                        gl[2 * i] -= d;
                    }
                },
                "pair_softmax_p1");
}

}  // namespace astream
