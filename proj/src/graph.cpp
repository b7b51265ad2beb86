#include "aadv/graph.hpp"

#include "aadv/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aadv::ad {

double stable_sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Graph::check(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
        throw std::out_of_range("Graph: bad node id");
    return id;
}

int Graph::input(Tensor v) {
    if (!v.all_finite()) throw NumericError("Graph::input: non-finite tensor");
    Node n;
    n.op = Op::Input;
    n.value = std::move(v);
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    const Tensor& va = nodes_[check(a)].value;
    const Tensor& vb = nodes_[check(b)].value;
    require_same_shape(va, vb, "add");
    Node n;
    n.op = Op::Add;
    n.in = {a, b};
    n.value = Tensor(va.shape());
    kernels::active().add(n.value.data(), va.data(), vb.data(), va.numel());
    return push(std::move(n));
}

int Graph::sub(int a, int b) {
    const Tensor& va = nodes_[check(a)].value;
    const Tensor& vb = nodes_[check(b)].value;
    require_same_shape(va, vb, "sub");
    Node n;
    n.op = Op::Sub;
    n.in = {a, b};
    n.value = Tensor(va.shape());
    kernels::active().sub(n.value.data(), va.data(), vb.data(), va.numel());
    return push(std::move(n));
}

int Graph::mul(int a, int b) {
    const Tensor& va = nodes_[check(a)].value;
    const Tensor& vb = nodes_[check(b)].value;
    require_same_shape(va, vb, "mul");
    Node n;
    n.op = Op::Mul;
    n.in = {a, b};
    n.value = Tensor(va.shape());
    kernels::active().mul(n.value.data(), va.data(), vb.data(), va.numel());
    return push(std::move(n));
}

int Graph::scale(int a, double s) {
    const Tensor& va = nodes_[check(a)].value;
    Node n;
    n.op = Op::Scale;
    n.in = {a, -1};
    n.scalar = s;
    n.value = Tensor(va.shape());
    kernels::active().scale(n.value.data(), va.data(), s, va.numel());
    return push(std::move(n));
}

int Graph::relu(int a) {
    const Tensor& va = nodes_[check(a)].value;
    Node n;
    n.op = Op::Relu;
    n.in = {a, -1};
    n.value = Tensor(va.shape());
    kernels::active().relu(n.value.data(), va.data(), va.numel());
    return push(std::move(n));
}

int Graph::sigmoid(int a) {
    const Tensor& va = nodes_[check(a)].value;
    Node n;
    n.op = Op::Sigmoid;
    n.in = {a, -1};
    n.value = Tensor(va.shape());
    for (std::size_t i = 0; i < va.numel(); ++i) n.value[i] = stable_sigmoid(va[i]);
    return push(std::move(n));
}

int Graph::abs(int a) {
    const Tensor& va = nodes_[check(a)].value;
    Node n;
    n.op = Op::Abs;
    n.in = {a, -1};
    n.value = Tensor(va.shape());
    for (std::size_t i = 0; i < va.numel(); ++i) n.value[i] = std::fabs(va[i]);
    return push(std::move(n));
}

int Graph::matmul(int a, int b) {
    const Tensor& va = nodes_[check(a)].value;
    const Tensor& vb = nodes_[check(b)].value;
    if (va.rank() != 2 || vb.rank() != 2)
        throw DimensionError("matmul: operands must be rank 2, got " + va.shape_str() +
                             " and " + vb.shape_str());
    if (va.dim(1) != vb.dim(0))
        throw DimensionError("matmul: inner dimensions disagree " + va.shape_str() +
                             " vs " + vb.shape_str());
    Node n;
    n.op = Op::MatMul;
    n.in = {a, b};
    n.value = Tensor({va.dim(0), vb.dim(1)});
    kernels::active().matmul(n.value.data(), va.data(), vb.data(), va.dim(0), va.dim(1),
                             vb.dim(1));
    return push(std::move(n));
}

int Graph::conv2d(int input, int kernels_id, int stride, int pad) {
    const Tensor& in = nodes_[check(input)].value;
    const Tensor& ker = nodes_[check(kernels_id)].value;
    if (in.rank() != 3 || ker.rank() != 4)
        throw DimensionError("conv2d: want [h x w x c_in] input and [k x k x c_in x c_out] kernels");
    if (ker.dim(0) != ker.dim(1)) throw DimensionError("conv2d: non-square kernel");
    if (ker.dim(2) != in.dim(2))
        throw DimensionError("conv2d: kernel c_in " + std::to_string(ker.dim(2)) +
                             " != input channels " + std::to_string(in.dim(2)));
    if (stride < 1 || pad < 0) throw DimensionError("conv2d: bad stride/pad");
    const std::size_t h = in.dim(0), w = in.dim(1), cin = in.dim(2);
    const std::size_t k = ker.dim(0), cout = ker.dim(3);
    if (h + 2 * static_cast<std::size_t>(pad) < k || w + 2 * static_cast<std::size_t>(pad) < k)
        throw DimensionError("conv2d: kernel larger than padded input");
    const std::size_t oh = (h + 2 * pad - k) / stride + 1;
    const std::size_t ow = (w + 2 * pad - k) / stride + 1;

    Node n;
    n.op = Op::Conv2d;
    n.in = {input, kernels_id};
    n.stride = stride;
    n.pad = pad;
    n.value = Tensor({oh, ow, cout});
    const auto& kt = kernels::active();
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double* out = n.value.data() + (oy * ow + ox) * cout;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const long iy = static_cast<long>(oy) * stride + static_cast<long>(ky) - pad;
                if (iy < 0 || iy >= static_cast<long>(h)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const long ix = static_cast<long>(ox) * stride + static_cast<long>(kx) - pad;
                    if (ix < 0 || ix >= static_cast<long>(w)) continue;
                    const double* inpx = in.data() + (iy * w + ix) * cin;
                    const double* krow = ker.data() + ((ky * k + kx) * cin) * cout;
                    for (std::size_t ci = 0; ci < cin; ++ci)
                        kt.axpy(out, inpx[ci], krow + ci * cout, cout);
                }
            }
        }
    }
    return push(std::move(n));
}

int Graph::bias_channels(int x, int b) {
    const Tensor& vx = nodes_[check(x)].value;
    const Tensor& vb = nodes_[check(b)].value;
    if (vx.rank() != 3 || vb.rank() != 1 || vb.dim(0) != vx.dim(2))
        throw DimensionError("bias_channels: want [h x w x c] and [c]");
    Node n;
    n.op = Op::BiasChannels;
    n.in = {x, b};
    n.value = vx;
    const std::size_t c = vb.dim(0);
    for (std::size_t p = 0; p < vx.numel() / c; ++p)
        for (std::size_t ci = 0; ci < c; ++ci) n.value[p * c + ci] += vb[ci];
    return push(std::move(n));
}

int Graph::broadcast_channels(int x, std::size_t c) {
    const Tensor& vx = nodes_[check(x)].value;
    if (vx.rank() != 3 || vx.dim(2) != 1)
        throw DimensionError("broadcast_channels: want [h x w x 1], got " + vx.shape_str());
    Node n;
    n.op = Op::BroadcastChannels;
    n.in = {x, -1};
    n.value = Tensor({vx.dim(0), vx.dim(1), c});
    for (std::size_t p = 0; p < vx.numel(); ++p)
        for (std::size_t ci = 0; ci < c; ++ci) n.value[p * c + ci] = vx[p];
    return push(std::move(n));
}

int Graph::reshape(int a, std::vector<std::size_t> shape) {
    const Tensor& va = nodes_[check(a)].value;
    Node n;
    n.op = Op::Reshape;
    n.in = {a, -1};
    n.value = va.reshaped(std::move(shape));
    return push(std::move(n));
}

int Graph::sum(int a) {
    const Tensor& va = nodes_[check(a)].value;
    double s = 0.0;
    for (std::size_t i = 0; i < va.numel(); ++i) s += va[i];
    Node n;
    n.op = Op::Sum;
    n.in = {a, -1};
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

int Graph::softmax_ce(int logits, int target) {
    const Tensor& vl = nodes_[check(logits)].value;
    const std::size_t kk = vl.numel();
    if (kk < 2) throw DimensionError("softmax_ce: need at least 2 logits");
    if (target < 0 || static_cast<std::size_t>(target) >= kk)
        throw std::out_of_range("softmax_ce: target " + std::to_string(target) +
                                " out of range [0, " + std::to_string(kk) + ")");
    const double mx = *std::max_element(vl.data(), vl.data() + kk);
    double denom = 0.0;
    Tensor probs({kk});
    for (std::size_t i = 0; i < kk; ++i) {
        probs[i] = std::exp(vl[i] - mx);
        denom += probs[i];
    }
    for (std::size_t i = 0; i < kk; ++i) probs[i] /= denom;
    const double loss = -(vl[target] - mx - std::log(denom));

    Node n;
    n.op = Op::SoftmaxCE;
    n.in = {logits, -1};
    n.target = target;
    n.value = Tensor::scalar(loss);
    n.aux = std::move(probs);
    return push(std::move(n));
}

Tensor& Graph::grad_buf(int id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

const Tensor& Graph::grad(int id) {
    check(id);
    return grad_buf(id);
}

void Graph::zero_grads() {
    for (Node& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
}

void Graph::backward(int loss) {
    check(loss);
    if (nodes_[loss].value.numel() != 1)
        throw std::logic_error("backward: loss must be scalar, got " +
                               nodes_[loss].value.shape_str());
    grad_buf(loss)[0] = 1.0;
    for (int id = loss; id >= 0; --id)
        if (nodes_[id].has_grad) backward_node(id);
}

void Graph::backward_node(int id) {
    Node& n = nodes_[id];
    const Tensor& g = n.grad;
    const auto& kt = kernels::active();
    switch (n.op) {
    case Op::Input:
        break;
    case Op::Add: {
        kt.add(grad_buf(n.in[0]).data(), grad_buf(n.in[0]).data(), g.data(), g.numel());
        kt.add(grad_buf(n.in[1]).data(), grad_buf(n.in[1]).data(), g.data(), g.numel());
        break;
    }
    case Op::Sub: {
        kt.add(grad_buf(n.in[0]).data(), grad_buf(n.in[0]).data(), g.data(), g.numel());
        kt.axpy(grad_buf(n.in[1]).data(), -1.0, g.data(), g.numel());
        break;
    }
    case Op::Mul: {
        const Tensor& a = nodes_[n.in[0]].value;
        const Tensor& b = nodes_[n.in[1]].value;
        Tensor tmp(g.shape());
        kt.mul(tmp.data(), g.data(), b.data(), g.numel());
        kt.add(grad_buf(n.in[0]).data(), grad_buf(n.in[0]).data(), tmp.data(), g.numel());
        kt.mul(tmp.data(), g.data(), a.data(), g.numel());
        kt.add(grad_buf(n.in[1]).data(), grad_buf(n.in[1]).data(), tmp.data(), g.numel());
        break;
    }
    case Op::Scale:
        kt.axpy(grad_buf(n.in[0]).data(), n.scalar, g.data(), g.numel());
        break;
    case Op::Relu: {
        const Tensor& a = nodes_[n.in[0]].value;
        Tensor& ga = grad_buf(n.in[0]);
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (a[i] > 0.0) ga[i] += g[i];
        break;
    }
    case Op::Sigmoid: {
        Tensor& ga = grad_buf(n.in[0]);
        for (std::size_t i = 0; i < g.numel(); ++i)
            ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
        break;
    }
    case Op::Abs: {
        const Tensor& a = nodes_[n.in[0]].value;
        Tensor& ga = grad_buf(n.in[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            if (a[i] > 0.0)
                ga[i] += g[i];
            else if (a[i] < 0.0)
                ga[i] -= g[i];
        }
        break;
    }
    case Op::MatMul: {
        const Tensor& a = nodes_[n.in[0]].value;
        const Tensor& b = nodes_[n.in[1]].value;
        const std::size_t m = a.dim(0), k = a.dim(1), nn = b.dim(1);
        Tensor& ga = grad_buf(n.in[0]);
        Tensor& gb = grad_buf(n.in[1]);
        // dA = G * B^T
        for (std::size_t i = 0; i < m; ++i) {
            const double* grow = g.data() + i * nn;
            for (std::size_t p = 0; p < k; ++p) {
                const double* brow = b.data() + p * nn;
                double acc = 0.0;
                for (std::size_t j = 0; j < nn; ++j) acc += grow[j] * brow[j];
                ga[i * k + p] += acc;
            }
        }
        // dB = A^T * G
        for (std::size_t i = 0; i < m; ++i) {
            const double* grow = g.data() + i * nn;
            for (std::size_t p = 0; p < k; ++p)
                kt.axpy(gb.data() + p * nn, a[i * k + p], grow, nn);
        }
        break;
    }
    case Op::Conv2d: {
        const Tensor& in = nodes_[n.in[0]].value;
        const Tensor& ker = nodes_[n.in[1]].value;
        const std::size_t h = in.dim(0), w = in.dim(1), cin = in.dim(2);
        const std::size_t k = ker.dim(0), cout = ker.dim(3);
        const std::size_t oh = n.value.dim(0), ow = n.value.dim(1);
        Tensor& gin = grad_buf(n.in[0]);
        Tensor& gker = grad_buf(n.in[1]);
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double* gout = g.data() + (oy * ow + ox) * cout;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const long iy = static_cast<long>(oy) * n.stride + static_cast<long>(ky) - n.pad;
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const long ix =
                            static_cast<long>(ox) * n.stride + static_cast<long>(kx) - n.pad;
                        if (ix < 0 || ix >= static_cast<long>(w)) continue;
                        const std::size_t ppix = (iy * w + ix) * cin;
                        const std::size_t pk = ((ky * k + kx) * cin) * cout;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const double* krow = ker.data() + pk + ci * cout;
                            double acc = 0.0;
                            for (std::size_t co = 0; co < cout; ++co)
                                acc += gout[co] * krow[co];
                            gin[ppix + ci] += acc;
                            kt.axpy(gker.data() + pk + ci * cout, in[ppix + ci], gout, cout);
                        }
                    }
                }
            }
        }
        break;
    }
    case Op::BiasChannels: {
        const std::size_t c = nodes_[n.in[1]].value.dim(0);
        kt.add(grad_buf(n.in[0]).data(), grad_buf(n.in[0]).data(), g.data(), g.numel());
        Tensor& gb = grad_buf(n.in[1]);
        for (std::size_t p = 0; p < g.numel() / c; ++p)
            for (std::size_t ci = 0; ci < c; ++ci) gb[ci] += g[p * c + ci];
        break;
    }
    case Op::BroadcastChannels: {
        const std::size_t c = n.value.dim(2);
        Tensor& gx = grad_buf(n.in[0]);
        for (std::size_t p = 0; p < gx.numel(); ++p)
            for (std::size_t ci = 0; ci < c; ++ci) gx[p] += g[p * c + ci];
        break;
    }
    case Op::Reshape: {
        kt.add(grad_buf(n.in[0]).data(), grad_buf(n.in[0]).data(), g.data(), g.numel());
        break;
    }
    case Op::Sum: {
        Tensor& ga = grad_buf(n.in[0]);
        const double gs = g[0];
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gs;
        break;
    }
    case Op::SoftmaxCE: {
        Tensor& gl = grad_buf(n.in[0]);
        const double gs = g[0];
        for (std::size_t i = 0; i < gl.numel(); ++i) {
            double d = n.aux[i];
            if (static_cast<int>(i) == n.target) d -= 1.0;
            gl[i] += gs * d;
        }
        break;
    }
    }
}

} // namespace aadv::ad
