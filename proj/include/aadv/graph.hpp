#pragma once

#include "aadv/tensor.hpp"

#include <array>
#include <cstddef>
#include <vector>

namespace aadv::ad {

enum class Op {
    Input,
    Add,
    Sub,
    Mul,
    Scale,
    Relu,
    Sigmoid,
    Abs,
    MatMul,
    Conv2d,
    BiasChannels,
    BroadcastChannels,
    Reshape,
    Sum,
    SoftmaxCE,
};

/// Numerically stable logistic function, exact for |z| up to ~1e4
/// (alpha_end * H(delta) can reach that scale).
double stable_sigmoid(double z);

/// Define-by-run tape. Node values are computed eagerly as ops are recorded;
/// backward() fills gradients for every ancestor of a scalar loss node.
/// A Graph is confined to a single attack/training worker.
class Graph {
public:
    struct Node {
        Op op;
        std::array<int, 2> in{-1, -1};
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        double scalar = 0.0; // Scale factor
        int target = -1;     // SoftmaxCE class index
        int stride = 1, pad = 0;
        Tensor aux; // SoftmaxCE: cached softmax probabilities
    };

    int input(Tensor v);

    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int scale(int a, double s);
    int relu(int a);
    int sigmoid(int a);
    int abs(int a);

    /// a: [m x k], b: [k x n] -> [m x n]
    int matmul(int a, int b);
    /// input: [h x w x c_in], kernels: [k x k x c_in x c_out], zero padding
    int conv2d(int input, int kernels, int stride, int pad);
    /// x: [h x w x c] plus per-channel bias b: [c]
    int bias_channels(int x, int b);
    /// [h x w x 1] -> [h x w x c], replicated; backward sums over channels
    int broadcast_channels(int x, std::size_t c);
    int reshape(int a, std::vector<std::size_t> shape);
    int sum(int a);
    /// -log(softmax(logits)[target]), max-subtraction stabilized
    int softmax_ce(int logits, int target);

    const Tensor& value(int id) const { return nodes_[check(id)].value; }
    /// Gradient of the last backward()'s loss w.r.t. node id (zeros if the
    /// node does not influence the loss).
    const Tensor& grad(int id);

    void backward(int loss);
    void zero_grads();

    std::size_t size() const { return nodes_.size(); }

private:
    int push(Node n);
    int check(int id) const;
    void backward_node(int id);
    Tensor& grad_buf(int id);

    std::vector<Node> nodes_;
};

} // namespace aadv::ad
