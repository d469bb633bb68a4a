#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace imle {

using Shape = std::vector<int>;

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TensorNode;

// Dense f32 tensor with reverse-mode autodiff. Value-semantic handle to a
// shared node; ops record the compute graph when any input requires grad.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor scalar(float v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int size() const;
    bool same_shape(const Tensor& other) const;

    std::vector<float>& data();
    const std::vector<float>& data() const;
    float item() const; // scalar only

    bool requires_grad() const;
    void set_requires_grad(bool rg); // leaves only
    bool is_leaf() const;

    // Gradient buffer; empty until backward has touched this tensor.
    const std::vector<float>& grad() const;
    std::vector<float>& grad_mut();
    bool has_grad() const;
    void zero_grad();

    std::shared_ptr<TensorNode> node() const { return node_; }
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad; // sized lazily
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    int size() const {
        int n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void accumulate(const std::vector<float>& g);
    void ensure_grad();
};

// Elementwise / structural ops. All are finite-guarded: finite inputs give
// finite outputs (exp/log/sqrt/div clamp their hazardous ranges).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
Tensor add_scalar(const Tensor& a, float c);
Tensor leaky_relu(const Tensor& a, float slope = 0.2f);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor sqrt_op(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor square(const Tensor& a);

// matmul: (m x k)·(k x n) -> (m x n); a 1-D rhs of length k is treated as
// a column vector and yields a 1-D result of length m.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor concat(const Tensor& a, const Tensor& b); // 1-D
Tensor sum(const Tensor& a);                     // -> scalar
Tensor mean(const Tensor& a);                    // -> scalar
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice(const Tensor& a, int start, int len); // 1-D
// y = s .* x + o, all same shape
Tensor scale_offset(const Tensor& x, const Tensor& s, const Tensor& o);

// Fused weight-normalized affine map: row i of the effective weight is
// g[i] * v[i,:] / ||v[i,:]||; output = W_eff * x + b.
Tensor weight_norm_linear(const Tensor& v, const Tensor& g, const Tensor& b,
                          const Tensor& x);

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// reachable tensor that requires grad; call zero_grad between steps.
void backward(const Tensor& loss);

} // namespace imle
