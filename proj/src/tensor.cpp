#include "imle/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace imle {

namespace {

int shape_size(const Shape& s) {
    int n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<float> value) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    return n;
}

// Wires parents + backward fn onto an op output when grad is needed.
void record(const std::shared_ptr<TensorNode>& out,
            std::initializer_list<const Tensor*> inputs,
            std::function<void(TensorNode&)> backward_fn) {
    bool rg = false;
    for (auto* t : inputs) rg = rg || t->requires_grad();
    if (!rg) return;
    out->requires_grad = true;
    out->is_leaf = false;
    for (auto* t : inputs) out->parents.push_back(t->node());
    out->backward_fn = std::move(backward_fn);
}

constexpr float kExpClamp = 60.0f; // exp(+-60) stays finite in f32
constexpr float kEps = 1e-12f;

} // namespace

void TensorNode::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0f);
}

void TensorNode::accumulate(const std::vector<float>& g) {
    ensure_grad();
    for (size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = make_node(shape, std::vector<float>(shape_size(shape), 0.0f));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<float> data, bool requires_grad) {
    if (shape_size(shape) != static_cast<int>(data.size()))
        throw ShapeError("Tensor::from: " + shape_str(shape) + " does not match buffer of " +
                         std::to_string(data.size()));
    auto n = make_node(std::move(shape), std::move(data));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(float v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::size() const { return node_->size(); }
bool Tensor::same_shape(const Tensor& o) const { return shape() == o.shape(); }
std::vector<float>& Tensor::data() { return node_->value; }
const std::vector<float>& Tensor::data() const { return node_->value; }

float Tensor::item() const {
    if (size() != 1) throw ShapeError("item(): tensor is not scalar, shape " + shape_str(shape()));
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool rg) {
    if (!node_->is_leaf) throw std::runtime_error("set_requires_grad: only valid on leaves");
    node_->requires_grad = rg;
}

bool Tensor::is_leaf() const { return node_->is_leaf; }

const std::vector<float>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

std::vector<float>& Tensor::grad_mut() {
    node_->ensure_grad();
    return node_->grad;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0f); }

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<float> v(a.size());
    for (int i = 0; i < a.size(); ++i) v[i] = a.data()[i] + b.data()[i];
    auto out = make_node(a.shape(), std::move(v));
    record(out, {&a, &b}, [](TensorNode& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->accumulate(n.grad);
    });
    return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<float> v(a.size());
    for (int i = 0; i < a.size(); ++i) v[i] = a.data()[i] - b.data()[i];
    auto out = make_node(a.shape(), std::move(v));
    record(out, {&a, &b}, [](TensorNode& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) n.parents[1]->grad[i] -= n.grad[i];
    });
    return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<float> v(a.size());
    for (int i = 0; i < a.size(); ++i) v[i] = a.data()[i] * b.data()[i];
    auto out = make_node(a.shape(), std::move(v));
    record(out, {&a, &b}, [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            pa.grad[i] += n.grad[i] * pb.value[i];
            pb.grad[i] += n.grad[i] * pa.value[i];
        }
    });
    return Tensor(out);
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape("div", a, b);
    std::vector<float> v(a.size());
    auto safe = [](float x) { return std::fabs(x) < kEps ? (x < 0 ? -kEps : kEps) : x; };
    for (int i = 0; i < a.size(); ++i) v[i] = a.data()[i] / safe(b.data()[i]);
    auto out = make_node(a.shape(), std::move(v));
    record(out, {&a, &b}, [safe](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            float d = safe(pb.value[i]);
            pa.grad[i] += n.grad[i] / d;
            pb.grad[i] -= n.grad[i] * pa.value[i] / (d * d);
        }
    });
    return Tensor(out);
}

Tensor scale(const Tensor& a, float c) {
    std::vector<float> v(a.size());
    for (int i = 0; i < a.size(); ++i) v[i] = a.data()[i] * c;
    auto out = make_node(a.shape(), std::move(v));
    record(out, {&a}, [c](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * c;
    });
    return Tensor(out);
}

Tensor add_scalar(const Tensor& a, float c) {
    std::vector<float> v(a.size());
    for (int i = 0; i < a.size(); ++i) v[i] = a.data()[i] + c;
    auto out = make_node(a.shape(), std::move(v));
    record(out, {&a}, [](TensorNode& n) { n.parents[0]->accumulate(n.grad); });
    return Tensor(out);
}

Tensor leaky_relu(const Tensor& a, float slope) {
    std::vector<float> v(a.size());
    for (int i = 0; i < a.size(); ++i) {
        float x = a.data()[i];
        v[i] = x >= 0 ? x : slope * x;
    }
    auto out = make_node(a.shape(), std::move(v));
    record(out, {&a}, [slope](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            p.grad[i] += n.grad[i] * (p.value[i] >= 0 ? 1.0f : slope);
    });
    return Tensor(out);
}

Tensor exp_op(const Tensor& a) {
    std::vector<float> v(a.size());
    for (int i = 0; i < a.size(); ++i)
        v[i] = std::exp(std::clamp(a.data()[i], -kExpClamp, kExpClamp));
    auto out = make_node(a.shape(), std::move(v));
    record(out, {&a}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * n.value[i];
    });
    return Tensor(out);
}

Tensor log_op(const Tensor& a) {
    std::vector<float> v(a.size());
    for (int i = 0; i < a.size(); ++i) v[i] = std::log(std::max(a.data()[i], kEps));
    auto out = make_node(a.shape(), std::move(v));
    record(out, {&a}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            p.grad[i] += n.grad[i] / std::max(p.value[i], kEps);
    });
    return Tensor(out);
}

Tensor sqrt_op(const Tensor& a) {
    std::vector<float> v(a.size());
    for (int i = 0; i < a.size(); ++i) v[i] = std::sqrt(std::max(a.data()[i], 0.0f));
    auto out = make_node(a.shape(), std::move(v));
    record(out, {&a}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            p.grad[i] += n.grad[i] * 0.5f / std::max(n.value[i], 1e-6f);
    });
    return Tensor(out);
}

Tensor sigmoid(const Tensor& a) {
    std::vector<float> v(a.size());
    for (int i = 0; i < a.size(); ++i) {
        float x = std::clamp(a.data()[i], -kExpClamp, kExpClamp);
        v[i] = 1.0f / (1.0f + std::exp(-x));
    }
    auto out = make_node(a.shape(), std::move(v));
    record(out, {&a}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            float s = n.value[i];
            p.grad[i] += n.grad[i] * s * (1.0f - s);
        }
    });
    return Tensor(out);
}

Tensor square(const Tensor& a) { return mul(a, a); }

// ---- structural ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2)
        throw ShapeError("matmul: lhs must be 2-D, got " + shape_str(a.shape()));
    int m = a.shape()[0], k = a.shape()[1];
    bool vec = b.shape().size() == 1;
    int kb = vec ? b.shape()[0] : b.shape()[0];
    int n = vec ? 1 : b.shape()[1];
    if (k != kb)
        throw ShapeError("matmul: inner dims differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<float> v(static_cast<size_t>(m) * n, 0.0f);
    const float* A = a.data().data();
    const float* B = b.data().data();
    if (vec) {
        for (int i = 0; i < m; ++i) {
            float acc = 0.0f;
            const float* row = A + static_cast<size_t>(i) * k;
            for (int j = 0; j < k; ++j) acc += row[j] * B[j];
            v[i] = acc;
        }
    } else {
        for (int i = 0; i < m; ++i)
            for (int l = 0; l < k; ++l) {
                float av = A[static_cast<size_t>(i) * k + l];
                const float* brow = B + static_cast<size_t>(l) * n;
                float* orow = v.data() + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
    }
    Shape out_shape = vec ? Shape{m} : Shape{m, n};
    auto out = make_node(std::move(out_shape), std::move(v));
    record(out, {&a, &b}, [m, k, n, vec](TensorNode& nd) {
        auto& pa = *nd.parents[0];
        auto& pb = *nd.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        // dA = G * B^T, dB = A^T * G
        const float* G = nd.grad.data();
        const float* A = pa.value.data();
        const float* B = pb.value.data();
        for (int i = 0; i < m; ++i)
            for (int l = 0; l < k; ++l) {
                float acc = 0.0f;
                for (int j = 0; j < n; ++j)
                    acc += G[static_cast<size_t>(i) * n + j] * B[static_cast<size_t>(l) * n + j];
                pa.grad[static_cast<size_t>(i) * k + l] += acc;
            }
        for (int l = 0; l < k; ++l)
            for (int j = 0; j < n; ++j) {
                float acc = 0.0f;
                for (int i = 0; i < m; ++i)
                    acc += A[static_cast<size_t>(i) * k + l] * G[static_cast<size_t>(i) * n + j];
                pb.grad[static_cast<size_t>(l) * n + j] += acc;
            }
        (void)vec;
    });
    return Tensor(out);
}

Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 1 || b.shape().size() != 1)
        throw ShapeError("concat: 1-D tensors only");
    int na = a.size(), nb = b.size();
    std::vector<float> v;
    v.reserve(na + nb);
    v.insert(v.end(), a.data().begin(), a.data().end());
    v.insert(v.end(), b.data().begin(), b.data().end());
    auto out = make_node({na + nb}, std::move(v));
    record(out, {&a, &b}, [na, nb](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        for (int i = 0; i < na; ++i) pa.grad[i] += n.grad[i];
        for (int i = 0; i < nb; ++i) pb.grad[i] += n.grad[na + i];
    });
    return Tensor(out);
}

Tensor sum(const Tensor& a) {
    float acc = 0.0f;
    for (float x : a.data()) acc += x;
    auto out = make_node({1}, {acc});
    record(out, {&a}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (auto& g : p.grad) g += n.grad[0];
    });
    return Tensor(out);
}

Tensor mean(const Tensor& a) {
    float acc = 0.0f;
    for (float x : a.data()) acc += x;
    float inv = 1.0f / static_cast<float>(a.size());
    auto out = make_node({1}, {acc * inv});
    record(out, {&a}, [inv](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (auto& g : p.grad) g += n.grad[0] * inv;
    });
    return Tensor(out);
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
    auto out = make_node(std::move(shape), a.data());
    record(out, {&a}, [](TensorNode& n) { n.parents[0]->accumulate(n.grad); });
    return Tensor(out);
}

Tensor slice(const Tensor& a, int start, int len) {
    if (a.shape().size() != 1) throw ShapeError("slice: 1-D tensors only");
    if (start < 0 || len < 0 || start + len > a.size())
        throw ShapeError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of bounds for " +
                         std::to_string(a.size()));
    std::vector<float> v(a.data().begin() + start, a.data().begin() + start + len);
    auto out = make_node({len}, std::move(v));
    record(out, {&a}, [start, len](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int i = 0; i < len; ++i) p.grad[start + i] += n.grad[i];
    });
    return Tensor(out);
}

Tensor scale_offset(const Tensor& x, const Tensor& s, const Tensor& o) {
    check_same_shape("scale_offset", x, s);
    check_same_shape("scale_offset", x, o);
    std::vector<float> v(x.size());
    for (int i = 0; i < x.size(); ++i) v[i] = s.data()[i] * x.data()[i] + o.data()[i];
    auto out = make_node(x.shape(), std::move(v));
    record(out, {&x, &s, &o}, [](TensorNode& n) {
        auto& px = *n.parents[0];
        auto& ps = *n.parents[1];
        auto& po = *n.parents[2];
        px.ensure_grad();
        ps.ensure_grad();
        po.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            px.grad[i] += n.grad[i] * ps.value[i];
            ps.grad[i] += n.grad[i] * px.value[i];
            po.grad[i] += n.grad[i];
        }
    });
    return Tensor(out);
}

Tensor weight_norm_linear(const Tensor& v, const Tensor& g, const Tensor& b,
                          const Tensor& x) {
    if (v.shape().size() != 2) throw ShapeError("weight_norm_linear: v must be 2-D");
    int out_dim = v.shape()[0], in_dim = v.shape()[1];
    if (g.shape() != Shape{out_dim} || b.shape() != Shape{out_dim})
        throw ShapeError("weight_norm_linear: g/b must have shape (" + std::to_string(out_dim) + ")");
    if (x.shape() != Shape{in_dim})
        throw ShapeError("weight_norm_linear: input dim " + shape_str(x.shape()) + " != (" +
                         std::to_string(in_dim) + ")");

    std::vector<float> norms(out_dim);
    std::vector<float> y(out_dim);
    const float* V = v.data().data();
    for (int i = 0; i < out_dim; ++i) {
        const float* row = V + static_cast<size_t>(i) * in_dim;
        float nn = 0.0f, dot = 0.0f;
        for (int j = 0; j < in_dim; ++j) {
            nn += row[j] * row[j];
            dot += row[j] * x.data()[j];
        }
        float norm = std::sqrt(nn);
        if (norm < 1e-20f)
            throw std::runtime_error("weight_norm_linear: zero-norm direction row " +
                                     std::to_string(i));
        norms[i] = norm;
        y[i] = g.data()[i] * dot / norm + b.data()[i];
    }
    auto out = make_node({out_dim}, std::move(y));
    record(out, {&v, &g, &b, &x},
           [out_dim, in_dim, norms = std::move(norms)](TensorNode& n) {
               auto& pv = *n.parents[0];
               auto& pg = *n.parents[1];
               auto& pb = *n.parents[2];
               auto& px = *n.parents[3];
               pv.ensure_grad();
               pg.ensure_grad();
               pb.ensure_grad();
               px.ensure_grad();
               const float* V = pv.value.data();
               for (int i = 0; i < out_dim; ++i) {
                   const float* row = V + static_cast<size_t>(i) * in_dim;
                   float gi = pg.value[i];
                   float norm = norms[i];
                   float dot = 0.0f;
                   for (int j = 0; j < in_dim; ++j) dot += row[j] * px.value[j];
                   float go = n.grad[i];
                   pb.grad[i] += go;
                   pg.grad[i] += go * dot / norm;
                   // d y_i / d v_ij = g * (x_j / norm - dot * v_ij / norm^3)
                   float c1 = go * gi / norm;
                   float c2 = go * gi * dot / (norm * norm * norm);
                   float* vg = pv.grad.data() + static_cast<size_t>(i) * in_dim;
                   for (int j = 0; j < in_dim; ++j) {
                       vg[j] += c1 * px.value[j] - c2 * row[j];
                       px.grad[j] += c1 * row[j];
                   }
               }
           });
    return Tensor(out);
}

void backward(const Tensor& loss) {
    if (loss.size() != 1) throw std::runtime_error("backward: loss must be scalar");
    if (!loss.requires_grad()) return;

    // iterative post-order topological sort
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    struct Frame {
        TensorNode* node;
        size_t next_child;
    };
    std::vector<Frame> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.node->parents.size()) {
            TensorNode* child = f.node->parents[f.next_child++].get();
            if (child->requires_grad && visited.insert(child).second)
                stack.push_back({child, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

} // namespace imle
