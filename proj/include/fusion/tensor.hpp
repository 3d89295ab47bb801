#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "fusion/rng.hpp"

namespace fusion {

using Index = std::int64_t;
using Shape = std::vector<Index>;

inline Index numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

template <typename Scalar>
using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

// One vertex of the reverse-mode differentiation graph. Holds the forward
// value, a lazily allocated gradient of the same extent, the producing op's
// backward closure and the parent nodes it reads. The graph is acyclic by
// construction: an op only links to nodes that already exist.
template <typename Scalar>
struct Node {
    Shape shape;
    Buffer<Scalar> value;
    Buffer<Scalar> grad;  // size 0 until first accumulation
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    std::uint64_t id = 0;
    bool requires_grad = false;

    Index size() const { return numel(shape); }

    Buffer<Scalar>& ensure_grad() {
        if (grad.size() != value.size()) grad = Buffer<Scalar>::Zero(value.size());
        return grad;
    }

    void release_buffers() {
        value.resize(0);
        grad.resize(0);
    }
};

inline std::uint64_t next_node_id() {
    static thread_local std::uint64_t counter = 0;
    return ++counter;
}

// Cheap handle to a graph node. Copies share the node.
template <typename Scalar>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<Scalar>> node) : node_(std::move(node)) {}

    static Tensor from(Shape shape, Buffer<Scalar> data, bool requires_grad = false) {
        if (numel(shape) != data.size()) {
            throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match buffer of " +
                                        std::to_string(data.size()) + " elements");
        }
        auto n = std::make_shared<Node<Scalar>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        n->id = next_node_id();
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return from(std::move(shape), Buffer<Scalar>::Zero(numel(shape)), requires_grad);
    }

    static Tensor full(Shape shape, Scalar v, bool requires_grad = false) {
        return from(std::move(shape), Buffer<Scalar>::Constant(numel(shape), v), requires_grad);
    }

    static Tensor randn(Shape shape, Rng& rng, Scalar stddev = Scalar(1), bool requires_grad = false) {
        Buffer<Scalar> b(numel(shape));
        for (Index i = 0; i < b.size(); ++i) b[i] = static_cast<Scalar>(rng.normal(0.0, double(stddev)));
        return from(std::move(shape), std::move(b), requires_grad);
    }

    bool valid() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    Index size() const { return node_->size(); }
    std::uint64_t id() const { return node_->id; }
    bool requires_grad() const { return node_->requires_grad; }

    Buffer<Scalar>& value() { return node_->value; }
    const Buffer<Scalar>& value() const { return node_->value; }
    Buffer<Scalar>& grad() { return node_->ensure_grad(); }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }

    Scalar* data() { return node_->value.data(); }
    const Scalar* data() const { return node_->value.data(); }

    void zero_grad() {
        if (node_->grad.size()) node_->grad.setZero();
    }

    std::shared_ptr<Node<Scalar>> node() const { return node_; }

    // Value copy severed from the graph.
    Tensor detach() const { return from(node_->shape, node_->value, false); }

private:
    std::shared_ptr<Node<Scalar>> node_;
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> make_op_node(Shape shape, Buffer<Scalar> value,
                            std::vector<std::shared_ptr<Node<Scalar>>> parents,
                            std::function<void(Node<Scalar>&)> backward_fn) {
    auto n = std::make_shared<Node<Scalar>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->id = next_node_id();
    for (const auto& p : n->parents) {
        if (p && p->requires_grad) n->requires_grad = true;
    }
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return Tensor<Scalar>(std::move(n));
}

}  // namespace detail

// Reverse topological accumulation from a scalar loss. Each reachable node is
// visited exactly once. With release_graph set, interior nodes drop their
// value and gradient buffers as soon as they have been consumed; parameters
// and other leaves are kept intact.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss, bool release_graph = false) {
    if (loss.size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    std::vector<Node<Scalar>*> order;
    std::vector<std::shared_ptr<Node<Scalar>>> keep_alive;
    std::unordered_set<const Node<Scalar>*> seen;

    // iterative post-order DFS over parents
    struct Frame {
        Node<Scalar>* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (loss.node()->requires_grad) {
        stack.push_back({loss.node().get(), 0});
        seen.insert(loss.node().get());
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node<Scalar>* p = f.node->parents[f.next_parent++].get();
            if (p && p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad()[0] = Scalar(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<Scalar>* n = *it;
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
        if (release_graph && !n->parents.empty()) n->release_buffers();
    }
}

}  // namespace fusion
