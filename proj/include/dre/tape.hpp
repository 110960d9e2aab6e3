#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dre/errors.hpp"
#include "dre/tensor.hpp"

namespace dre {

// Reverse-mode autodiff on a linear tape of primitive ops. Graphs are rebuilt
// every optimization step; a tape admits exactly one backward pass between
// resets.

enum class Op {
  leaf,
  matmul,
  add_bias,   // matrix + broadcast 1 x c bias
  add,
  sub,
  mul,        // elementwise
  scale,      // c * x
  add_scalar, // x + c
  relu,
  exp_elem,
  log_elem,
  softplus,
  pow_scalar, // x^c, x > 0 unless c is a non-negative integer
  mean_all,   // mean over all entries -> 1 x 1
};

inline double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

class Tape {
 public:
  struct Node {
    Op op = Op::leaf;
    int a = -1;
    int b = -1;
    double c = 0.0;
    Tensor val;
    Tensor grad;  // allocated during backward
  };

  int leaf(Tensor value) {
    require_finite(value, "tape leaf");
    return push(Op::leaf, -1, -1, 0.0, std::move(value));
  }

  int matmul(int a, int b) {
    return push(Op::matmul, a, b, 0.0, dre::matmul(val(a), val(b)));
  }

  int add_bias(int x, int bias) {
    return push(Op::add_bias, x, bias, 0.0, add_row_broadcast(val(x), val(bias)));
  }

  int add(int a, int b) {
    check_same_shape(a, b, "add");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += vb.v[i];
    return push(Op::add, a, b, 0.0, std::move(out));
  }

  int sub(int a, int b) {
    check_same_shape(a, b, "sub");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] -= vb.v[i];
    return push(Op::sub, a, b, 0.0, std::move(out));
  }

  int mul(int a, int b) {
    check_same_shape(a, b, "mul");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= vb.v[i];
    return push(Op::mul, a, b, 0.0, std::move(out));
  }

  int scale(int a, double c) {
    Tensor out = val(a);
    for (double& x : out.v) x *= c;
    return push(Op::scale, a, -1, c, std::move(out));
  }

  int add_scalar(int a, double c) {
    Tensor out = val(a);
    for (double& x : out.v) x += c;
    return push(Op::add_scalar, a, -1, c, std::move(out));
  }

  int relu(int a) {
    Tensor out = val(a);
    for (double& x : out.v) x = x > 0.0 ? x : 0.0;
    return push(Op::relu, a, -1, 0.0, std::move(out));
  }

  int exp_elem(int a) {
    Tensor out = val(a);
    for (double& x : out.v) x = std::exp(x);
    return push(Op::exp_elem, a, -1, 0.0, std::move(out));
  }

  int log_elem(int a) {
    Tensor out = val(a);
    for (double& x : out.v) {
      if (!(x > 0.0)) throw precondition_error("log of non-positive value on tape");
      x = std::log(x);
    }
    return push(Op::log_elem, a, -1, 0.0, std::move(out));
  }

  int softplus(int a) {
    Tensor out = val(a);
    for (double& x : out.v) x = stable_softplus(x);
    return push(Op::softplus, a, -1, 0.0, std::move(out));
  }

  int pow_scalar(int a, double c) {
    const bool integer_exponent = c == std::floor(c) && c >= 0.0;
    Tensor out = val(a);
    for (double& x : out.v) {
      if (!integer_exponent && !(x > 0.0))
        throw precondition_error("pow_scalar base must be positive");
      x = std::pow(x, c);
    }
    return push(Op::pow_scalar, a, -1, c, std::move(out));
  }

  int mean_all(int a) {
    const Tensor& va = val(a);
    if (va.size() == 0) throw precondition_error("mean of empty tensor");
    double acc = 0.0;
    for (double x : va.v) acc += x;
    Tensor out(1, 1);
    out.v[0] = acc / static_cast<double>(va.size());
    return push(Op::mean_all, a, -1, 0.0, std::move(out));
  }

  const Tensor& val(int id) const { return node(id).val; }

  const Tensor& grad(int id) const {
    if (!backward_done_) throw precondition_error("grad requested before backward");
    return node(id).grad;
  }

  // Accumulates d(root)/d(node) into every node's grad. root must be scalar.
  void backward(int root) {
    if (backward_done_)
      throw precondition_error("second backward on the same tape; reset first");
    const Tensor& rv = val(root);
    if (rv.rows != 1 || rv.cols != 1)
      throw precondition_error("backward root must be a 1 x 1 scalar");
    if (!std::isfinite(rv.v[0])) throw non_finite_error("backward on non-finite loss");
    for (auto& n : nodes_) n.grad = Tensor::zeros(n.val.rows, n.val.cols);
    nodes_[static_cast<std::size_t>(root)].grad.v[0] = 1.0;

    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      switch (n.op) {
        case Op::leaf:
          break;
        case Op::matmul: {
          matmul_bt_acc(mut(n.a).grad, n.grad, val(n.b));
          matmul_at_acc(mut(n.b).grad, val(n.a), n.grad);
          break;
        }
        case Op::add_bias: {
          Tensor& ga = mut(n.a).grad;
          for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] += n.grad.v[i];
          Tensor& gb = mut(n.b).grad;
          for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) gb.at(0, j) += n.grad.at(i, j);
          break;
        }
        case Op::add: {
          acc_same(mut(n.a).grad, n.grad, 1.0);
          acc_same(mut(n.b).grad, n.grad, 1.0);
          break;
        }
        case Op::sub: {
          acc_same(mut(n.a).grad, n.grad, 1.0);
          acc_same(mut(n.b).grad, n.grad, -1.0);
          break;
        }
        case Op::mul: {
          Tensor& ga = mut(n.a).grad;
          Tensor& gb = mut(n.b).grad;
          const Tensor& va = val(n.a);
          const Tensor& vb = val(n.b);
          for (std::size_t i = 0; i < ga.size(); ++i) {
            ga.v[i] += n.grad.v[i] * vb.v[i];
            gb.v[i] += n.grad.v[i] * va.v[i];
          }
          break;
        }
        case Op::scale:
          acc_same(mut(n.a).grad, n.grad, n.c);
          break;
        case Op::add_scalar:
          acc_same(mut(n.a).grad, n.grad, 1.0);
          break;
        case Op::relu: {
          // Subgradient at 0 is taken as 0.
          Tensor& ga = mut(n.a).grad;
          const Tensor& va = val(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i)
            if (va.v[i] > 0.0) ga.v[i] += n.grad.v[i];
          break;
        }
        case Op::exp_elem: {
          Tensor& ga = mut(n.a).grad;
          for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] += n.grad.v[i] * n.val.v[i];
          break;
        }
        case Op::log_elem: {
          Tensor& ga = mut(n.a).grad;
          const Tensor& va = val(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] += n.grad.v[i] / va.v[i];
          break;
        }
        case Op::softplus: {
          Tensor& ga = mut(n.a).grad;
          const Tensor& va = val(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i)
            ga.v[i] += n.grad.v[i] * sigmoid(va.v[i]);
          break;
        }
        case Op::pow_scalar: {
          Tensor& ga = mut(n.a).grad;
          const Tensor& va = val(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i)
            ga.v[i] += n.grad.v[i] * n.c * std::pow(va.v[i], n.c - 1.0);
          break;
        }
        case Op::mean_all: {
          Tensor& ga = mut(n.a).grad;
          const double g = n.grad.v[0] / static_cast<double>(ga.size());
          for (double& x : ga.v) x += g;
          break;
        }
      }
    }
    backward_done_ = true;
  }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  int push(Op op, int a, int b, double c, Tensor value) {
    if (backward_done_)
      throw precondition_error("tape already ran backward; reset before reuse");
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.c = c;
    n.val = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Node& node(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      throw precondition_error("tape node id out of range");
    return nodes_[static_cast<std::size_t>(id)];
  }

  Node& mut(int id) { return nodes_[static_cast<std::size_t>(id)]; }

  void check_same_shape(int a, int b, const char* op_name) const {
    if (!val(a).same_shape(val(b)))
      throw precondition_error(std::string(op_name) + ": shape mismatch");
  }

  static void acc_same(Tensor& dst, const Tensor& src, double w) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.v[i] += w * src.v[i];
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace dre
