#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace crt {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major double tensor. A scalar is any tensor with one element.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor scalar(double value);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-1 tensors behave as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  double item() const;
  void fill(double value);
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// A learned weight with its Adam moments. Step count only ever increases.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
  std::uint64_t step = 0;

  Parameter(std::string name, Tensor value);
  void zero_grad();
};

// Owns parameters in insertion order so checkpoints and reports are stable.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  Parameter* find(std::string_view name);
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  // Gradient accumulated by the last backward pass; zeros if none reached.
  Tensor grad() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Reverse-mode gradient tape. Rebuilt for every step and confined to one
// thread; backward() consumes it.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  // Tracked input whose gradient can be read back through Var::grad().
  Var leaf(Tensor value);
  // Same Parameter always maps to the same node on one tape. After
  // backward() the node gradient is added into Parameter::grad.
  Var parameter(Parameter& p);

  void backward(Var loss);
  bool consumed() const { return consumed_; }
  std::size_t node_count() const { return nodes_.size(); }

  // Op-author interface.
  using BackwardFn =
      std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);
  const Tensor& value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.borrowed ? *n.borrowed : n.value;
  }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  // Lazily allocated gradient buffer for accumulation.
  Tensor& grad_buffer(std::uint32_t id);
  const Tensor* grad_if_any(std::uint32_t id) const;

 private:
  struct Node {
    Tensor value;
    // Parameter nodes read the parameter tensor in place; it must not change
    // while the tape is alive.
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::uint32_t push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
  bool grad_enabled_;
  bool consumed_ = false;
};

// Differentiable operations. Every input must live on the same tape.
Var matmul(Var a, Var b);
// a · bᵀ
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var mul(Var a, Var b);
// Adds a length-n bias to every row of an m×n matrix.
Var add_bias(Var x, Var bias);
Var scale(Var x, double factor);
Var relu(Var x);
Var sum(Var x);
Var reshape(Var x, Shape shape);
Var layer_norm(Var x, Var gain, Var bias, double epsilon = 1e-5);
// Row softmax with row-max subtraction. With causal=true row i only sees
// columns ≤ i and masked entries are exactly zero.
Var softmax_rows(Var x, bool causal = false);
// Geometry-weighted softmax: w[m][n] = g[m][n]·exp(a[m][n]) / Σ_l g[m][l]·exp(a[m][l]).
// A row whose weights are all zero falls back to the plain softmax of a.
Var geometric_softmax(Var scores, Var geo);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var table, std::span<const std::int32_t> ids);
// −Σ_j log p[j][targets[j]] with p clamped at 1e-12. Rows with a negative
// target are skipped. clamped_count, when given, receives the clamp tally.
Var negative_log_likelihood(Var probs, std::span<const std::int32_t> targets,
                            std::size_t* clamped_count = nullptr);
Var linear(Var x, Var weight, Var bias);

}  // namespace crt
