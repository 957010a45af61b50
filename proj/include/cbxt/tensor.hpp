#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <deque>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cbxt/error.hpp"

namespace cbxt {

// Dense real array, row-major, double precision. Rank <= 3.
// Gradient storage lives on the tensor itself so parameters can accumulate
// gradients across many tapes before an optimizer step.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);
  // Uniform in [-s, +s] with s = sqrt(6 / (fan_in + fan_out)).
  static Tensor xavier(std::vector<int> shape, std::mt19937& rng);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int size() const { return static_cast<int>(data_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int rows() const { return shape_[0]; }
  int cols() const { return shape_[1]; }

  double operator[](int i) const { return data_[static_cast<size_t>(i)]; }
  double& operator[](int i) { return data_[static_cast<size_t>(i)]; }
  double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double at(int i, int j, int k) const {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  double& at(int i, int j, int k) {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool b) { requires_grad_ = b; }

  // Lazily sized to match data().
  std::vector<double>& grad();
  const std::vector<double>& grad() const { return grad_; }
  bool has_grad() const { return !grad_.empty(); }
  void zero_grad();
  void accumulate_grad(std::span<const double> g);

  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
  std::vector<double> grad_;
};

std::string shape_str(const std::vector<int>& shape);

class Tape;

// Handle to a node on a tape. Cheap to copy; invalid when default constructed.
class Val {
 public:
  Val() = default;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  const Tensor& tensor() const;
  const std::vector<int>& shape() const { return tensor().shape(); }
  int size() const { return tensor().size(); }
  double scalar() const;

 private:
  friend class Tape;
  Val(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records forward ops in execution order; the recorded order is topological
// by construction, so reverse replay visits each node exactly once.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Val constant(Tensor t);
  Val scalar(double v) { return constant(Tensor::scalar(v)); }
  // Leaf backed by an external parameter; memoized so repeated use of the
  // same tensor shares one node and fans out gradients additively.
  Val param(Tensor& p);

  // Reverse sweep from a scalar loss. When accumulate is true (default),
  // parameter-leaf gradients are added into Tensor::grad in leaf order.
  void backward(const Val& loss, bool accumulate = true);
  // Parameter gradients in leaf registration order, for ordered reductions.
  std::vector<std::pair<Tensor*, std::span<const double>>> param_grads();

  bool grad_enabled() const { return grad_enabled_; }
  size_t node_count() const { return nodes_.size(); }
  const Tensor& value(const Val& v) { return node(v).value; }

  // -- ops -----------------------------------------------------------------
  Val matmul(const Val& a, const Val& b);
  Val vecmat(const Val& v, const Val& m);  // [k] * [k x n] -> [n]
  Val add(const Val& a, const Val& b);     // elementwise, same shape
  Val sub(const Val& a, const Val& b);
  Val mul(const Val& a, const Val& b);     // elementwise, same shape
  Val add_rowvec(const Val& m, const Val& v);  // [n x d] + [d]
  Val scale(const Val& a, double c);
  Val tanh(const Val& a);
  Val sigmoid(const Val& a);
  Val softmax(const Val& v);       // [n] -> [n], max-subtracted
  Val log_softmax(const Val& v);   // [n] -> [n]
  Val log_sum_exp(const Val& v);   // [n] -> scalar
  Val logaddexp(const Val& a, const Val& b);  // scalars
  Val sum(const Val& a);           // all elements -> scalar
  Val dot(const Val& a, const Val& b);        // [n].[n] -> scalar
  Val matvec(const Val& m, const Val& v);     // [n x d] * [d] -> [n]
  Val row(const Val& m, int i);               // [n x d] -> [d]
  Val cols(const Val& m, int start, int len); // [n x d] -> [n x len]
  Val slice(const Val& v, int start, int len);  // [n] -> [len]
  Val concat(std::span<const Val> parts);       // vectors -> [sum]
  Val stack_rows(std::span<const Val> rows);    // k x [d] -> [k x d]
  // Stack d0*d1 vectors of length v into a [d0 x d1 x v] block, row-major.
  Val stack_rows3(std::span<const Val> rows, int d0, int d1);
  Val gather_rows(const Val& table, std::span<const int> ids);
  Val pick(const Val& v, int flat_index);     // -> scalar

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::function<void(Tape&, int)> back;
    Tensor* source = nullptr;
    bool needs_grad = false;
  };

  Val make(Tensor value, bool needs_grad, std::function<void(Tape&, int)> back);
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  Node& node(const Val& v);
  const Tensor& value_of(const Val& v);
  std::vector<double>& grad_of(int id);
  bool needs(const Val& v) { return node(v).needs_grad; }

  std::deque<Node> nodes_;
  std::vector<int> param_leaves_;
  std::unordered_map<const Tensor*, int> param_index_;
  bool grad_enabled_;
};

// Max over sampled coordinates of the relative disagreement between the
// analytic gradient and a central finite difference. `f(true)` must run
// forward + backward and accumulate into the listed parameters' grads;
// `f(false)` must run forward only. Throws VerificationError when repeated
// evaluation of f disagrees (non-deterministic f).
double finite_diff_check(const std::function<double(bool)>& f,
                         std::span<Tensor* const> params, double eps = 1e-5,
                         int max_coords_per_param = 8, std::uint64_t seed = 0x5eed);

}  // namespace cbxt
