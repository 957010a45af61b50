#include "cbxt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cbxt {

namespace {

size_t shape_product(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor dim must be positive, got " + shape_str(shape));
    n *= static_cast<size_t>(d);
  }
  return n;
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + cbxt::shape_str(shape_));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

Tensor Tensor::xavier(std::vector<int> shape, std::mt19937& rng) {
  Tensor t(shape);
  int fan_in = shape.size() >= 2 ? shape[0] : shape[0];
  int fan_out = shape.size() >= 2 ? shape[static_cast<size_t>(shape.size()) - 1] : shape[0];
  double s = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-s, s);
  for (double& x : t.data_) x = dist(rng);
  return t;
}

std::vector<double>& Tensor::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0); }

void Tensor::accumulate_grad(std::span<const double> g) {
  auto& gr = grad();
  if (g.size() != gr.size()) {
    throw DimensionError("gradient length " + std::to_string(g.size()) +
                         " does not match tensor " + cbxt::shape_str(shape_));
  }
  for (size_t i = 0; i < gr.size(); ++i) gr[i] += g[i];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_str() const { return cbxt::shape_str(shape_); }

// --- Val ---------------------------------------------------------------

const Tensor& Val::tensor() const {
  if (!valid()) throw ContractError("use of an empty Val handle");
  return tape_->value(*this);
}

double Val::scalar() const {
  const Tensor& t = tensor();
  if (t.size() != 1) throw ContractError("scalar() on tensor of shape " + t.shape_str());
  return t[0];
}

// --- Tape --------------------------------------------------------------

Val Tape::make(Tensor value, bool needs_grad, std::function<void(Tape&, int)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = grad_enabled_ && needs_grad;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Val(this, static_cast<int>(nodes_.size()) - 1);
}

Tape::Node& Tape::node(const Val& v) {
  if (v.tape() != this) throw ContractError("Val belongs to a different tape");
  return nodes_[static_cast<size_t>(v.id())];
}

const Tensor& Tape::value_of(const Val& v) { return node(v).value; }

std::vector<double>& Tape::grad_of(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.size() != n.value.data().size()) n.grad.assign(n.value.data().size(), 0.0);
  return n.grad;
}

Val Tape::constant(Tensor t) { return make(std::move(t), false, nullptr); }

Val Tape::param(Tensor& p) {
  auto it = param_index_.find(&p);
  if (it != param_index_.end()) return Val(this, it->second);
  Val v = make(p, p.requires_grad(), nullptr);
  node(v).source = &p;
  param_index_.emplace(&p, v.id());
  param_leaves_.push_back(v.id());
  return v;
}

void Tape::backward(const Val& loss, bool accumulate) {
  if (!grad_enabled_) throw ContractError("backward on a grad-disabled tape");
  if (value_of(loss).size() != 1) {
    throw ContractError("backward requires a scalar loss, got " +
                        node(loss).value.shape_str());
  }
  grad_of(loss.id())[0] += 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.needs_grad && n.back && !n.grad.empty()) n.back(*this, id);
  }
  if (accumulate) {
    for (int id : param_leaves_) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.source && n.source->requires_grad() && !n.grad.empty()) {
        n.source->accumulate_grad(n.grad);
      }
    }
  }
}

std::vector<std::pair<Tensor*, std::span<const double>>> Tape::param_grads() {
  std::vector<std::pair<Tensor*, std::span<const double>>> out;
  out.reserve(param_leaves_.size());
  for (int id : param_leaves_) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.source && n.source->requires_grad()) {
      if (n.grad.empty()) grad_of(id);
      out.emplace_back(n.source, std::span<const double>(n.grad));
    }
  }
  return out;
}

// --- ops -----------------------------------------------------------------

Val Tape::matmul(const Val& a, const Val& b) {
  const Tensor& ta = value_of(a);
  const Tensor& tb = value_of(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows()) {
    throw DimensionError("matmul: incompatible shapes " + ta.shape_str() + " x " +
                         tb.shape_str());
  }
  int m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      double av = ta.at(i, p);
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) out.at(i, j) += av * tb.at(p, j);
    }
  }
  int ia = a.id(), ib = b.id();
  return make(std::move(out), needs(a) || needs(b), [ia, ib, m, k, n](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    Node& na = tp.node(ia);
    Node& nb = tp.node(ib);
    if (na.needs_grad) {
      auto& ga = tp.grad_of(ia);
      const Tensor& tb2 = nb.value;
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += g[static_cast<size_t>(i) * n + j] * tb2.at(p, j);
          ga[static_cast<size_t>(i) * k + p] += s;
        }
    }
    if (nb.needs_grad) {
      auto& gb = tp.grad_of(ib);
      const Tensor& ta2 = na.value;
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int i = 0; i < m; ++i) s += ta2.at(i, p) * g[static_cast<size_t>(i) * n + j];
          gb[static_cast<size_t>(p) * n + j] += s;
        }
    }
  });
}

Val Tape::vecmat(const Val& v, const Val& m) {
  const Tensor& tv = value_of(v);
  const Tensor& tm = value_of(m);
  if (tv.rank() != 1 || tm.rank() != 2 || tv.size() != tm.rows()) {
    throw DimensionError("vecmat: incompatible shapes " + tv.shape_str() + " x " +
                         tm.shape_str());
  }
  int k = tv.size(), n = tm.cols();
  Tensor out({n});
  for (int p = 0; p < k; ++p) {
    double vv = tv[p];
    if (vv == 0.0) continue;
    for (int j = 0; j < n; ++j) out[j] += vv * tm.at(p, j);
  }
  int iv = v.id(), im = m.id();
  return make(std::move(out), needs(v) || needs(m), [iv, im, k, n](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    Node& nv = tp.node(iv);
    Node& nm = tp.node(im);
    if (nv.needs_grad) {
      auto& gv = tp.grad_of(iv);
      const Tensor& tm2 = nm.value;
      for (int p = 0; p < k; ++p) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += g[static_cast<size_t>(j)] * tm2.at(p, j);
        gv[static_cast<size_t>(p)] += s;
      }
    }
    if (nm.needs_grad) {
      auto& gm = tp.grad_of(im);
      const Tensor& tv2 = nv.value;
      for (int p = 0; p < k; ++p) {
        double vv = tv2[p];
        if (vv == 0.0) continue;
        for (int j = 0; j < n; ++j) gm[static_cast<size_t>(p) * n + j] += vv * g[static_cast<size_t>(j)];
      }
    }
  });
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
  }
}
}  // namespace

Val Tape::add(const Val& a, const Val& b) {
  const Tensor& ta = value_of(a);
  const Tensor& tb = value_of(b);
  check_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (int i = 0; i < out.size(); ++i) out[i] += tb[i];
  int ia = a.id(), ib = b.id();
  return make(std::move(out), needs(a) || needs(b), [ia, ib](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    if (tp.node(ia).needs_grad) {
      auto& ga = tp.grad_of(ia);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.node(ib).needs_grad) {
      auto& gb = tp.grad_of(ib);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Val Tape::sub(const Val& a, const Val& b) {
  const Tensor& ta = value_of(a);
  const Tensor& tb = value_of(b);
  check_same_shape(ta, tb, "sub");
  Tensor out = ta;
  for (int i = 0; i < out.size(); ++i) out[i] -= tb[i];
  int ia = a.id(), ib = b.id();
  return make(std::move(out), needs(a) || needs(b), [ia, ib](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    if (tp.node(ia).needs_grad) {
      auto& ga = tp.grad_of(ia);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.node(ib).needs_grad) {
      auto& gb = tp.grad_of(ib);
      for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Val Tape::mul(const Val& a, const Val& b) {
  const Tensor& ta = value_of(a);
  const Tensor& tb = value_of(b);
  check_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (int i = 0; i < out.size(); ++i) out[i] *= tb[i];
  int ia = a.id(), ib = b.id();
  return make(std::move(out), needs(a) || needs(b), [ia, ib](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    Node& na = tp.node(ia);
    Node& nb = tp.node(ib);
    if (na.needs_grad) {
      auto& ga = tp.grad_of(ia);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * nb.value.data()[i];
    }
    if (nb.needs_grad) {
      auto& gb = tp.grad_of(ib);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * na.value.data()[i];
    }
  });
}

Val Tape::add_rowvec(const Val& m, const Val& v) {
  const Tensor& tm = value_of(m);
  const Tensor& tv = value_of(v);
  if (tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.size()) {
    throw DimensionError("add_rowvec: incompatible shapes " + tm.shape_str() + " + " +
                         tv.shape_str());
  }
  Tensor out = tm;
  int r = tm.rows(), c = tm.cols();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) += tv[j];
  int im = m.id(), iv = v.id();
  return make(std::move(out), needs(m) || needs(v), [im, iv, r, c](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    if (tp.node(im).needs_grad) {
      auto& gm = tp.grad_of(im);
      for (size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
    }
    if (tp.node(iv).needs_grad) {
      auto& gv = tp.grad_of(iv);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) gv[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * c + j];
    }
  });
}

Val Tape::scale(const Val& a, double c) {
  Tensor out = value_of(a);
  for (int i = 0; i < out.size(); ++i) out[i] *= c;
  int ia = a.id();
  return make(std::move(out), needs(a), [ia, c](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    auto& ga = tp.grad_of(ia);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Val Tape::tanh(const Val& a) {
  Tensor out = value_of(a);
  for (int i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  int ia = a.id();
  return make(std::move(out), needs(a), [ia](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    const auto& y = tp.node(self).value.data();
    auto& ga = tp.grad_of(ia);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Val Tape::sigmoid(const Val& a) {
  Tensor out = value_of(a);
  for (int i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  int ia = a.id();
  return make(std::move(out), needs(a), [ia](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    const auto& y = tp.node(self).value.data();
    auto& ga = tp.grad_of(ia);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Val Tape::softmax(const Val& v) {
  const Tensor& tv = value_of(v);
  if (tv.rank() != 1) throw DimensionError("softmax expects a vector, got " + tv.shape_str());
  if (tv.size() < 1) throw DomainError("softmax on empty input");
  Tensor out = tv;
  double mx = *std::max_element(out.data().begin(), out.data().end());
  double z = 0.0;
  for (int i = 0; i < out.size(); ++i) {
    out[i] = std::exp(out[i] - mx);
    z += out[i];
  }
  for (int i = 0; i < out.size(); ++i) out[i] /= z;
  int iv = v.id();
  return make(std::move(out), needs(v), [iv](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    const auto& y = tp.node(self).value.data();
    auto& gv = tp.grad_of(iv);
    double s = 0.0;
    for (size_t i = 0; i < g.size(); ++i) s += g[i] * y[i];
    for (size_t i = 0; i < g.size(); ++i) gv[i] += y[i] * (g[i] - s);
  });
}

Val Tape::log_softmax(const Val& v) {
  const Tensor& tv = value_of(v);
  if (tv.rank() != 1) throw DimensionError("log_softmax expects a vector, got " + tv.shape_str());
  if (tv.size() < 1) throw DomainError("log_softmax on empty input");
  Tensor out = tv;
  double mx = *std::max_element(out.data().begin(), out.data().end());
  double z = 0.0;
  for (int i = 0; i < out.size(); ++i) z += std::exp(out[i] - mx);
  double lse = mx + std::log(z);
  for (int i = 0; i < out.size(); ++i) out[i] -= lse;
  int iv = v.id();
  return make(std::move(out), needs(v), [iv](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    const auto& y = tp.node(self).value.data();
    auto& gv = tp.grad_of(iv);
    double s = 0.0;
    for (size_t i = 0; i < g.size(); ++i) s += g[i];
    for (size_t i = 0; i < g.size(); ++i) gv[i] += g[i] - std::exp(y[i]) * s;
  });
}

Val Tape::log_sum_exp(const Val& v) {
  const Tensor& tv = value_of(v);
  if (tv.rank() != 1) throw DimensionError("log_sum_exp expects a vector, got " + tv.shape_str());
  if (tv.size() < 1) throw DomainError("log_sum_exp on empty input");
  double mx = *std::max_element(tv.data().begin(), tv.data().end());
  double z = 0.0;
  for (int i = 0; i < tv.size(); ++i) z += std::exp(tv[i] - mx);
  double y = mx + std::log(z);
  int iv = v.id();
  return make(Tensor::scalar(y), needs(v), [iv, y](Tape& tp, int self) {
    double g = tp.grad_of(self)[0];
    const auto& x = tp.node(iv).value.data();
    auto& gv = tp.grad_of(iv);
    for (size_t i = 0; i < x.size(); ++i) gv[i] += g * std::exp(x[i] - y);
  });
}

Val Tape::logaddexp(const Val& a, const Val& b) {
  double av = value_of(a)[0], bv = value_of(b)[0];
  if (value_of(a).size() != 1 || value_of(b).size() != 1)
    throw ContractError("logaddexp expects scalars");
  double mx = std::max(av, bv);
  double y = std::isinf(mx) && mx < 0 ? mx : mx + std::log(std::exp(av - mx) + std::exp(bv - mx));
  int ia = a.id(), ib = b.id();
  return make(Tensor::scalar(y), needs(a) || needs(b), [ia, ib, y](Tape& tp, int self) {
    double g = tp.grad_of(self)[0];
    if (tp.node(ia).needs_grad)
      tp.grad_of(ia)[0] += g * std::exp(tp.node(ia).value[0] - y);
    if (tp.node(ib).needs_grad)
      tp.grad_of(ib)[0] += g * std::exp(tp.node(ib).value[0] - y);
  });
}

Val Tape::sum(const Val& a) {
  const Tensor& ta = value_of(a);
  double s = std::accumulate(ta.data().begin(), ta.data().end(), 0.0);
  int ia = a.id();
  return make(Tensor::scalar(s), needs(a), [ia](Tape& tp, int self) {
    double g = tp.grad_of(self)[0];
    auto& ga = tp.grad_of(ia);
    for (double& x : ga) x += g;
  });
}

Val Tape::dot(const Val& a, const Val& b) {
  const Tensor& ta = value_of(a);
  const Tensor& tb = value_of(b);
  if (ta.rank() != 1 || tb.rank() != 1 || ta.size() != tb.size()) {
    throw DimensionError("dot: incompatible shapes " + ta.shape_str() + " . " + tb.shape_str());
  }
  double s = 0.0;
  for (int i = 0; i < ta.size(); ++i) s += ta[i] * tb[i];
  int ia = a.id(), ib = b.id();
  return make(Tensor::scalar(s), needs(a) || needs(b), [ia, ib](Tape& tp, int self) {
    double g = tp.grad_of(self)[0];
    Node& na = tp.node(ia);
    Node& nb = tp.node(ib);
    if (na.needs_grad) {
      auto& ga = tp.grad_of(ia);
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += g * nb.value.data()[i];
    }
    if (nb.needs_grad) {
      auto& gb = tp.grad_of(ib);
      for (size_t i = 0; i < gb.size(); ++i) gb[i] += g * na.value.data()[i];
    }
  });
}

Val Tape::matvec(const Val& m, const Val& v) {
  const Tensor& tm = value_of(m);
  const Tensor& tv = value_of(v);
  if (tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.size()) {
    throw DimensionError("matvec: incompatible shapes " + tm.shape_str() + " x " +
                         tv.shape_str());
  }
  int n = tm.rows(), d = tm.cols();
  Tensor out({n});
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += tm.at(i, j) * tv[j];
    out[i] = s;
  }
  int im = m.id(), iv = v.id();
  return make(std::move(out), needs(m) || needs(v), [im, iv, n, d](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    Node& nm = tp.node(im);
    Node& nv = tp.node(iv);
    if (nm.needs_grad) {
      auto& gm = tp.grad_of(im);
      const auto& x = nv.value.data();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) gm[static_cast<size_t>(i) * d + j] += g[static_cast<size_t>(i)] * x[static_cast<size_t>(j)];
    }
    if (nv.needs_grad) {
      auto& gv = tp.grad_of(iv);
      const Tensor& mm = nm.value;
      for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += mm.at(i, j) * g[static_cast<size_t>(i)];
        gv[static_cast<size_t>(j)] += s;
      }
    }
  });
}

Val Tape::cols(const Val& m, int start, int len) {
  const Tensor& tm = value_of(m);
  if (tm.rank() != 2) throw DimensionError("cols expects a matrix, got " + tm.shape_str());
  if (start < 0 || len < 1 || start + len > tm.cols())
    throw ContractError("cols [" + std::to_string(start) + "," + std::to_string(start + len) +
                        ") out of range for " + tm.shape_str());
  int n = tm.rows(), d = tm.cols();
  Tensor out({n, len});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j) out.at(i, j) = tm.at(i, start + j);
  int im = m.id();
  return make(std::move(out), needs(m), [im, start, len, d](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    auto& gm = tp.grad_of(im);
    int n2 = static_cast<int>(g.size()) / len;
    for (int i = 0; i < n2; ++i)
      for (int j = 0; j < len; ++j)
        gm[static_cast<size_t>(i) * d + start + j] += g[static_cast<size_t>(i) * len + j];
  });
}

Val Tape::row(const Val& m, int i) {
  const Tensor& tm = value_of(m);
  if (tm.rank() != 2) throw DimensionError("row expects a matrix, got " + tm.shape_str());
  if (i < 0 || i >= tm.rows())
    throw ContractError("row index " + std::to_string(i) + " out of range for " + tm.shape_str());
  int c = tm.cols();
  Tensor out({c});
  for (int j = 0; j < c; ++j) out[j] = tm.at(i, j);
  int im = m.id();
  return make(std::move(out), needs(m), [im, i, c](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    auto& gm = tp.grad_of(im);
    for (int j = 0; j < c; ++j) gm[static_cast<size_t>(i) * c + j] += g[static_cast<size_t>(j)];
  });
}

Val Tape::slice(const Val& v, int start, int len) {
  const Tensor& tv = value_of(v);
  if (tv.rank() != 1) throw DimensionError("slice expects a vector, got " + tv.shape_str());
  if (start < 0 || len < 1 || start + len > tv.size())
    throw ContractError("slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                        ") out of range for " + tv.shape_str());
  Tensor out({len});
  for (int j = 0; j < len; ++j) out[j] = tv[start + j];
  int iv = v.id();
  return make(std::move(out), needs(v), [iv, start, len](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    auto& gv = tp.grad_of(iv);
    for (int j = 0; j < len; ++j) gv[static_cast<size_t>(start + j)] += g[static_cast<size_t>(j)];
  });
}

Val Tape::concat(std::span<const Val> parts) {
  if (parts.empty()) throw DomainError("concat of zero vectors");
  int total = 0;
  bool ng = false;
  for (const Val& p : parts) {
    const Tensor& t = value_of(p);
    if (t.rank() != 1) throw DimensionError("concat expects vectors, got " + t.shape_str());
    total += t.size();
    ng = ng || needs(p);
  }
  Tensor out({total});
  std::vector<int> ids;
  std::vector<int> sizes;
  int off = 0;
  for (const Val& p : parts) {
    const Tensor& t = value_of(p);
    for (int j = 0; j < t.size(); ++j) out[off + j] = t[j];
    ids.push_back(p.id());
    sizes.push_back(t.size());
    off += t.size();
  }
  return make(std::move(out), ng, [ids, sizes](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    size_t off2 = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
      if (tp.node(ids[k]).needs_grad) {
        auto& gp = tp.grad_of(ids[k]);
        for (int j = 0; j < sizes[k]; ++j) gp[static_cast<size_t>(j)] += g[off2 + j];
      }
      off2 += static_cast<size_t>(sizes[k]);
    }
  });
}

Val Tape::stack_rows(std::span<const Val> rows) {
  if (rows.empty()) throw DomainError("stack_rows of zero rows");
  int d = value_of(rows[0]).size();
  bool ng = false;
  std::vector<int> ids;
  ids.reserve(rows.size());
  for (const Val& r : rows) {
    const Tensor& t = value_of(r);
    if (t.rank() != 1 || t.size() != d)
      throw DimensionError("stack_rows: row shape " + t.shape_str() + " does not match [" +
                           std::to_string(d) + "]");
    ng = ng || needs(r);
    ids.push_back(r.id());
  }
  Tensor out({static_cast<int>(rows.size()), d});
  for (size_t i = 0; i < rows.size(); ++i) {
    const Tensor& t = value_of(rows[i]);
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = t[j];
  }
  return make(std::move(out), ng, [ids, d](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    for (size_t i = 0; i < ids.size(); ++i) {
      if (!tp.node(ids[i]).needs_grad) continue;
      auto& gr = tp.grad_of(ids[i]);
      for (int j = 0; j < d; ++j) gr[static_cast<size_t>(j)] += g[i * d + j];
    }
  });
}

Val Tape::stack_rows3(std::span<const Val> rows, int d0, int d1) {
  if (static_cast<size_t>(d0) * static_cast<size_t>(d1) != rows.size())
    throw DimensionError("stack_rows3: " + std::to_string(rows.size()) + " rows for grid " +
                         std::to_string(d0) + "x" + std::to_string(d1));
  int v = value_of(rows[0]).size();
  bool ng = false;
  std::vector<int> ids;
  ids.reserve(rows.size());
  for (const Val& r : rows) {
    const Tensor& t = value_of(r);
    if (t.rank() != 1 || t.size() != v)
      throw DimensionError("stack_rows3: row shape " + t.shape_str() + " does not match [" +
                           std::to_string(v) + "]");
    ng = ng || needs(r);
    ids.push_back(r.id());
  }
  Tensor out({d0, d1, v});
  for (size_t i = 0; i < rows.size(); ++i) {
    const Tensor& t = value_of(rows[i]);
    for (int j = 0; j < v; ++j) out.data()[i * v + j] = t[j];
  }
  return make(std::move(out), ng, [ids, v](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    for (size_t i = 0; i < ids.size(); ++i) {
      if (!tp.node(ids[i]).needs_grad) continue;
      auto& gr = tp.grad_of(ids[i]);
      for (int j = 0; j < v; ++j) gr[static_cast<size_t>(j)] += g[i * v + j];
    }
  });
}

Val Tape::gather_rows(const Val& table, std::span<const int> ids) {
  const Tensor& tt = value_of(table);
  if (tt.rank() != 2) throw DimensionError("gather_rows expects a matrix, got " + tt.shape_str());
  int v = tt.rows(), d = tt.cols();
  for (int id : ids) {
    if (id < 0 || id >= v)
      throw ContractError("gather_rows: id " + std::to_string(id) + " out of range for " +
                          tt.shape_str());
  }
  Tensor out({static_cast<int>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = tt.at(ids[i], j);
  int it = table.id();
  std::vector<int> idv(ids.begin(), ids.end());
  return make(std::move(out), needs(table), [it, idv, d](Tape& tp, int self) {
    const auto& g = tp.grad_of(self);
    auto& gt = tp.grad_of(it);
    for (size_t i = 0; i < idv.size(); ++i)
      for (int j = 0; j < d; ++j)
        gt[static_cast<size_t>(idv[i]) * d + j] += g[i * d + j];
  });
}

Val Tape::pick(const Val& v, int flat_index) {
  const Tensor& tv = value_of(v);
  if (flat_index < 0 || flat_index >= tv.size())
    throw ContractError("pick index " + std::to_string(flat_index) + " out of range for " +
                        tv.shape_str());
  int iv = v.id();
  return make(Tensor::scalar(tv[flat_index]), needs(v), [iv, flat_index](Tape& tp, int self) {
    tp.grad_of(iv)[static_cast<size_t>(flat_index)] += tp.grad_of(self)[0];
  });
}

// --- finite differences ---------------------------------------------------

double finite_diff_check(const std::function<double(bool)>& f,
                         std::span<Tensor* const> params, double eps,
                         int max_coords_per_param, std::uint64_t seed) {
  for (Tensor* p : params) p->zero_grad();
  double base = f(true);
  double again = f(false);
  if (base != again) {
    throw VerificationError("non-deterministic function under check: " + std::to_string(base) +
                            " vs " + std::to_string(again));
  }

  std::mt19937 rng(static_cast<std::uint32_t>(seed));
  double max_rel = 0.0;
  for (Tensor* p : params) {
    std::vector<double> analytic = p->grad();
    if (analytic.empty()) analytic.assign(static_cast<size_t>(p->size()), 0.0);
    std::vector<int> coords(static_cast<size_t>(p->size()));
    std::iota(coords.begin(), coords.end(), 0);
    if (p->size() > max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<size_t>(max_coords_per_param));
    }
    for (int c : coords) {
      double orig = (*p)[c];
      (*p)[c] = orig + eps;
      double lp = f(false);
      (*p)[c] = orig - eps;
      double lm = f(false);
      (*p)[c] = orig;
      double numeric = (lp - lm) / (2.0 * eps);
      double a = analytic[static_cast<size_t>(c)];
      double rel = std::abs(a - numeric) /
                   std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace cbxt
