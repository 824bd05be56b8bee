#include "refvos/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace refvos {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int e : s) {
    if (e <= 0) throw ContractError("tensor extent must be positive, got shape " + shape_str(s));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

Tensor::Tensor(Shape shape) {
  d_ = std::make_shared<TensorData>();
  std::size_t n = shape_numel(shape);
  d_->shape = std::move(shape);
  d_->values.assign(n, 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  d_ = std::make_shared<TensorData>();
  std::size_t n = shape_numel(shape);
  if (n != values.size())
    throw ContractError("tensor data length " + std::to_string(values.size()) +
                        " does not match shape " + shape_str(shape));
  d_->shape = std::move(shape);
  d_->values = std::move(values);
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  for (auto& x : t.d_->values) x = v;
  return t;
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::from(Shape shape, std::initializer_list<double> v) {
  return Tensor(std::move(shape), std::vector<double>(v));
}

int Tensor::dim(int axis) const {
  int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ContractError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  return d_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape()));
  return d_->values[0];
}

static std::size_t flat_index(const Shape& shape, std::initializer_list<int> idx) {
  if (idx.size() != shape.size())
    throw ContractError("index rank mismatch for shape " + shape_str(shape));
  std::size_t off = 0;
  std::size_t i = 0;
  for (int v : idx) {
    if (v < 0 || v >= shape[i]) throw ContractError("index out of bounds for shape " + shape_str(shape));
    off = off * static_cast<std::size_t>(shape[i]) + static_cast<std::size_t>(v);
    ++i;
  }
  return off;
}

double Tensor::at(std::initializer_list<int> idx) const { return d_->values[flat_index(shape(), idx)]; }

void Tensor::set(std::initializer_list<int> idx, double v) { d_->values[flat_index(shape(), idx)] = v; }

Tensor& Tensor::set_requires_grad(bool rg) {
  d_->requires_grad = rg;
  return *this;
}

Tensor& Tensor::mark_param(const std::string& name) {
  d_->requires_grad = true;
  d_->is_param = true;
  d_->name = name;
  return *this;
}

std::vector<double>& Tensor::grad() {
  if (!has_grad()) throw ContractError("tensor has no gradient" + (d_->name.empty() ? "" : ": " + d_->name));
  return d_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient" + (d_->name.empty() ? "" : ": " + d_->name));
  return d_->grad;
}

void Tensor::ensure_grad() {
  if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::memset(d_->grad.data(), 0, d_->grad.size() * sizeof(double));
}

namespace {
thread_local Tape* t_active_tape = nullptr;
thread_local bool t_no_grad = false;
thread_local GradSink* t_active_sink = nullptr;
}  // namespace

std::vector<double>& GradSink::slot(TensorData* t) {
  auto it = grads_.find(t);
  if (it == grads_.end()) it = grads_.emplace(t, std::vector<double>(t->values.size(), 0.0)).first;
  return it->second;
}

void GradSink::merge() {
  for (auto& [node, g] : grads_) {
    if (node->grad.empty()) node->grad.assign(node->values.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) node->grad[i] += g[i];
  }
}

void Tape::record(std::function<void()> backward_fn) {
  if (consumed_) throw ContractError("recording onto a consumed tape");
  entries_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss, GradSink* sink) {
  if (consumed_) throw ContractError("backward on a consumed tape");
  if (entries_.empty()) throw ContractError("backward on an empty tape");
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  loss.node()->grad.assign(1, 1.0);
  GradSink* prev_sink = t_active_sink;
  t_active_sink = sink;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  t_active_sink = prev_sink;
  consumed_ = true;
  entries_.clear();  // releases saved activations
}

TapeScope::TapeScope(Tape& tape) : prev_(t_active_tape) { t_active_tape = &tape; }
TapeScope::~TapeScope() { t_active_tape = prev_; }

NoGradGuard::NoGradGuard() : prev_(t_no_grad) { t_no_grad = true; }
NoGradGuard::~NoGradGuard() { t_no_grad = prev_; }

Tape* active_tape() { return t_active_tape; }

bool grad_enabled() { return t_active_tape != nullptr && !t_no_grad; }

void accumulate_grad(TensorData* t, const double* g, std::size_t n) {
  if (n != t->values.size()) throw ContractError("gradient size mismatch for shape " + shape_str(t->shape));
  double* dst;
  if (t->is_param && t_active_sink) {
    dst = t_active_sink->slot(t).data();
  } else {
    if (t->grad.empty()) t->grad.assign(n, 0.0);
    dst = t->grad.data();
  }
  for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
}

void finalize_output(TensorData& t, const char* op_name) {
  const Precision p = precision();
  if (p == Precision::f32) {
    for (auto& v : t.values) v = static_cast<double>(static_cast<float>(v));
  }
  for (const auto& v : t.values) {
    if (!std::isfinite(v))
      throw NumericError(std::string(op_name) + " produced a non-finite value");
  }
}

}  // namespace refvos
