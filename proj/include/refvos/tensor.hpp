#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "refvos/runtime.hpp"

namespace refvos {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated lazily during backward
  bool requires_grad = false;
  bool is_param = false;
  std::string name;
};

// Value-semantic handle onto a shared dense buffer. Copies alias the same
// storage; ops always allocate fresh outputs, so aliasing never mutates an
// input behind the caller's back.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);
  static Tensor from(Shape shape, std::initializer_list<double> v);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int axis) const;  // negative axis counts from the back
  std::size_t numel() const { return d_->values.size(); }

  double* data() { return d_->values.data(); }
  const double* data() const { return d_->values.data(); }
  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }

  double item() const;  // scalar tensors only
  double at(std::initializer_list<int> idx) const;
  void set(std::initializer_list<int> idx, double v);

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool rg);
  Tensor& mark_param(const std::string& name);
  const std::string& name() const { return d_->name; }

  bool has_grad() const { return d_ && !d_->grad.empty(); }
  std::vector<double>& grad();  // ContractError if absent
  const std::vector<double>& grad() const;
  void ensure_grad();  // allocate zero grad buffer if missing
  void zero_grad();

  TensorData* node() const { return d_.get(); }
  const std::shared_ptr<TensorData>& ptr() const { return d_; }

 private:
  std::shared_ptr<TensorData> d_;
};

// Per-worker destination for parameter gradients, so independent tapes can
// run backward concurrently and merge deterministically afterwards.
class GradSink {
 public:
  std::vector<double>& slot(TensorData* t);
  // Adds every captured gradient into its parameter's grad buffer.
  void merge();
  bool empty() const { return grads_.empty(); }

 private:
  std::unordered_map<TensorData*, std::vector<double>> grads_;
};

// Ordered record of executed ops. backward() replays the record in reverse
// (a valid reverse topological order, since ops are appended as executed),
// then marks the tape consumed.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_fn);
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  void backward(const Tensor& loss, GradSink* sink = nullptr);

 private:
  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
};

// Activates a tape on the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

Tape* active_tape();
bool grad_enabled();  // a tape is active and no NoGradGuard is in effect

// Accumulates g into t's gradient, routing parameters to the active GradSink
// when one is installed (during sink-backed backward).
void accumulate_grad(TensorData* t, const double* g, std::size_t n);

// Rounds to the current precision and rejects non-finite values.
void finalize_output(TensorData& t, const char* op_name);

}  // namespace refvos
