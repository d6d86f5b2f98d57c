// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "iposter/errors.hpp"

namespace iposter::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrixf = Matrix<float>;
using Matrixd = Matrix<double>;

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  Matrix<Scalar> m;  // Adam first moment
  Matrix<Scalar> v;  // Adam second moment
};

/// Named trainable tensors in registration order. References returned by add()/get()
/// stay valid for the lifetime of the store.
template <typename Scalar>
class ParameterStore {
 public:
  Parameter<Scalar>& add(std::string name, Matrix<Scalar> init) {
    if (index_.count(name)) throw InvalidInput("duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    auto& p = params_.emplace_back();
    p.name = std::move(name);
    p.grad = Matrix<Scalar>::Zero(init.rows(), init.cols());
    p.m = p.grad;
    p.v = p.grad;
    p.value = std::move(init);
    return p;
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  Parameter<Scalar>& get(std::string_view name) { return params_[lookup(name)]; }
  const Parameter<Scalar>& get(std::string_view name) const { return params_[lookup(name)]; }

  std::deque<Parameter<Scalar>>& params() { return params_; }
  const std::deque<Parameter<Scalar>>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  /// Copy of the values (and optimizer state) converted to another scalar type.
  template <typename Other>
  ParameterStore<Other> cast() const {
    ParameterStore<Other> out;
    for (const auto& p : params_) {
      auto& q = out.add(p.name, p.value.template cast<Other>());
      q.m = p.m.template cast<Other>();
      q.v = p.v.template cast<Other>();
    }
    out.step = step;
    return out;
  }

  /// Adam step count.
  long step = 0;

 private:
  std::size_t lookup(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw InvalidInput("unknown parameter: " + std::string(name));
    return it->second;
  }

  std::deque<Parameter<Scalar>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  int id() const { return id_; }
  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

/// Dynamic reverse-mode tape. Operations push their result together with a closure that
/// propagates the output gradient to their inputs. Single-threaded.
template <typename Scalar>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  /// `record` = false skips closure creation (inference); `checked` rejects non-finite values.
  explicit Tape(bool record = true, bool checked = false) : record_(record), checked_(checked) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  bool checked() const { return checked_; }

  Var<Scalar> constant(Matrix<Scalar> value) { return push_leaf(std::move(value), false, nullptr, "constant"); }

  /// A leaf whose gradient is kept and readable via grad() after backward.
  Var<Scalar> input(Matrix<Scalar> value) { return push_leaf(std::move(value), record_, nullptr, "input"); }

  Var<Scalar> param(Parameter<Scalar>& p) { return push_leaf(p.value, record_, &p, p.name.c_str()); }

  /// Records an op result. `backward` may be empty when no parent needs a gradient.
  Var<Scalar> push(Matrix<Scalar> value, std::initializer_list<int> parents, Backward backward, const char* op) {
    return push(std::move(value), std::span<const int>(parents.begin(), parents.size()), std::move(backward), op);
  }

  Var<Scalar> push(Matrix<Scalar> value, std::span<const int> parents, Backward backward, const char* op) {
    bool needs = false;
    if (record_) {
      for (int p : parents) needs = needs || nodes_[p].requires_grad;
    }
    check(value, op);
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Matrix<Scalar>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulator of a node, allocated as zeros on first access.
  Matrix<Scalar>& grad(int id) {
    auto& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix<Scalar>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  Matrix<Scalar> grad(const Var<Scalar>& v) {
    return grad(v.id());
  }

  /// Reverse sweep from a scalar loss; parameter gradients are added to Parameter::grad.
  void backward(const Var<Scalar>& loss) {
    if (!record_) throw InvalidInput("backward: tape was created without recording");
    const auto& lv = value(loss.id());
    if (lv.rows() != 1 || lv.cols() != 1) throw InvalidInput("backward: loss must be a scalar");
    grad(loss.id()).setConstant(Scalar(1));
    for (int id = loss.id(); id >= 0; --id) {
      auto& n = nodes_[id];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param) {
        if (n.param->grad.size() == 0) n.param->grad = Matrix<Scalar>::Zero(n.value.rows(), n.value.cols());
        n.param->grad += n.grad;
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    Backward backward;
    Parameter<Scalar>* param = nullptr;
    bool requires_grad = false;
  };

  Var<Scalar> push_leaf(Matrix<Scalar> value, bool requires_grad, Parameter<Scalar>* p, const char* what) {
    check(value, what);
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.param = p;
    nodes_.push_back(std::move(n));
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  void check(const Matrix<Scalar>& value, const char* what) const {
    if (checked_ && !value.allFinite()) throw NumericsError(std::string("non-finite value produced by ") + what);
  }

  std::deque<Node> nodes_;  // stable references across push
  bool record_;
  bool checked_;
};

}  // namespace iposter::nn
