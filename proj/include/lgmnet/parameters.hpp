// Copyright 2026 The lgmnet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "lgmnet/autodiff.hpp"

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgmnet {

/// A named learnable matrix with its most recent gradient.
struct Parameter {
  std::string name;
  Matrix<float> value;
  std::optional<Matrix<float>> grad;
};

/// Ordered collection of learnable parameters. Order is insertion order and
/// is what the optimizer and the checkpoint writer iterate over.
class ParameterStore {
 public:
  Parameter& add(std::string name, Matrix<float> value) {
    if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter '" + name + "'");
    params_.push_back({std::move(name), std::move(value), std::nullopt});
    return params_.back();
  }

  const Parameter* find(const std::string& name) const {
    for (const auto& p : params_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
  Parameter* find(const std::string& name) {
    return const_cast<Parameter*>(static_cast<const ParameterStore*>(this)->find(name));
  }

  const Parameter& at(const std::string& name) const {
    if (const auto* p = find(name)) return *p;
    throw std::out_of_range("no parameter named '" + name + "'");
  }
  Parameter& at(const std::string& name) {
    return const_cast<Parameter&>(static_cast<const ParameterStore*>(this)->at(name));
  }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    throw std::out_of_range("no parameter named '" + name + "'");
  }

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  void clear_grads() {
    for (auto& p : params_) p.grad.reset();
  }

 private:
  std::vector<Parameter> params_;
};

/// Parameters registered as leaves on one tape, in store order.
template <typename Scalar>
class BoundParameters {
 public:
  BoundParameters(Tape<Scalar>& tape, const ParameterStore& store) : store_(&store) {
    tensors_.reserve(store.size());
    for (const auto& p : store.all()) {
      tensors_.push_back(tape.leaf(p.value.template cast<Scalar>(), true));
    }
  }

  /// Uses caller-made leaves, one per store entry with matching shapes.
  BoundParameters(const ParameterStore& store, std::vector<Tensor<Scalar>> tensors)
      : store_(&store), tensors_(std::move(tensors)) {
    if (tensors_.size() != store.size()) throw std::invalid_argument("BoundParameters: tensor count mismatch");
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      const auto& v = store.all()[i].value;
      if (tensors_[i].rows() != v.rows() || tensors_[i].cols() != v.cols()) {
        throw DimensionError("BoundParameters: shape mismatch for '" + store.all()[i].name + "'");
      }
    }
  }

  const Tensor<Scalar>& operator[](const std::string& name) const { return tensors_[store_->index_of(name)]; }
  const std::vector<Tensor<Scalar>>& tensors() const { return tensors_; }

  /// Copies gradients from the tape back into `store` (same layout as the
  /// store this binding was created from). Unreached parameters get zeros.
  void export_grads(ParameterStore& store) const {
    auto& params = store.all();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto g = tensors_[i].grad();
      if (g) {
        params[i].grad = g->template cast<float>();
      } else {
        params[i].grad = Matrix<float>::Zero(params[i].value.rows(), params[i].value.cols());
      }
    }
  }

 private:
  const ParameterStore* store_;
  std::vector<Tensor<Scalar>> tensors_;
};

}  // namespace lgmnet
