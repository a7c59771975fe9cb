#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "audiodiff/tensor.hpp"

namespace audiodiff::grad {

// Named parameters in declaration order. The order is the checkpoint payload
// order, so it must not depend on anything but the declaration sequence.
template <typename T>
class ParamStore {
public:
  int add(const std::string& name, Mat<T> value) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    index_[name] = static_cast<int>(values_.size());
    names_.push_back(name);
    values_.push_back(std::move(value));
    return static_cast<int>(values_.size()) - 1;
  }

  int size() const { return static_cast<int>(values_.size()); }
  const std::string& name(int i) const { return names_[static_cast<size_t>(i)]; }
  Mat<T>& value(int i) { return values_[static_cast<size_t>(i)]; }
  const Mat<T>& value(int i) const { return values_[static_cast<size_t>(i)]; }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
    return it->second;
  }
  Mat<T>& operator[](const std::string& name) { return value(find(name)); }
  const Mat<T>& operator[](const std::string& name) const { return value(find(name)); }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& m : values_) n += m.size();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (int i = 0; i < size(); ++i) out.add(name(i), value(i).template cast<U>());
    return out;
  }

private:
  std::vector<std::string> names_;
  std::vector<Mat<T>> values_;
  std::unordered_map<std::string, int> index_;
};

// Gradients aligned with a ParamStore, one Mat per parameter.
template <typename T>
using GradList = std::vector<Mat<T>>;

template <typename T>
struct AdamConfig {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

template <typename T>
class Adam {
public:
  explicit Adam(AdamConfig<T> cfg) : cfg_(cfg) {}

  int64_t step_count() const { return t_; }
  const AdamConfig<T>& config() const { return cfg_; }

  void step(ParamStore<T>& params, const GradList<T>& grads) {
    if (static_cast<int>(grads.size()) != params.size())
      throw std::invalid_argument("adam: gradient list size mismatch");
    if (m_.empty()) {
      for (int i = 0; i < params.size(); ++i) {
        m_.push_back(Mat<T>::zeros(params.value(i).rows, params.value(i).cols));
        v_.push_back(Mat<T>::zeros(params.value(i).rows, params.value(i).cols));
      }
    }
    ++t_;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_)));
    for (int i = 0; i < params.size(); ++i) {
      Mat<T>& p = params.value(i);
      const Mat<T>& g = grads[static_cast<size_t>(i)];
      if (!p.same_shape(g)) throw std::invalid_argument("adam: shape mismatch for " + params.name(i));
      Mat<T>& m = m_[static_cast<size_t>(i)];
      Mat<T>& v = v_[static_cast<size_t>(i)];
      for (size_t j = 0; j < p.size(); ++j) {
        m.v[j] = cfg_.beta1 * m.v[j] + (T(1) - cfg_.beta1) * g.v[j];
        v.v[j] = cfg_.beta2 * v.v[j] + (T(1) - cfg_.beta2) * g.v[j] * g.v[j];
        const T mhat = m.v[j] / bc1;
        const T vhat = v.v[j] / bc2;
        p.v[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

private:
  AdamConfig<T> cfg_;
  int64_t t_ = 0;
  GradList<T> m_, v_;
};

}  // namespace audiodiff::grad
