#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "storytag/autodiff.hpp"

namespace storytag {

/// Ordered collection of named tensors. Node-based storage keeps references
/// stable for the lifetime of the store.
class ParameterStore {
 public:
  enum class Init { zeros, ones, uniform, xavier };

  nn::Parameter& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init,
                     std::mt19937_64& rng, double range = 0.1);
  nn::Parameter& buffer(const std::string& name, nn::Matrix value);

  nn::Parameter& at(const std::string& name);
  const nn::Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.contains(name); }

  std::map<std::string, nn::Parameter>& items() { return params_; }
  const std::map<std::string, nn::Parameter>& items() const { return params_; }

  /// Sum of squares over tensors with `decay` set.
  double decayed_norm_squared() const;
  /// FNV-1a over names, shapes and raw values.
  std::uint64_t checksum() const;

 private:
  std::map<std::string, nn::Parameter> params_;
};

}  // namespace storytag
