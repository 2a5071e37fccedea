#include "storytag/parameters.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace storytag {

nn::Parameter& ParameterStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init,
                                   std::mt19937_64& rng, double range) {
  if (params_.contains(name)) throw std::logic_error("duplicate parameter " + name);
  nn::Parameter p;
  switch (init) {
    case Init::zeros:
      p.value = nn::Matrix::Zero(rows, cols);
      break;
    case Init::ones:
      p.value = nn::Matrix::Ones(rows, cols);
      break;
    case Init::uniform:
    case Init::xavier: {
      const double a = init == Init::xavier ? std::sqrt(6.0 / static_cast<double>(rows + cols)) : range;
      std::uniform_real_distribution<double> dist(-a, a);
      p.value.resize(rows, cols);
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
      break;
    }
  }
  return params_.emplace(name, std::move(p)).first->second;
}

nn::Parameter& ParameterStore::buffer(const std::string& name, nn::Matrix value) {
  if (params_.contains(name)) throw std::logic_error("duplicate parameter " + name);
  nn::Parameter p{std::move(value), false, false};
  return params_.emplace(name, std::move(p)).first->second;
}

nn::Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

const nn::Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

double ParameterStore::decayed_norm_squared() const {
  double s = 0.0;
  for (const auto& [name, p] : params_) {
    if (p.decay && p.trainable) s += p.value.squaredNorm();
  }
  return s;
}

std::uint64_t ParameterStore::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, p] : params_) {
    mix(name.data(), name.size());
    const std::int64_t shape[2] = {p.value.rows(), p.value.cols()};
    mix(shape, sizeof(shape));
    mix(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
  return h;
}

}  // namespace storytag
