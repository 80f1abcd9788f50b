#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace moescore {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

enum class Mode { kTrain, kEval };

// Dense row-major array of doubles with a same-shape gradient buffer.
//
// The gradient buffer is always allocated and starts at zero. Backward
// functions accumulate into it only when requires_grad() is set, which is
// how frozen parameters are kept out of training.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> grad() noexcept { return grad_; }
  std::span<const double> grad() const noexcept { return grad_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t l, std::size_t i, std::size_t j) {
    return data_[(l * shape_[1] + i) * shape_[2] + j];
  }
  double at(std::size_t l, std::size_t i, std::size_t j) const {
    return data_[(l * shape_[1] + i) * shape_[2] + j];
  }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool value) noexcept { requires_grad_ = value; }

  void zero_grad();
  void fill(double value);
  bool all_finite() const;

  // Row `i` of a rank-2 tensor.
  std::span<const double> row(std::size_t i) const;
  std::span<double> row(std::size_t i);

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
  bool requires_grad_ = false;
};

// Seeded generator: std::mt19937_64 plus hand-written transforms so that the
// draw sequence does not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent generator for a named sub-stream of a run seed.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller (one draw per call, no caching).
  double normal();
  // Uniform integer on [0, n).
  std::size_t below(std::size_t n);

  template <class T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Fills with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_uniform_fan_in(Tensor& t, std::size_t fan_in, Rng& rng);

}  // namespace moescore
