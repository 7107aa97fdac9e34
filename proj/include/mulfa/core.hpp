#ifndef MULFA_CORE_HPP
#define MULFA_CORE_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mulfa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base of every error raised by the library. The category maps onto the
/// command-line exit code contract.
class Error : public std::runtime_error {
 public:
  enum class Category { validation = 1, numerical = 2, io = 3 };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  Category category_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(Category::validation, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(Category::numerical, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(Category::io, what) {}
};

/// Split top-layer code over a mini-batch. Columns are samples.
struct BatchRepresentation {
  Matrix y_tilde;  // v x N, sigmoid outputs
  Matrix z_tilde;  // u x N, affine outputs

  Eigen::Index samples() const { return y_tilde.cols(); }
};

// splitmix64 finalizer; derives independent child seeds from a parent seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Portable random source. Only the raw mt19937_64 stream is used so that
/// every derived value is identical across standard library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mulfa

#endif  // MULFA_CORE_HPP
