#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nvdnp {

using Complex = std::complex<double>;

// Electron (spin-1) ⊗ nuclear (spin-1/2) space.
inline constexpr int kDim = 6;
inline constexpr int kSuperDim = kDim * kDim;

using Mat6 = Eigen::Matrix<Complex, kDim, kDim>;
using Vec6 = Eigen::Matrix<Complex, kDim, 1>;
using Superop = Eigen::Matrix<Complex, kSuperDim, kSuperDim>;
using SuperVec = Eigen::Matrix<Complex, kSuperDim, 1>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class NuclearSpin { Up, Down };

// Electron spin projection m_s.
enum class Manifold : int { Zero = 0, Plus = 1, Minus = -1 };

/// Fixed basis order: |0,↑⟩, |0,↓⟩, |+1,↑⟩, |+1,↓⟩, |−1,↑⟩, |−1,↓⟩.
constexpr int basis_index(Manifold ms, NuclearSpin mc) {
  const int block = ms == Manifold::Zero ? 0 : (ms == Manifold::Plus ? 1 : 2);
  return 2 * block + (mc == NuclearSpin::Up ? 0 : 1);
}

// Error hierarchy. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments or states (non-Hermitian H, zero-length vectors, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure inside a model evaluation (NaN output, ...).
class ModelError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace nvdnp
