#pragma once

#include <array>

#include "nvdnp/types.hpp"

namespace nvdnp {

/// Physical constants and couplings of one NV–13C pair. Frequencies are
/// cyclic (Hz), gyromagnetic ratios in Hz/G, the field in gauss.
struct SystemParams {
  double d_hz = 2.87e9;       // zero-field splitting
  double gamma_e = 2.8e6;     // electron, Hz/G
  double gamma_c = 1.07e3;    // 13C, Hz/G
  double b_z = 520.0;         // axial field, G
  double a_zz = -686.5546e3;  // axial hyperfine, signed
  double a_ani = 215.3535e3;  // transverse hyperfine magnitude
  double phi = 0.0;           // hyperfine azimuthal phase, rad

  /// Throws DomainError when a_ani < 0 or any value is not finite.
  void validate() const;

  bool operator==(const SystemParams&) const = default;
};

struct SpinOperators {
  Mat6 s_z;
  Mat6 s_x;
  Mat6 s_z2;
  Mat6 i_z;
  Mat6 i_plus;
  Mat6 i_minus;
  Mat6 identity;
};

/// Composite operators on the product space in the fixed basis order.
const SpinOperators& spin_operators();

/// Secular Hamiltonian H0 in Hz.
Mat6 static_hamiltonian(const SystemParams& p);

struct MixingAngles {
  double theta;        // m_s = +1: atan2(A_ani, A_zz + γc·Bz)
  double theta_prime;  // m_s = −1: atan2(A_ani, −A_zz + γc·Bz)
};

MixingAngles mixing_angles(const SystemParams& p);

/// Closed-form spectrum of H0.
///
/// Index k holds ψ_{k+1}. ψ1 = |0,↑⟩ and ψ2 = |0,↓⟩. ψ3/ψ4 are the lower and
/// upper eigenstates of the m_s = −1 manifold, ψ5/ψ6 those of m_s = +1, so
/// E3,4 = D − γe·Bz ∓ ½√(A_ani² + (A_zz − γc·Bz)²) and
/// E5,6 = D + γe·Bz ∓ ½√(A_ani² + (A_zz + γc·Bz)²).
struct EigenSystem {
  std::array<double, kDim> energies{};
  std::array<Vec6, kDim> states{};
  double theta = 0.0;
  double theta_prime = 0.0;

  /// Index of the lower/upper eigenstate of a nonzero electron manifold.
  static constexpr int lower(Manifold ms) { return ms == Manifold::Minus ? 2 : 4; }
  static constexpr int upper(Manifold ms) { return ms == Manifold::Minus ? 3 : 5; }
};

EigenSystem eigen_system(const SystemParams& p);

/// Displacement NV → 13C in nm, NV frame (z along the NV axis).
struct LatticeVector {
  Eigen::Vector3d r_nm;
};

struct HyperfineComponents {
  double a_zz;
  double a_ani;
  double phi;
  Eigen::Matrix3d tensor;  // Hz
  double coupling_scale;   // μ0 ħ γe γc / (4π r³) in Hz
};

/// Point-dipole hyperfine tensor A_ij = −K(3 r_i r_j / r² − δ_ij).
/// Throws DomainError for a zero-length vector.
HyperfineComponents hyperfine_from_geometry(const LatticeVector& v, const SystemParams& p);

}  // namespace nvdnp
