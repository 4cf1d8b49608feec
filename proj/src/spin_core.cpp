#include "nvdnp/spin_core.hpp"

#include <cmath>
#include <string>

namespace nvdnp {

namespace {

constexpr double kHbar = 1.054571817e-34;        // J·s
constexpr double kMu0Over4Pi = 1.00000000055e-7;  // T·m/A
constexpr double kHzPerGaussToRadPerSecondTesla = kTwoPi * 1e4;

SpinOperators build_operators() {
  using Mat3 = Eigen::Matrix<Complex, 3, 3>;
  using Mat2 = Eigen::Matrix<Complex, 2, 2>;

  // Electron factor in the order m_s = 0, +1, −1.
  Mat3 sz = Mat3::Zero();
  sz(1, 1) = 1.0;
  sz(2, 2) = -1.0;
  Mat3 sx = Mat3::Zero();
  const double h = 1.0 / std::sqrt(2.0);
  sx(0, 1) = sx(1, 0) = h;
  sx(0, 2) = sx(2, 0) = h;

  Mat2 iz = Mat2::Zero();
  iz(0, 0) = 0.5;
  iz(1, 1) = -0.5;
  Mat2 ip = Mat2::Zero();
  ip(0, 1) = 1.0;

  const auto kron = [](const Mat3& a, const Mat2& b) {
    Mat6 out;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    return out;
  };

  SpinOperators ops;
  ops.s_z = kron(sz, Mat2::Identity());
  ops.s_x = kron(sx, Mat2::Identity());
  ops.s_z2 = kron(sz * sz, Mat2::Identity());
  ops.i_z = kron(Mat3::Identity(), iz);
  ops.i_plus = kron(Mat3::Identity(), ip);
  ops.i_minus = kron(Mat3::Identity(), ip.adjoint());
  ops.identity = Mat6::Identity();
  return ops;
}

Vec6 product_state(Manifold ms, Complex up, Complex down) {
  Vec6 v = Vec6::Zero();
  v(basis_index(ms, NuclearSpin::Up)) = up;
  v(basis_index(ms, NuclearSpin::Down)) = down;
  return v;
}

}  // namespace

void SystemParams::validate() const {
  const double values[] = {d_hz, gamma_e, gamma_c, b_z, a_zz, a_ani, phi};
  for (double v : values)
    if (!std::isfinite(v)) throw DomainError("system parameters must be finite");
  if (a_ani < 0.0) throw DomainError("a_ani must be >= 0, got " + std::to_string(a_ani));
}

const SpinOperators& spin_operators() {
  static const SpinOperators ops = build_operators();
  return ops;
}

Mat6 static_hamiltonian(const SystemParams& p) {
  const SpinOperators& op = spin_operators();
  const Complex phase = std::polar(1.0, p.phi);
  const Mat6 transverse = op.i_plus * std::conj(phase) + op.i_minus * phase;
  return p.d_hz * op.s_z2 + p.gamma_e * p.b_z * op.s_z + p.gamma_c * p.b_z * op.i_z +
         p.a_zz * op.s_z * op.i_z + 0.5 * p.a_ani * op.s_z * transverse;
}

MixingAngles mixing_angles(const SystemParams& p) {
  const double nuclear_zeeman = p.gamma_c * p.b_z;
  return {std::atan2(p.a_ani, p.a_zz + nuclear_zeeman),
          std::atan2(p.a_ani, -p.a_zz + nuclear_zeeman)};
}

EigenSystem eigen_system(const SystemParams& p) {
  const MixingAngles angles = mixing_angles(p);
  const double nz = p.gamma_c * p.b_z;
  const double ez = p.gamma_e * p.b_z;
  const double split_plus = std::hypot(p.a_ani, p.a_zz + nz);
  const double split_minus = std::hypot(p.a_ani, p.a_zz - nz);

  EigenSystem es;
  es.theta = angles.theta;
  es.theta_prime = angles.theta_prime;

  es.energies = {0.5 * nz,
                 -0.5 * nz,
                 p.d_hz - ez - 0.5 * split_minus,
                 p.d_hz - ez + 0.5 * split_minus,
                 p.d_hz + ez - 0.5 * split_plus,
                 p.d_hz + ez + 0.5 * split_plus};

  const Complex eip = std::polar(1.0, p.phi);
  const Complex emip = std::conj(eip);

  es.states[0] = product_state(Manifold::Zero, 1.0, 0.0);
  es.states[1] = product_state(Manifold::Zero, 0.0, 1.0);

  // m_s = −1: effective nuclear field (−A_ani cos φ, −A_ani sin φ, γc·Bz − A_zz).
  const double cp = std::cos(0.5 * angles.theta_prime);
  const double sp = std::sin(0.5 * angles.theta_prime);
  es.states[2] = product_state(Manifold::Minus, sp * emip, cp);
  es.states[3] = product_state(Manifold::Minus, cp, -sp * eip);

  // m_s = +1: effective nuclear field (A_ani cos φ, A_ani sin φ, γc·Bz + A_zz).
  const double c = std::cos(0.5 * angles.theta);
  const double s = std::sin(0.5 * angles.theta);
  es.states[4] = product_state(Manifold::Plus, -s * emip, c);
  es.states[5] = product_state(Manifold::Plus, c, s * eip);
  return es;
}

HyperfineComponents hyperfine_from_geometry(const LatticeVector& v, const SystemParams& p) {
  const double r_nm = v.r_nm.norm();
  if (!(r_nm > 0.0) || !std::isfinite(r_nm))
    throw DomainError("hyperfine_from_geometry: zero-length or non-finite displacement");

  const double r_m = r_nm * 1e-9;
  const double ge = p.gamma_e * kHzPerGaussToRadPerSecondTesla;
  const double gc = p.gamma_c * kHzPerGaussToRadPerSecondTesla;
  // Angular frequency → Hz.
  const double k = kMu0Over4Pi * kHbar * ge * gc / (r_m * r_m * r_m) / kTwoPi;

  const Eigen::Vector3d n = v.r_nm / r_nm;
  Eigen::Matrix3d tensor;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j) tensor(i, j) = tensor(j, i) = -k * (3.0 * n(i) * n(j) - (i == j ? 1.0 : 0.0));

  HyperfineComponents out;
  out.tensor = tensor;
  out.coupling_scale = k;
  out.a_zz = tensor(2, 2);
  out.a_ani = std::hypot(tensor(2, 0), tensor(2, 1));
  out.phi = out.a_ani > 1e-14 * k ? std::atan2(tensor(2, 1), tensor(2, 0)) : 0.0;
  if (out.a_ani <= 1e-14 * k) out.a_ani = 0.0;
  return out;
}

}  // namespace nvdnp
