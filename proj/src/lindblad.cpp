#include "nvdnp/lindblad.hpp"

#include <cmath>
#include <ostream>

#include <unsupported/Eigen/MatrixFunctions>

#include "nvdnp/io.hpp"

namespace nvdnp {

namespace {

// Drift above this is repaired after every segment; above kStateTolerance it is an error.
constexpr double kRepairThreshold = 1e-12;

Superop kron(const Mat6& a, const Mat6& b) {
  Superop out;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j) out.block<kDim, kDim>(kDim * i, kDim * j) = a(i, j) * b;
  return out;
}

SuperVec vectorize(const Mat6& m) { return Eigen::Map<const SuperVec>(m.data()); }

Mat6 unvectorize(const SuperVec& v) { return Eigen::Map<const Mat6>(v.data()); }

Mat6 outer(int row, int col) {
  Mat6 m = Mat6::Zero();
  m(row, col) = 1.0;
  return m;
}

// Restores Hermiticity and unit trace; throws if the drift was already too large.
void guard(Mat6& m) {
  const double herm = (m - m.adjoint()).cwiseAbs().maxCoeff();
  const double tr = m.trace().real();
  if (herm > kStateTolerance || std::abs(tr - 1.0) > kStateTolerance)
    throw ModelError("density matrix drift exceeded tolerance (hermiticity " +
                     std::to_string(herm) + ", trace " + std::to_string(tr) + ")");
  if (herm > kRepairThreshold) m = 0.5 * (m + m.adjoint()).eval();
  if (std::abs(tr - 1.0) > kRepairThreshold) m /= tr;
}

}  // namespace

DensityMatrix::DensityMatrix(const Mat6& m) : m_(m) {
  if (!m_.allFinite()) throw DomainError("density matrix has non-finite entries");
  if (hermiticity_error() > kStateTolerance) throw DomainError("density matrix is not Hermitian");
  if (std::abs(trace() - 1.0) > kStateTolerance) throw DomainError("density matrix trace != 1");
  if (min_eigenvalue() < -kStateTolerance) throw DomainError("density matrix is not positive");
}

DensityMatrix DensityMatrix::unchecked(const Mat6& m) { return DensityMatrix(m, UncheckedTag{}); }

double DensityMatrix::min_eigenvalue() const {
  const Mat6 h = 0.5 * (m_ + m_.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat6> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

DensityMatrix initial_mixed_state() {
  Mat6 m = Mat6::Zero();
  m(0, 0) = 0.5;
  m(1, 1) = 0.5;
  return DensityMatrix(m);
}

void RelaxationRates::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw DomainError(std::string("relaxation rate ") + name + " must be finite and >= 0");
  };
  check(gamma_gl, "gamma_gl");
  check(n_th, "n_th");
  for (double g : gamma_dephasing) check(g, "gamma_dephasing");
  check(gamma_nuclear_gl, "gamma_nuclear_gl");
}

Mat6 rotating_hamiltonian(const SystemParams& p, double delta_hz, double omega_hz,
                          const ModelOptions& options) {
  const SpinOperators& op = spin_operators();

  // Electron part assembled per manifold so the GHz carrier never enters the
  // m_s = +1 entries.
  Mat6 h = Mat6::Zero();
  for (NuclearSpin mc : {NuclearSpin::Up, NuclearSpin::Down}) {
    const int plus = basis_index(Manifold::Plus, mc);
    const int minus = basis_index(Manifold::Minus, mc);
    h(plus, plus) = -delta_hz;
    h(minus, minus) = p.d_hz - p.gamma_e * p.b_z;
  }

  const Complex phase = std::polar(1.0, p.phi);
  const Mat6 transverse = op.i_plus * std::conj(phase) + op.i_minus * phase;
  h += p.gamma_c * p.b_z * op.i_z + p.a_zz * op.s_z * op.i_z + 0.5 * p.a_ani * op.s_z * transverse;

  Mat6 drive = op.s_x;
  if (options.restrict_to_driven_subspace) {
    for (NuclearSpin mc : {NuclearSpin::Up, NuclearSpin::Down}) {
      const int zero = basis_index(Manifold::Zero, mc);
      const int minus = basis_index(Manifold::Minus, mc);
      drive(zero, minus) = drive(minus, zero) = 0.0;
    }
  }
  h += omega_hz * drive;
  return h;
}

std::vector<JumpOperator> build_channels(const RelaxationRates& r, const EigenSystem& es,
                                         const ModelOptions& options) {
  r.validate();
  std::vector<JumpOperator> out;

  std::vector<Manifold> optical;
  if (options.optical != OpticalChannels::LowerManifold) optical.push_back(Manifold::Plus);
  if (options.optical != OpticalChannels::DrivenManifold) optical.push_back(Manifold::Minus);

  const double down = r.gamma_gl * (1.0 + r.n_th);
  const double up = r.gamma_gl * r.n_th;
  for (Manifold ms : optical) {
    const std::string tag = ms == Manifold::Plus ? "+1" : "-1";
    for (NuclearSpin mc : {NuclearSpin::Up, NuclearSpin::Down}) {
      const std::string nuc = mc == NuclearSpin::Up ? "up" : "down";
      const int ground = basis_index(Manifold::Zero, mc);
      const int excited = basis_index(ms, mc);
      if (down > 0.0)
        out.push_back({"optical_down_" + tag + "_" + nuc, std::sqrt(down) * outer(ground, excited), true});
      if (up > 0.0)
        out.push_back({"optical_up_" + tag + "_" + nuc, std::sqrt(up) * outer(excited, ground), true});
    }
  }

  const std::array<int, 4> dephased = {0, 1, EigenSystem::lower(Manifold::Plus),
                                       EigenSystem::upper(Manifold::Plus)};
  for (std::size_t i = 0; i < dephased.size(); ++i) {
    if (r.gamma_dephasing[i] <= 0.0) continue;
    const Vec6& psi = es.states[static_cast<std::size_t>(dephased[i])];
    out.push_back({"dephasing_" + std::to_string(i + 1),
                   std::sqrt(r.gamma_dephasing[i]) * psi * psi.adjoint(), false});
  }

  if (r.gamma_nuclear_gl > 0.0) {
    const double amp = std::sqrt(r.gamma_nuclear_gl);
    out.push_back({"nuclear_12", amp * es.states[0] * es.states[1].adjoint(), true});
    out.push_back({"nuclear_21", amp * es.states[1] * es.states[0].adjoint(), true});
  }
  return out;
}

Mat6 Liouvillian::apply(const Mat6& rho) const { return unvectorize(m_ * vectorize(rho)); }

Liouvillian liouvillian(const Mat6& h, std::span<const Mat6> jumps) {
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw DomainError("liouvillian: Hamiltonian is not Hermitian");

  const Mat6 id = Mat6::Identity();
  const Mat6 hw = kTwoPi * h;
  Liouvillian l;
  l.m_ = Complex(0.0, -1.0) * (kron(id, hw) - kron(hw.transpose(), id));
  for (const Mat6& c : jumps) {
    const Mat6 cdc = c.adjoint() * c;
    l.m_ += kron(c.conjugate(), c) - 0.5 * kron(id, cdc) - 0.5 * kron(cdc.transpose(), id);
  }
  return l;
}

Superop segment_propagator(const Mat6& h, std::span<const Mat6> jumps, double seconds) {
  if (jumps.empty()) {
    const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
    if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw DomainError("segment_propagator: Hamiltonian is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Mat6> solver(h);
    Vec6 phases;
    for (int k = 0; k < kDim; ++k)
      phases(k) = std::polar(1.0, -kTwoPi * solver.eigenvalues()(k) * seconds);
    const Mat6 u = solver.eigenvectors() * phases.asDiagonal() * solver.eigenvectors().adjoint();
    return kron(u.conjugate(), u);
  }
  const Liouvillian l = liouvillian(h, jumps);
  const Eigen::MatrixXcd generator = l.matrix() * seconds;
  return generator.exp();
}

Evolver::Evolver(const SystemParams& p, const RelaxationRates& r, const ModelOptions& options)
    : params_(p), rates_(r), options_(options) {
  params_.validate();
  rates_.validate();
  channels_ = build_channels(rates_, eigen_system(params_), options_);
}

const Superop& Evolver::propagator(const PulseSegment& seg, double frame_detuning_hz) {
  const double delta = seg.mw ? seg.mw->detuning_hz : frame_detuning_hz;
  const double omega = seg.mw ? seg.mw->rabi_hz : 0.0;
  const Key key{seg.laser_on, seg.mw_on(), delta, omega, seg.duration_ns};
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  const Mat6 h = rotating_hamiltonian(params_, delta, omega, options_);
  std::vector<Mat6> active;
  for (const JumpOperator& c : channels_)
    if (!c.laser_gated || seg.laser_on) active.push_back(c.op);
  ++built_;
  return cache_.emplace(key, segment_propagator(h, active, static_cast<double>(seg.duration_ns) * 1e-9))
      .first->second;
}

SuperVec Evolver::step(const SuperVec& v, const PulseSegment& seg, double frame_detuning_hz) {
  if (seg.duration_ns == 0) return v;
  Mat6 m = unvectorize(propagator(seg, frame_detuning_hz) * v);
  guard(m);
  return vectorize(m);
}

DensityMatrix Evolver::propagate(const DensityMatrix& rho, const PulseSegment& seg,
                                 double frame_detuning_hz) {
  if (seg.duration_ns < 0) throw DomainError("negative segment duration");
  return DensityMatrix::unchecked(unvectorize(step(vectorize(rho.matrix()), seg, frame_detuning_hz)));
}

std::vector<double> frame_detunings(const Schedule& s) {
  double carrier = 0.0;
  for (const PulseSegment& seg : s.segments)
    if (seg.mw) {
      carrier = seg.mw->detuning_hz;
      break;
    }
  std::vector<double> out;
  out.reserve(s.segments.size());
  for (const PulseSegment& seg : s.segments) {
    if (seg.mw) carrier = seg.mw->detuning_hz;
    out.push_back(carrier);
  }
  return out;
}

DensityMatrix Evolver::evolve_final(const DensityMatrix& rho0, const Schedule& s) {
  const std::vector<double> frames = frame_detunings(s);
  SuperVec v = vectorize(rho0.matrix());
  for (std::size_t i = 0; i < s.segments.size(); ++i) {
    if (s.segments[i].duration_ns < 0) throw DomainError("negative segment duration");
    v = step(v, s.segments[i], frames[i]);
  }
  return DensityMatrix::unchecked(unvectorize(v));
}

Trajectory Evolver::evolve(const DensityMatrix& rho0, const Schedule& s, const Sampling& sampling) {
  using Mode = Sampling::Mode;
  if (sampling.mode == Mode::Final) return {{s.total_duration_ns(), evolve_final(rho0, s)}};
  if (sampling.mode == Mode::Interval && sampling.interval_ns <= 0)
    throw DomainError("sampling interval must be > 0");

  const std::vector<double> frames = frame_detunings(s);
  Trajectory out{{0, rho0}};
  SuperVec v = vectorize(rho0.matrix());
  std::int64_t t = 0;
  for (std::size_t i = 0; i < s.segments.size(); ++i) {
    const PulseSegment& seg = s.segments[i];
    if (seg.duration_ns < 0) throw DomainError("negative segment duration");
    const std::int64_t end = t + seg.duration_ns;
    if (sampling.mode == Mode::Boundaries) {
      v = step(v, seg, frames[i]);
      t = end;
      out.push_back({t, DensityMatrix::unchecked(unvectorize(v))});
      continue;
    }
    while (t < end) {
      const std::int64_t next = std::min(end, (t / sampling.interval_ns + 1) * sampling.interval_ns);
      PulseSegment piece = seg;
      piece.duration_ns = next - t;
      v = step(v, piece, frames[i]);
      t = next;
      if (t % sampling.interval_ns == 0 || t == s.total_duration_ns())
        out.push_back({t, DensityMatrix::unchecked(unvectorize(v))});
    }
  }
  return out;
}

DensityMatrix propagate_segment(const DensityMatrix& rho, const PulseSegment& seg,
                                const SystemParams& p, const RelaxationRates& r,
                                const ModelOptions& options) {
  Evolver ev(p, r, options);
  return ev.propagate(rho, seg, seg.mw ? seg.mw->detuning_hz : 0.0);
}

Trajectory evolve_schedule(const DensityMatrix& rho0, const Schedule& s, const SystemParams& p,
                           const RelaxationRates& r, const Sampling& sampling,
                           const ModelOptions& options) {
  Evolver ev(p, r, options);
  return ev.evolve(rho0, s, sampling);
}

void write_trajectory_csv(std::ostream& os, const Trajectory& t) {
  os << "time_ns";
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j) os << ",rho_re_" << i << j << ",rho_im_" << i << j;
  os << ",P\n";
  for (const TrajectoryPoint& pt : t) {
    const Mat6& m = pt.rho.matrix();
    os << pt.time_ns;
    for (int i = 0; i < kDim; ++i)
      for (int j = 0; j < kDim; ++j)
        os << ',' << format_double(m(i, j).real()) << ',' << format_double(m(i, j).imag());
    const double up = m(0, 0).real();
    const double down = m(1, 1).real();
    const double sum = up + down;
    os << ',' << (sum > 1e-12 ? format_double((up - down) / sum) : std::string("nan")) << '\n';
  }
}

}  // namespace nvdnp
