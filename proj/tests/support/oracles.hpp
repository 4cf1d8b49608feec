#pragma once

#include <random>
#include <span>
#include <vector>

#include "nvdnp/lindblad.hpp"
#include "nvdnp/spin_core.hpp"

namespace oracle {

using nvdnp::Mat6;

/// Spin-1 S_x built from S± = Sx ± iSy ladder elements √(s(s+1) − m(m±1)),
/// embedded in the (0, +1, −1) ⊗ (↑, ↓) basis.
Mat6 ladder_s_x();

/// dρ/dt of the Lindblad equation in matrix form (H in Hz, times 2π).
Mat6 lindblad_rhs(const Mat6& rho, const Mat6& h, std::span<const Mat6> jumps);

/// Fixed-step RK4 with dt = min(dt_max, step_scale / (2π‖H‖ + Σ‖L†L‖)).
Mat6 rk4_evolve(const Mat6& rho, const Mat6& h, std::span<const Mat6> jumps, double seconds,
                double dt_max = 0.1e-9, double step_scale = 0.02);

/// Segment-by-segment RK4 through a schedule, mirroring Evolver's frame and channel gating.
Mat6 rk4_schedule(const Mat6& rho0, const nvdnp::Schedule& s, const nvdnp::SystemParams& p,
                  const nvdnp::RelaxationRates& r, const nvdnp::ModelOptions& options = {});

/// Eigenvalues of a Hermitian matrix in ascending order.
std::vector<double> numeric_spectrum(const Mat6& h);

/// Σ|⟨v|u_k⟩|² over numeric eigenvectors u_k whose eigenvalue is within tol of `energy`.
double subspace_weight(const Mat6& h, const nvdnp::Vec6& v, double energy, double tol);

/// A_zz ∈ [−2, 2] MHz, A_ani ∈ [0, 1] MHz, B_z ∈ [50, 1200] G, φ ∈ [0, 2π).
nvdnp::SystemParams random_params(std::mt19937_64& rng);

/// Random full-rank density matrix.
Mat6 random_density(std::mt19937_64& rng);

/// Random schedule with up to `max_segments` short segments.
nvdnp::Schedule random_schedule(std::mt19937_64& rng, int max_segments, std::int64_t max_ns);

/// Worst trace, Hermiticity and positivity violations along a trajectory.
struct StateDrift {
  double trace = 0.0;
  double hermiticity = 0.0;
  double min_eigenvalue = 1.0;
};

StateDrift trajectory_drift(const nvdnp::Trajectory& t);

/// Random rates with every channel family switched on.
nvdnp::RelaxationRates random_rates(std::mt19937_64& rng);

}  // namespace oracle
