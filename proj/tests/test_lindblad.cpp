#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "nvdnp/experiments.hpp"
#include "nvdnp/lindblad.hpp"
#include "nvdnp/presets.hpp"
#include "oracles.hpp"

using namespace nvdnp;

namespace {

const Preset& fit_preset() { return find_preset("table-a1-fit"); }

Mat6 outer(int i, int j) {
  Mat6 m = Mat6::Zero();
  m(i, j) = 1.0;
  return m;
}

double max_abs(const Mat6& m) { return m.cwiseAbs().maxCoeff(); }

const int kPlusUp = basis_index(Manifold::Plus, NuclearSpin::Up);
const int kPlusDown = basis_index(Manifold::Plus, NuclearSpin::Down);
const int kZeroUp = basis_index(Manifold::Zero, NuclearSpin::Up);

}  // namespace

TEST(DensityMatrix, InitialState) {
  const DensityMatrix rho = initial_mixed_state();
  EXPECT_DOUBLE_EQ(rho.trace(), 1.0);
  EXPECT_DOUBLE_EQ(rho.purity(), 0.5);
  EXPECT_EQ(polarization_of_state(rho).p, 0.0);
  for (int i = 0; i < kDim; ++i) EXPECT_EQ(rho.population(i), i < 2 ? 0.5 : 0.0);
}

TEST(DensityMatrix, ValidationRejectsBadStates) {
  Mat6 m = Mat6::Zero();
  m(0, 0) = 1.0;
  EXPECT_NO_THROW(DensityMatrix{m});
  m(0, 0) = 0.9;
  EXPECT_THROW(DensityMatrix{m}, DomainError);
  m(0, 0) = 1.2;
  m(1, 1) = -0.2;
  EXPECT_THROW(DensityMatrix{m}, DomainError);
  m = Mat6::Zero();
  m(0, 0) = m(1, 1) = 0.5;
  m(0, 1) = 0.1;
  EXPECT_THROW(DensityMatrix{m}, DomainError);
}

TEST(RotatingHamiltonian, UndrivenIsBlockDiagonal) {
  const SystemParams p = fit_preset().params;
  const Mat6 h = rotating_hamiltonian(p, 0.0, 0.0);
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j)
      if (i / 2 != j / 2) {
        EXPECT_EQ(h(i, j), Complex(0.0));
      }
  EXPECT_DOUBLE_EQ(h(0, 0).real(), 0.5 * p.gamma_c * p.b_z);
  EXPECT_DOUBLE_EQ(h(1, 1).real(), -0.5 * p.gamma_c * p.b_z);
  EXPECT_EQ(h(0, 1), Complex(0.0));
}

TEST(RotatingHamiltonian, DriveElements) {
  const SystemParams p = fit_preset().params;
  const double omega = 294.1176e3;
  const Mat6 h = rotating_hamiltonian(p, 0.0, omega);
  const Mat6& sx = spin_operators().s_x;
  for (NuclearSpin n : {NuclearSpin::Up, NuclearSpin::Down}) {
    const int z = basis_index(Manifold::Zero, n), plus = basis_index(Manifold::Plus, n);
    EXPECT_NEAR(std::abs(h(z, plus)), omega / std::sqrt(2.0), 1e-9);
    EXPECT_EQ(h(z, plus), omega * sx(z, plus));
  }
  const Mat6 restricted = rotating_hamiltonian(p, 0.0, omega, {.restrict_to_driven_subspace = true});
  EXPECT_EQ(restricted(0, basis_index(Manifold::Minus, NuclearSpin::Up)), Complex(0.0));
  EXPECT_NE(h(0, basis_index(Manifold::Minus, NuclearSpin::Up)), Complex(0.0));
}

TEST(RotatingHamiltonian, FrameConsistency) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 100; ++k) {
    const SystemParams p = oracle::random_params(rng);
    const EigenSystem es = eigen_system(p);
    const Mat6 h = rotating_hamiltonian(p, 123e3, 0.0);
    const Eigen::Matrix2cd block = h.block<2, 2>(2, 2);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> s(block);
    const double split = s.eigenvalues()(1) - s.eigenvalues()(0);
    EXPECT_NEAR(split, es.energies[5] - es.energies[4], 1e-10 * std::max(1.0, split));
    // Frame shift: the +1 block sits at −Δ relative to the carrier.
    EXPECT_NEAR(s.eigenvalues().sum(), -2 * 123e3, 1e-6);
  }
}

TEST(Channels, Counts) {
  const EigenSystem es = eigen_system(fit_preset().params);
  const auto table = build_channels(fit_preset().rates, es);
  ASSERT_EQ(table.size(), 2u);
  for (const auto& c : table) {
    EXPECT_TRUE(c.laser_gated);
    EXPECT_NEAR(max_abs(c.op), std::sqrt(8e6), 1e-6);
  }

  RelaxationRates r = fit_preset().rates;
  r.n_th = 0.0;
  for (const auto& c : build_channels(r, es)) EXPECT_EQ(c.name.find("optical_up"), std::string::npos);
  r.n_th = 0.25;
  EXPECT_EQ(build_channels(r, es).size(), 4u);

  RelaxationRates d{};
  d.gamma_gl = 0.0;
  d.gamma_dephasing = {1e6, 0.0, 0.0, 0.0};
  const auto one = build_channels(d, es);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_FALSE(one[0].laser_gated);
  EXPECT_LE(max_abs(one[0].op - std::sqrt(1e6) * outer(0, 0)), 1e-12);

  std::mt19937_64 rng(1);
  const RelaxationRates all = oracle::random_rates(rng);
  EXPECT_EQ(build_channels(all, es).size(), 4u + 4u + 2u);
  EXPECT_EQ(build_channels(all, es, {.optical = OpticalChannels::BothManifolds}).size(), 8u + 4u + 2u);
}

TEST(Channels, RejectNegativeRates) {
  RelaxationRates r;
  r.gamma_gl = -1.0;
  EXPECT_THROW(r.validate(), DomainError);
  r = {};
  r.gamma_dephasing[2] = -1.0;
  EXPECT_THROW(build_channels(r, eigen_system({})), DomainError);
}

TEST(Liouvillian, GeneratorIsTracelessAndHermitianPreserving) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 50; ++k) {
    const SystemParams p = oracle::random_params(rng);
    const RelaxationRates r = oracle::random_rates(rng);
    std::vector<Mat6> ops;
    for (const auto& c : build_channels(r, eigen_system(p))) ops.push_back(c.op);
    const Liouvillian l = liouvillian(rotating_hamiltonian(p, 1e5, 2e5), ops);
    const Mat6 rho = oracle::random_density(rng);
    const Mat6 out = l.apply(rho);
    const double scale = max_abs(out);
    EXPECT_LE(std::abs(out.trace()), 1e-12 * scale);
    EXPECT_LE(max_abs(out - out.adjoint()), 1e-12 * scale);
    // Oracle in matrix form.
    EXPECT_LE(max_abs(out - oracle::lindblad_rhs(rho, rotating_hamiltonian(p, 1e5, 2e5), ops)), 1e-12 * scale);
  }
}

TEST(Liouvillian, UnitaryGeneratorTraceless) {
  const Mat6 h = rotating_hamiltonian(fit_preset().params, 0.0, 3e5);
  std::mt19937_64 rng(8);
  const Mat6 out = liouvillian(h, {}).apply(oracle::random_density(rng));
  EXPECT_LE(std::abs(out.trace()), 1e-12 * max_abs(out));
}

TEST(Liouvillian, RejectsNonHermitian) {
  Mat6 h = Mat6::Zero();
  h(0, 1) = 1.0;
  EXPECT_THROW(liouvillian(h, {}), DomainError);
  EXPECT_THROW(segment_propagator(h, {}, 1e-9), DomainError);
}

// Two-level amplitude damping: ρ_ee(t) = e^{−Γt}, nonzero generator eigenvalues −Γ and −Γ/2.
TEST(Liouvillian, TwoLevelDecayOracle) {
  const double gamma = 8e6;
  const Mat6 l = std::sqrt(gamma) * outer(kZeroUp, kPlusUp);
  const std::vector<Mat6> ops{l};
  const Liouvillian gen = liouvillian(Mat6::Zero(), ops);

  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(gen.matrix());
  double most_negative = 0.0;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    const Complex ev = solver.eigenvalues()(i);
    EXPECT_NEAR(ev.imag(), 0.0, 1e-6);
    most_negative = std::min(most_negative, ev.real());
  }
  EXPECT_NEAR(most_negative, -gamma, 1e-6 * gamma);

  Mat6 rho = outer(kPlusUp, kPlusUp);
  for (double t : {1e-9, 30e-9, 125e-9, 1e-6}) {
    const Superop prop = segment_propagator(Mat6::Zero(), ops, t);
    SuperVec v = Eigen::Map<const SuperVec>(rho.data());
    v = prop * v;
    const Mat6 out = Eigen::Map<const Mat6>(v.data());
    EXPECT_NEAR(out(kPlusUp, kPlusUp).real(), std::exp(-gamma * t), 1e-12);
    EXPECT_NEAR(out(kZeroUp, kZeroUp).real(), 1.0 - std::exp(-gamma * t), 1e-12);
  }
}

TEST(Liouvillian, FiniteDifferenceConvergesFirstOrder) {
  std::mt19937_64 rng(10);
  const SystemParams p = fit_preset().params;
  const RelaxationRates r = oracle::random_rates(rng);
  std::vector<Mat6> ops;
  for (const auto& c : build_channels(r, eigen_system(p))) ops.push_back(c.op);
  // Drop the far-detuned −1 manifold's GHz offset so dt can be small enough for the test.
  Mat6 h = rotating_hamiltonian(p, 2e5, 3e5, {.restrict_to_driven_subspace = true});
  h(4, 4) = h(5, 5) = 0.0;
  const Liouvillian gen = liouvillian(h, ops);
  const Mat6 rho = oracle::random_density(rng);
  const Mat6 exact = gen.apply(rho);
  double prev = 0.0;
  for (double dt : {1e-9, 1e-10, 1e-11}) {
    const Superop prop = segment_propagator(h, ops, dt);
    SuperVec v = Eigen::Map<const SuperVec>(rho.data());
    v = prop * v;
    const Mat6 fd = (Mat6(Eigen::Map<const Mat6>(v.data())) - rho) / dt;
    const double err = max_abs(fd - exact);
    if (prev > 0.0) {
      EXPECT_NEAR(prev / err, 10.0, 1.0);
    }
    prev = err;
  }
}

TEST(Propagation, ZeroDurationIsIdentity) {
  const Preset& pr = fit_preset();
  std::mt19937_64 rng(12);
  const DensityMatrix rho{oracle::random_density(rng)};
  const DensityMatrix out = propagate_segment(rho, {0, true, std::nullopt}, pr.params, pr.rates);
  EXPECT_EQ(out.matrix(), rho.matrix());
}

TEST(Propagation, LaserDecayOfExcitedManifold) {
  const Preset& pr = fit_preset();
  Mat6 m = Mat6::Zero();
  m(kPlusUp, kPlusUp) = 0.3;
  m(kPlusDown, kPlusDown) = 0.7;
  m(kPlusUp, kPlusDown) = m(kPlusDown, kPlusUp) = 0.2;
  const DensityMatrix out = propagate_segment(DensityMatrix{m}, {30, true, std::nullopt}, pr.params, pr.rates);
  const double excited = out.population(kPlusUp) + out.population(kPlusDown);
  EXPECT_NEAR(excited, std::exp(-8e6 * 30e-9), 1e-8);
}

TEST(Propagation, MatchesRk4OnRandomSchedules) {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const SystemParams p = oracle::random_params(rng);
    const RelaxationRates r = oracle::random_rates(rng);
    const Schedule s = oracle::random_schedule(rng, 4, 80);
    const Mat6 rho0 = oracle::random_density(rng);
    Evolver ev(p, r);
    const Mat6 exact = ev.evolve_final(DensityMatrix{rho0}, s).matrix();
    const Mat6 ref = oracle::rk4_schedule(rho0, s, p, r);
    worst = std::max(worst, max_abs(exact - ref));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Propagation, UnitaryPathMatchesMatrixExponential) {
  const SystemParams p = fit_preset().params;
  const Mat6 h = rotating_hamiltonian(p, 1e5, 3e5);
  const Superop fast = segment_propagator(h, {}, 1.7e-6);
  const Eigen::MatrixXcd slow = (liouvillian(h, {}).matrix() * 1e-9).exp();
  Eigen::MatrixXcd chained = Eigen::MatrixXcd::Identity(kSuperDim, kSuperDim);
  for (int i = 0; i < 1700; ++i) chained = slow * chained;
  EXPECT_LE((fast - chained).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Propagation, UnitaryLimitConservesPurity) {
  std::mt19937_64 rng(14);
  const RelaxationRates none{.gamma_gl = 0.0};
  for (int k = 0; k < 5; ++k) {
    const SystemParams p = oracle::random_params(rng);
    const DensityMatrix rho0{oracle::random_density(rng)};
    const Schedule s = standard_polarization_schedule(2e5, 294.1176e3, 2, 1700);
    const Trajectory t = evolve_schedule(rho0, s, p, none, {Sampling::Mode::Boundaries});
    for (const auto& pt : t) EXPECT_NEAR(pt.rho.purity(), rho0.purity(), 1e-9);
  }
}

TEST(Propagation, TableA1TrajectoriesStayPhysical) {
  for (const Preset& pr : presets()) {
    const ExperimentSetup setup = ExperimentSetup::from_preset(pr);
    const double delta = predicted_resonance(pr.params);
    const Trajectory t = polarization_trajectory(setup, delta, pr.sequence.n_cycles, 10);
    const oracle::StateDrift d = oracle::trajectory_drift(t);
    EXPECT_LE(d.trace, 1e-9) << pr.name;
    EXPECT_LE(d.hermiticity, 1e-9) << pr.name;
    EXPECT_GE(d.min_eigenvalue, -1e-9) << pr.name;
  }
}

TEST(Evolver, CachesDistinctSegments) {
  const Preset& pr = fit_preset();
  Evolver ev(pr.params, pr.rates);
  const Schedule s = standard_polarization_schedule(3e5, pr.sequence.omega_hz, 6, 1700);
  ev.evolve_final(initial_mixed_state(), s);
  EXPECT_EQ(ev.propagators_built(), 4u);
  ev.evolve_final(initial_mixed_state(), s);
  EXPECT_EQ(ev.propagators_built(), 4u);
}

TEST(Evolver, EmptyScheduleAndSampling) {
  const Preset& pr = fit_preset();
  const Trajectory empty = evolve_schedule(initial_mixed_state(), Schedule{}, pr.params, pr.rates);
  ASSERT_EQ(empty.size(), 1u);
  EXPECT_EQ(empty[0].time_ns, 0);
  EXPECT_EQ(empty[0].rho.matrix(), initial_mixed_state().matrix());

  const Schedule s = standard_polarization_schedule(3e5, pr.sequence.omega_hz, 1, 1700);
  Evolver ev(pr.params, pr.rates);
  const Trajectory fine = ev.evolve(initial_mixed_state(), s, {Sampling::Mode::Interval, 10});
  EXPECT_EQ(fine.size(), 344u);
  EXPECT_EQ(fine.back().time_ns, 3430);
  const DensityMatrix last = ev.evolve_final(initial_mixed_state(), s);
  EXPECT_LE(max_abs(fine.back().rho.matrix() - last.matrix()), 1e-12);
  const Trajectory bounds = ev.evolve(initial_mixed_state(), s, {Sampling::Mode::Boundaries});
  EXPECT_EQ(bounds.size(), s.segments.size() + 1);
  EXPECT_THROW(ev.evolve(initial_mixed_state(), s, {Sampling::Mode::Interval, 0}), DomainError);
}

TEST(Evolver, SawtoothDuringCycles) {
  const ExperimentSetup setup = ExperimentSetup::from_preset(fit_preset());
  const double delta = predicted_resonance(setup.params);
  const Trajectory t = polarization_trajectory(setup, delta, 6, 10);
  // Within each cycle P rises over the MW pulse and falls during the laser train.
  const std::int64_t cycle = 3430;
  for (int c = 1; c < 6; ++c) {
    auto p_at = [&](std::int64_t time) {
      for (const auto& pt : t)
        if (pt.time_ns == time) return polarization_of_state(pt.rho).p;
      ADD_FAILURE() << "no sample at " << time;
      return 0.0;
    };
    const std::int64_t start = c * cycle;
    const double before_laser = p_at(start);
    const double after_laser = p_at(start + 1530);
    const double after_mw = p_at(start + 1630 + 1700);
    EXPECT_LT(after_laser, before_laser) << c;
    EXPECT_GT(after_mw, after_laser) << c;
  }
}

TEST(TrajectoryCsv, Layout) {
  const Preset& pr = fit_preset();
  const Trajectory t = evolve_schedule(initial_mixed_state(), chopped_laser_train(30, 60, 1), pr.params, pr.rates);
  std::ostringstream os;
  write_trajectory_csv(os, t);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 1 + 72);
  EXPECT_TRUE(header.starts_with("time_ns,rho_re_00,rho_im_00,rho_re_01"));
  EXPECT_TRUE(header.ends_with(",P"));
  int rows = 0;
  while (std::getline(is, row)) ++rows;
  EXPECT_EQ(rows, 3);
}
