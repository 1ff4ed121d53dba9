#include "htsgd/dynamics.hpp"
#include "htsgd/limit_process.hpp"
#include "htsgd/stats.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

using namespace htsgd;
using limit::CfEvaluator;
using limit::OUSpec;
using models::LevyTriplet;
using models::RegularVaryingLaw;

namespace {

// Symmetric two-atom measure in 1-D whose driver CF over dt is
// exp(-sigma^alpha dt |u|^alpha): tail constant sigma^alpha / C_cf(alpha).
LevyTriplet unit_driver_1d(double alpha, double sigma = 1.0) {
    RegularVaryingLaw law;
    law.alpha = alpha;
    law.tail_constant = std::pow(sigma, alpha) / stable::cf_bridge_constant(alpha);
    law.angular_atoms = {{vec1(1.0), 0.5}, {vec1(-1.0), 0.5}};
    return LevyTriplet::from_measure(law);
}

LevyTriplet one_sided_driver_1d(double alpha) {
    RegularVaryingLaw law;
    law.alpha = alpha;
    law.tail_constant = 1.0 / stable::cf_bridge_constant(alpha);
    law.angular_atoms = {{vec1(1.0), 1.0}};
    return LevyTriplet::from_measure(law);
}

LevyTriplet degenerate_driver() {
    RegularVaryingLaw law;
    law.alpha = 1.5;
    law.tail_constant = 0.0;
    law.degenerate = true;
    return LevyTriplet::from_measure(law);
}

OUSpec scalar_spec(double h, const LevyTriplet& driver) {
    OUSpec spec;
    spec.drift_matrix = h * Matrix::Identity(1, 1);
    spec.driver = driver;
    return spec;
}

} // namespace

TEST_CASE("levy increments respect atom support and symmetry") {
    RegularVaryingLaw law;
    law.alpha = 1.5;
    law.tail_constant = 1.0;
    law.angular_atoms = {{vec2(1.0, 0.0), 1.0}};
    const auto triplet = LevyTriplet::from_measure(law);
    rng::RngState stream(1);
    for (int i = 0; i < 100; ++i) {
        const Vector inc = limit::simulate_levy_increment(triplet, 0.1, stream);
        CHECK(inc[1] == 0.0); // single atom e1: no mass off its axis
    }

    const auto symmetric = unit_driver_1d(1.5);
    limit::LevyIncrementSampler sampler(symmetric, 0.01);
    double sign_sum = 0.0;
    const int n = 100'000;
    for (int i = 0; i < n; ++i) sign_sum += sampler.sample(stream)[0] > 0.0 ? 1.0 : -1.0;
    CHECK(std::abs(sign_sum / n) < 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("levy increments scale like alpha-stable in the time step", "[montecarlo]") {
    const double alpha = 1.5;
    const auto triplet = unit_driver_1d(alpha);
    const double dt = 0.25;
    rng::RngState stream(rng::derive_seed(51, 0));
    limit::LevyIncrementSampler one(triplet, dt);
    limit::LevyIncrementSampler two(triplet, 2.0 * dt);
    const std::size_t n = 400'000;
    std::vector<double> single(n), doubled(n);
    for (std::size_t i = 0; i < n; ++i) {
        single[i] = one.sample(stream)[0];
        doubled[i] = two.sample(stream)[0];
    }
    for (double u : {0.4, 0.8, 1.5, 2.5}) {
        const auto phi_single = rng::empirical_cf(single, u);
        const auto phi_double = rng::empirical_cf(doubled, u);
        CHECK(std::abs(phi_double - phi_single * phi_single) < 0.02);
        // Analytic exponent: exp(-dt |u|^alpha) for the unit driver.
        CHECK(std::abs(phi_single - std::complex<double>(std::exp(-dt * std::pow(u, alpha)), 0.0)) <
              0.02);
    }
}

TEST_CASE("one-sided increments match the asymmetric radial exponent", "[montecarlo]") {
    const double alpha = 1.5;
    const auto triplet = one_sided_driver_1d(alpha);
    const double dt = 0.5;
    rng::RngState stream(rng::derive_seed(52, 0));
    limit::LevyIncrementSampler sampler(triplet, dt);
    const std::size_t n = 400'000;
    std::vector<double> draws(n);
    for (std::size_t i = 0; i < n; ++i) draws[i] = sampler.sample(stream)[0];
    const double c = triplet.levy_measure.tail_constant;
    for (double u : {0.5, 1.0, 2.0}) {
        const auto expected = std::exp(dt * c * stable::radial_atom_exponent(alpha, u));
        CHECK(std::abs(rng::empirical_cf(draws, u) - expected) < 0.02);
    }
}

TEST_CASE("OU path with zeroed driver is pure exponential decay") {
    const auto spec = scalar_spec(1.0, degenerate_driver());
    rng::RngState stream(1);
    const auto path = limit::simulate_ou_path(spec, vec1(1.0), 1.0, 0.001, stream);
    CHECK(path.states.back()[0] == Catch::Approx(std::exp(-1.0)).epsilon(1e-10));
    const auto one_step = limit::simulate_ou_path(spec, vec1(1.0), 0.1, 0.1, stream);
    CHECK(one_step.states.back()[0] == Catch::Approx(std::exp(-0.1)).epsilon(1e-12));
}

TEST_CASE("stationary sampler hits the analytic stable law", "[montecarlo]") {
    const double alpha = 1.5, h = 2.0;
    const auto spec = scalar_spec(h, unit_driver_1d(alpha));
    const double t_trunc = std::log(1e7) / h;
    const double dt = 0.01 / h;
    rng::RngState stream(rng::derive_seed(53, 0));
    const std::size_t n = 20'000;
    std::vector<double> draws(n);
    for (auto& z : draws) z = limit::sample_stationary(spec, stream, t_trunc, dt)[0];
    // Prop-reduction oracle: Z_inf is symmetric stable with scale (alpha h)^{-1/alpha}.
    const double scale = std::pow(alpha * h, -1.0 / alpha);
    CHECK(scale == Catch::Approx(0.4807498).margin(1e-6));
    stable::StableDensity density(alpha);
    const double ks =
        stats::ks_distance(draws, [&](double x) { return density.cdf(x / scale); });
    CHECK(ks < 0.02);

    CHECK_THROWS_AS(limit::sample_stationary(spec, stream, 1.0, dt), ConfigError);
    CHECK(limit::sample_stationary(scalar_spec(1.0, degenerate_driver()), stream, 20.0, 0.01)
              .norm() == 0.0);
}

TEST_CASE("stationary sample quantiles are homogeneous in the driver scale", "[montecarlo]") {
    const double alpha = 1.5, h = 1.0;
    const double t_trunc = std::log(1e7);
    const double dt = 0.01;
    const std::size_t n = 20'000;
    auto p90 = [&](double sigma, std::uint64_t seed) {
        const auto spec = scalar_spec(h, unit_driver_1d(alpha, sigma));
        rng::RngState stream(rng::derive_seed(seed, 0));
        std::vector<double> draws(n);
        for (auto& z : draws) z = limit::sample_stationary(spec, stream, t_trunc, dt)[0];
        std::nth_element(draws.begin(), draws.begin() + static_cast<std::ptrdiff_t>(0.9 * n),
                         draws.end());
        return draws[static_cast<std::size_t>(0.9 * n)];
    };
    const double base = p90(1.0, 54);
    const double doubled = p90(2.0, 55);
    CHECK(doubled / base == Catch::Approx(2.0).epsilon(0.05));
}

TEST_CASE("stationary CF: trivial value, analytic reduction, conjugate symmetry") {
    const double alpha = 1.5, h = 2.0;
    const auto spec = scalar_spec(h, unit_driver_1d(alpha));
    CHECK(limit::cf_stationary(spec, vec1(0.0)) == std::complex<double>(1.0, 0.0));
    // Analytic reduction: exponent = -sigma^alpha |u|^alpha / (alpha h).
    const auto at_one = limit::cf_stationary(spec, vec1(1.0));
    CHECK(std::abs(at_one) == Catch::Approx(std::exp(-1.0 / 3.0)).epsilon(1e-8));
    CHECK(at_one.imag() == Catch::Approx(0.0).margin(1e-12));
    for (double u : {0.3, 1.1, 2.7}) {
        const auto plus = limit::cf_stationary(spec, vec1(u));
        const auto minus = limit::cf_stationary(spec, vec1(-u));
        CHECK(minus.real() == Catch::Approx(plus.real()).epsilon(1e-10));
        CHECK(minus.imag() == Catch::Approx(-plus.imag()).margin(1e-12));
    }
}

TEST_CASE("asymmetric stationary exponent collapses to the reduced closed form") {
    // For a one-atom driver the explicit gamma-tilde bookkeeping must cancel
    // into C w Psi_alpha(u) / (alpha h).
    const double alpha = 1.5, h = 1.7;
    const auto spec = scalar_spec(h, one_sided_driver_1d(alpha));
    const double c = spec.driver.levy_measure.tail_constant;
    for (double u : {-2.0, -0.7, 0.5, 1.0, 3.0}) {
        const auto exponent = limit::stationary_exponent(spec, vec1(u));
        const auto reduced = c * stable::radial_atom_exponent(alpha, u) / (alpha * h);
        CHECK(exponent.real() == Catch::Approx(reduced.real()).margin(1e-9));
        CHECK(exponent.imag() == Catch::Approx(reduced.imag()).margin(1e-9));
    }
}

TEST_CASE("stationary exponent has nonpositive real part on random directions") {
    Matrix drift(2, 2);
    drift << 2.0, 0.3, 0.0, 1.0;
    RegularVaryingLaw law;
    law.alpha = 1.4;
    law.tail_constant = 0.8;
    law.angular_atoms = {{vec2(1.0, 0.0), 0.25},
                         {vec2(-1.0, 0.0), 0.25},
                         {vec2(0.0, 1.0), 0.3},
                         {vec2(0.0, -1.0), 0.2}};
    OUSpec spec;
    spec.drift_matrix = drift;
    spec.driver = LevyTriplet::from_measure(law);
    rng::RngState stream(7);
    for (int i = 0; i < 25; ++i) {
        const Vector u = vec2(4.0 * (stream.uniform_open01() - 0.5),
                              4.0 * (stream.uniform_open01() - 0.5));
        CHECK(limit::stationary_exponent(spec, u).real() <= 1e-8);
    }
}

TEST_CASE("marginal CF evaluator agrees with direct stationary CF evaluation") {
    const double alpha = 1.5;
    const auto spec = scalar_spec(1.3, one_sided_driver_1d(alpha));
    const auto marginal = limit::make_stationary_marginal_cf(spec, vec1(1.0));
    for (double t : {-3.0, -1.0, -0.2, 0.0, 0.4, 1.7, 5.0}) {
        const auto direct = limit::cf_stationary(spec, vec1(t));
        const auto fast = marginal.phi(t);
        CHECK(std::abs(direct - fast) < 1e-9);
    }
}

TEST_CASE("additive OU characteristics: identity at zero, stationary limit, symmetry") {
    // Constant-Hessian quadratic: the additive characteristics truncated at a
    // long horizon reproduce the stationary CF.
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 2.0;
    a(1, 1) = 1.0;
    const auto model =
        models::ModelSpec::quadratic(a, vec2(1.0, 1.0), rng::StableParams{1.5, 0.0, 0.0, 0.0});
    const double T = 16.0, dt = 0.02;
    const auto flow = dynamics::gradient_flow(model, models::optimum(model), T, dt);
    const auto phis = dynamics::fundamental_matrix(model, flow, T, dt);

    const auto noisy = models::ModelSpec::quadratic(a, vec2(1.0, 1.0), rng::StableParams::standard(1.5));
    const auto triplet = models::levy_triplet_at(noisy, vec2(0.0, 0.0));
    std::vector<models::LevyTriplet> triplets(flow.size(), triplet);

    CHECK(limit::cf_additive_ou(phis, triplets, flow.times, 0.0, vec2(0.7, -0.4)) ==
          std::complex<double>(1.0, 0.0));

    OUSpec spec;
    spec.drift_matrix = a;
    spec.driver = triplet;
    for (const Vector& u : {vec2(1.0, 0.0), vec2(0.0, 1.0), vec2(0.8, -0.6)}) {
        const auto finite_t = limit::cf_additive_ou(phis, triplets, flow.times, T, u);
        const auto stationary = limit::cf_stationary(spec, u);
        CHECK(std::abs(finite_t - stationary) < 1e-4);
        // Symmetric measure: gamma-tilde vanishes and the CF is real.
        CHECK(std::abs(finite_t.imag()) < 1e-10);
    }
    CHECK_THROWS_AS(limit::cf_additive_ou(phis, triplets, flow.times, dt / 3.0, vec2(1.0, 0.0)),
                    ConfigError);
}

TEST_CASE("Gil-Pelaez density inversion recovers Cauchy and Gaussian closed forms") {
    CfEvaluator cauchy{[](double t) {
                           return std::complex<double>(std::exp(-std::abs(t)), 0.0);
                       },
                       38.0};
    std::vector<double> grid;
    for (double x = -6.0; x <= 6.0 + 1e-12; x += 0.25) grid.push_back(x);
    const auto cauchy_density = limit::invert_cf_density(cauchy, grid);
    CHECK(cauchy_density.clip_events == 0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double exact = 1.0 / (M_PI * (1.0 + grid[i] * grid[i]));
        CHECK(cauchy_density.values[i] == Catch::Approx(exact).margin(1e-6));
    }

    CfEvaluator gauss{[](double t) {
                          return std::complex<double>(std::exp(-0.5 * t * t), 0.0);
                      },
                      9.0};
    const auto gauss_density = limit::invert_cf_density(gauss, grid);
    double mass = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double exact = std::exp(-0.5 * grid[i] * grid[i]) / std::sqrt(2.0 * M_PI);
        CHECK(gauss_density.values[i] == Catch::Approx(exact).margin(1e-6));
        mass += gauss_density.values[i] * 0.25;
    }
    CHECK(mass == Catch::Approx(1.0).margin(1e-4));
}

TEST_CASE("Gil-Pelaez quantiles: median, Cauchy closed form, monotonicity") {
    CfEvaluator cauchy{[](double t) {
                           return std::complex<double>(std::exp(-std::abs(t)), 0.0);
                       },
                       38.0};
    CHECK(std::abs(limit::invert_cf_quantile(cauchy, 0.5)) < 1e-5);
    CHECK(limit::invert_cf_quantile(cauchy, 0.975) ==
          Catch::Approx(std::tan(0.475 * M_PI)).margin(2e-3));
    double previous = -1e9;
    for (double p : {0.1, 0.3, 0.6, 0.9, 0.99}) {
        const double q = limit::invert_cf_quantile(cauchy, p);
        CHECK(q > previous);
        previous = q;
    }
    CHECK_THROWS_AS(limit::invert_cf_quantile(cauchy, 0.0), ConfigError);
}

TEST_CASE("asymmetric stationary law: sampler against Gil-Pelaez CDF", "[montecarlo]") {
    const double alpha = 1.5, h = 1.0;
    const auto spec = scalar_spec(h, one_sided_driver_1d(alpha));
    rng::RngState stream(rng::derive_seed(56, 0));
    const std::size_t n = 10'000;
    std::vector<double> draws(n);
    for (auto& z : draws) z = limit::sample_stationary(spec, stream, std::log(1e7), 0.01)[0];
    const auto marginal = limit::make_stationary_marginal_cf(spec, vec1(1.0));
    const double ks =
        stats::ks_distance(draws, [&](double x) { return limit::cdf_from_cf(marginal, x); });
    CHECK(ks < 0.02);
}

TEST_CASE("OU semigroup and stationarity in law", "[montecarlo]") {
    const double alpha = 1.5, h = 1.0;
    const auto spec = scalar_spec(h, unit_driver_1d(alpha));
    const double T = 2.0, dt = 0.01;
    const std::size_t n = 20'000;
    std::vector<double> direct(n), restarted(n), from_stationary(n);
    for (std::size_t r = 0; r < n; ++r) {
        rng::RngState stream(rng::derive_seed(57, r));
        direct[r] = limit::simulate_ou_path(spec, vec1(0.0), 2.0 * T, dt, stream).states.back()[0];
        const double mid = limit::simulate_ou_path(spec, vec1(0.0), T, dt, stream).states.back()[0];
        restarted[r] =
            limit::simulate_ou_path(spec, vec1(mid), T, dt, stream).states.back()[0];
        const Vector z0 = limit::sample_stationary(spec, stream, std::log(1e7), dt);
        from_stationary[r] =
            limit::simulate_ou_path(spec, z0, 1.0, dt, stream).states.back()[0];
    }
    // Two-sample KS between the one-shot and restarted runs.
    std::vector<double> sorted = direct;
    std::sort(sorted.begin(), sorted.end());
    auto empirical_cdf = [&sorted](double x) {
        return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x) -
                                   sorted.begin()) /
               static_cast<double>(sorted.size());
    };
    CHECK(stats::ks_distance(restarted, empirical_cdf) < 0.02);
    // Both marginals also match the analytic stationary law (the time-2T
    // transient from z0 = 0 is below e^{-alpha h 2T} in the scale).
    stable::StableDensity density(alpha);
    const double scale = std::pow(alpha * h, -1.0 / alpha);
    CHECK(stats::ks_distance(direct, [&](double x) { return density.cdf(x / scale); }) < 0.02);
    CHECK(stats::ks_distance(from_stationary,
                             [&](double x) { return density.cdf(x / scale); }) < 0.02);
}
