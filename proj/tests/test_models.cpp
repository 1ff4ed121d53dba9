#include "htsgd/models.hpp"
#include "htsgd/stats.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

using namespace htsgd;
using models::ModelSpec;
using rng::StableParams;

namespace {

ModelSpec paper_quadratic(double alpha = 1.5, double scale = 1.0) {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 2.0;
    a(1, 1) = 1.0;
    return ModelSpec::quadratic(a, vec2(1.0, 1.0), StableParams{alpha, 0.0, scale, 0.0});
}

} // namespace

TEST_CASE("quadratic closed forms: gradient, optimum, hessian") {
    const auto model = paper_quadratic();
    CHECK(models::true_gradient(model, vec2(0.0, 0.0)).isApprox(vec2(1.0, 1.0), 1e-14));
    CHECK(models::true_gradient(model, vec2(-0.5, -1.0)).norm() < 1e-14);
    CHECK(models::optimum(model).isApprox(vec2(-0.5, -1.0), 1e-12));
    const Matrix h = models::hessian(model, vec2(3.0, -7.0));
    CHECK(h(0, 0) == 2.0);
    CHECK(h(1, 1) == 1.0);
    CHECK(h(0, 1) == 0.0);

    const auto identity =
        ModelSpec::quadratic(Matrix::Identity(2, 2), Vector::Zero(2), StableParams::standard(1.5));
    CHECK(models::optimum(identity).norm() == 0.0);
}

TEST_CASE("model validation rejects bad specs") {
    Matrix sym = Matrix::Identity(2, 2);
    Matrix asym = sym;
    asym(0, 1) = 0.5;
    CHECK_THROWS_AS(ModelSpec::quadratic(asym, Vector::Zero(2), StableParams::standard(1.5)),
                    ConfigError);
    Matrix indefinite = sym;
    indefinite(1, 1) = -1.0;
    CHECK_THROWS_AS(ModelSpec::quadratic(indefinite, Vector::Zero(2), StableParams::standard(1.5)),
                    ConfigError);
    CHECK_THROWS_AS(ModelSpec::logistic_1d(1.0, -0.1, StableParams::standard(1.5)), ConfigError);
    CHECK_THROWS_AS(ModelSpec::logistic_1d(1.0, 0.1, StableParams::standard(2.0)), ConfigError);
}

TEST_CASE("logistic optimum agrees with an independent bisection oracle") {
    const auto model = ModelSpec::logistic_1d(1.0, 0.1, StableParams::standard(1.5));
    // Oracle: plain bisection on the model's mean gradient, no Newton steps.
    double lo = 0.0, hi = 1.0;
    REQUIRE(models::true_gradient(model, vec1(lo))[0] < 0.0);
    REQUIRE(models::true_gradient(model, vec1(hi))[0] > 0.0);
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (models::true_gradient(model, vec1(mid))[0] < 0.0 ? lo : hi) = mid;
    }
    const double oracle_root = 0.5 * (lo + hi);
    const Vector opt = models::optimum(model);
    CHECK(std::abs(opt[0] - oracle_root) < 1e-8);
    CHECK(std::abs(models::true_gradient(model, opt)[0]) < 1e-8);
    // The regularizer pulls the optimum strictly inside (0, theta_star).
    CHECK(opt[0] > 0.0);
    CHECK(opt[0] < 1.0);
}

TEST_CASE("logistic hessian matches central differences of the gradient") {
    const auto model = ModelSpec::logistic_1d(1.0, 0.1, StableParams::standard(1.5));
    const double theta = 1.0;
    const double h_exact = models::hessian(model, vec1(theta))(0, 0);
    CHECK(h_exact > 0.1); // lambda plus a nonnegative quadrature term
    auto fd = [&](double h) {
        return (models::true_gradient(model, vec1(theta + h))[0] -
                models::true_gradient(model, vec1(theta - h))[0]) /
               (2.0 * h);
    };
    CHECK(std::abs(fd(1e-4) - h_exact) < 1e-5);
    // Observed order of the central difference should be ~2.
    const double err_coarse = std::abs(fd(1e-3) - h_exact);
    const double err_fine = std::abs(fd(1e-4) - h_exact);
    CHECK(err_coarse / err_fine > std::pow(10.0, 1.8));
}

TEST_CASE("logistic hessian collapses to lambda when covariates vanish") {
    const auto model = ModelSpec::logistic_1d(1.0, 0.1, StableParams{1.5, 0.0, 1e-8, 0.0});
    CHECK(models::hessian(model, vec1(0.7))(0, 0) == Catch::Approx(0.1).margin(1e-10));
}

TEST_CASE("stochastic gradient reduces to the mean gradient without noise") {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 2.0;
    a(1, 1) = 1.0;
    const auto model = ModelSpec::quadratic(a, vec2(1.0, 1.0), StableParams{1.5, 0.0, 0.0, 0.0});
    rng::RngState stream(1);
    CHECK(models::stochastic_gradient(model, vec2(0.0, 0.0), stream).isApprox(vec2(1.0, 1.0)));
}

TEST_CASE("logistic stochastic gradient vanishes with the covariate at lambda 0") {
    const auto model = ModelSpec::logistic_1d(1.0, 0.0, StableParams::standard(1.5));
    // Directly check the gradient formula at x = 0: -y * sigma(0) * 0 = 0.
    CHECK(models::ols_gradient_draw(vec1(1.0), vec1(0.0), 0.0).norm() == 0.0);
    rng::RngState stream(3);
    const Vector g = models::stochastic_gradient(model, vec1(0.7), stream);
    CHECK(std::isfinite(g[0]));
}

TEST_CASE("stochastic gradient conditional mean obeys the stable-rate LLN", "[montecarlo]") {
    const double alpha = 1.5;
    const auto model = paper_quadratic(alpha);
    const Vector theta = vec2(0.3, -0.2);
    const Vector mean_gradient = models::true_gradient(model, theta);
    rng::RngState stream(rng::derive_seed(23, 0));
    Vector sum = Vector::Zero(2);
    const std::size_t n = 1'000'000;
    for (std::size_t i = 0; i < n; ++i) sum += models::stochastic_gradient(model, theta, stream);
    const Vector deviation = sum / static_cast<double>(n) - mean_gradient;
    const double rate = 3.0 * std::pow(static_cast<double>(n), 1.0 / alpha - 1.0);
    CHECK(std::abs(deviation[0]) < rate);
    CHECK(std::abs(deviation[1]) < rate);
}

TEST_CASE("OLS angular measure: symmetrized point mass and two-direction covariates") {
    // d = 1, all covariates equal: the measure symmetrizes to half mass each side.
    std::vector<Vector> ones(100, vec1(1.0));
    const auto sym = models::ols_angular_measure(ones, 1.5, {vec1(1.0), vec1(-1.0)});
    REQUIRE(sym.angular_atoms.size() == 2);
    CHECK(sym.angular_atoms[0].second == Catch::Approx(0.5));
    CHECK(sym.angular_atoms[1].second == Catch::Approx(0.5));

    // d = 2, covariates uniform on {e1, e2}. Oracle: enumerate the Theorem
    // expectation directly - each atom direction carries |x|^alpha mass 1/2
    // under x or -x, so every one of (+-e1, +-e2) gets weight 1/4.
    std::vector<Vector> grid;
    for (int i = 0; i < 50; ++i) {
        grid.push_back(vec2(1.0, 0.0));
        grid.push_back(vec2(0.0, 1.0));
    }
    const std::vector<Vector> atoms{vec2(1, 0), vec2(-1, 0), vec2(0, 1), vec2(0, -1)};
    const auto law = models::ols_angular_measure(grid, 1.5, atoms);
    double total = 0.0;
    for (const auto& [omega, w] : law.angular_atoms) {
        CHECK(w == Catch::Approx(0.25));
        total += w;
    }
    CHECK(total == Catch::Approx(1.0));
    CHECK(law.is_symmetric());

    CHECK_THROWS_AS(models::ols_angular_measure({}, 1.5, atoms), ConfigError);
    std::vector<Vector> with_zero{vec2(0.0, 0.0)};
    CHECK_THROWS_AS(models::ols_angular_measure(with_zero, 1.5, atoms), ConfigError);
    // Atom set not covering the sampled directions.
    CHECK_THROWS_AS(models::ols_angular_measure(grid, 1.5, {vec2(1, 0), vec2(-1, 0)}), ConfigError);
}

TEST_CASE("logistic angular measure reproduces the four half-space cases") {
    models::RegularVaryingLaw mu;
    mu.alpha = 1.5;
    mu.tail_constant = 2.0;
    mu.angular_atoms = {{vec1(1.0), 0.5}, {vec1(-1.0), 0.5}};

    SECTION("theta opposite theta_star: point mass at -1") {
        const auto law = models::logistic_angular_measure(mu, vec1(-1.0), vec1(1.0));
        REQUIRE(law.angular_atoms.size() == 1);
        CHECK(law.angular_atoms[0].first[0] == -1.0);
        CHECK(law.angular_atoms[0].second == Catch::Approx(1.0));
        CHECK(law.tail_constant == Catch::Approx(2.0)); // full covariate mass survives
    }
    SECTION("matching signs in 1-D: degenerate") {
        const auto law = models::logistic_angular_measure(mu, vec1(2.0), vec1(1.0));
        CHECK(law.degenerate);
        CHECK(law.angular_atoms.empty());
        const auto at_star = models::logistic_angular_measure(mu, vec1(1.0), vec1(1.0));
        CHECK(at_star.degenerate);
    }
    SECTION("theta = 0: heavy side selected by theta_star") {
        const auto law = models::logistic_angular_measure(mu, vec1(0.0), vec1(1.0));
        REQUIRE(law.angular_atoms.size() == 1);
        CHECK(law.angular_atoms[0].first[0] == -1.0);
        CHECK(law.angular_atoms[0].second == Catch::Approx(1.0));
    }
    SECTION("theta = theta_star = 0: symmetrization") {
        models::RegularVaryingLaw lopsided;
        lopsided.alpha = 1.5;
        lopsided.tail_constant = 1.0;
        lopsided.angular_atoms = {{vec1(1.0), 0.75}, {vec1(-1.0), 0.25}};
        const auto law = models::logistic_angular_measure(lopsided, vec1(0.0), vec1(0.0));
        REQUIRE(law.angular_atoms.size() == 2);
        for (const auto& [omega, w] : law.angular_atoms) CHECK(w == Catch::Approx(0.5));
    }
    SECTION("zero mass outside the documented cases is an error") {
        models::RegularVaryingLaw planar;
        planar.alpha = 1.5;
        planar.tail_constant = 1.0;
        planar.angular_atoms = {{vec2(1.0, 0.0), 0.5}, {vec2(-1.0, 0.0), 0.5}};
        CHECK_THROWS_AS(
            models::logistic_angular_measure(planar, vec2(1.0, 0.0), vec2(1.0, 0.0)),
            ConfigError);
    }
}

TEST_CASE("Levy triplet of the quadratic model: axis atoms and zero drift") {
    const auto model_1d = ModelSpec::quadratic(
        2.0 * Matrix::Identity(1, 1), Vector::Zero(1), StableParams::standard(1.5));
    const auto triplet = models::levy_triplet_at(model_1d, vec1(0.0));
    CHECK_FALSE(triplet.degenerate());
    CHECK(triplet.levy_measure.is_symmetric());
    // nu({|z| > 1}) equals the tail constant, which the b1 convention pins to 1.
    CHECK(triplet.levy_measure.tail_constant == Catch::Approx(1.0));
    CHECK(triplet.drift_gamma.norm() < 1e-14);

    const auto model_2d = paper_quadratic();
    const auto triplet_2d = models::levy_triplet_at(model_2d, vec2(0.0, 0.0));
    REQUIRE(triplet_2d.levy_measure.angular_atoms.size() == 4);
    for (const auto& [omega, w] : triplet_2d.levy_measure.angular_atoms)
        CHECK(w == Catch::Approx(0.25));
    CHECK(triplet_2d.drift_gamma.norm() < 1e-14);

    // Skewed per-coordinate noise tilts the atom weights and the drift.
    const auto skewed = ModelSpec::quadratic(Matrix::Identity(1, 1), Vector::Zero(1),
                                             StableParams{1.5, 0.5, 1.0, 0.0});
    const auto skew_triplet = models::levy_triplet_at(skewed, vec1(0.0));
    CHECK(skew_triplet.levy_measure.angular_atoms[0].second == Catch::Approx(0.75));
    // gamma = alpha C/(alpha-1) * sum w_j omega_j = 3 * (0.75 - 0.25) = 1.5.
    CHECK(skew_triplet.drift_gamma[0] == Catch::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("Levy triplet of the logistic model near and away from theta_star") {
    const auto model = ModelSpec::logistic_1d(1.0, 0.1, StableParams::standard(1.5));
    const auto heavy = models::levy_triplet_at(model, vec1(-0.4));
    CHECK_FALSE(heavy.degenerate());
    CHECK(heavy.levy_measure.tail_constant == Catch::Approx(1.0)); // b1-normalized full mass
    REQUIRE(heavy.levy_measure.angular_atoms.size() == 1);
    CHECK(heavy.levy_measure.angular_atoms[0].first[0] == -1.0);

    const auto degenerate = models::levy_triplet_at(model, vec1(0.9));
    CHECK(degenerate.degenerate());
}

TEST_CASE("b1 normalization constant matches the tail-constant oracle") {
    const auto model = paper_quadratic(1.5);
    const stable::StableDensity density(1.5);
    const double b0 = 2.0 * density.two_sided_tail_constant();
    CHECK(models::b1_constant(model) == Catch::Approx(std::pow(b0, -1.0 / 1.5)).epsilon(1e-10));
}

TEST_CASE("assumption report: spectra and Lipschitz estimates") {
    const auto quad_report = models::validate_assumptions(paper_quadratic());
    CHECK(quad_report.min_hessian_eigenvalue == Catch::Approx(1.0));
    CHECK(quad_report.lipschitz_ratio == Catch::Approx(2.0));
    CHECK(quad_report.alpha_in_range);

    const auto model = ModelSpec::logistic_1d(1.0, 0.1, StableParams::standard(1.5));
    const auto logistic_report = models::validate_assumptions(model);
    CHECK(logistic_report.min_hessian_eigenvalue >= 0.1);
    CHECK(logistic_report.lipschitz_ratio > 0.0);
}

TEST_CASE("empirical gradient directions above a high norm threshold match the "
          "logistic angular measure",
          "[montecarlo]") {
    const auto model = ModelSpec::logistic_1d(1.0, 0.0, StableParams::standard(1.5));
    const Vector theta = vec1(-1.0);
    rng::RngState stream(rng::derive_seed(22, 0));
    const std::size_t n = 200'000;
    std::vector<double> gradients(n);
    for (auto& g : gradients) g = models::stochastic_gradient(model, theta, stream)[0];
    std::vector<double> norms(n);
    std::transform(gradients.begin(), gradients.end(), norms.begin(),
                   [](double g) { return std::abs(g); });
    std::nth_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(0.999 * n),
                     norms.end());
    const double z = norms[static_cast<std::size_t>(0.999 * n)];
    std::size_t negative = 0, exceed = 0;
    for (double g : gradients)
        if (std::abs(g) > z) {
            ++exceed;
            if (g < 0.0) ++negative;
        }
    const auto law = models::logistic_angular_measure(models::stable_covariate_measure(model),
                                                      theta, vec1(1.0));
    // Analytic mass at direction -1 is 1; empirical TV distance below 0.05.
    CHECK(law.angular_atoms[0].second == Catch::Approx(1.0));
    CHECK(std::abs(static_cast<double>(negative) / static_cast<double>(exceed) - 1.0) < 0.05);
}
