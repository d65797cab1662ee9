#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "bayesrisk/bezier.hpp"
#include "bayesrisk/errors.hpp"

using namespace bayesrisk;

namespace {

// Independent evaluator: explicit Bernstein sum with binomial coefficients.
double bernstein_sum(const ControlPoints& cp, double t) {
    double total = 0.0;
    const int n = static_cast<int>(cp.size()) - 1;
    for (int k = 0; k <= n; ++k) {
        const double binom = std::tgamma(n + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(n - k + 1.0));
        total += binom * std::pow(t, k) * std::pow(1.0 - t, n - k) * cp[k];
    }
    return total;
}

ControlPoints random_monotone(std::mt19937_64& rng, bool pin_last = false) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ControlPoints cp{};
    for (double& c : cp) c = unit(rng);
    std::sort(cp.begin(), cp.end());
    if (pin_last) cp.back() = 1.0;
    return cp;
}

EmpiricalCdf cdf_from_values(const std::vector<double>& values, double d_max) {
    EmpiricalCdf cdf;
    for (std::size_t k = 0; k <= kHistogramBins; ++k) cdf.bin_edges.push_back(d_max * k / kHistogramBins);
    cdf.values = values;
    return cdf;
}

// Reference fit: cyclic coordinate descent on the control points themselves,
// each coordinate minimized exactly inside [cp[j-1], cp[j+1]], last point
// fixed to the terminal value. Shares no code with the library solver.
ControlPoints coordinate_descent_fit(const std::vector<double>& values) {
    const std::size_t n = kControlPoints;
    std::vector<std::array<double, kControlPoints>> rows;
    for (std::size_t k = 0; k < kHistogramBins; ++k) {
        const double t = (k + 1.0) / kHistogramBins;
        std::array<double, kControlPoints> row{};
        for (std::size_t j = 0; j < n; ++j) {
            ControlPoints unit{};
            unit[j] = 1.0;
            row[j] = bernstein_sum(unit, t);
        }
        rows.push_back(row);
    }
    ControlPoints cp{};
    cp.back() = values.back();
    for (int sweep = 0; sweep < 20000; ++sweep) {
        for (std::size_t j = 0; j + 1 < n; ++j) {
            double num = 0.0, den = 0.0;
            for (std::size_t k = 0; k < kHistogramBins; ++k) {
                double others = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    if (i != j) others += rows[k][i] * cp[i];
                num += rows[k][j] * (values[k] - others);
                den += rows[k][j] * rows[k][j];
            }
            const double lo = j == 0 ? 0.0 : cp[j - 1];
            cp[j] = std::clamp(num / den, lo, cp[j + 1]);
        }
    }
    return cp;
}

double rmse_of(const ControlPoints& cp, const std::vector<double>& values) {
    double sse = 0.0;
    for (std::size_t k = 0; k < kHistogramBins; ++k) {
        const double e = bernstein_sum(cp, (k + 1.0) / kHistogramBins) - values[k];
        sse += e * e;
    }
    return std::sqrt(sse / kHistogramBins);
}

void check_invariants(const BezierCurve& c) {
    CHECK(c.monotone());
    for (double v : c.control_points()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(c.d_max() > 0.0);
}

}  // namespace

TEST_CASE("evaluate: constant and linear control points") {
    ControlPoints constant{};
    constant.fill(0.42);
    const BezierCurve flat(constant);
    for (double t : {0.0, 0.13, 0.5, 0.999, 1.0}) CHECK(flat.evaluate(t) == doctest::Approx(0.42).epsilon(1e-15));

    ControlPoints linear{};
    for (std::size_t i = 0; i < kControlPoints; ++i) linear[i] = i / 9.0;
    const BezierCurve identity(linear);
    for (double t = 0.0; t <= 1.0; t += 0.01) CHECK(identity.evaluate(t) == doctest::Approx(t).epsilon(1e-14));
}

TEST_CASE("evaluate agrees with Bernstein-sum reference") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const BezierCurve curve(random_monotone(rng));
        for (double t : {0.0, 0.1, 0.5, 0.77, 1.0}) {
            CHECK(std::abs(curve.evaluate(t) - bernstein_sum(curve.control_points(), t)) <= 1e-12);
        }
    }
    // A fitted curve at t = 0.5.
    std::vector<double> values(kHistogramBins);
    for (std::size_t k = 0; k < kHistogramBins; ++k) {
        const double t = (k + 1.0) / kHistogramBins;
        values[k] = 1.0 - std::exp(-8.0 * t);
    }
    values.back() = 1.0;
    const auto fit = fit_to_cdf(cdf_from_values(values, 2.0), 2.0);
    CHECK(std::abs(fit.curve.evaluate(0.5) - bernstein_sum(fit.curve.control_points(), 0.5)) <= 1e-12);
}

TEST_CASE("evaluate rejects out-of-range parameters") {
    const BezierCurve curve(ControlPoints{});
    CHECK_THROWS_AS(curve.evaluate(-0.01), DomainError);
    CHECK_THROWS_AS(curve.evaluate(1.01), DomainError);
    CHECK_THROWS_AS(curve.evaluate_at_distance(-1.0), DomainError);
    ControlPoints bad{};
    bad[3] = 1.5;
    CHECK_THROWS_AS(BezierCurve{bad}, DomainError);
    CHECK_THROWS_AS(BezierCurve(ControlPoints{}, 0.0), DomainError);
}

TEST_CASE("evaluate_at_distance maps onto [0, d_max]") {
    std::mt19937_64 rng(5);
    const BezierCurve curve(random_monotone(rng), 1.6);
    CHECK(curve.evaluate_at_distance(0.0) == curve.control_points()[0]);
    CHECK(curve.evaluate_at_distance(1.6) == curve.control_points()[9]);
    CHECK(curve.evaluate_at_distance(7.0) == curve.control_points()[9]);
    CHECK(curve.evaluate_at_distance(0.8) == curve.evaluate(0.5));
}

TEST_CASE("monotone control points give monotone curves") {
    std::mt19937_64 rng(17);
    int violations = 0;
    for (int i = 0; i < 1000; ++i) {
        const BezierCurve curve(random_monotone(rng));
        double previous = curve.evaluate(0.0);
        for (int g = 1; g < 1000; ++g) {
            const double current = curve.evaluate(g / 999.0);
            if (current < previous) ++violations;
            previous = current;
        }
    }
    CHECK(violations == 0);
}

TEST_CASE("fit_to_cdf recovers an exact Bezier CDF") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const ControlPoints truth = random_monotone(rng, true);
        std::vector<double> values(kHistogramBins);
        for (std::size_t k = 0; k < kHistogramBins; ++k) values[k] = bernstein_sum(truth, (k + 1.0) / kHistogramBins);
        values.back() = 1.0;
        const auto fit = fit_to_cdf(cdf_from_values(values, 2.0), 2.0);
        CHECK(fit.rmse <= 1e-3);
        CHECK(rmse_of(fit.curve.control_points(), values) <= 1e-3);
        check_invariants(fit.curve);
    }
}

TEST_CASE("fit_to_cdf on a uniform histogram is near-linear") {
    std::vector<double> values(kHistogramBins);
    for (std::size_t k = 0; k < kHistogramBins; ++k) values[k] = (k + 1.0) / kHistogramBins;
    const auto fit = fit_to_cdf(cdf_from_values(values, 2.0), 2.0);
    double worst = 0.0;
    for (int g = 0; g <= 1000; ++g) worst = std::max(worst, std::abs(fit.curve.evaluate(g / 1000.0) - g / 1000.0));
    CHECK(worst <= 0.02);
}

TEST_CASE("fit_to_cdf on a step matches the constrained optimum") {
    std::vector<double> values(kHistogramBins, 1.0);
    values[0] = 0.0;  // all mass in bin 1
    const auto fit = fit_to_cdf(cdf_from_values(values, 2.0), 2.0);
    check_invariants(fit.curve);
    CHECK(fit.curve.control_points()[9] == 1.0);

    const ControlPoints oracle = coordinate_descent_fit(values);
    const double oracle_rmse = rmse_of(oracle, values);
    CHECK(fit.rmse <= oracle_rmse + 1e-6);
    // Optimum computed independently with scipy SLSQP on the same problem.
    CHECK(fit.rmse == doctest::Approx(0.0908487).epsilon(1e-4));
    for (double t = 0.0; t <= 1.0; t += 0.05) {
        CHECK(std::abs(fit.curve.evaluate(t) - bernstein_sum(oracle, t)) <= 1e-3);
    }
}

TEST_CASE("fit_to_cdf on a step at the origin is the constant one curve") {
    std::vector<double> values(kHistogramBins, 1.0);
    const auto fit = fit_to_cdf(cdf_from_values(values, 2.0), 2.0);
    CHECK(fit.rmse <= 1e-9);
    for (double c : fit.curve.control_points()) CHECK(c == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fit_to_cdf handles degenerate inputs") {
    const auto empty = fit_to_cdf(cdf_from_values(std::vector<double>(kHistogramBins, 0.0), 2.0), 2.0);
    CHECK(empty.warning.has_value());
    for (double c : empty.curve.control_points()) CHECK(c == 0.0);

    EmpiricalCdf bad = cdf_from_values(std::vector<double>(kHistogramBins, 0.5), 2.0);
    bad.values[10] = 0.1;
    CHECK_THROWS_AS(fit_to_cdf(bad), SchemaError);
    bad.values.pop_back();
    CHECK_THROWS_AS(fit_to_cdf(bad), SchemaError);

    // Random non-decreasing CDFs, including ones that rise abruptly.
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> values(kHistogramBins);
        for (double& v : values) v = unit(rng) < 0.1 ? unit(rng) : 0.0;
        std::partial_sum(values.begin(), values.end(), values.begin());
        const double total = values.back();
        if (total == 0.0) continue;
        for (double& v : values) v /= total;
        values.back() = 1.0;
        check_invariants(fit_to_cdf(cdf_from_values(values, 1.0), 1.0 + trial * 0.01).curve);
    }
}

TEST_CASE("inverse") {
    ControlPoints linear{};
    for (std::size_t i = 0; i < kControlPoints; ++i) linear[i] = i / 9.0;
    const BezierCurve identity(linear);
    CHECK(identity.inverse(0.0) == 0.0);
    CHECK(identity.inverse(0.3, 1e-9) == doctest::Approx(0.3).epsilon(1e-8));

    ControlPoints low{};
    low.fill(0.2);
    CHECK(BezierCurve(low).inverse(0.5) == 1.0);

    ControlPoints wiggle{};
    wiggle[4] = 0.6;
    CHECK_THROWS_AS(BezierCurve(wiggle).inverse(0.5), ContractViolation);
}

TEST_CASE("inverse agrees with a dense grid scan") {
    std::mt19937_64 rng(31);
    const double tol = 1e-10;
    for (int trial = 0; trial < 3; ++trial) {
        const BezierCurve curve(random_monotone(rng, true));
        const double y = 0.7;
        if (curve.evaluate(0.0) >= y) continue;
        const int n = 1000000;
        int first = n;
        for (int i = 0; i <= n; ++i) {
            if (bernstein_sum(curve.control_points(), static_cast<double>(i) / n) >= y) {
                first = i;
                break;
            }
        }
        const double t = curve.inverse(y, tol);
        CHECK(curve.evaluate(t) >= y);
        CHECK(curve.evaluate(t) <= y + 1e-6);
        CHECK(std::abs(t - static_cast<double>(first) / n) <= 1.0 / n + tol);
    }
}

TEST_CASE("inverse-evaluate round trip") {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const BezierCurve curve(random_monotone(rng));
        const double lo = curve.evaluate(0.0), hi = curve.evaluate(1.0);
        const double y = lo + unit(rng) * (hi - lo);
        const double t = curve.inverse(y, 1e-12);
        CHECK(std::abs(curve.evaluate(t) - y) <= 1e-6);
    }
}

TEST_CASE("curve record round trip") {
    std::mt19937_64 rng(41);
    const BezierCurve curve(random_monotone(rng), 1.25);
    std::stringstream ss;
    write_curve(ss, curve);
    CHECK(read_curve(ss) == curve);
    std::stringstream bad("bezier 2.0 0.1 0.2");
    CHECK_THROWS_AS(read_curve(bad), ParseError);
}
