#include "bayesrisk/bezier.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <ostream>
#include <string>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "bayesrisk/errors.hpp"

namespace bayesrisk {

namespace {

// Bernstein basis of degree 9 at t, evaluated by the same repeated-lerp
// recurrence as de Casteljau so the design matrix is numerically consistent.
std::array<double, kControlPoints> bernstein_row(double t) {
    std::array<double, kControlPoints> row{};
    row[0] = 1.0;
    const double s = 1.0 - t;
    for (std::size_t n = 1; n < kControlPoints; ++n) {
        for (std::size_t k = n; k > 0; --k) {
            row[k] = s * row[k] + t * row[k - 1];
        }
        row[0] *= s;
    }
    return row;
}

}  // namespace

BezierCurve::BezierCurve(const ControlPoints& control_points, double d_max) : cp_(control_points), d_max_(d_max) {
    if (!std::isfinite(d_max) || d_max <= 0.0) {
        throw DomainError("bezier: d_max must be positive");
    }
    for (double c : cp_) {
        if (!(c >= 0.0 && c <= 1.0)) {
            throw DomainError(fmt::format("bezier: control point {} outside [0, 1]", c));
        }
    }
}

bool BezierCurve::monotone() const { return std::is_sorted(cp_.begin(), cp_.end()); }

double BezierCurve::evaluate(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw DomainError(fmt::format("bezier: parameter {} outside [0, 1]", t));
    }
    ControlPoints work = cp_;
    for (std::size_t n = kControlPoints - 1; n > 0; --n) {
        for (std::size_t i = 0; i < n; ++i) {
            work[i] = (1.0 - t) * work[i] + t * work[i + 1];
        }
    }
    return work[0];
}

double BezierCurve::evaluate_at_distance(double distance) const {
    if (std::isnan(distance) || distance < 0.0) {
        throw DomainError("bezier: distance must be non-negative");
    }
    return evaluate(std::min(distance / d_max_, 1.0));
}

double BezierCurve::inverse(double y, double tol) const {
    if (!monotone()) {
        throw ContractViolation("bezier inverse requires non-decreasing control points");
    }
    if (!(tol > 0.0)) {
        throw DomainError("bezier inverse: tolerance must be positive");
    }
    if (evaluate(0.0) >= y) return 0.0;
    if (evaluate(1.0) < y) return 1.0;
    double lo = 0.0;
    double hi = 1.0;
    for (int i = 0; i < kMaxBisectionIterations && hi - lo > tol; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (evaluate(mid) >= y) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

bool EmpiricalCdf::empty() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

void EmpiricalCdf::validate() const {
    if (bin_edges.size() != kHistogramBins + 1 || values.size() != kHistogramBins) {
        throw SchemaError("empirical CDF needs 101 bin edges and 100 values");
    }
    if (!std::is_sorted(bin_edges.begin(), bin_edges.end()) || bin_edges.front() < 0.0 ||
        bin_edges.back() <= bin_edges.front()) {
        throw SchemaError("empirical CDF bin edges must be ascending and non-negative");
    }
    if (!std::is_sorted(values.begin(), values.end())) {
        throw SchemaError("empirical CDF values must be non-decreasing");
    }
    for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0)) throw SchemaError("empirical CDF values must lie in [0, 1]");
    }
}

namespace {

// Euclidean projection onto the probability simplex {x >= 0, sum x = 1}.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
    std::vector<double> sorted(v.data(), v.data() + v.size());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        cumulative += sorted[i];
        const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
        if (sorted[i] - candidate > 0.0) theta = candidate;
    }
    return (v.array() - theta).max(0.0).matrix();
}

double quadratic_objective(const Eigen::MatrixXd& gram, const Eigen::VectorXd& lin, const Eigen::VectorXd& x) {
    return 0.5 * x.dot(gram * x) - lin.dot(x);
}

// min 0.5 x'Gx - c'x  subject to x >= 0, sum x = 1.
// Accelerated projected gradient gives a near-optimal point; an active-set
// pass on its support then solves the KKT system exactly.
Eigen::VectorXd simplex_qp(const Eigen::MatrixXd& gram, const Eigen::VectorXd& lin) {
    const Eigen::Index n = lin.size();
    const double lipschitz = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff();
    const double step = 1.0 / std::max(lipschitz, 1e-300);

    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    Eigen::VectorXd y = x;
    double momentum = 1.0;
    for (int it = 0; it < 4000; ++it) {
        const Eigen::VectorXd next = project_to_simplex(y - step * (gram * y - lin));
        const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
        y = next + ((momentum - 1.0) / next_momentum) * (next - x);
        x = next;
        momentum = next_momentum;
    }

    std::vector<bool> active(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) active[i] = x(i) > 1e-12;

    Eigen::VectorXd best = x;
    double best_value = quadratic_objective(gram, lin, x);
    for (int round = 0; round < 4 * n; ++round) {
        std::vector<Eigen::Index> support;
        for (Eigen::Index i = 0; i < n; ++i)
            if (active[i]) support.push_back(i);
        if (support.empty()) break;
        const auto m = static_cast<Eigen::Index>(support.size());
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + 1, m + 1);
        Eigen::VectorXd rhs(m + 1);
        for (Eigen::Index a = 0; a < m; ++a) {
            for (Eigen::Index b = 0; b < m; ++b) kkt(a, b) = gram(support[a], support[b]);
            kkt(a, m) = 1.0;
            kkt(m, a) = 1.0;
            rhs(a) = lin(support[a]);
        }
        rhs(m) = 1.0;
        const Eigen::VectorXd sol = kkt.colPivHouseholderQr().solve(rhs);

        Eigen::VectorXd candidate = Eigen::VectorXd::Zero(n);
        Eigen::Index most_negative = -1;
        for (Eigen::Index a = 0; a < m; ++a) {
            candidate(support[a]) = sol(a);
            if (sol(a) < 0.0 && (most_negative < 0 || sol(a) < candidate(most_negative))) most_negative = support[a];
        }
        if (most_negative >= 0) {
            active[most_negative] = false;
            continue;
        }
        const double value = quadratic_objective(gram, lin, candidate);
        if (value <= best_value) {
            best = candidate;
            best_value = value;
        }
        // Multipliers of the inactive bounds: (Gx - c)_i + nu must be >= 0,
        // with nu = c_j - (Gx)_j on the support.
        const Eigen::VectorXd grad = gram * candidate - lin;
        const double nu = -grad(support.front());
        Eigen::Index entering = -1;
        double worst = -1e-13;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!active[i] && grad(i) + nu < worst) {
                worst = grad(i) + nu;
                entering = i;
            }
        }
        if (entering < 0) break;
        active[entering] = true;
    }
    return best;
}

}  // namespace

BezierFit fit_to_cdf(const EmpiricalCdf& cdf, double d_max) {
    cdf.validate();
    if (cdf.empty()) {
        return {BezierCurve(ControlPoints{}, d_max), 0.0, "empty CDF, returning all-zero curve"};
    }

    Eigen::MatrixXd basis(kHistogramBins, kControlPoints);
    Eigen::VectorXd target(kHistogramBins);
    std::vector<double> ts(kHistogramBins);
    for (std::size_t k = 0; k < kHistogramBins; ++k) {
        ts[k] = std::clamp(cdf.bin_edges[k + 1] / d_max, 0.0, 1.0);
        const auto row = bernstein_row(ts[k]);
        for (std::size_t j = 0; j < kControlPoints; ++j) basis(k, j) = row[j];
        target(k) = cdf.values[k];
    }

    // Control points as cumulative sums of non-negative increments whose
    // total is the terminal CDF value (1 for any non-empty CDF). The last
    // increment is slack between cp[9] and the terminal value, so the
    // variables live on a simplex. cp[j] = sum_{i <= j} inc[i] for j < 9.
    const double terminal = cdf.values.back();
    Eigen::MatrixXd cumulative = Eigen::MatrixXd::Zero(kControlPoints, kControlPoints);
    for (std::size_t j = 0; j + 1 < kControlPoints; ++j)
        for (std::size_t i = 0; i <= j; ++i) cumulative(j, i) = 1.0;
    cumulative.row(kControlPoints - 1).setOnes();
    const Eigen::MatrixXd design = basis * cumulative;
    const Eigen::MatrixXd gram = design.transpose() * design;
    const Eigen::VectorXd lin = design.transpose() * (target / terminal);
    const Eigen::VectorXd increments = simplex_qp(gram, lin) * terminal;

    ControlPoints cp{};
    double running = 0.0;
    for (std::size_t j = 0; j + 1 < kControlPoints; ++j) {
        running += increments(static_cast<Eigen::Index>(j));
        cp[j] = std::clamp(running, 0.0, terminal);
    }
    cp.back() = terminal;

    BezierCurve curve(cp, d_max);
    double sse = 0.0;
    for (std::size_t k = 0; k < kHistogramBins; ++k) {
        const double e = curve.evaluate(ts[k]) - cdf.values[k];
        sse += e * e;
    }
    return {curve, std::sqrt(sse / kHistogramBins), std::nullopt};
}

void write_curve(std::ostream& out, const BezierCurve& curve) {
    out << fmt::format("bezier {}", curve.d_max());
    for (double c : curve.control_points()) out << fmt::format(" {}", c);
    out << '\n';
}

BezierCurve read_curve(std::istream& in) {
    std::string tag;
    double d_max = 0.0;
    ControlPoints cp{};
    if (!(in >> tag) || tag != "bezier" || !(in >> d_max)) {
        throw ParseError("expected a 'bezier d_max cp0..cp9' record");
    }
    for (double& c : cp) {
        if (!(in >> c)) throw ParseError("bezier record has fewer than 10 control points");
    }
    return BezierCurve(cp, d_max);
}

}  // namespace bayesrisk
