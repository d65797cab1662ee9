#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bayesrisk {

inline constexpr std::size_t kControlPoints = 10;
inline constexpr std::size_t kHistogramBins = 100;
inline constexpr double kDefaultDMax = 2.0;  // meters

using ControlPoints = std::array<double, kControlPoints>;

// Degree-9 Bezier curve representing a CDF over distance. The curve parameter
// t maps onto distance as d = t * d_max.
//
// Construction enforces control points in [0, 1] and d_max > 0. Monotonicity
// is not enforced by the type, so callers that need a CDF check monotone().
class BezierCurve {
public:
    BezierCurve() = default;
    BezierCurve(const ControlPoints& control_points, double d_max = kDefaultDMax);

    const ControlPoints& control_points() const { return cp_; }
    double d_max() const { return d_max_; }

    // Non-decreasing control points, the sufficient condition for a monotone curve.
    bool monotone() const;

    // de Casteljau evaluation at t in [0, 1].
    double evaluate(double t) const;
    double evaluate_at_distance(double distance) const;

    // Smallest t with evaluate(t) >= y, bisected to `tol`. Returns 1 when the
    // curve never reaches y. Throws ContractViolation on a non-monotone curve.
    double inverse(double y, double tol = 1e-9) const;

    friend bool operator==(const BezierCurve&, const BezierCurve&) = default;

private:
    ControlPoints cp_{};
    double d_max_ = kDefaultDMax;
};

inline constexpr int kMaxBisectionIterations = 200;

// 100-bin empirical CDF over [bin_edges.front(), bin_edges.back()].
// values[k] is the mass below bin_edges[k + 1].
struct EmpiricalCdf {
    std::vector<double> bin_edges;  // 101 ascending
    std::vector<double> values;     // 100 non-decreasing

    bool empty() const;
    void validate() const;
};

struct BezierFit {
    BezierCurve curve;
    double rmse = 0.0;
    std::optional<std::string> warning;
};

// Least-squares fit in the Bernstein basis, sampled at the right bin edges,
// constrained to non-decreasing control points in [0, 1] with the last one
// pinned to the CDF's terminal value. An all-zero CDF yields the zero curve.
BezierFit fit_to_cdf(const EmpiricalCdf& cdf, double d_max = kDefaultDMax);

// Plain-text record: "bezier d_max cp0 ... cp9".
void write_curve(std::ostream& out, const BezierCurve& curve);
BezierCurve read_curve(std::istream& in);

}  // namespace bayesrisk
