#pragma once

#include <boost/rational.hpp>

#include <optional>
#include <string>
#include <vector>

namespace tdsched {

using Rational = boost::rational<long long>;

/// A truncated lambda-schedule: weights lambda_1..lambda_L in [0,1], with
/// lambda_j defined as 0 for every j > L. The truncation index L is stored
/// explicitly so that trace buffers know their capacity (L+1 feature vectors).
///
/// Schedules built from rational values (EqualWeights always is) keep an exact
/// representation alongside the double one, so the induced weight matrix can
/// be produced in exact arithmetic.
class LambdaSchedule {
public:
    /// Defaults to the all-zero schedule [0], i.e. TD(0).
    LambdaSchedule() : values_{0.0} {}

    /// lambda_j for 1-based j; returns 0 for j > L.
    double value(int j) const {
        return (j >= 1 && j <= truncation()) ? values_[static_cast<std::size_t>(j - 1)] : 0.0;
    }

    Rational exact_value(int j) const;

    int truncation() const { return static_cast<int>(values_.size()); }
    const std::vector<double>& values() const { return values_; }
    bool is_exact() const { return exact_.has_value(); }

    /// prod_{j=1..k} gamma*lambda_j, with the empty product (k = 0) equal to 1.
    double prefix_product(int k, double gamma) const;

    friend LambdaSchedule make_schedule(std::vector<double> values, int truncation);
    friend LambdaSchedule make_schedule(std::vector<Rational> values, int truncation);

private:
    std::vector<double> values_;
    std::optional<std::vector<Rational>> exact_;
};

/// Validates and wraps a lambda-schedule. Every value must lie in [0,1] and
/// `truncation` must equal the number of values; the empty schedule is
/// rejected (L >= 1).
LambdaSchedule make_schedule(std::vector<double> values, int truncation);
LambdaSchedule make_schedule(std::vector<Rational> values, int truncation);

/// The EqualWeights(n1,n2) schedule: lambda_i = 1 for i < n1,
/// 1 - 1/(n2-i+1) for n1 <= i <= n2, and 0 beyond. Its weight matrix assigns
/// equal weight 1/(n2-n1+1) to the n-step returns with n1 <= n <= n2 once the
/// row index exceeds n2. Stored exactly (all values are rational).
LambdaSchedule equal_weights(int n1, int n2);

/// Lower-triangular, row-stochastic weight matrix over bootstrapping points.
/// rows[m-1] holds the m entries of row m:
///   (1-l1), l1(1-l2), ..., l1...l_{m-2}(1-l_{m-1}), l1...l_{m-1}.
/// Row sums are 1 and entries satisfy W[j][j-1] + W[j][j] = W[j-1][j-1].
struct WeightMatrix {
    std::vector<std::vector<double>> rows;
    std::optional<std::vector<std::vector<Rational>>> exact_rows;

    double at(int row, int col) const;  // 1-based, 0 above the diagonal
    Rational exact_at(int row, int col) const;
};

/// Expands the first `rows` rows of the weight matrix induced by a schedule.
/// Rows past L+1 repeat the row-(L+1) pattern padded with zeros, because
/// lambda_j = 0 for j > L freezes the weights.
WeightMatrix weight_matrix(const LambdaSchedule& schedule, int rows);

/// Accepts either a bracketed list "[1, 1, 0.6667, 0.5]" or the named form
/// "equal_weights(3,5)".
LambdaSchedule parse_schedule(const std::string& spec);
std::string format_schedule(const LambdaSchedule& schedule);

}  // namespace tdsched
