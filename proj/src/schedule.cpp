#include "tdsched/schedule.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace tdsched {

namespace {

void check_values(std::size_t count, int truncation) {
    if (count == 0) throw std::invalid_argument("lambda-schedule must not be empty");
    if (truncation != static_cast<int>(count))
        throw std::invalid_argument("truncation must equal the number of schedule values");
}

}  // namespace

LambdaSchedule make_schedule(std::vector<double> values, int truncation) {
    check_values(values.size(), truncation);
    for (double v : values)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("schedule value outside [0,1]");
    LambdaSchedule s;
    s.values_ = std::move(values);
    return s;
}

LambdaSchedule make_schedule(std::vector<Rational> values, int truncation) {
    check_values(values.size(), truncation);
    std::vector<double> reals;
    reals.reserve(values.size());
    for (const Rational& v : values) {
        if (v < Rational(0) || v > Rational(1))
            throw std::invalid_argument("schedule value outside [0,1]");
        reals.push_back(boost::rational_cast<double>(v));
    }
    LambdaSchedule s;
    s.values_ = std::move(reals);
    s.exact_ = std::move(values);
    return s;
}

LambdaSchedule equal_weights(int n1, int n2) {
    if (n1 < 1 || n2 < n1) throw std::invalid_argument("equal_weights requires 1 <= n1 <= n2");
    std::vector<Rational> values;
    values.reserve(static_cast<std::size_t>(n2));
    for (int i = 1; i <= n2; ++i) {
        if (i < n1)
            values.emplace_back(1);
        else
            values.emplace_back(n2 - i, n2 - i + 1);  // 1 - 1/(n2-i+1)
    }
    return make_schedule(std::move(values), n2);
}

Rational LambdaSchedule::exact_value(int j) const {
    if (!exact_) throw std::logic_error("schedule has no exact representation");
    if (j >= 1 && j <= truncation()) return (*exact_)[static_cast<std::size_t>(j - 1)];
    return Rational(0);
}

double LambdaSchedule::prefix_product(int k, double gamma) const {
    if (k < 0) throw std::invalid_argument("prefix product index must be nonnegative");
    double p = 1.0;
    for (int j = 1; j <= k; ++j) {
        p *= gamma * value(j);
        if (p == 0.0) break;
    }
    return p;
}

double WeightMatrix::at(int row, int col) const {
    if (row < 1 || row > static_cast<int>(rows.size()) || col < 1)
        throw std::out_of_range("weight matrix index");
    if (col > row) return 0.0;
    return rows[static_cast<std::size_t>(row - 1)][static_cast<std::size_t>(col - 1)];
}

Rational WeightMatrix::exact_at(int row, int col) const {
    if (!exact_rows) throw std::logic_error("weight matrix has no exact representation");
    if (row < 1 || row > static_cast<int>(exact_rows->size()) || col < 1)
        throw std::out_of_range("weight matrix index");
    if (col > row) return Rational(0);
    return (*exact_rows)[static_cast<std::size_t>(row - 1)][static_cast<std::size_t>(col - 1)];
}

WeightMatrix weight_matrix(const LambdaSchedule& schedule, int rows) {
    if (rows < 1) throw std::invalid_argument("weight matrix needs at least one row");
    WeightMatrix w;
    w.rows.reserve(static_cast<std::size_t>(rows));
    for (int m = 1; m <= rows; ++m) {
        std::vector<double> row(static_cast<std::size_t>(m));
        double prefix = 1.0;  // lambda_1 ... lambda_{k-1}
        for (int k = 1; k < m; ++k) {
            double lam = schedule.value(k);
            row[static_cast<std::size_t>(k - 1)] = prefix * (1.0 - lam);
            prefix *= lam;
        }
        row[static_cast<std::size_t>(m - 1)] = prefix;
        w.rows.push_back(std::move(row));
    }
    if (schedule.is_exact()) {
        std::vector<std::vector<Rational>> exact;
        exact.reserve(static_cast<std::size_t>(rows));
        for (int m = 1; m <= rows; ++m) {
            std::vector<Rational> row(static_cast<std::size_t>(m));
            Rational prefix(1);
            for (int k = 1; k < m; ++k) {
                Rational lam = schedule.exact_value(k);
                row[static_cast<std::size_t>(k - 1)] = prefix * (Rational(1) - lam);
                prefix *= lam;
            }
            row[static_cast<std::size_t>(m - 1)] = prefix;
            exact.push_back(std::move(row));
        }
        w.exact_rows = std::move(exact);
    }
    return w;
}

namespace {

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

LambdaSchedule parse_schedule(const std::string& spec) {
    std::string s = strip(spec);
    if (s.empty()) throw std::invalid_argument("empty schedule spec");

    std::string lower;
    for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

    if (lower.rfind("equal_weights", 0) == 0 || lower.rfind("equalweights", 0) == 0) {
        std::size_t open = s.find('(');
        std::size_t close = s.rfind(')');
        if (open == std::string::npos || close == std::string::npos || close < open)
            throw std::invalid_argument("malformed equal_weights spec: " + spec);
        std::string args = s.substr(open + 1, close - open - 1);
        std::size_t comma = args.find(',');
        if (comma == std::string::npos)
            throw std::invalid_argument("equal_weights needs two arguments: " + spec);
        int n1 = std::stoi(strip(args.substr(0, comma)));
        int n2 = std::stoi(strip(args.substr(comma + 1)));
        return equal_weights(n1, n2);
    }

    std::string body = s;
    if (body.front() == '[') {
        if (body.back() != ']') throw std::invalid_argument("unterminated schedule list: " + spec);
        body = body.substr(1, body.size() - 2);
    }
    std::vector<double> values;
    std::stringstream ss(body);
    std::string token;
    while (std::getline(ss, token, ',')) {
        token = strip(token);
        if (token.empty()) throw std::invalid_argument("empty entry in schedule list: " + spec);
        char* end = nullptr;
        double v = std::strtod(token.c_str(), &end);
        if (end == token.c_str() || *end != '\0')
            throw std::invalid_argument("bad schedule value: " + token);
        values.push_back(v);
    }
    return make_schedule(std::move(values), static_cast<int>(values.size()));
}

std::string format_schedule(const LambdaSchedule& schedule) {
    std::ostringstream out;
    out << '[';
    for (int j = 1; j <= schedule.truncation(); ++j) {
        if (j > 1) out << ", ";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", schedule.value(j));
        out << buf;
    }
    out << ']';
    return out.str();
}

}  // namespace tdsched
