#pragma once

#include <string>
#include <vector>

namespace spme {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;  // standard error of the mean (0 for fewer than 2 samples)
};

MeanSe mean_se(const std::vector<double>& xs);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Least-squares fit of log(y) against log(x); all entries must be positive.
LineFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

/// Shortest round-trip decimal form of v ("nan", "inf", "-inf" otherwise).
std::string format_number(double v);

/// Quotes a CSV field when it contains a comma, quote or line break.
std::string csv_field(const std::string& s);

}  // namespace spme
