#pragma once

#include <span>
#include <vector>

namespace icdn::stats {

double mean(std::span<const double> x);

// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
double sample_sd(std::span<const double> x);

// Empirical quantile with linear interpolation between order statistics
// (h = (n-1) p). `sorted` must be ascending and nonempty.
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> x, double p);
double median(std::vector<double> x);

// Pearson correlation; returns 0 when either side has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace icdn::stats
