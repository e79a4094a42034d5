#pragma once

#include <cstddef>
#include <vector>

namespace ticketlab {

// fraction of exact matches
double accuracy(const std::vector<double>& pred, const std::vector<double>& gold);

// Matthews correlation over binary labels {0,1}; returns 0 when any
// confusion-matrix margin is empty (documented convention)
double matthews_corr(const std::vector<double>& pred, const std::vector<double>& gold);

// Pearson correlation; returns 0 when either side has zero variance
double pearson_corr(const std::vector<double>& pred, const std::vector<double>& gold);

// indices of runs whose metric falls more than 0.10 below the seed median
std::vector<size_t> flag_degenerate_runs(const std::vector<double>& seed_metrics);

double median(std::vector<double> v);
double mean(const std::vector<double>& v);
double sample_std(const std::vector<double>& v);  // n-1 denominator, 0 for n < 2

} // namespace ticketlab
