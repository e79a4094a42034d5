#include "ticketlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ticketlab {

namespace {

void check_lengths(const std::vector<double>& pred, const std::vector<double>& gold,
                   size_t min_len, const char* who) {
    if (pred.size() != gold.size())
        throw std::invalid_argument(std::string(who) + ": length mismatch");
    if (pred.size() < min_len)
        throw std::invalid_argument(std::string(who) + ": too few pairs");
}

} // namespace

double accuracy(const std::vector<double>& pred, const std::vector<double>& gold) {
    check_lengths(pred, gold, 1, "accuracy");
    size_t hit = 0;
    for (size_t i = 0; i < pred.size(); ++i) hit += (pred[i] == gold[i]);
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double matthews_corr(const std::vector<double>& pred, const std::vector<double>& gold) {
    check_lengths(pred, gold, 2, "matthews_corr");
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] != 0.0 && pred[i] != 1.0)
            throw std::invalid_argument("matthews_corr: predictions must be 0 or 1");
        if (gold[i] != 0.0 && gold[i] != 1.0)
            throw std::invalid_argument("matthews_corr: labels must be 0 or 1");
        if (gold[i] == 1.0)
            (pred[i] == 1.0 ? tp : fn) += 1.0;
        else
            (pred[i] == 1.0 ? fp : tn) += 1.0;
    }
    double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(denom);
}

double pearson_corr(const std::vector<double>& pred, const std::vector<double>& gold) {
    check_lengths(pred, gold, 2, "pearson_corr");
    const double n = static_cast<double>(pred.size());
    double mp = 0, mg = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        mp += pred[i];
        mg += gold[i];
    }
    mp /= n;
    mg /= n;
    double cov = 0, vp = 0, vg = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double a = pred[i] - mp, b = gold[i] - mg;
        cov += a * b;
        vp += a * a;
        vg += b * b;
    }
    if (vp == 0.0 || vg == 0.0) return 0.0;
    return cov / std::sqrt(vp * vg);
}

double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty input");
    std::sort(v.begin(), v.end());
    size_t mid = v.size() / 2;
    return (v.size() % 2) ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

double mean(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean: empty input");
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean(v), acc = 0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::vector<size_t> flag_degenerate_runs(const std::vector<double>& seed_metrics) {
    std::vector<size_t> flagged;
    if (seed_metrics.empty()) return flagged;
    double med = median(seed_metrics);
    for (size_t i = 0; i < seed_metrics.size(); ++i)
        if (seed_metrics[i] < med - 0.10) flagged.push_back(i);
    return flagged;
}

} // namespace ticketlab
