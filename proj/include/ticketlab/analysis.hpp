#pragma once

#include "ticketlab/encoder.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ticketlab {

enum class MapVariant { raw, normed };
enum class PatternLabel { diagonal, vertical, vertical_diagonal, block, heterogeneous };
constexpr size_t n_pattern_labels = 5;

std::string pattern_label_name(PatternLabel label);
PatternLabel pattern_label_from_name(const std::string& name);

struct AttentionMap {
    size_t n = 0;
    std::vector<double> cells;  // row-major n*n
    MapVariant variant = MapVariant::raw;
    std::string task;
    uint64_t seed = 0;
    size_t layer = 0;
    size_t head = 0;
    size_t sample = 0;

    double at(size_t i, size_t j) const { return cells[i * n + j]; }
};

// Attention probabilities straight off a forward-pass record.
AttentionMap raw_attention(const AttentionRecord& rec, size_t layer, size_t head);

// Entry (i,j) = alpha_ij * l2norm(wo * (wv * x_j)) where x_j is the
// post-norm row the head consumed; weighting keeps heads comparable when
// value vectors carry very different scales.
AttentionMap normed_attention(const EncoderParams& p, const AttentionRecord& rec,
                              size_t layer, size_t head);

// Decision thresholds for the feature-based pattern rule, grouped so reports
// can print the exact configuration that produced a labeling.
struct PatternThresholds {
    double diagonal_band_mass = 0.35;  // mean row mass with |i-j| <= 1
    double vertical_edge_mass = 0.35;  // mean mass in the first and last columns
    double support_mass = 0.8;         // row mass that defines the support set
    double window_slack = 1.5;         // contiguity allowance: window <= slack * support
    double block_row_fraction = 0.6;   // rows that must look contiguous for "block"
};

// Row-normalizes, then tests features in order: diagonal band, edge columns,
// both (vertical_diagonal), contiguous-support rows (block), else
// heterogeneous. Total and deterministic over square nonnegative maps.
PatternLabel classify_pattern(const AttentionMap& map,
                              const PatternThresholds& t = PatternThresholds{});

// label fractions in PatternLabel order; sums to one
std::vector<double> pattern_distribution(const std::vector<AttentionMap>& maps,
                                         const PatternThresholds& t = PatternThresholds{});

// Noisy archetype maps with known labels, per_class of each, for grading the
// classifier without hand-annotated data.
struct LabeledMap {
    AttentionMap map;
    PatternLabel label = PatternLabel::heterogeneous;
};
std::vector<LabeledMap> pattern_gold_set(uint64_t seed, size_t per_class, size_t n = 16);

// items (heads) x raters (seeds), entries 0/1
struct BinarySurvivalTable {
    std::vector<std::vector<uint8_t>> rows;

    size_t items() const { return rows.size(); }
    size_t raters() const { return rows.empty() ? 0 : rows[0].size(); }
    void validate() const;  // rectangular, >=2 items, >=2 raters, binary
};

// Two-category Fleiss' kappa; returns NaN when expected agreement is exact
// (all entries identical) since the denominator vanishes.
double fleiss_kappa(const BinarySurvivalTable& table);

struct CochranQResult {
    double q = 0.0;
    double df = 0.0;
    double p = 1.0;
    bool defined = false;  // false when every row was degenerate
};

// Cochran's Q over seeds as treatments; all-0 and all-1 rows are dropped per
// the standard definition, p from the chi-square upper tail.
CochranQResult cochran_q(const BinarySurvivalTable& table);

// regularized upper incomplete gamma Q(a, x); chi-square survival is
// Q(df/2, x/2)
double gamma_q(double a, double x);
double chi_square_survival(double x, double df);

struct OverlapMatrices {
    std::vector<std::string> tasks;
    // intersections of the seed-majority masks (survival > 0.5 across seeds)
    std::vector<std::vector<size_t>> heads;
    std::vector<std::vector<size_t>> mlps;
    // per-seed intersection statistics, seed-aligned across tasks
    std::vector<std::vector<double>> head_mean, head_std;
    std::vector<std::vector<double>> mlp_mean, mlp_std;
};

// masks_per_task[t][s] is task t's surviving mask under seed s; every task
// needs the same seed count and mask shape
OverlapMatrices overlap_matrix(const std::vector<std::string>& task_names,
                               const std::vector<std::vector<SubnetworkMask>>& masks_per_task);

// Pearson correlation between a binary survival vector and the indicator of
// a chosen pattern label; zero-variance vectors give 0 by convention.
double survivor_pattern_correlation(const std::vector<uint8_t>& survivors,
                                    const std::vector<PatternLabel>& labels,
                                    PatternLabel target = PatternLabel::heterogeneous);

} // namespace ticketlab
