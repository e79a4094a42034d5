#include "ticketlab/analysis.hpp"

#include "ticketlab/metrics.hpp"
#include "ticketlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ticketlab {

namespace {

constexpr double nan_marker = std::numeric_limits<double>::quiet_NaN();

std::vector<double> row_normalized(const AttentionMap& map) {
    size_t n = map.n;
    std::vector<double> a(map.cells);
    for (size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (size_t j = 0; j < n; ++j) s += a[i * n + j];
        if (s <= 0.0) {
            for (size_t j = 0; j < n; ++j) a[i * n + j] = 1.0 / static_cast<double>(n);
        } else {
            for (size_t j = 0; j < n; ++j) a[i * n + j] /= s;
        }
    }
    return a;
}

double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_continued_fraction(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

std::vector<double> dirichlet_like_row(size_t n, Rng& rng) {
    std::vector<double> row(n);
    double s = 0.0;
    for (double& v : row) {
        v = rng.uniform(1e-3, 1.0);
        s += v;
    }
    for (double& v : row) v /= s;
    return row;
}

void add_noise(std::vector<double>& cells, size_t n, Rng& rng) {
    double lambda = rng.uniform(0.0, 0.25);
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> noise = dirichlet_like_row(n, rng);
        for (size_t j = 0; j < n; ++j)
            cells[i * n + j] = (1.0 - lambda) * cells[i * n + j] + lambda * noise[j];
    }
}

std::vector<double> diagonal_proto(size_t n, Rng& rng) {
    std::vector<double> cells(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (size_t j = (i == 0 ? 0 : i - 1); j <= std::min(i + 1, n - 1); ++j) {
            double w = rng.uniform(0.3, 1.0);
            cells[i * n + j] = w;
            s += w;
        }
        for (size_t j = 0; j < n; ++j) cells[i * n + j] /= s;
    }
    return cells;
}

std::vector<double> vertical_proto(size_t n, Rng& rng) {
    std::vector<double> cells(n * n, 0.0);
    size_t mode = rng.index(3);  // first column, last column, or both
    for (size_t i = 0; i < n; ++i) {
        double w0 = (mode == 1) ? 0.0 : rng.uniform(0.5, 1.0);
        double w1 = (mode == 0) ? 0.0 : rng.uniform(0.5, 1.0);
        double s = w0 + w1;
        cells[i * n + 0] += w0 / s;
        cells[i * n + (n - 1)] += w1 / s;
    }
    return cells;
}

std::vector<double> block_proto(size_t n, Rng& rng) {
    size_t min_w = std::max<size_t>(3, n / 4);
    size_t w = min_w + rng.index(n - min_w + 1);
    size_t a = rng.index(n - w + 1);
    std::vector<double> cells(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (size_t j = a; j < a + w; ++j) {
            double v = 1.0 + rng.uniform(-0.1, 0.1);
            cells[i * n + j] = v;
            s += v;
        }
        for (size_t j = 0; j < n; ++j) cells[i * n + j] /= s;
    }
    return cells;
}

std::vector<double> heterogeneous_proto(size_t n, Rng& rng) {
    std::vector<double> cells(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        size_t m = 3 + rng.index(2);
        std::vector<size_t> peaks;
        for (int attempt = 0; attempt < 200 && peaks.size() < m; ++attempt) {
            size_t cand = 1 + rng.index(n - 2);  // keep off the special columns
            bool ok = true;
            for (size_t p : peaks)
                if ((cand > p ? cand - p : p - cand) < 3) ok = false;
            if (ok) peaks.push_back(cand);
        }
        double s = 0.0;
        for (size_t p : peaks) {
            double w = rng.uniform(0.5, 1.0);
            cells[i * n + p] += w;
            s += w;
        }
        for (size_t j = 0; j < n; ++j) cells[i * n + j] /= s;
    }
    return cells;
}

std::vector<double> mixed_proto(size_t n, Rng& rng) {
    std::vector<double> d = diagonal_proto(n, rng);
    std::vector<double> v = vertical_proto(n, rng);
    double lambda = rng.uniform(0.45, 0.55);
    std::vector<double> cells(n * n);
    for (size_t i = 0; i < n * n; ++i) cells[i] = lambda * d[i] + (1.0 - lambda) * v[i];
    return cells;
}

} // namespace

std::string pattern_label_name(PatternLabel label) {
    switch (label) {
    case PatternLabel::diagonal: return "diagonal";
    case PatternLabel::vertical: return "vertical";
    case PatternLabel::vertical_diagonal: return "vertical_diagonal";
    case PatternLabel::block: return "block";
    case PatternLabel::heterogeneous: return "heterogeneous";
    }
    throw std::logic_error("unreachable");
}

PatternLabel pattern_label_from_name(const std::string& name) {
    if (name == "diagonal") return PatternLabel::diagonal;
    if (name == "vertical") return PatternLabel::vertical;
    if (name == "vertical_diagonal") return PatternLabel::vertical_diagonal;
    if (name == "block") return PatternLabel::block;
    if (name == "heterogeneous") return PatternLabel::heterogeneous;
    throw std::invalid_argument("unknown pattern label: " + name);
}

AttentionMap raw_attention(const AttentionRecord& rec, size_t layer, size_t head) {
    if (layer >= rec.probs.size() || head >= rec.probs[layer].size())
        throw std::invalid_argument("attention record has no such layer or head");
    if (rec.probs[layer][head].empty())
        throw std::invalid_argument("head was masked; no attention recorded");
    AttentionMap map;
    map.n = rec.seq_len;
    map.cells = rec.probs[layer][head];
    map.variant = MapVariant::raw;
    map.layer = layer;
    map.head = head;
    return map;
}

AttentionMap normed_attention(const EncoderParams& p, const AttentionRecord& rec,
                              size_t layer, size_t head) {
    AttentionMap map = raw_attention(rec, layer, head);
    size_t n = map.n;
    size_t d = p.config.d_model;
    size_t dh = p.config.d_head;
    const auto& x = rec.ln1[layer];
    const auto& wv = p.layers[layer].heads[head].wv.values();
    const auto& wo = p.layers[layer].heads[head].wo.values();

    std::vector<double> norms(n, 0.0);
    std::vector<double> v(dh), out(d);
    for (size_t j = 0; j < n; ++j) {
        for (size_t k = 0; k < dh; ++k) {
            double acc = 0.0;
            for (size_t m = 0; m < d; ++m) acc += wv[k * d + m] * x[j * d + m];
            v[k] = acc;
        }
        double sq = 0.0;
        for (size_t q = 0; q < d; ++q) {
            double acc = 0.0;
            for (size_t k = 0; k < dh; ++k) acc += wo[q * dh + k] * v[k];
            sq += acc * acc;
        }
        norms[j] = std::sqrt(sq);
    }
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) map.cells[i * n + j] *= norms[j];
    map.variant = MapVariant::normed;
    return map;
}

PatternLabel classify_pattern(const AttentionMap& map, const PatternThresholds& t) {
    size_t n = map.n;
    if (n == 0 || map.cells.size() != n * n)
        throw std::invalid_argument("attention map must be square and non-empty");
    std::vector<double> a = row_normalized(map);

    double band = 0.0, edge = 0.0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            size_t dist = i > j ? i - j : j - i;
            if (dist <= 1) band += a[i * n + j];
        }
        edge += a[i * n + 0];
        if (n > 1) edge += a[i * n + (n - 1)];
    }
    band /= static_cast<double>(n);
    edge /= static_cast<double>(n);

    bool diagonal = band >= t.diagonal_band_mass;
    bool vertical = edge >= t.vertical_edge_mass;
    if (diagonal && vertical) return PatternLabel::vertical_diagonal;
    if (diagonal) return PatternLabel::diagonal;
    if (vertical) return PatternLabel::vertical;

    size_t blocky_rows = 0;
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) {
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](size_t lhs, size_t rhs) {
            double lv = a[i * n + lhs], rv = a[i * n + rhs];
            if (lv != rv) return lv > rv;
            return lhs < rhs;
        });
        double cum = 0.0;
        size_t lo = n, hi = 0, k = 0;
        for (size_t j : idx) {
            cum += a[i * n + j];
            lo = std::min(lo, j);
            hi = std::max(hi, j);
            ++k;
            if (cum >= t.support_mass) break;
        }
        double window = static_cast<double>(hi - lo + 1);
        if (window <= t.window_slack * static_cast<double>(k) + 1e-9) ++blocky_rows;
    }
    if (static_cast<double>(blocky_rows) >= t.block_row_fraction * static_cast<double>(n))
        return PatternLabel::block;
    return PatternLabel::heterogeneous;
}

std::vector<double> pattern_distribution(const std::vector<AttentionMap>& maps,
                                         const PatternThresholds& t) {
    if (maps.empty()) throw std::invalid_argument("pattern_distribution needs at least one map");
    std::vector<double> fractions(n_pattern_labels, 0.0);
    for (const auto& m : maps) fractions[static_cast<size_t>(classify_pattern(m, t))] += 1.0;
    for (double& f : fractions) f /= static_cast<double>(maps.size());
    return fractions;
}

std::vector<LabeledMap> pattern_gold_set(uint64_t seed, size_t per_class, size_t n) {
    if (n < 8) throw std::invalid_argument("gold maps need at least 8 positions");
    Rng rng(seed);
    std::vector<LabeledMap> out;
    out.reserve(per_class * n_pattern_labels);
    for (size_t c = 0; c < n_pattern_labels; ++c) {
        auto label = static_cast<PatternLabel>(c);
        for (size_t i = 0; i < per_class; ++i) {
            std::vector<double> cells;
            switch (label) {
            case PatternLabel::diagonal: cells = diagonal_proto(n, rng); break;
            case PatternLabel::vertical: cells = vertical_proto(n, rng); break;
            case PatternLabel::vertical_diagonal: cells = mixed_proto(n, rng); break;
            case PatternLabel::block: cells = block_proto(n, rng); break;
            case PatternLabel::heterogeneous: cells = heterogeneous_proto(n, rng); break;
            }
            add_noise(cells, n, rng);
            LabeledMap lm;
            lm.map.n = n;
            lm.map.cells = std::move(cells);
            lm.map.sample = out.size();
            lm.label = label;
            out.push_back(std::move(lm));
        }
    }
    return out;
}

void BinarySurvivalTable::validate() const {
    if (items() < 2 || raters() < 2)
        throw std::invalid_argument("survival table needs >= 2 items and >= 2 raters");
    for (const auto& row : rows) {
        if (row.size() != raters())
            throw std::invalid_argument("survival table rows are ragged");
        for (uint8_t b : row)
            if (b > 1) throw std::invalid_argument("survival table entries must be 0 or 1");
    }
}

double fleiss_kappa(const BinarySurvivalTable& table) {
    table.validate();
    double n = static_cast<double>(table.items());
    double r = static_cast<double>(table.raters());

    double p_bar = 0.0;
    double ones = 0.0;
    for (const auto& row : table.rows) {
        double x = 0.0;
        for (uint8_t b : row) x += b;
        ones += x;
        p_bar += (x * (x - 1.0) + (r - x) * (r - x - 1.0)) / (r * (r - 1.0));
    }
    p_bar /= n;
    double p1 = ones / (n * r);
    double pe = p1 * p1 + (1.0 - p1) * (1.0 - p1);
    if (1.0 - pe == 0.0) return nan_marker;
    return (p_bar - pe) / (1.0 - pe);
}

double gamma_q(double a, double x) {
    if (a <= 0.0) throw std::invalid_argument("gamma_q needs a > 0");
    if (x < 0.0) throw std::invalid_argument("gamma_q needs x >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_continued_fraction(a, x);
}

double chi_square_survival(double x, double df) { return gamma_q(df / 2.0, x / 2.0); }

CochranQResult cochran_q(const BinarySurvivalTable& table) {
    table.validate();
    size_t k = table.raters();

    std::vector<double> col_totals(k, 0.0);
    double total = 0.0, row_sq = 0.0;
    size_t informative = 0;
    for (const auto& row : table.rows) {
        double r = 0.0;
        for (uint8_t b : row) r += b;
        if (r == 0.0 || r == static_cast<double>(k)) continue;
        ++informative;
        for (size_t j = 0; j < k; ++j) col_totals[j] += row[j];
        total += r;
        row_sq += r * r;
    }

    CochranQResult res;
    res.df = static_cast<double>(k - 1);
    if (informative == 0) {
        res.q = nan_marker;
        res.p = nan_marker;
        return res;
    }
    double col_sq = 0.0;
    for (double c : col_totals) col_sq += c * c;
    double kk = static_cast<double>(k);
    res.q = (kk - 1.0) * (kk * col_sq - total * total) / (kk * total - row_sq);
    res.p = chi_square_survival(res.q, res.df);
    res.defined = true;
    return res;
}

OverlapMatrices overlap_matrix(const std::vector<std::string>& task_names,
                               const std::vector<std::vector<SubnetworkMask>>& masks_per_task) {
    if (task_names.size() != masks_per_task.size() || task_names.empty())
        throw std::invalid_argument("overlap_matrix needs one mask list per task");
    size_t n_seeds = masks_per_task[0].size();
    if (n_seeds == 0) throw std::invalid_argument("overlap_matrix needs at least one seed");

    const SubnetworkMask& ref = masks_per_task[0][0];
    size_t n_layers = ref.heads.size();
    size_t per_layer = n_layers ? ref.heads[0].size() : 0;
    for (const auto& list : masks_per_task) {
        if (list.size() != n_seeds)
            throw std::invalid_argument("overlap_matrix needs the same seed count per task");
        for (const auto& m : list) {
            if (m.heads.size() != n_layers || m.mlps.size() != ref.mlps.size())
                throw std::invalid_argument("overlap_matrix mask shapes differ");
            for (const auto& row : m.heads)
                if (row.size() != per_layer)
                    throw std::invalid_argument("overlap_matrix mask shapes differ");
        }
    }

    size_t n_tasks = task_names.size();
    auto majority_heads = [&](size_t t) {
        std::vector<uint8_t> bits(n_layers * per_layer, 0);
        for (size_t f = 0; f < bits.size(); ++f) {
            double s = 0.0;
            for (const auto& m : masks_per_task[t]) s += m.head_on(f / per_layer, f % per_layer);
            bits[f] = s / static_cast<double>(n_seeds) > 0.5 ? 1 : 0;
        }
        return bits;
    };
    auto majority_mlps = [&](size_t t) {
        std::vector<uint8_t> bits(ref.mlps.size(), 0);
        for (size_t l = 0; l < bits.size(); ++l) {
            double s = 0.0;
            for (const auto& m : masks_per_task[t]) s += m.mlp_on(l);
            bits[l] = s / static_cast<double>(n_seeds) > 0.5 ? 1 : 0;
        }
        return bits;
    };

    std::vector<std::vector<uint8_t>> heads_bits, mlps_bits;
    for (size_t t = 0; t < n_tasks; ++t) {
        heads_bits.push_back(majority_heads(t));
        mlps_bits.push_back(majority_mlps(t));
    }

    OverlapMatrices out;
    out.tasks = task_names;
    out.heads.assign(n_tasks, std::vector<size_t>(n_tasks, 0));
    out.mlps.assign(n_tasks, std::vector<size_t>(n_tasks, 0));
    out.head_mean.assign(n_tasks, std::vector<double>(n_tasks, 0.0));
    out.head_std.assign(n_tasks, std::vector<double>(n_tasks, 0.0));
    out.mlp_mean.assign(n_tasks, std::vector<double>(n_tasks, 0.0));
    out.mlp_std.assign(n_tasks, std::vector<double>(n_tasks, 0.0));

    for (size_t t1 = 0; t1 < n_tasks; ++t1) {
        for (size_t t2 = 0; t2 < n_tasks; ++t2) {
            size_t h = 0;
            for (size_t f = 0; f < heads_bits[t1].size(); ++f)
                if (heads_bits[t1][f] && heads_bits[t2][f]) ++h;
            out.heads[t1][t2] = h;
            size_t ml = 0;
            for (size_t l = 0; l < mlps_bits[t1].size(); ++l)
                if (mlps_bits[t1][l] && mlps_bits[t2][l]) ++ml;
            out.mlps[t1][t2] = ml;

            std::vector<double> per_seed_h, per_seed_m;
            for (size_t s = 0; s < n_seeds; ++s) {
                const auto& a = masks_per_task[t1][s];
                const auto& b = masks_per_task[t2][s];
                double ch = 0.0;
                for (size_t l = 0; l < n_layers; ++l)
                    for (size_t hh = 0; hh < per_layer; ++hh)
                        if (a.head_on(l, hh) && b.head_on(l, hh)) ch += 1.0;
                double cm = 0.0;
                for (size_t l = 0; l < ref.mlps.size(); ++l)
                    if (a.mlp_on(l) && b.mlp_on(l)) cm += 1.0;
                per_seed_h.push_back(ch);
                per_seed_m.push_back(cm);
            }
            out.head_mean[t1][t2] = mean(per_seed_h);
            out.head_std[t1][t2] = sample_std(per_seed_h);
            out.mlp_mean[t1][t2] = mean(per_seed_m);
            out.mlp_std[t1][t2] = sample_std(per_seed_m);
        }
    }
    return out;
}

double survivor_pattern_correlation(const std::vector<uint8_t>& survivors,
                                    const std::vector<PatternLabel>& labels,
                                    PatternLabel target) {
    if (survivors.size() != labels.size())
        throw std::invalid_argument("survival and label vectors differ in length");
    std::vector<double> a, b;
    a.reserve(survivors.size());
    b.reserve(labels.size());
    for (uint8_t s : survivors) a.push_back(s ? 1.0 : 0.0);
    for (PatternLabel l : labels) b.push_back(l == target ? 1.0 : 0.0);
    return pearson_corr(a, b);
}

} // namespace ticketlab
