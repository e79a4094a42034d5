#include "ticketlab/tasks.hpp"

#include "ticketlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ticketlab {

namespace vocab {

size_t token_class(size_t token) {
    if (token < FIRST_CONTENT || token >= SIZE)
        throw std::invalid_argument("token_class: not a content token");
    return (token - FIRST_CONTENT) / CLASS_SIZE;
}

} // namespace vocab

void Dataset::validate(TaskKind kind, size_t vocab_size, size_t max_len,
                       size_t n_classes) const {
    if (sequences.size() != labels.size())
        throw std::invalid_argument("dataset: sequence/label count mismatch");
    for (const auto& s : sequences) {
        if (s.empty() || s.size() > max_len)
            throw std::invalid_argument("dataset: sequence length out of range");
        for (size_t t : s)
            if (t >= vocab_size) throw std::invalid_argument("dataset: token id out of range");
    }
    for (double l : labels) {
        if (!std::isfinite(l)) throw std::invalid_argument("dataset: non-finite label");
        if (kind == TaskKind::classification) {
            if (l != std::floor(l) || l < 0.0 || l >= static_cast<double>(n_classes))
                throw std::invalid_argument("dataset: class label out of range");
        }
    }
}

namespace {

size_t random_content(Rng& rng) { return vocab::FIRST_CONTENT + rng.index(60); }

size_t content_of_class(Rng& rng, size_t cls) {
    return vocab::FIRST_CONTENT + cls * vocab::CLASS_SIZE + rng.index(vocab::CLASS_SIZE);
}

size_t random_content_except(Rng& rng, std::initializer_list<size_t> banned) {
    for (;;) {
        size_t t = random_content(rng);
        bool bad = false;
        for (size_t b : banned) bad |= (t == b);
        if (!bad) return t;
    }
}

// grammar body: neighbouring tokens mostly share or advance a class, and the
// final body token copies the first
std::vector<size_t> grammar_sequence(Rng& rng) {
    const size_t body = 10 + rng.index(5);  // 10..14, total <= 16
    std::vector<size_t> seq;
    seq.reserve(body + 2);
    seq.push_back(vocab::BOS);
    size_t first = random_content(rng);
    seq.push_back(first);
    size_t cls = vocab::token_class(first);
    for (size_t i = 1; i + 1 < body; ++i) {
        double u = rng.uniform();
        if (u < 0.7) {
            // stay
        } else if (u < 0.9) {
            cls = (cls + 1) % vocab::N_CLASSES;
        } else {
            cls = rng.index(vocab::N_CLASSES);
        }
        seq.push_back(content_of_class(rng, cls));
    }
    seq.push_back(first);
    seq.push_back(vocab::EOS);
    return seq;
}

std::vector<size_t> plain_body_sequence(Rng& rng, std::initializer_list<size_t> banned,
                                        size_t min_body = 8, size_t max_body = 13) {
    const size_t body = min_body + rng.index(max_body - min_body + 1);
    std::vector<size_t> seq;
    seq.reserve(body + 2);
    seq.push_back(vocab::BOS);
    for (size_t i = 0; i < body; ++i) seq.push_back(random_content_except(rng, banned));
    seq.push_back(vocab::EOS);
    return seq;
}

using GenFn = std::pair<std::vector<size_t>, double> (*)(Rng&);

// token 7 present before the anchor token 23; the anchor appears exactly
// once in every sequence, the needle sits after it (or is missing) in the
// negatives, so bag-of-tokens shortcuts fail
std::pair<std::vector<size_t>, double> gen_presence(Rng& rng) {
    constexpr size_t needle = 7, anchor = 23;
    double label = rng.bernoulli(0.5) ? 1.0 : 0.0;
    std::vector<size_t> seq = plain_body_sequence(rng, {needle, anchor}, 10, 13);
    const size_t body = seq.size() - 2;
    auto spots = rng.sample_without_replacement(body, 2);
    if (label == 1.0) {
        seq[1 + spots[0]] = needle;
        seq[1 + spots[1]] = anchor;
    } else {
        seq[1 + spots[0]] = anchor;
        if (rng.uniform() < 0.75) seq[1 + spots[1]] = needle;
    }
    return {std::move(seq), label};
}

std::pair<std::vector<size_t>, double> gen_order(Rng& rng) {
    constexpr size_t a = 10, b = 20;
    double label = rng.bernoulli(0.5) ? 1.0 : 0.0;
    std::vector<size_t> seq = plain_body_sequence(rng, {a, b});
    auto spots = rng.sample_without_replacement(seq.size() - 2, 2);
    seq[1 + spots[0]] = (label == 1.0) ? a : b;
    seq[1 + spots[1]] = (label == 1.0) ? b : a;
    return {std::move(seq), label};
}

std::pair<std::vector<size_t>, double> gen_parity(Rng& rng) {
    constexpr size_t marker = 9;
    size_t copies = rng.index(6);
    std::vector<size_t> seq = plain_body_sequence(rng, {marker}, 10, 13);
    auto spots = rng.sample_without_replacement(seq.size() - 2, copies);
    for (size_t s : spots) seq[1 + s] = marker;
    return {std::move(seq), static_cast<double>(copies % 2)};
}

std::pair<std::vector<size_t>, double> gen_grammar(Rng& rng) {
    // bracket-style well-formedness: the closer token 31 has to appear after
    // the single opener token 47; malformed sequences close before opening
    // or never close
    constexpr size_t closer = 31, opener = 47;
    double label = rng.bernoulli(0.5) ? 1.0 : 0.0;
    std::vector<size_t> seq = plain_body_sequence(rng, {closer, opener}, 10, 13);
    const size_t body = seq.size() - 2;
    auto spots = rng.sample_without_replacement(body, 2);
    if (label == 1.0) {
        seq[1 + spots[0]] = opener;
        seq[1 + spots[1]] = closer;
    } else {
        seq[1 + spots[1]] = opener;
        if (rng.uniform() < 0.75) seq[1 + spots[0]] = closer;
    }
    return {std::move(seq), label};
}

std::pair<std::vector<size_t>, double> gen_locate(Rng& rng) {
    // the label encodes how far the needle sits from the anchor, signed and
    // scaled to [0, 1]
    constexpr size_t needle = 40, anchor = 52;
    std::vector<size_t> seq = plain_body_sequence(rng, {needle, anchor}, 10, 13);
    const size_t body = seq.size() - 2;
    auto spots = rng.sample_without_replacement(body, 2);
    bool flip = rng.bernoulli(0.5);
    const size_t pn = flip ? spots[1] : spots[0];
    const size_t pa = flip ? spots[0] : spots[1];
    seq[1 + pn] = needle;
    seq[1 + pa] = anchor;
    double gap = (static_cast<double>(pn) - static_cast<double>(pa)) /
                 static_cast<double>(body - 1);
    return {std::move(seq), (gap + 1.0) / 2.0};
}

std::pair<std::vector<size_t>, double> gen_noise(Rng& rng) {
    std::vector<size_t> seq = plain_body_sequence(rng, {});
    return {std::move(seq), rng.bernoulli(0.5) ? 1.0 : 0.0};
}

struct TaskDef {
    const char* name;
    TaskKind kind;
    MetricKind metric;
    size_t n_classes;
    GenFn gen;
};

constexpr TaskDef k_task_defs[] = {
    {"presence", TaskKind::classification, MetricKind::accuracy, 2, gen_presence},
    {"order", TaskKind::classification, MetricKind::accuracy, 2, gen_order},
    {"parity", TaskKind::classification, MetricKind::accuracy, 2, gen_parity},
    {"grammar", TaskKind::classification, MetricKind::matthews, 2, gen_grammar},
    {"locate", TaskKind::regression, MetricKind::pearson, 1, gen_locate},
    {"noise", TaskKind::classification, MetricKind::accuracy, 2, gen_noise},
};

const TaskDef& find_task_def(const std::string& name) {
    for (const TaskDef& d : k_task_defs)
        if (name == d.name) return d;
    throw std::invalid_argument("unknown task: " + name);
}

} // namespace

Dataset make_pretrain_corpus(uint64_t seed, size_t size) {
    Rng rng = Rng(seed).split("pretrain_corpus");
    Dataset d;
    d.sequences.reserve(size);
    d.labels.assign(size, 0.0);
    for (size_t i = 0; i < size; ++i) d.sequences.push_back(grammar_sequence(rng));
    return d;
}

Task make_task(const std::string& name, uint64_t seed, size_t train_size, size_t dev_size) {
    const TaskDef& def = find_task_def(name);
    Rng rng = Rng(seed).split(std::string("task.") + name);

    Task task;
    task.spec.name = name;
    task.spec.kind = def.kind;
    task.spec.metric = def.metric;
    task.spec.n_classes = def.n_classes;
    task.spec.seed = seed;
    task.spec.train_size = train_size;
    task.spec.dev_size = dev_size;

    const size_t need = train_size + dev_size;
    std::set<std::vector<size_t>> seen;
    std::vector<std::pair<std::vector<size_t>, double>> rows;
    rows.reserve(need);
    size_t attempts = 0;
    while (rows.size() < need) {
        if (++attempts > 100 * need + 1000)
            throw std::runtime_error("task generator cannot produce enough distinct sequences");
        auto [seq, label] = def.gen(rng);
        if (!seen.insert(seq).second) continue;
        rows.emplace_back(std::move(seq), label);
    }
    for (size_t i = 0; i < need; ++i) {
        Dataset& dst = (i < train_size) ? task.train : task.dev;
        dst.sequences.push_back(std::move(rows[i].first));
        dst.labels.push_back(rows[i].second);
    }
    task.train.validate(def.kind, vocab::SIZE, 16, def.n_classes);
    task.dev.validate(def.kind, vocab::SIZE, 16, def.n_classes);
    return task;
}

std::vector<std::string> task_names() {
    std::vector<std::string> names;
    for (const TaskDef& d : k_task_defs) names.emplace_back(d.name);
    return names;
}

std::vector<Task> make_task_suite(uint64_t seed, size_t train_size, size_t dev_size) {
    std::vector<Task> suite;
    for (const TaskDef& d : k_task_defs)
        suite.push_back(make_task(d.name, seed, train_size, dev_size));
    return suite;
}

double majority_class_rate(const Dataset& d) {
    if (d.labels.empty()) throw std::invalid_argument("majority_class_rate: empty dataset");
    std::map<double, size_t> counts;
    for (double l : d.labels) counts[l]++;
    size_t best = 0;
    for (auto& [l, c] : counts) best = std::max(best, c);
    return static_cast<double>(best) / static_cast<double>(d.labels.size());
}

std::string dataset_to_text(const Dataset& d) {
    if (d.sequences.size() != d.labels.size())
        throw std::invalid_argument("dataset_to_text: sequence/label count mismatch");
    std::string out;
    char buf[64];
    for (size_t i = 0; i < d.sequences.size(); ++i) {
        for (size_t j = 0; j < d.sequences[i].size(); ++j) {
            if (j) out += ' ';
            std::snprintf(buf, sizeof buf, "%zu", d.sequences[i][j]);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "\t%.17g\n", d.labels[i]);
        out += buf;
    }
    return out;
}

Dataset dataset_from_text(const std::string& text) {
    Dataset d;
    std::istringstream lines(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (line.empty()) continue;
        size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::invalid_argument("dataset_from_text: missing tab on line " +
                                        std::to_string(lineno));
        std::istringstream toks(line.substr(0, tab));
        std::vector<size_t> seq;
        size_t id;
        while (toks >> id) seq.push_back(id);
        if (seq.empty())
            throw std::invalid_argument("dataset_from_text: empty sequence on line " +
                                        std::to_string(lineno));
        size_t pos = 0;
        double label = std::stod(line.substr(tab + 1), &pos);
        d.sequences.push_back(std::move(seq));
        d.labels.push_back(label);
    }
    return d;
}

} // namespace ticketlab
