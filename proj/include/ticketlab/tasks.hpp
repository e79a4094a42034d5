#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ticketlab {

// Fixed vocabulary layout used by every generator. Ids 4 and up are content
// tokens, grouped into four classes of fifteen for the grammar.
namespace vocab {
constexpr size_t BOS = 0;
constexpr size_t EOS = 1;
constexpr size_t MASK = 2;
constexpr size_t SEP = 3;
constexpr size_t FIRST_CONTENT = 4;
constexpr size_t SIZE = 64;
constexpr size_t N_CLASSES = 4;
constexpr size_t CLASS_SIZE = (SIZE - FIRST_CONTENT) / N_CLASSES;

size_t token_class(size_t token);  // content tokens only
} // namespace vocab

enum class TaskKind { classification, regression };
enum class MetricKind { accuracy, matthews, pearson };

struct Dataset {
    std::vector<std::vector<size_t>> sequences;
    std::vector<double> labels;  // class index or real value, per TaskKind

    size_t size() const { return sequences.size(); }
    void validate(TaskKind kind, size_t vocab_size, size_t max_len, size_t n_classes) const;
};

struct TaskSpec {
    std::string name;
    TaskKind kind = TaskKind::classification;
    MetricKind metric = MetricKind::accuracy;
    size_t n_classes = 2;  // 1 for regression
    uint64_t seed = 0;
    size_t train_size = 0;
    size_t dev_size = 0;
};

struct Task {
    TaskSpec spec;
    Dataset train;
    Dataset dev;
};

// Sequences from a seeded stochastic grammar: Markov class agreement between
// neighbours plus a long-range copy (the token before EOS repeats the token
// after BOS), so masked-LM training has reusable structure to pick up.
Dataset make_pretrain_corpus(uint64_t seed, size_t size);

// The fine-tuning suite. Six tasks:
//   presence  - does token 7 occur before the anchor 23     (accuracy)
//   order     - does token 10 precede token 20              (accuracy)
//   parity    - odd number of copies of token 9             (accuracy)
//   grammar   - closer token follows its opener             (matthews)
//   locate    - needle position in the body, regression     (pearson)
//   noise     - labels independent of the sequence          (accuracy)
// Train and dev sets are disjoint by construction (global dedup).
std::vector<Task> make_task_suite(uint64_t seed, size_t train_size, size_t dev_size);

// one task by name, same generators and seeds as the full suite
Task make_task(const std::string& name, uint64_t seed, size_t train_size, size_t dev_size);
std::vector<std::string> task_names();

// majority-class rate for classification, label variance baseline context
double majority_class_rate(const Dataset& d);

// line format: token ids space-separated, a tab, then the label
std::string dataset_to_text(const Dataset& d);
Dataset dataset_from_text(const std::string& text);

} // namespace ticketlab
