#include "ticketlab/io.hpp"

#include "ticketlab/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ticketlab {

namespace {

using nlohmann::json;

json model_to_json(const ModelConfig& m) {
    return json{{"n_layers", m.n_layers},   {"n_heads", m.n_heads},
                {"d_model", m.d_model},     {"d_head", m.d_head},
                {"d_ff", m.d_ff},           {"vocab_size", m.vocab_size},
                {"max_seq_len", m.max_seq_len}, {"n_classes", m.n_classes},
                {"dropout", m.dropout},     {"ln_eps", m.ln_eps}};
}

ModelConfig model_from_json(const json& j) {
    ModelConfig d;
    ModelConfig m;
    m.n_layers = j.value("n_layers", d.n_layers);
    m.n_heads = j.value("n_heads", d.n_heads);
    m.d_model = j.value("d_model", d.d_model);
    m.d_head = j.value("d_head", d.d_head);
    m.d_ff = j.value("d_ff", d.d_ff);
    m.vocab_size = j.value("vocab_size", d.vocab_size);
    m.max_seq_len = j.value("max_seq_len", d.max_seq_len);
    m.n_classes = j.value("n_classes", d.n_classes);
    m.dropout = j.value("dropout", d.dropout);
    m.ln_eps = j.value("ln_eps", d.ln_eps);
    return m;
}

json train_to_json(const TrainConfig& t) {
    return json{{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"lr", t.lr},
                {"beta1", t.beta1},   {"beta2", t.beta2},           {"adam_eps", t.adam_eps},
                {"clip_norm", t.clip_norm}, {"seed", t.seed}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig d;
    TrainConfig t;
    t.epochs = j.value("epochs", d.epochs);
    t.batch_size = j.value("batch_size", d.batch_size);
    t.lr = j.value("lr", d.lr);
    t.beta1 = j.value("beta1", d.beta1);
    t.beta2 = j.value("beta2", d.beta2);
    t.adam_eps = j.value("adam_eps", d.adam_eps);
    t.clip_norm = j.value("clip_norm", d.clip_norm);
    t.seed = j.value("seed", d.seed);
    return t;
}

// What a checkpoint's weights depend on. Pruning knobs and run-local
// details stay out so masks can be checked against the model that made
// them, which is the only mismatch worth refusing.
json config_identity(const ExperimentConfig& c) {
    return json{{"model", model_to_json(c.model)},
                {"train", train_to_json(c.train)},
                {"suite_seed", c.suite_seed},
                {"task_train_size", c.task_train_size},
                {"task_dev_size", c.task_dev_size},
                {"pretrain_size", c.pretrain_size},
                {"pretrain_epochs", c.pretrain_epochs},
                {"seeds", c.seeds},
                {"tasks", c.tasks}};
}

json config_body(const ExperimentConfig& c) {
    json j = config_identity(c);
    j["mode"] = prune_mode_name(c.mode);
    j["threshold"] = c.threshold;
    j["fraction"] = c.fraction;
    j["importance_samples"] = c.importance_samples;
    j["output_dir"] = c.output_dir;
    j["workers"] = c.workers;
    return j;
}

json subnet_to_json(const SubnetworkMask& m) {
    json xi = json::array();
    for (const auto& row : m.heads) {
        json r = json::array();
        for (double x : row) r.push_back(x != 0.0 ? 1 : 0);
        xi.push_back(std::move(r));
    }
    json nu = json::array();
    for (double x : m.mlps) nu.push_back(x != 0.0 ? 1 : 0);
    return json{{"xi", std::move(xi)}, {"nu", std::move(nu)}};
}

SubnetworkMask subnet_from_json(const json& j) {
    SubnetworkMask m;
    for (const auto& row : j.at("xi")) {
        std::vector<double> r;
        for (const auto& x : row) r.push_back(x.get<int>() != 0 ? 1.0 : 0.0);
        m.heads.push_back(std::move(r));
    }
    for (const auto& x : j.at("nu")) m.mlps.push_back(x.get<int>() != 0 ? 1.0 : 0.0);
    if (!m.heads.empty())
        for (const auto& row : m.heads)
            if (row.size() != m.heads.front().size())
                throw std::runtime_error("ragged xi matrix in mask file");
    return m;
}

// run lengths alternate, starting with the zero run (possibly of length 0)
json rle_encode(const std::vector<uint8_t>& bits) {
    json runs = json::array();
    uint8_t current = 0;
    size_t run = 0;
    for (uint8_t b : bits) {
        if (b == current) {
            ++run;
        } else {
            runs.push_back(run);
            current = b;
            run = 1;
        }
    }
    runs.push_back(run);
    return runs;
}

std::vector<uint8_t> rle_decode(const json& runs, size_t expected) {
    std::vector<uint8_t> bits;
    uint8_t current = 0;
    for (const auto& r : runs) {
        size_t n = r.get<size_t>();
        bits.insert(bits.end(), n, current);
        current = current ? 0 : 1;
    }
    if (bits.size() != expected)
        throw std::runtime_error("run-length payload does not match declared size");
    return bits;
}

json weights_to_json(const WeightMask& m) {
    json arr = json::array();
    for (const auto& [name, bits] : m.bits)
        arr.push_back(json{{"name", name}, {"size", bits.size()}, {"rle", rle_encode(bits)}});
    return arr;
}

WeightMask weights_from_json(const json& arr) {
    WeightMask m;
    for (const auto& entry : arr) {
        std::string name = entry.at("name").get<std::string>();
        size_t size = entry.at("size").get<size_t>();
        m.bits.emplace_back(std::move(name), rle_decode(entry.at("rle"), size));
    }
    return m;
}

template <typename T> void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T> T read_raw(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("truncated checkpoint");
    return v;
}

std::string color_ramp(double t) {
    t = std::clamp(t, 0.0, 1.0);
    auto lerp = [t](double a, double b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", lerp(247, 33), lerp(251, 102), lerp(255, 172));
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace

void ExperimentConfig::validate() const {
    model.validate();
    train.validate();
    if (threshold <= 0.0) throw std::invalid_argument("threshold must be positive");
    if (fraction <= 0.0 || fraction >= 1.0) throw std::invalid_argument("fraction must be in (0,1)");
    if (seeds.empty()) throw std::invalid_argument("need at least one seed");
    if (task_train_size == 0 || task_dev_size == 0)
        throw std::invalid_argument("task splits must be non-empty");
    if (workers == 0) throw std::invalid_argument("workers must be at least 1");
    auto known = task_names();
    for (const auto& t : tasks)
        if (std::find(known.begin(), known.end(), t) == known.end())
            throw std::invalid_argument("unknown task: " + t);
}

PruneConfig ExperimentConfig::prune_config() const {
    PruneConfig pc;
    pc.threshold = threshold;
    pc.fraction = fraction;
    pc.importance_samples = importance_samples;
    return pc;
}

std::string config_to_json(const ExperimentConfig& cfg) { return config_body(cfg).dump(2) + "\n"; }

ExperimentConfig config_from_json(const std::string& text) {
    json j = json::parse(text);
    ExperimentConfig d;
    ExperimentConfig c;
    if (j.contains("model")) c.model = model_from_json(j["model"]);
    if (j.contains("train")) c.train = train_from_json(j["train"]);
    c.suite_seed = j.value("suite_seed", d.suite_seed);
    c.task_train_size = j.value("task_train_size", d.task_train_size);
    c.task_dev_size = j.value("task_dev_size", d.task_dev_size);
    c.pretrain_size = j.value("pretrain_size", d.pretrain_size);
    c.pretrain_epochs = j.value("pretrain_epochs", d.pretrain_epochs);
    if (j.contains("mode")) c.mode = prune_mode_from_name(j["mode"].get<std::string>());
    c.threshold = j.value("threshold", d.threshold);
    c.fraction = j.value("fraction", d.fraction);
    c.importance_samples = j.value("importance_samples", d.importance_samples);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<uint64_t>>();
    if (j.contains("tasks")) c.tasks = j["tasks"].get<std::vector<std::string>>();
    c.output_dir = j.value("output_dir", d.output_dir);
    c.workers = j.value("workers", d.workers);
    return c;
}

std::string config_hash(const ExperimentConfig& cfg) {
    uint64_t h = fnv1a64(config_identity(cfg).dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string mask_to_json(const MaskFile& m) {
    json j{{"schema_version", m.schema_version},
           {"method", prune_method_name(m.method)},
           {"task", m.task},
           {"seed", m.seed},
           {"config_hash", m.config_hash}};
    if (m.method == PruneMethod::structured) {
        json s = subnet_to_json(m.subnet);
        j["xi"] = s["xi"];
        j["nu"] = s["nu"];
    } else {
        j["weights"] = weights_to_json(m.weights);
    }
    return j.dump(2) + "\n";
}

MaskFile mask_from_json(const std::string& text) {
    json j = json::parse(text);
    MaskFile m;
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != 1)
        throw std::runtime_error("unsupported mask schema version " +
                                 std::to_string(m.schema_version));
    m.method = prune_method_from_name(j.at("method").get<std::string>());
    m.task = j.value("task", "");
    m.seed = j.value("seed", uint64_t{0});
    m.config_hash = j.value("config_hash", "");
    if (m.method == PruneMethod::structured)
        m.subnet = subnet_from_json(j);
    else
        m.weights = weights_from_json(j.at("weights"));
    return m;
}

void save_mask(const std::string& path, const MaskFile& m) {
    write_text_file(path, mask_to_json(m));
}

MaskFile load_mask(const std::string& path, const std::string& expected_hash) {
    MaskFile m = mask_from_json(read_text_file(path));
    if (!expected_hash.empty() && m.config_hash != expected_hash)
        throw std::runtime_error("mask " + path + " was produced under config " + m.config_hash +
                                 ", refusing to apply it under " + expected_hash);
    return m;
}

void save_checkpoint(const std::string& path, const EncoderParams& p,
                     const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write("TLABCKP1", 8);
    auto tensors = p.named_tensors();
    json header{{"config", model_to_json(p.config)},
                {"hash", config_hash},
                {"tensors", tensors.size()}};
    std::string htext = header.dump();
    write_raw<uint32_t>(out, static_cast<uint32_t>(htext.size()));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& [name, t] : tensors) {
        write_raw<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        const auto& values = t.values();
        write_raw<uint64_t>(out, values.size());
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

EncoderParams load_checkpoint(const std::string& path, const std::string& expected_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "TLABCKP1", 8) != 0)
        throw std::runtime_error(path + " is not a checkpoint file");
    auto hlen = read_raw<uint32_t>(in);
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw std::runtime_error("truncated checkpoint");
    json header = json::parse(htext);
    if (!expected_hash.empty() && header.at("hash").get<std::string>() != expected_hash)
        throw std::runtime_error("checkpoint " + path + " was produced under config " +
                                 header.at("hash").get<std::string>() +
                                 ", refusing to load it under " + expected_hash);
    ModelConfig cfg = model_from_json(header.at("config"));
    EncoderParams p = init_params(cfg, 0);
    auto tensors = p.named_tensors();
    size_t count = header.at("tensors").get<size_t>();
    if (count != tensors.size())
        throw std::runtime_error("checkpoint tensor count does not match the model layout");
    for (size_t i = 0; i < count; ++i) {
        auto nlen = read_raw<uint32_t>(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        auto vcount = read_raw<uint64_t>(in);
        auto it = std::find_if(tensors.begin(), tensors.end(),
                               [&](const auto& nt) { return nt.first == name; });
        if (it == tensors.end())
            throw std::runtime_error("checkpoint tensor " + name + " has no home in the model");
        if (it->second.size() != vcount)
            throw std::runtime_error("checkpoint tensor " + name + " has the wrong size");
        in.read(reinterpret_cast<char*>(it->second.node()->values.data()),
                static_cast<std::streamsize>(vcount * sizeof(double)));
        if (!in) throw std::runtime_error("truncated checkpoint");
    }
    return p;
}

std::string record_to_json(const ExperimentRecord& r) {
    json j{{"task", r.task},
           {"seed", r.seed},
           {"method", prune_method_name(r.method)},
           {"kind", subnetwork_kind_name(r.kind)},
           {"size_fraction", r.size_fraction},
           {"pruned_metric", r.pruned_metric},
           {"retrained_metric", r.retrained_metric},
           {"retrained", r.retrained},
           {"trace_ref", r.trace_ref}};
    if (r.method == PruneMethod::structured) {
        json s = subnet_to_json(r.subnet);
        j["xi"] = s["xi"];
        j["nu"] = s["nu"];
    } else {
        j["weights"] = weights_to_json(r.weights);
    }
    return j.dump(2) + "\n";
}

ExperimentRecord record_from_json(const std::string& text) {
    json j = json::parse(text);
    ExperimentRecord r;
    r.task = j.at("task").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    r.method = prune_method_from_name(j.at("method").get<std::string>());
    r.kind = subnetwork_kind_from_name(j.at("kind").get<std::string>());
    r.size_fraction = j.at("size_fraction").get<double>();
    r.pruned_metric = j.at("pruned_metric").get<double>();
    r.retrained_metric = j.at("retrained_metric").get<double>();
    r.retrained = j.at("retrained").get<bool>();
    r.trace_ref = j.value("trace_ref", "");
    if (r.method == PruneMethod::structured)
        r.subnet = subnet_from_json(j);
    else
        r.weights = weights_from_json(j.at("weights"));
    return r;
}

std::string trace_to_csv(const PruneTrace& trace) {
    std::string out = "iteration,surviving_fraction,dev_metric,masked_this_step\n";
    for (const auto& it : trace.iterations) {
        out += std::to_string(it.iteration);
        out += ',';
        out += format_shortest(it.surviving_fraction);
        out += ',';
        out += format_shortest(it.dev_metric);
        out += ',';
        out += std::to_string(it.masked_this_step);
        out += '\n';
    }
    return out;
}

std::string heatmap_svg(const std::vector<std::vector<double>>& mean,
                        const std::vector<std::vector<double>>* std_dev,
                        const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels, const std::string& title) {
    if (mean.empty() || mean.front().empty()) throw std::invalid_argument("empty heatmap");
    size_t rows = mean.size(), cols = mean.front().size();
    for (const auto& r : mean)
        if (r.size() != cols) throw std::invalid_argument("ragged heatmap matrix");
    if (std_dev) {
        if (std_dev->size() != rows) throw std::invalid_argument("std shape mismatch");
        for (const auto& r : *std_dev)
            if (r.size() != cols) throw std::invalid_argument("std shape mismatch");
    }
    if (row_labels.size() != rows || col_labels.size() != cols)
        throw std::invalid_argument("label count mismatch");

    double lo = mean[0][0], hi = mean[0][0];
    for (const auto& r : mean)
        for (double v : r) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    double span = hi - lo;

    const int cw = 72, ch = 48, left = 110, top = 64;
    int width = left + static_cast<int>(cols) * cw + 16;
    int height = top + static_cast<int>(rows) * ch + 16;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\" font-family=\"monospace\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + std::to_string(left) + "\" y=\"24\" font-size=\"15\">" +
           xml_escape(title) + "</text>\n";
    for (size_t c = 0; c < cols; ++c) {
        int x = left + static_cast<int>(c) * cw + cw / 2;
        svg += "<text x=\"" + std::to_string(x) +
               "\" y=\"52\" font-size=\"11\" text-anchor=\"middle\">" + xml_escape(col_labels[c]) +
               "</text>\n";
    }
    for (size_t r = 0; r < rows; ++r) {
        int y = top + static_cast<int>(r) * ch + ch / 2 + 4;
        svg += "<text x=\"" + std::to_string(left - 8) + "\" y=\"" + std::to_string(y) +
               "\" font-size=\"11\" text-anchor=\"end\">" + xml_escape(row_labels[r]) +
               "</text>\n";
        for (size_t c = 0; c < cols; ++c) {
            double v = mean[r][c];
            double t = span > 0.0 ? (v - lo) / span : 0.5;
            int x = left + static_cast<int>(c) * cw;
            int cy = top + static_cast<int>(r) * ch;
            std::string text_fill = t > 0.6 ? "white" : "#1a1a2e";
            svg += "<g>";
            svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(cy) +
                   "\" width=\"" + std::to_string(cw) + "\" height=\"" + std::to_string(ch) +
                   "\" fill=\"" + color_ramp(t) + "\" stroke=\"white\"/>";
            int tx = x + cw / 2;
            if (std_dev) {
                svg += "<text x=\"" + std::to_string(tx) + "\" y=\"" + std::to_string(cy + 21) +
                       "\" font-size=\"12\" text-anchor=\"middle\" fill=\"" + text_fill + "\">" +
                       format_fixed(v, 2) + "</text>";
                svg += "<text x=\"" + std::to_string(tx) + "\" y=\"" + std::to_string(cy + 38) +
                       "\" font-size=\"10\" text-anchor=\"middle\" fill=\"" + text_fill + "\">" +
                       format_fixed((*std_dev)[r][c], 2) + "</text>";
            } else {
                svg += "<text x=\"" + std::to_string(tx) + "\" y=\"" + std::to_string(cy + 28) +
                       "\" font-size=\"12\" text-anchor=\"middle\" fill=\"" + text_fill + "\">" +
                       format_fixed(v, 2) + "</text>";
            }
            svg += "</g>\n";
        }
    }
    svg += "</svg>\n";
    return svg;
}

std::string bar_chart_svg(const std::vector<std::string>& group_labels,
                          const std::vector<BarSeries>& series, const std::string& title) {
    if (group_labels.empty() || series.empty()) throw std::invalid_argument("empty bar chart");
    for (const auto& s : series)
        if (s.values.size() != group_labels.size())
            throw std::invalid_argument("series length mismatch");

    static const char* palette[] = {"#4878a8", "#e1812c", "#3a923a", "#c03d3e", "#9372b2"};
    const size_t n_colors = sizeof(palette) / sizeof(palette[0]);

    double lo = 0.0, hi = 0.0;
    for (const auto& s : series)
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (hi == lo) hi = lo + 1.0;
    hi += 0.08 * (hi - lo);

    const int left = 56, top = 56, plot_h = 220, bar_w = 26, bar_gap = 4, group_gap = 28;
    int group_w = static_cast<int>(series.size()) * (bar_w + bar_gap) + group_gap;
    int width = left + static_cast<int>(group_labels.size()) * group_w + 24;
    int height = top + plot_h + 48;

    auto y_of = [&](double v) {
        return top + plot_h - static_cast<int>(std::lround((v - lo) / (hi - lo) * plot_h));
    };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\" font-family=\"monospace\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + std::to_string(left) + "\" y=\"22\" font-size=\"15\">" +
           xml_escape(title) + "</text>\n";
    for (size_t s = 0; s < series.size(); ++s) {
        int lx = left + static_cast<int>(s) * 120;
        svg += "<rect x=\"" + std::to_string(lx) + "\" y=\"30\" width=\"12\" height=\"12\" fill=\"" +
               palette[s % n_colors] + "\"/>";
        svg += "<text x=\"" + std::to_string(lx + 16) + "\" y=\"41\" font-size=\"11\">" +
               xml_escape(series[s].name) + "</text>\n";
    }
    svg += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(y_of(0.0)) +
           "\" x2=\"" + std::to_string(width - 12) + "\" y2=\"" + std::to_string(y_of(0.0)) +
           "\" stroke=\"#888\"/>\n";
    for (size_t g = 0; g < group_labels.size(); ++g) {
        int gx = left + static_cast<int>(g) * group_w + group_gap / 2;
        for (size_t s = 0; s < series.size(); ++s) {
            double v = series[s].values[g];
            int x = gx + static_cast<int>(s) * (bar_w + bar_gap);
            int y_top = std::min(y_of(v), y_of(0.0));
            int h = std::abs(y_of(v) - y_of(0.0));
            svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y_top) +
                   "\" width=\"" + std::to_string(bar_w) + "\" height=\"" + std::to_string(h) +
                   "\" fill=\"" + palette[s % n_colors] + "\"/>";
            svg += "<text x=\"" + std::to_string(x + bar_w / 2) + "\" y=\"" +
                   std::to_string(y_top - 4) +
                   "\" font-size=\"9\" text-anchor=\"middle\">" + format_fixed(v, 2) + "</text>\n";
        }
        int lx = gx + (static_cast<int>(series.size()) * (bar_w + bar_gap)) / 2;
        svg += "<text x=\"" + std::to_string(lx) + "\" y=\"" + std::to_string(top + plot_h + 20) +
               "\" font-size=\"11\" text-anchor=\"middle\">" + xml_escape(group_labels[g]) +
               "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

std::string attention_pgm(const AttentionMap& map) {
    if (map.n == 0 || map.cells.size() != map.n * map.n)
        throw std::invalid_argument("malformed attention map");
    double hi = *std::max_element(map.cells.begin(), map.cells.end());
    std::string out = "P2\n" + std::to_string(map.n) + " " + std::to_string(map.n) + "\n255\n";
    for (size_t i = 0; i < map.n; ++i) {
        for (size_t j = 0; j < map.n; ++j) {
            int v = hi > 0.0 ? static_cast<int>(std::lround(map.at(i, j) / hi * 255.0)) : 0;
            out += std::to_string(v);
            out += j + 1 == map.n ? '\n' : ' ';
        }
    }
    return out;
}

std::string format_fixed(double v, int precision) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
    return std::string(buf, res.ptr);
}

std::string format_shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + path);
}

} // namespace ticketlab
