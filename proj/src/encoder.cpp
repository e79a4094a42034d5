#include "ticketlab/encoder.hpp"

#include "ticketlab/rng.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ticketlab {

void ModelConfig::validate() const {
    if (n_layers == 0 || n_heads == 0 || d_model == 0 || d_head == 0 || d_ff == 0 ||
        vocab_size == 0 || max_seq_len == 0 || n_classes == 0)
        throw std::invalid_argument("model config: all dimensions must be positive");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("model config: dropout must lie in [0, 1)");
    if (ln_eps <= 0.0) throw std::invalid_argument("model config: ln_eps must be positive");
}

// ---- masks ----------------------------------------------------------------

SubnetworkMask SubnetworkMask::all_ones(const ModelConfig& cfg) {
    SubnetworkMask m;
    m.heads.assign(cfg.n_layers, std::vector<double>(cfg.n_heads, 1.0));
    m.mlps.assign(cfg.n_layers, 1.0);
    return m;
}

SubnetworkMask SubnetworkMask::all_zeros(const ModelConfig& cfg) {
    SubnetworkMask m;
    m.heads.assign(cfg.n_layers, std::vector<double>(cfg.n_heads, 0.0));
    m.mlps.assign(cfg.n_layers, 0.0);
    return m;
}

size_t SubnetworkMask::total_heads() const {
    size_t n = 0;
    for (const auto& row : heads) n += row.size();
    return n;
}

size_t SubnetworkMask::surviving_heads() const {
    size_t n = 0;
    for (const auto& row : heads)
        for (double v : row) n += (v != 0.0);
    return n;
}

size_t SubnetworkMask::surviving_mlps() const {
    size_t n = 0;
    for (double v : mlps) n += (v != 0.0);
    return n;
}

bool SubnetworkMask::operator==(const SubnetworkMask& other) const {
    return heads == other.heads && mlps == other.mlps;
}

void SubnetworkMask::check_shape(const ModelConfig& cfg) const {
    if (heads.size() != cfg.n_layers || mlps.size() != cfg.n_layers)
        throw std::invalid_argument("mask: layer count mismatch");
    for (const auto& row : heads)
        if (row.size() != cfg.n_heads) throw std::invalid_argument("mask: head count mismatch");
    for (const auto& row : heads)
        for (double v : row)
            if (v != 0.0 && v != 1.0) throw std::invalid_argument("mask: entries must be 0 or 1");
    for (double v : mlps)
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("mask: entries must be 0 or 1");
}

WeightMask WeightMask::all_ones(const EncoderParams& p) {
    WeightMask m;
    for (auto& [name, t] : p.prunable_tensors())
        m.bits.emplace_back(name, std::vector<uint8_t>(t.size(), 1));
    return m;
}

size_t WeightMask::total_weights() const {
    size_t n = 0;
    for (auto& [name, b] : bits) n += b.size();
    return n;
}

size_t WeightMask::surviving_weights() const {
    size_t n = 0;
    for (auto& [name, b] : bits)
        for (uint8_t v : b) n += (v != 0);
    return n;
}

double WeightMask::surviving_fraction() const {
    size_t t = total_weights();
    return t == 0 ? 0.0 : static_cast<double>(surviving_weights()) / static_cast<double>(t);
}

void WeightMask::check_congruent(const EncoderParams& p) const {
    auto prunable = p.prunable_tensors();
    if (prunable.size() != bits.size())
        throw std::invalid_argument("weight mask: tensor count mismatch");
    for (size_t i = 0; i < bits.size(); ++i) {
        if (bits[i].first != prunable[i].first)
            throw std::invalid_argument("weight mask: tensor name mismatch at " + bits[i].first);
        if (bits[i].second.size() != prunable[i].second.size())
            throw std::invalid_argument("weight mask: size mismatch at " + bits[i].first);
    }
}

void apply_weight_mask(EncoderParams& p, const WeightMask& m) {
    m.check_congruent(p);
    auto prunable = p.prunable_tensors();
    for (size_t i = 0; i < m.bits.size(); ++i) {
        Tensor t = prunable[i].second;
        const auto& b = m.bits[i].second;
        for (size_t j = 0; j < b.size(); ++j)
            if (!b[j]) t.values()[j] = 0.0;
    }
}

MaskTensors MaskTensors::from_mask(const SubnetworkMask& m) {
    MaskTensors t;
    t.xi.resize(m.heads.size());
    for (size_t l = 0; l < m.heads.size(); ++l) {
        t.xi[l].reserve(m.heads[l].size());
        for (double v : m.heads[l]) t.xi[l].push_back(Tensor::scalar(v, v != 0.0));
    }
    t.nu.reserve(m.mlps.size());
    for (double v : m.mlps) t.nu.push_back(Tensor::scalar(v, v != 0.0));
    return t;
}

void MaskTensors::zero_grads() {
    for (auto& row : xi)
        for (auto& t : row) t.zero_grad();
    for (auto& t : nu) t.zero_grad();
}

// ---- parameters -----------------------------------------------------------

std::vector<std::pair<std::string, Tensor>> EncoderParams::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_emb", tok_emb);
    out.emplace_back("pos_emb", pos_emb);
    for (size_t l = 0; l < layers.size(); ++l) {
        const std::string lp = "layer" + std::to_string(l) + ".";
        const LayerParams& lyr = layers[l];
        for (size_t h = 0; h < lyr.heads.size(); ++h) {
            const std::string hp = lp + "head" + std::to_string(h) + ".";
            out.emplace_back(hp + "wq", lyr.heads[h].wq);
            out.emplace_back(hp + "wk", lyr.heads[h].wk);
            out.emplace_back(hp + "wv", lyr.heads[h].wv);
            out.emplace_back(hp + "wo", lyr.heads[h].wo);
        }
        out.emplace_back(lp + "ln1.g", lyr.ln1_g);
        out.emplace_back(lp + "ln1.b", lyr.ln1_b);
        out.emplace_back(lp + "ln2.g", lyr.ln2_g);
        out.emplace_back(lp + "ln2.b", lyr.ln2_b);
        out.emplace_back(lp + "mlp.w1", lyr.mlp_w1);
        out.emplace_back(lp + "mlp.b1", lyr.mlp_b1);
        out.emplace_back(lp + "mlp.w2", lyr.mlp_w2);
        out.emplace_back(lp + "mlp.b2", lyr.mlp_b2);
    }
    out.emplace_back("final_ln.g", final_ln_g);
    out.emplace_back("final_ln.b", final_ln_b);
    out.emplace_back("pooler.w", pooler_w);
    out.emplace_back("pooler.b", pooler_b);
    out.emplace_back("mlm_bias", mlm_bias);
    out.emplace_back("cls.w", cls_w);
    out.emplace_back("cls.b", cls_b);
    return out;
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::prunable_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (auto& [name, t] : named_tensors()) {
        if (name == "tok_emb" || name == "pos_emb" || name == "mlm_bias" ||
            name == "cls.w" || name == "cls.b")
            continue;
        out.emplace_back(name, t);
    }
    return out;
}

std::vector<Tensor> EncoderParams::all_tensors() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_tensors()) out.push_back(t);
    return out;
}

size_t EncoderParams::param_count() const {
    size_t n = 0;
    for (auto& [name, t] : named_tensors()) n += t.size();
    return n;
}

size_t EncoderParams::prunable_param_count() const {
    size_t n = 0;
    for (auto& [name, t] : prunable_tensors()) n += t.size();
    return n;
}

EncoderParams EncoderParams::clone() const {
    auto copy = [](const Tensor& t) {
        return Tensor::from_values(t.shape(), t.values(), t.requires_grad());
    };
    EncoderParams out;
    out.config = config;
    out.tok_emb = copy(tok_emb);
    out.pos_emb = copy(pos_emb);
    out.layers.reserve(layers.size());
    for (const LayerParams& l : layers) {
        LayerParams nl;
        for (const HeadParams& h : l.heads)
            nl.heads.push_back({copy(h.wq), copy(h.wk), copy(h.wv), copy(h.wo)});
        nl.ln1_g = copy(l.ln1_g);
        nl.ln1_b = copy(l.ln1_b);
        nl.ln2_g = copy(l.ln2_g);
        nl.ln2_b = copy(l.ln2_b);
        nl.mlp_w1 = copy(l.mlp_w1);
        nl.mlp_b1 = copy(l.mlp_b1);
        nl.mlp_w2 = copy(l.mlp_w2);
        nl.mlp_b2 = copy(l.mlp_b2);
        out.layers.push_back(std::move(nl));
    }
    out.final_ln_g = copy(final_ln_g);
    out.final_ln_b = copy(final_ln_b);
    out.pooler_w = copy(pooler_w);
    out.pooler_b = copy(pooler_b);
    out.mlm_bias = copy(mlm_bias);
    out.cls_w = copy(cls_w);
    out.cls_b = copy(cls_b);
    return out;
}

namespace {

Tensor init_weight(std::vector<size_t> shape, const Rng& root, const std::string& name) {
    Rng stream = root.split(name);
    return Tensor::randn(std::move(shape), stream, 0.02, true);
}

} // namespace

EncoderParams init_params(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng root(seed);
    EncoderParams p;
    p.config = cfg;
    p.tok_emb = init_weight({cfg.vocab_size, cfg.d_model}, root, "tok_emb");
    p.pos_emb = init_weight({cfg.max_seq_len, cfg.d_model}, root, "pos_emb");
    p.layers.resize(cfg.n_layers);
    for (size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string lp = "layer" + std::to_string(l) + ".";
        LayerParams& lyr = p.layers[l];
        lyr.heads.resize(cfg.n_heads);
        for (size_t h = 0; h < cfg.n_heads; ++h) {
            const std::string hp = lp + "head" + std::to_string(h) + ".";
            lyr.heads[h].wq = init_weight({cfg.d_head, cfg.d_model}, root, hp + "wq");
            lyr.heads[h].wk = init_weight({cfg.d_head, cfg.d_model}, root, hp + "wk");
            lyr.heads[h].wv = init_weight({cfg.d_head, cfg.d_model}, root, hp + "wv");
            lyr.heads[h].wo = init_weight({cfg.d_model, cfg.d_head}, root, hp + "wo");
        }
        lyr.ln1_g = Tensor::full({cfg.d_model}, 1.0, true);
        lyr.ln1_b = Tensor::zeros({cfg.d_model}, true);
        lyr.ln2_g = Tensor::full({cfg.d_model}, 1.0, true);
        lyr.ln2_b = Tensor::zeros({cfg.d_model}, true);
        lyr.mlp_w1 = init_weight({cfg.d_ff, cfg.d_model}, root, lp + "mlp.w1");
        lyr.mlp_b1 = Tensor::zeros({cfg.d_ff}, true);
        lyr.mlp_w2 = init_weight({cfg.d_model, cfg.d_ff}, root, lp + "mlp.w2");
        lyr.mlp_b2 = Tensor::zeros({cfg.d_model}, true);
    }
    p.final_ln_g = Tensor::full({cfg.d_model}, 1.0, true);
    p.final_ln_b = Tensor::zeros({cfg.d_model}, true);
    p.pooler_w = init_weight({cfg.d_model, cfg.d_model}, root, "pooler.w");
    p.pooler_b = Tensor::zeros({cfg.d_model}, true);
    p.mlm_bias = Tensor::zeros({cfg.vocab_size}, true);
    p.cls_w = init_weight({cfg.n_classes, cfg.d_model}, root, "cls.w");
    p.cls_b = Tensor::zeros({cfg.n_classes}, true);
    return p;
}

void reinit_classifier(EncoderParams& p, size_t n_classes, uint64_t seed) {
    if (n_classes == 0) throw std::invalid_argument("reinit_classifier: need at least one class");
    Rng root(seed);
    p.cls_w = init_weight({n_classes, p.config.d_model}, root, "cls.w");
    p.cls_b = Tensor::zeros({n_classes}, true);
    p.config.n_classes = n_classes;
}

// ---- forward --------------------------------------------------------------

namespace {

Tensor linear(const Tensor& x, const Tensor& w) { return matmul(x, transpose(w)); }

Tensor maybe_dropout(const Tensor& t, const ForwardOptions& opt, double rate) {
    if (!opt.training || rate == 0.0) return t;
    if (!opt.dropout_rng)
        throw std::invalid_argument("encode: training forward needs a dropout rng");
    return dropout(t, rate, *opt.dropout_rng);
}

} // namespace

EncodeResult encode(const EncoderParams& p, const std::vector<size_t>& tokens,
                    const ForwardOptions& opt) {
    const ModelConfig& cfg = p.config;
    if (tokens.empty()) throw std::invalid_argument("encode: empty token sequence");
    if (tokens.size() > cfg.max_seq_len)
        throw std::invalid_argument("encode: sequence longer than max_seq_len");
    for (size_t t : tokens)
        if (t >= cfg.vocab_size) throw std::invalid_argument("encode: token id out of range");
    if (opt.mask) opt.mask->check_shape(cfg);
    if (opt.mask_tensors &&
        (opt.mask_tensors->xi.size() != cfg.n_layers ||
         opt.mask_tensors->nu.size() != cfg.n_layers))
        throw std::invalid_argument("encode: mask tensor shape mismatch");

    const size_t n = tokens.size();
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head));

    auto head_on = [&](size_t l, size_t h) {
        if (opt.mask_tensors) return opt.mask_tensors->xi[l][h].value() != 0.0;
        if (opt.mask) return opt.mask->head_on(l, h);
        return true;
    };
    auto mlp_on = [&](size_t l) {
        if (opt.mask_tensors) return opt.mask_tensors->nu[l].value() != 0.0;
        if (opt.mask) return opt.mask->mlp_on(l);
        return true;
    };

    EncodeResult res;
    if (opt.want_maps) {
        res.record.seq_len = n;
        res.record.probs.assign(cfg.n_layers, std::vector<std::vector<double>>(cfg.n_heads));
        res.record.ln1.resize(cfg.n_layers);
    }

    std::vector<size_t> positions(n);
    std::iota(positions.begin(), positions.end(), 0);
    Tensor x = add(gather_rows(p.tok_emb, tokens), gather_rows(p.pos_emb, positions));
    x = maybe_dropout(x, opt, cfg.dropout);

    for (size_t l = 0; l < cfg.n_layers; ++l) {
        const LayerParams& lyr = p.layers[l];

        bool any_head = false;
        for (size_t h = 0; h < cfg.n_heads; ++h) any_head |= head_on(l, h);

        if (any_head) {
            Tensor hn = layer_norm(x, lyr.ln1_g, lyr.ln1_b, cfg.ln_eps);
            if (opt.want_maps) res.record.ln1[l] = hn.values();

            Tensor attn_sum;
            for (size_t h = 0; h < cfg.n_heads; ++h) {
                if (!head_on(l, h)) continue;
                const HeadParams& hp = lyr.heads[h];
                Tensor q = linear(hn, hp.wq);
                Tensor k = linear(hn, hp.wk);
                Tensor v = linear(hn, hp.wv);
                Tensor probs = softmax(scale(matmul(q, transpose(k)), att_scale), 1);
                if (opt.want_maps) res.record.probs[l][h] = probs.values();
                probs = maybe_dropout(probs, opt, cfg.dropout);
                Tensor out_h = linear(matmul(probs, v), hp.wo);
                if (opt.mask_tensors) out_h = mul_scalar(out_h, opt.mask_tensors->xi[l][h]);
                attn_sum = attn_sum.defined() ? add(attn_sum, out_h) : out_h;
            }
            attn_sum = maybe_dropout(attn_sum, opt, cfg.dropout);
            x = add(x, attn_sum);
        }

        if (mlp_on(l)) {
            Tensor z = layer_norm(x, lyr.ln2_g, lyr.ln2_b, cfg.ln_eps);
            Tensor a1 = gelu(add_rowvec(linear(z, lyr.mlp_w1), lyr.mlp_b1));
            Tensor a2 = add_rowvec(linear(a1, lyr.mlp_w2), lyr.mlp_b2);
            if (opt.mask_tensors) a2 = mul_scalar(a2, opt.mask_tensors->nu[l]);
            a2 = maybe_dropout(a2, opt, cfg.dropout);
            x = add(x, a2);
        }
    }

    res.hidden = layer_norm(x, p.final_ln_g, p.final_ln_b, cfg.ln_eps);
    Tensor first = gather_rows(res.hidden, {0});
    res.pooled = tanh_op(add_rowvec(linear(first, p.pooler_w), p.pooler_b));
    return res;
}

Tensor task_logits(const EncoderParams& p, const Tensor& pooled) {
    return add_rowvec(linear(pooled, p.cls_w), p.cls_b);
}

Tensor mlm_logits(const EncoderParams& p, const Tensor& hidden,
                  const std::vector<size_t>& positions) {
    if (positions.empty()) throw std::invalid_argument("mlm_logits: no positions given");
    Tensor rows = gather_rows(hidden, positions);
    return add_rowvec(matmul(rows, transpose(p.tok_emb)), p.mlm_bias);
}

} // namespace ticketlab
