#include "tsgen/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace tsgen {

Tensor ParamStore::add(const std::string& name, Tensor t) {
    for (const auto& [n, p] : params_)
        if (n == name) throw std::logic_error("duplicate parameter name: " + name);
    params_.emplace_back(name, t);
    return t;
}

Tensor ParamStore::find(const std::string& name) const {
    for (const auto& [n, p] : params_)
        if (n == name) return p;
    throw std::logic_error("parameter not found: " + name);
}

std::int64_t ParamStore::total_count() const {
    std::int64_t n = 0;
    for (const auto& [name, p] : params_) n += p.numel();
    return n;
}

std::vector<double> ParamStore::snapshot() const {
    std::vector<double> flat;
    flat.reserve(total_count());
    for (const auto& [name, p] : params_)
        flat.insert(flat.end(), p.values().begin(), p.values().end());
    return flat;
}

void ParamStore::restore(const std::vector<double>& flat) {
    std::size_t off = 0;
    for (auto& [name, p] : params_) {
        auto& v = p.values();
        if (off + v.size() > flat.size())
            throw std::logic_error("restore: parameter vector too short");
        std::copy(flat.begin() + off, flat.begin() + off + v.size(), v.begin());
        off += v.size();
    }
    if (off != flat.size()) throw std::logic_error("restore: parameter vector size mismatch");
}

void ParamStore::zero_grad() {
    for (auto& [name, p] : params_) {
        p.node()->ensure_grad();
        std::fill(p.grad().begin(), p.grad().end(), 0.0);
    }
}

bool ParamStore::all_finite() const {
    for (const auto& [name, p] : params_)
        for (double v : p.values())
            if (!std::isfinite(v)) return false;
    return true;
}

std::vector<double> kaiming_uniform(std::int64_t n, std::int64_t fan_in, Rng& rng) {
    const double bound = std::sqrt(3.0) * std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return v;
}

std::vector<double> xavier_uniform(std::int64_t n, std::int64_t fan_in, std::int64_t fan_out,
                                   Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return v;
}

void Adam::step(ParamStore& params, double lr_scale) {
    const auto& list = params.all();
    if (m_.empty()) {
        m_.resize(list.size());
        v_.resize(list.size());
        for (std::size_t i = 0; i < list.size(); ++i) {
            m_[i].assign(list[i].second.numel(), 0.0);
            v_[i].assign(list[i].second.numel(), 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double rate = lr_ * lr_scale;
    for (std::size_t i = 0; i < list.size(); ++i) {
        auto& p = list[i].second;
        p.node()->ensure_grad();
        auto& val = p.values();
        auto& grad = p.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < val.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * grad[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * grad[j] * grad[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            val[j] -= rate * mhat / (std::sqrt(vhat) + eps_);
            grad[j] = 0.0;
        }
    }
}

Ema::Ema(const ParamStore& params, double decay) : decay_(decay), flat_(params.snapshot()) {
    if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("ema decay must be in (0,1)");
}

void Ema::update(const ParamStore& params) {
    // Warmup ramp: early updates track the parameters closely so short runs
    // sample from trained weights, converging to the configured decay.
    ++steps_;
    const double ramp = static_cast<double>(steps_) / (10.0 + static_cast<double>(steps_));
    const double decay = std::min(decay_, ramp);
    std::size_t off = 0;
    for (const auto& [name, p] : params.all()) {
        const auto& v = p.values();
        for (std::size_t j = 0; j < v.size(); ++j, ++off)
            flat_[off] = decay * flat_[off] + (1.0 - decay) * v[j];
    }
}

EmaScope::EmaScope(ParamStore& params, const Ema& ema)
    : params_(params), saved_(params.snapshot()) {
    params_.restore(ema.values());
}

EmaScope::~EmaScope() { params_.restore(saved_); }

// ---- attention ---------------------------------------------------------------

AttentionParams make_attention(ParamStore& store, const std::string& prefix, int dim,
                               int heads, Rng& rng) {
    if (dim % heads != 0)
        throw std::invalid_argument("attention dim must be divisible by heads");
    AttentionParams p;
    p.heads = heads;
    p.w_qkv = store.add(prefix + ".w_qkv",
                        Tensor::param({dim, 3 * dim}, xavier_uniform(static_cast<std::int64_t>(dim) * 3 * dim, dim, dim, rng)));
    p.b_qkv = store.add(prefix + ".b_qkv", Tensor::param({3 * dim}, std::vector<double>(3 * dim, 0.0)));
    p.w_proj = store.add(prefix + ".w_proj",
                         Tensor::param({dim, dim}, xavier_uniform(static_cast<std::int64_t>(dim) * dim, dim, dim, rng)));
    p.b_proj = store.add(prefix + ".b_proj", Tensor::param({dim}, std::vector<double>(dim, 0.0)));
    return p;
}

Tensor attention_forward(const AttentionParams& p, const Tensor& x) {
    const int B = x.dim(0), L = x.dim(1), H = x.dim(2);
    const int heads = p.heads, dh = H / heads;

    Tensor qkv = linear(x, p.w_qkv, p.b_qkv);  // [B,L,3H]
    auto split_heads = [&](const Tensor& t) {
        Tensor r = reshape(t, {B, L, heads, dh});
        r = permute(r, {0, 2, 1, 3});            // [B,heads,L,dh]
        return reshape(r, {B * heads, L, dh});
    };
    Tensor q = split_heads(slice(qkv, 2, 0, H));
    Tensor k = split_heads(slice(qkv, 2, H, H));
    Tensor v = split_heads(slice(qkv, 2, 2 * H, H));

    Tensor scores = scale(bmm(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor attn = softmax_lastdim(scores);       // [B*heads,L,L]
    Tensor ctx = bmm(attn, v);                   // [B*heads,L,dh]
    ctx = reshape(ctx, {B, heads, L, dh});
    ctx = permute(ctx, {0, 2, 1, 3});            // [B,L,heads,dh]
    ctx = reshape(ctx, {B, L, H});
    return linear(ctx, p.w_proj, p.b_proj);
}

// ---- GRU ----------------------------------------------------------------------

GruParams make_gru(ParamStore& store, const std::string& prefix, int in_dim, int hidden,
                   Rng& rng) {
    GruParams p;
    p.hidden = hidden;
    p.w_x = store.add(prefix + ".w_x",
                      Tensor::param({in_dim, 3 * hidden},
                                    xavier_uniform(static_cast<std::int64_t>(in_dim) * 3 * hidden,
                                                   in_dim, hidden, rng)));
    p.w_h = store.add(prefix + ".w_h",
                      Tensor::param({hidden, 3 * hidden},
                                    xavier_uniform(static_cast<std::int64_t>(hidden) * 3 * hidden,
                                                   hidden, hidden, rng)));
    p.b_x = store.add(prefix + ".b_x",
                      Tensor::param({3 * hidden}, std::vector<double>(3 * hidden, 0.0)));
    p.b_h = store.add(prefix + ".b_h",
                      Tensor::param({3 * hidden}, std::vector<double>(3 * hidden, 0.0)));
    return p;
}

Tensor gru_step(const GruParams& p, const Tensor& x, const Tensor& h) {
    const int hid = p.hidden;
    Tensor gx = linear(x, p.w_x, p.b_x);  // [B,3h]
    Tensor gh = linear(h, p.w_h, p.b_h);
    Tensor r = sigmoid(add(slice(gx, 1, 0, hid), slice(gh, 1, 0, hid)));
    Tensor z = sigmoid(add(slice(gx, 1, hid, hid), slice(gh, 1, hid, hid)));
    Tensor cand = tanh_t(add(slice(gx, 1, 2 * hid, hid), mul(r, slice(gh, 1, 2 * hid, hid))));
    // h' = cand + z * (h - cand)
    return add(cand, mul(z, sub(h, cand)));
}

}  // namespace tsgen
