#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "diffbp/errors.hpp"
#include "diffbp/rng.hpp"
#include "diffbp/tensor.hpp"

namespace diffbp {

enum class FeaturePooling { cls_token, mean_pool };

inline const char* pooling_name(FeaturePooling p) {
    return p == FeaturePooling::cls_token ? "cls" : "mean";
}

inline FeaturePooling pooling_from_name(const std::string& name) {
    if (name == "cls") return FeaturePooling::cls_token;
    if (name == "mean") return FeaturePooling::mean_pool;
    throw ValidationError("unknown feature pooling '" + name + "' (expected 'cls' or 'mean')");
}

struct DiTConfig {
    std::size_t image_h = 16;
    std::size_t image_w = 16;
    std::size_t channels = 1;
    std::size_t patch_size = 4;
    std::size_t hidden_dim = 32;
    std::size_t depth = 2;
    std::size_t num_heads = 4;
    std::size_t mlp_ratio = 4;
    std::size_t timesteps = 1000;  // embedding range for t
    FeaturePooling pooling = FeaturePooling::cls_token;

    std::size_t patch_dim() const { return patch_size * patch_size * channels; }
    std::size_t num_patches() const { return (image_h / patch_size) * (image_w / patch_size); }
    bool has_cls() const { return pooling == FeaturePooling::cls_token; }
    std::size_t seq_len() const { return num_patches() + (has_cls() ? 1 : 0); }

    void validate() const {
        if (image_h == 0 || image_w == 0 || channels == 0) throw ValidationError("image dimensions must be positive");
        if (patch_size == 0 || image_h % patch_size != 0 || image_w % patch_size != 0)
            throw ValidationError("patch size " + std::to_string(patch_size) + " must divide image " +
                                  std::to_string(image_h) + "x" + std::to_string(image_w));
        if (hidden_dim == 0 || hidden_dim % 2 != 0)
            throw ValidationError("hidden_dim must be positive and even (sinusoidal halves), got " +
                                  std::to_string(hidden_dim));
        if (num_heads == 0 || hidden_dim % num_heads != 0)
            throw ValidationError("hidden_dim " + std::to_string(hidden_dim) + " must be divisible by num_heads " +
                                  std::to_string(num_heads));
        if (depth == 0) throw ValidationError("depth must be >= 1");
        if (mlp_ratio == 0) throw ValidationError("mlp_ratio must be >= 1");
        if (timesteps == 0) throw ValidationError("timesteps must be >= 1");
    }
};

// Timestep conditioning vector c (Tensor restricted to [1 x D]).
template <typename S>
struct ConditioningVectorT {
    TensorT<S> value;
};

template <typename S>
struct DiTBlockT {
    TensorT<S> mod1_w, mod1_b;          // c -> (gamma, beta) for the attention sublayer
    TensorT<S> qkv_w, qkv_b;            // D -> 3D
    TensorT<S> attn_out_w, attn_out_b;  // D -> D
    TensorT<S> mod2_w, mod2_b;          // c -> (gamma, beta) for the FFN sublayer
    TensorT<S> ffn1_w, ffn1_b;          // D -> mlp_ratio*D
    TensorT<S> ffn2_w, ffn2_b;          // mlp_ratio*D -> D
};

template <typename S>
struct DiTModelT {
    DiTConfig cfg;

    TensorT<S> patch_w, patch_b;  // patch_dim -> D
    TensorT<S> pos_embed;         // seq_len x D (row 0 belongs to CLS when present)
    TensorT<S> cls_token;         // 1 x D, only with cls pooling
    TensorT<S> time_w1, time_b1, time_w2, time_b2;
    std::vector<DiTBlockT<S>> blocks;
    TensorT<S> final_mod_w, final_mod_b;
    TensorT<S> final_w, final_b;  // D -> patch_dim

    bool frozen = false;

    // Stable naming order; seeds, checkpoints, and the optimizer all rely on it.
    std::vector<std::pair<std::string, TensorT<S>*>> named_params() {
        std::vector<std::pair<std::string, TensorT<S>*>> out;
        out.emplace_back("patch.w", &patch_w);
        out.emplace_back("patch.b", &patch_b);
        out.emplace_back("pos_embed", &pos_embed);
        if (cfg.has_cls()) out.emplace_back("cls_token", &cls_token);
        out.emplace_back("time.w1", &time_w1);
        out.emplace_back("time.b1", &time_b1);
        out.emplace_back("time.w2", &time_w2);
        out.emplace_back("time.b2", &time_b2);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const std::string p = "block" + std::to_string(i) + ".";
            auto& b = blocks[i];
            out.emplace_back(p + "mod1.w", &b.mod1_w);
            out.emplace_back(p + "mod1.b", &b.mod1_b);
            out.emplace_back(p + "qkv.w", &b.qkv_w);
            out.emplace_back(p + "qkv.b", &b.qkv_b);
            out.emplace_back(p + "attn_out.w", &b.attn_out_w);
            out.emplace_back(p + "attn_out.b", &b.attn_out_b);
            out.emplace_back(p + "mod2.w", &b.mod2_w);
            out.emplace_back(p + "mod2.b", &b.mod2_b);
            out.emplace_back(p + "ffn1.w", &b.ffn1_w);
            out.emplace_back(p + "ffn1.b", &b.ffn1_b);
            out.emplace_back(p + "ffn2.w", &b.ffn2_w);
            out.emplace_back(p + "ffn2.b", &b.ffn2_b);
        }
        out.emplace_back("final_mod.w", &final_mod_w);
        out.emplace_back("final_mod.b", &final_mod_b);
        out.emplace_back("final.w", &final_w);
        out.emplace_back("final.b", &final_b);
        return out;
    }

    std::vector<std::pair<std::string, const TensorT<S>*>> named_params() const {
        auto mut = const_cast<DiTModelT*>(this)->named_params();
        std::vector<std::pair<std::string, const TensorT<S>*>> out;
        out.reserve(mut.size());
        for (auto& [name, p] : mut) out.emplace_back(name, p);
        return out;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (auto& [name, p] : named_params()) n += p->numel();
        return n;
    }
};

using DiTModel = DiTModelT<float>;
using ConditioningVector = ConditioningVectorT<float>;

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

// Weights N(0, 0.02^2), biases zero, except the adaLN-Zero set: every
// modulation linear's weights, each block's attention output projection and
// second FFN linear, and the final output projection start at exactly zero,
// so each block is the identity and the whole network outputs zero.
// The gamma half of each modulation bias starts at one (the scale acts as
// 1 + learned offset, as in the zero-initialized DiT blocks this follows):
// with gamma = 0 every (modulation x projection) pair would sit on an exact
// bilinear saddle with both gradients identically zero, and the normalized
// tokens would never reach the zero-initialized projections. gamma = 1 keeps
// the identity property exactly, since the projections still cut the branch.
template <typename S>
DiTModelT<S> init_dit(const DiTConfig& cfg, DiffusionRng& rng) {
    cfg.validate();
    const std::size_t d = cfg.hidden_dim;
    const std::size_t pd = cfg.patch_dim();
    const double scale = 0.02;

    auto normal = [&](std::vector<std::size_t> shape) { return TensorT<S>::gaussian(std::move(shape), rng, scale); };
    auto zero = [](std::vector<std::size_t> shape) { return TensorT<S>::zeros(std::move(shape)); };
    // (gamma | beta) bias: gamma half one, beta half zero.
    auto mod_bias = [&] {
        TensorT<S> b = TensorT<S>::zeros({2 * d});
        for (std::size_t i = 0; i < d; ++i) b.data()[i] = S(1);
        return b;
    };

    DiTModelT<S> m;
    m.cfg = cfg;
    m.patch_w = normal({pd, d});
    m.patch_b = zero({d});
    m.pos_embed = normal({cfg.seq_len(), d});
    if (cfg.has_cls()) m.cls_token = normal({1, d});
    m.time_w1 = normal({d, d});
    m.time_b1 = zero({d});
    m.time_w2 = normal({d, d});
    m.time_b2 = zero({d});
    m.blocks.resize(cfg.depth);
    for (auto& b : m.blocks) {
        b.mod1_w = zero({d, 2 * d});
        b.mod1_b = mod_bias();
        b.qkv_w = normal({d, 3 * d});
        b.qkv_b = zero({3 * d});
        b.attn_out_w = zero({d, d});
        b.attn_out_b = zero({d});
        b.mod2_w = zero({d, 2 * d});
        b.mod2_b = mod_bias();
        b.ffn1_w = normal({d, cfg.mlp_ratio * d});
        b.ffn1_b = zero({cfg.mlp_ratio * d});
        b.ffn2_w = zero({cfg.mlp_ratio * d, d});
        b.ffn2_b = zero({d});
    }
    m.final_mod_w = zero({d, 2 * d});
    m.final_mod_b = mod_bias();
    m.final_w = zero({d, pd});
    m.final_b = zero({pd});

    for (auto& [name, p] : m.named_params()) p->set_requires_grad(true);
    return m;
}

// Overwrites every parameter (including the zero-init set) with N(0, scale^2)
// draws. Gradient checks and equivariance tests need a generic point; the
// zero-init point has vanishing gradients in the block interiors.
template <typename S>
void randomize_parameters(DiTModelT<S>& m, DiffusionRng& rng, double scale = 0.2) {
    for (auto& [name, p] : m.named_params())
        for (std::size_t i = 0; i < p->numel(); ++i) p->data()[i] = static_cast<S>(rng.gaussian() * scale);
}

template <typename S>
void freeze(DiTModelT<S>& m) {
    m.frozen = true;
    for (auto& [name, p] : m.named_params()) p->set_requires_grad(false);
}

// FNV-1a over the raw little-endian parameter bytes in naming order.
template <typename S>
std::uint64_t parameter_checksum(const DiTModelT<S>& m) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (auto& [name, p] : m.named_params()) {
        for (std::size_t i = 0; i < p->numel(); ++i) {
            unsigned char bytes[sizeof(S)];
            std::memcpy(bytes, &p->data()[i], sizeof(S));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ull;
            }
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Patching
// ---------------------------------------------------------------------------

// Token layout: patches in raster order of the patch grid; within a patch,
// pixels in raster order with the channels of each pixel kept together.
inline std::vector<std::size_t> patchify_index(std::size_t h, std::size_t w, std::size_t c, std::size_t p) {
    const std::size_t gy = h / p, gx = w / p;
    std::vector<std::size_t> idx(h * w * c);
    std::size_t o = 0;
    for (std::size_t py = 0; py < gy; ++py)
        for (std::size_t px = 0; px < gx; ++px)
            for (std::size_t dy = 0; dy < p; ++dy)
                for (std::size_t dx = 0; dx < p; ++dx)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        idx[o++] = ((py * p + dy) * w + (px * p + dx)) * c + ch;
    return idx;
}

template <typename S>
TensorT<S> patchify(const TensorT<S>& x, std::size_t patch_size) {
    if (x.rank() != 3)
        throw ShapeError("patchify: expected an HxWxC tensor, got " + shape_to_string(x.shape()));
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (patch_size == 0 || h % patch_size != 0 || w % patch_size != 0)
        throw ShapeError("patchify: patch size " + std::to_string(patch_size) + " must divide image " +
                         shape_to_string(x.shape()));
    const std::size_t n = (h / patch_size) * (w / patch_size);
    return gather(x, patchify_index(h, w, c, patch_size), {n, patch_size * patch_size * c});
}

template <typename S>
TensorT<S> unpatchify(const TensorT<S>& z, std::size_t h, std::size_t w, std::size_t c, std::size_t patch_size) {
    if (z.rank() != 2) throw ShapeError("unpatchify: expected an Nx(P^2*C) tensor, got " + shape_to_string(z.shape()));
    if (patch_size == 0 || h % patch_size != 0 || w % patch_size != 0)
        throw ShapeError("unpatchify: patch size must divide image dimensions");
    const std::size_t n = (h / patch_size) * (w / patch_size);
    if (z.dim(0) != n || z.dim(1) != patch_size * patch_size * c)
        throw ShapeError("unpatchify: token tensor " + shape_to_string(z.shape()) + " does not match image " +
                         std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c) + " with P=" +
                         std::to_string(patch_size));
    // Invert the patchify permutation.
    const std::vector<std::size_t> fwd = patchify_index(h, w, c, patch_size);
    std::vector<std::size_t> inv(fwd.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = i;
    return gather(z, inv, {h, w, c});
}

// ---------------------------------------------------------------------------
// Conditioning
// ---------------------------------------------------------------------------

// [sin(t*w_0).. sin(t*w_{D/2-1}) | cos(..)] with w_i = 10000^(-2i/D).
template <typename S>
TensorT<S> sinusoidal_embedding(std::size_t t, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0)
        throw ValidationError("sinusoidal embedding dimension must be even, got " + std::to_string(dim));
    const std::size_t half = dim / 2;
    TensorT<S> out({1, dim});
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        const double arg = static_cast<double>(t) * freq;
        out.data()[i] = static_cast<S>(std::sin(arg));
        out.data()[half + i] = static_cast<S>(std::cos(arg));
    }
    return out;
}

template <typename S>
ConditioningVectorT<S> condition_vector(const DiTModelT<S>& m, std::size_t t) {
    if (t < 1 || t > m.cfg.timesteps)
        throw ValidationError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(m.cfg.timesteps) + "]");
    TensorT<S> e = sinusoidal_embedding<S>(t, m.cfg.hidden_dim);
    TensorT<S> hidden = gelu(add_rowvec(matmul(e, m.time_w1), m.time_b1));
    return {add_rowvec(matmul(hidden, m.time_w2), m.time_b2)};
}

// gamma * LayerNorm(h) + beta with (gamma, beta) = Linear(c), broadcast over
// tokens. The affine lives here; layer_norm itself is parameter-free.
template <typename S>
TensorT<S> adaln(const TensorT<S>& h, const ConditioningVectorT<S>& c, const TensorT<S>& mod_w,
                 const TensorT<S>& mod_b) {
    const std::size_t d = h.shape().back();
    TensorT<S> gb = add_rowvec(matmul(c.value, mod_w), mod_b);  // [1, 2D]
    TensorT<S> gamma = slice_cols(gb, 0, d);
    TensorT<S> beta = slice_cols(gb, d, 2 * d);
    return add_rowvec(mul_rowvec(layer_norm(h), reshape(gamma, {d})), reshape(beta, {d}));
}

// ---------------------------------------------------------------------------
// Blocks and forward pass
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> multi_head_self_attention(const TensorT<S>& h, const DiTBlockT<S>& blk, std::size_t num_heads) {
    const std::size_t d = h.dim(1);
    const std::size_t dh = d / num_heads;
    TensorT<S> qkv = add_rowvec(matmul(h, blk.qkv_w), blk.qkv_b);  // [L, 3D]
    TensorT<S> q = slice_cols(qkv, 0, d);
    TensorT<S> k = slice_cols(qkv, d, 2 * d);
    TensorT<S> v = slice_cols(qkv, 2 * d, 3 * d);
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<TensorT<S>> heads;
    heads.reserve(num_heads);
    for (std::size_t i = 0; i < num_heads; ++i) {
        TensorT<S> qi = slice_cols(q, i * dh, (i + 1) * dh);
        TensorT<S> ki = slice_cols(k, i * dh, (i + 1) * dh);
        TensorT<S> vi = slice_cols(v, i * dh, (i + 1) * dh);
        TensorT<S> attn = softmax(scalar_mul(matmul(qi, transpose(ki)), scale));
        heads.push_back(matmul(attn, vi));
    }
    TensorT<S> ctx = num_heads == 1 ? heads[0] : concat_cols(heads);
    return add_rowvec(matmul(ctx, blk.attn_out_w), blk.attn_out_b);
}

template <typename S>
TensorT<S> feed_forward(const TensorT<S>& h, const DiTBlockT<S>& blk) {
    TensorT<S> mid = gelu(add_rowvec(matmul(h, blk.ffn1_w), blk.ffn1_b));
    return add_rowvec(matmul(mid, blk.ffn2_w), blk.ffn2_b);
}

// h'  = h  + MHSA(adaLN(h, c))
// h'' = h' + FFN(adaLN(h', c))
template <typename S>
TensorT<S> dit_block(const TensorT<S>& h, const ConditioningVectorT<S>& c, const DiTBlockT<S>& blk,
                     std::size_t num_heads) {
    TensorT<S> h1 = add(h, multi_head_self_attention(adaln(h, c, blk.mod1_w, blk.mod1_b), blk, num_heads));
    return add(h1, feed_forward(adaln(h1, c, blk.mod2_w, blk.mod2_b), blk));
}

// Token sequence after patch embedding, positional embedding, and all blocks.
// This is the encoder output used both by the denoising head and by feature
// extraction.
template <typename S>
TensorT<S> encoder_tokens(const DiTModelT<S>& m, const TensorT<S>& x, std::size_t t) {
    const DiTConfig& cfg = m.cfg;
    if (x.rank() != 3 || x.dim(0) != cfg.image_h || x.dim(1) != cfg.image_w || x.dim(2) != cfg.channels)
        throw ShapeError("dit: input " + shape_to_string(x.shape()) + " does not match config " +
                         std::to_string(cfg.image_h) + "x" + std::to_string(cfg.image_w) + "x" +
                         std::to_string(cfg.channels));
    ConditioningVectorT<S> c = condition_vector(m, t);
    TensorT<S> p = patchify(x, cfg.patch_size);
    TensorT<S> h = add_rowvec(matmul(p, m.patch_w), m.patch_b);
    if (cfg.has_cls()) h = concat_rows<S>({m.cls_token, h});
    h = add(h, m.pos_embed);
    for (const auto& blk : m.blocks) h = dit_block(h, c, blk, cfg.num_heads);
    return h;
}

// Full denoiser pass: conditioning, embedding, blocks, final adaLN and
// projection, unpatchify. Output shape equals input shape.
template <typename S>
TensorT<S> dit_forward(const DiTModelT<S>& m, const TensorT<S>& xt, std::size_t t) {
    const DiTConfig& cfg = m.cfg;
    TensorT<S> h = encoder_tokens(m, xt, t);
    ConditioningVectorT<S> c = condition_vector(m, t);
    h = adaln(h, c, m.final_mod_w, m.final_mod_b);
    TensorT<S> z = add_rowvec(matmul(h, m.final_w), m.final_b);
    if (cfg.has_cls()) z = slice_rows(z, 1, cfg.seq_len());  // CLS is not part of the image output
    return unpatchify(z, cfg.image_h, cfg.image_w, cfg.channels, cfg.patch_size);
}

// Pooled feature vector of a clean image conditioned at a small fixed
// timestep (no noise is added). Requires a frozen model and never tapes.
template <typename S>
TensorT<S> extract_features(const DiTModelT<S>& m, const TensorT<S>& x, std::size_t t_feat) {
    if (!m.frozen) throw ContractError("extract_features requires a frozen model");
    GradPause pause;
    TensorT<S> h = encoder_tokens(m, x, t_feat);
    TensorT<S> pooled = m.cfg.has_cls() ? slice_rows(h, 0, 1) : mean_rows(h);
    return reshape(pooled, {m.cfg.hidden_dim});
}

}  // namespace diffbp
