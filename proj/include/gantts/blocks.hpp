#pragma once

#include <map>
#include <optional>

#include "gantts/optim.hpp"
#include "gantts/ops.hpp"
#include "gantts/param_store.hpp"

namespace gantts {

// How parameters enter a forward pass.  The accessor looks a path up in the
// store, optionally registers it as a tape leaf (so gradients accumulate for
// it), and optionally rescales it by a cached spectral-norm sigma.  A frozen
// network (e.g. the discriminator inside the generator's update) uses an
// accessor without a tape: its weights then flow through as constants.
struct ParamAccess {
    ParamStore* store = nullptr;
    Tape* tape = nullptr;
    const std::map<std::string, double>* sn_sigma = nullptr;

    Tensor operator()(const std::string& path) const {
        Tensor t = store->get(path);
        if (tape != nullptr) t = tape->watch(t);
        if (sn_sigma != nullptr) {
            auto it = sn_sigma->find(path);
            if (it != sn_sigma->end()) t = scale(t, 1.0 / it->second);
        }
        return t;
    }
};

enum class BnMode { train, infer, accumulate };

// ---------------------------------------------------------------------------
// Conditional Batch Normalization
// ---------------------------------------------------------------------------

// Per-channel batch normalization whose scale and shift are affine in a
// conditioning vector.  Parameters under <prefix>: gamma.w [Dz,C], gamma.b
// [C] (init 1), beta.w [Dz,C], beta.b [C] (init 0).  Statistics live under
// <prefix>#aux:{running|standing}_{mean,var} and matching counts.
struct ConditionalBatchNorm {
    std::string prefix;
    i64 C = 0;
    i64 Dz = 0;
    double momentum = 0.99;
    double eps = 1e-5;
};

inline void cbn_init(ParamStore& store, const ConditionalBatchNorm& cbn, Rng& rng) {
    store.create(cbn.prefix + ".gamma.w", orthogonal_init({cbn.Dz, cbn.C}, rng));
    store.create(cbn.prefix + ".gamma.b", Tensor::full({cbn.C}, 1.0));
    store.create(cbn.prefix + ".beta.w", orthogonal_init({cbn.Dz, cbn.C}, rng));
    store.create(cbn.prefix + ".beta.b", Tensor::zeros({cbn.C}));
}

// Batched CBN: h [B,T,C] (or [T,C]), cond [B,Dz] (or [Dz]).
// train: normalize by current batch stats, update running stats.
// accumulate: normalize by current batch stats, add them to standing sums.
// infer: normalize by standing stats if accumulated, else running stats.
inline Tensor cbn_apply(const Tensor& h, const Tensor& cond, const ConditionalBatchNorm& cbn,
                        const ParamAccess& pa, BnMode mode) {
    ParamStore& store = *pa.store;
    Tensor gamma = linear(cond, pa(cbn.prefix + ".gamma.w"), pa(cbn.prefix + ".gamma.b"));
    Tensor beta = linear(cond, pa(cbn.prefix + ".beta.w"), pa(cbn.prefix + ".beta.b"));

    Tensor xhat;
    if (mode == BnMode::train || mode == BnMode::accumulate) {
        Tensor mu = mean_bt(h);
        Tensor xc = sub_channel(h, mu);
        Tensor var = mean_bt(square(xc));
        xhat = mul_channel(xc, rsqrt_add(var, cbn.eps));
        if (mode == BnMode::train) {
            Tensor& rm = store.get_or_create(cbn.prefix + "#aux:running_mean", {cbn.C});
            Tensor& rv = store.get_or_create(cbn.prefix + "#aux:running_var", {cbn.C});
            Tensor& rc = store.get_or_create(cbn.prefix + "#aux:running_count", {1});
            for (i64 c = 0; c < cbn.C; ++c) {
                rm.raw()[c] = cbn.momentum * rm.raw()[c] + (1.0 - cbn.momentum) * mu.raw()[c];
                rv.raw()[c] = cbn.momentum * rv.raw()[c] + (1.0 - cbn.momentum) * var.raw()[c];
            }
            rc.raw()[0] += 1.0;
        } else {
            Tensor& sm = store.get_or_create(cbn.prefix + "#aux:standing_mean", {cbn.C});
            Tensor& sv = store.get_or_create(cbn.prefix + "#aux:standing_var", {cbn.C});
            Tensor& sc = store.get_or_create(cbn.prefix + "#aux:standing_count", {1});
            for (i64 c = 0; c < cbn.C; ++c) {
                sm.raw()[c] += mu.raw()[c];
                sv.raw()[c] += var.raw()[c];
            }
            sc.raw()[0] += 1.0;
        }
    } else {
        const std::string sc_path = cbn.prefix + "#aux:standing_count";
        const std::string rc_path = cbn.prefix + "#aux:running_count";
        Tensor mu = Tensor::zeros({cbn.C});
        Tensor inv = Tensor::zeros({cbn.C});
        if (store.contains(sc_path) && store.get(sc_path).raw()[0] > 0.0) {
            const double n = store.get(sc_path).raw()[0];
            const Tensor& sm = store.get(cbn.prefix + "#aux:standing_mean");
            const Tensor& sv = store.get(cbn.prefix + "#aux:standing_var");
            for (i64 c = 0; c < cbn.C; ++c) {
                mu.raw()[c] = sm.raw()[c] / n;
                inv.raw()[c] = 1.0 / std::sqrt(sv.raw()[c] / n + cbn.eps);
            }
        } else if (store.contains(rc_path) && store.get(rc_path).raw()[0] > 0.0) {
            const Tensor& rm = store.get(cbn.prefix + "#aux:running_mean");
            const Tensor& rv = store.get(cbn.prefix + "#aux:running_var");
            for (i64 c = 0; c < cbn.C; ++c) {
                mu.raw()[c] = rm.raw()[c];
                inv.raw()[c] = 1.0 / std::sqrt(rv.raw()[c] + cbn.eps);
            }
        } else {
            throw error("cbn: inference requested before any statistics exist at '" +
                        cbn.prefix + "'");
        }
        xhat = mul_channel(sub_channel(h, mu), inv);
    }
    return add_bc(mul_bc(xhat, gamma), beta);
}

// Spec-shaped entry point for a single item.
inline Tensor cbn_forward(const Tensor& h, const Tensor& cond, const ConditionalBatchNorm& state,
                          const ParamAccess& pa, BnMode mode) {
    check(mode == BnMode::train || mode == BnMode::infer, "cbn_forward: mode must be train or infer");
    return cbn_apply(h, cond, state, pa, mode);
}

// ---------------------------------------------------------------------------
// GBlock
// ---------------------------------------------------------------------------

struct GBlockConfig {
    i64 in_ch = 0;          // M
    i64 out_ch = 0;         // N; M = N or M = 2N
    i64 upsample = 1;       // r in {1,2,3,5}
    // kernel 3, dilations (1,2,4,8) fixed
};

inline void gblock_init(ParamStore& store, const GBlockConfig& cfg, const std::string& prefix,
                        i64 cond_dim, Rng& rng) {
    check(cfg.in_ch == cfg.out_ch || cfg.in_ch == 2 * cfg.out_ch,
          "gblock: channel multiplier must be 1 or 2");
    check(cfg.upsample >= 1, "gblock: upsample must be >= 1");
    const i64 M = cfg.in_ch, N = cfg.out_ch;
    const std::array<i64, 4> cbn_ch = {M, N, N, N};
    for (int j = 0; j < 4; ++j) {
        ConditionalBatchNorm cbn{prefix + ".cbn" + std::to_string(j + 1), cbn_ch[static_cast<size_t>(j)], cond_dim};
        cbn_init(store, cbn, rng);
    }
    store.create(prefix + ".a.conv1.w", orthogonal_init({3, M, N}, rng));
    store.create(prefix + ".a.conv1.b", Tensor::zeros({N}));
    store.create(prefix + ".a.conv2.w", orthogonal_init({3, N, N}, rng));
    store.create(prefix + ".a.conv2.b", Tensor::zeros({N}));
    store.create(prefix + ".b.conv1.w", orthogonal_init({3, N, N}, rng));
    store.create(prefix + ".b.conv1.b", Tensor::zeros({N}));
    store.create(prefix + ".b.conv2.w", orthogonal_init({3, N, N}, rng));
    store.create(prefix + ".b.conv2.b", Tensor::zeros({N}));
    if (M != N) {
        store.create(prefix + ".skip.conv.w", orthogonal_init({1, M, N}, rng));
        store.create(prefix + ".skip.conv.b", Tensor::zeros({N}));
    }
}

// Residual stack of Fig. 2a: block A = [CBN -> ReLU -> upsample -> conv k3 d1]
// -> [CBN -> ReLU -> conv k3 d2], with an upsample (+ conv k1 iff M != N)
// skip; block B = two more CBN -> ReLU -> conv stages at dilations 4, 8 with
// an identity skip.  `mask` (optional, [B, r*T]) is applied before every
// convolution; masks are only legal in inference mode because batch
// statistics would otherwise mix padded positions.
inline Tensor gblock_forward(const Tensor& h, const Tensor& cond, const GBlockConfig& cfg,
                             const std::string& prefix, const ParamAccess& pa, BnMode mode,
                             const Tensor* mask = nullptr) {
    check(h.dim(h.rank() - 1) == cfg.in_ch, "gblock: input channel mismatch");
    check(mask == nullptr || mode == BnMode::infer, "gblock: masks require inference mode");
    const i64 M = cfg.in_ch, N = cfg.out_ch, r = cfg.upsample;
    const i64 cond_dim = cond.dim(cond.rank() - 1);
    auto cbn = [&](int j, i64 ch) {
        return ConditionalBatchNorm{prefix + ".cbn" + std::to_string(j), ch, cond_dim};
    };
    auto masked = [&](const Tensor& x) { return mask ? mul_time(x, *mask) : x; };

    Tensor a = relu(cbn_apply(h, cond, cbn(1, M), pa, mode));
    a = upsample_nearest(a, r);
    a = conv1d(masked(a), pa(prefix + ".a.conv1.w"), pa(prefix + ".a.conv1.b"), 1);
    a = relu(cbn_apply(a, cond, cbn(2, N), pa, mode));
    a = conv1d(masked(a), pa(prefix + ".a.conv2.w"), pa(prefix + ".a.conv2.b"), 2);

    Tensor skip = upsample_nearest(h, r);
    if (M != N)
        skip = conv1d(masked(skip), pa(prefix + ".skip.conv.w"), pa(prefix + ".skip.conv.b"), 1);
    Tensor ya = add(a, skip);

    Tensor b = relu(cbn_apply(ya, cond, cbn(3, N), pa, mode));
    b = conv1d(masked(b), pa(prefix + ".b.conv1.w"), pa(prefix + ".b.conv1.b"), 4);
    b = relu(cbn_apply(b, cond, cbn(4, N), pa, mode));
    b = conv1d(masked(b), pa(prefix + ".b.conv2.w"), pa(prefix + ".b.conv2.b"), 8);
    return add(b, ya);
}

// ---------------------------------------------------------------------------
// DBlock / Conditional DBlock
// ---------------------------------------------------------------------------

struct DBlockConfig {
    i64 in_ch = 0;
    i64 out_ch = 0;
    i64 factor = 1;           // downsample-by-reshape factor f
    bool conditional = false; // adds a conditioning embedding after conv1
    i64 cond_dim = 0;         // F when conditional
    // kernel 3, dilations (1,2) fixed
};

inline void dblock_init(ParamStore& store, const DBlockConfig& cfg, const std::string& prefix,
                        Rng& rng) {
    check(cfg.factor >= 1, "dblock: factor must be >= 1");
    const i64 cin = cfg.factor * cfg.in_ch, cout = cfg.out_ch;
    store.create(prefix + ".conv1.w", orthogonal_init({3, cin, cout}, rng));
    store.create(prefix + ".conv1.b", Tensor::zeros({cout}));
    store.create(prefix + ".conv2.w", orthogonal_init({3, cout, cout}, rng));
    store.create(prefix + ".conv2.b", Tensor::zeros({cout}));
    if (cin != cout) {
        store.create(prefix + ".skip.conv.w", orthogonal_init({1, cin, cout}, rng));
        store.create(prefix + ".skip.conv.b", Tensor::zeros({cout}));
    }
    if (cfg.conditional) {
        check(cfg.cond_dim > 0, "dblock: conditional block needs cond_dim");
        store.create(prefix + ".embed.conv.w", orthogonal_init({1, cfg.cond_dim, cout}, rng));
        store.create(prefix + ".embed.conv.b", Tensor::zeros({cout}));
    }
}

// Main path: reshape-downsample -> ReLU -> conv k3 d1 -> (+ conditioning
// embedding) -> ReLU -> conv k3 d2.  Skip path: reshape-downsample, then a
// k1 conv iff the reshaped channel count differs from out_ch.
inline Tensor dblock_apply(const Tensor& h, const Tensor* cond, const DBlockConfig& cfg,
                           const std::string& prefix, const ParamAccess& pa) {
    check(h.dim(h.rank() - 1) == cfg.in_ch, "dblock: input channel mismatch");
    check(cfg.conditional == (cond != nullptr), "dblock: conditioning presence mismatch");
    Tensor hr = block_reshape(h, cfg.factor);
    Tensor m = conv1d(relu(hr), pa(prefix + ".conv1.w"), pa(prefix + ".conv1.b"), 1);
    if (cfg.conditional) {
        check(cond->dim(cond->rank() - 2) == hr.dim(hr.rank() - 2),
              "dblock: conditioning length must match downsampled length");
        m = add(m, conv1d(*cond, pa(prefix + ".embed.conv.w"), pa(prefix + ".embed.conv.b"), 1));
    }
    m = conv1d(relu(m), pa(prefix + ".conv2.w"), pa(prefix + ".conv2.b"), 2);
    Tensor skip = hr;
    if (cfg.factor * cfg.in_ch != cfg.out_ch)
        skip = conv1d(skip, pa(prefix + ".skip.conv.w"), pa(prefix + ".skip.conv.b"), 1);
    return add(m, skip);
}

inline Tensor dblock_forward(const Tensor& h, const DBlockConfig& cfg, const std::string& prefix,
                             const ParamAccess& pa) {
    check(!cfg.conditional, "dblock_forward: use cond_dblock_forward for conditional blocks");
    return dblock_apply(h, nullptr, cfg, prefix, pa);
}

inline Tensor cond_dblock_forward(const Tensor& h, const Tensor& cond, const DBlockConfig& cfg,
                                  const std::string& prefix, const ParamAccess& pa) {
    check(cfg.conditional, "cond_dblock_forward: config is not conditional");
    return dblock_apply(h, &cond, cfg, prefix, pa);
}

}  // namespace gantts
