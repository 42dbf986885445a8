#pragma once

#include <algorithm>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "gantts/blocks.hpp"

namespace gantts {

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

struct GeneratorBlockSpec {
    i64 upsample = 1;  // r
    i64 out_ch = 0;    // N
};

struct GeneratorPlan {
    i64 feature_dim = 8;    // F
    i64 latent_dim = 128;
    i64 speakers = 1;       // one-hot appended to z iff > 1
    i64 base_ch = 16;       // output channels of the input conv
    std::vector<GeneratorBlockSpec> blocks;
    i64 lambda_total = 120; // must equal the product of block upsample factors
    i64 reference_tc = 40;  // conditioning length used for the trace/FLOP analysis
    bool has_out_conv = true;  // analyzer-only degenerate plans may drop it

    i64 cond_dim() const { return latent_dim + (speakers > 1 ? speakers : 0); }

    i64 block_in_ch(size_t i) const {
        return i == 0 ? base_ch : blocks[i - 1].out_ch;
    }
    i64 last_ch() const { return blocks.empty() ? base_ch : blocks.back().out_ch; }

    void validate() const {
        check(feature_dim >= 1 && latent_dim >= 1 && base_ch >= 1, "generator plan: bad dims");
        i64 prod = 1;
        for (const auto& b : blocks) {
            check(b.upsample >= 1 && b.out_ch >= 1, "generator plan: bad block spec");
            prod *= b.upsample;
        }
        check(prod == lambda_total,
              "generator plan: product of upsample factors " + std::to_string(prod) +
                  " != lambda " + std::to_string(lambda_total));
        for (size_t i = 0; i < blocks.size(); ++i) {
            const i64 m = block_in_ch(i), n = blocks[i].out_ch;
            check(m == n || m == 2 * n, "generator plan: channel multiplier must be 1 or 2 at block " +
                                            std::to_string(i + 1));
        }
    }
};

inline GeneratorPlan full_generator_plan() {
    GeneratorPlan p;
    p.feature_dim = 567;
    p.latent_dim = 128;
    p.base_ch = 768;
    p.blocks = {{1, 768}, {1, 768}, {2, 384}, {2, 384}, {2, 384}, {3, 192}, {5, 96}};
    p.lambda_total = 120;
    p.reference_tc = 400;
    return p;
}

inline GeneratorPlan toy_generator_plan() {
    GeneratorPlan p;
    p.feature_dim = 8;
    p.latent_dim = 128;
    p.base_ch = 16;
    p.blocks = {{1, 16}, {1, 16}, {2, 8}, {2, 8}, {2, 8}, {3, 4}, {5, 2}};
    p.lambda_total = 120;
    p.reference_tc = 40;
    return p;
}

// ---------------------------------------------------------------------------
// Construction and forward
// ---------------------------------------------------------------------------

inline ParamStore build_generator(const GeneratorPlan& plan, Rng& rng) {
    plan.validate();
    check(plan.has_out_conv, "build_generator: plan without output conv is analyzer-only");
    ParamStore store;
    store.create("g.in_conv.w", orthogonal_init({3, plan.feature_dim, plan.base_ch}, rng));
    store.create("g.in_conv.b", Tensor::zeros({plan.base_ch}));
    for (size_t i = 0; i < plan.blocks.size(); ++i) {
        GBlockConfig cfg{plan.block_in_ch(i), plan.blocks[i].out_ch, plan.blocks[i].upsample};
        gblock_init(store, cfg, "g.block" + std::to_string(i + 1), plan.cond_dim(), rng);
    }
    store.create("g.out_conv.w", orthogonal_init({3, plan.last_ch(), 1}, rng));
    store.create("g.out_conv.b", Tensor::zeros({1}));
    return store;
}

// Zero-one validity masks for a padded batch, one per conv rate: entry 0 for
// the input conv (conditioning rate), entry i for block i (its post-upsample
// rate), entry blocks+1 for the output conv.  A length-L item contributes
// exactly L*U ones at cumulative upsampling U.
inline std::vector<Tensor> make_masks(const std::vector<i64>& lengths, const GeneratorPlan& plan) {
    check(!lengths.empty(), "make_masks: empty batch");
    const i64 B = static_cast<i64>(lengths.size());
    i64 tmax = 0;
    for (i64 l : lengths) {
        check(l >= 1, "make_masks: lengths must be positive");
        tmax = std::max(tmax, l);
    }
    std::vector<Tensor> masks;
    i64 u = 1;
    for (size_t layer = 0; layer < plan.blocks.size() + 2; ++layer) {
        if (layer >= 1 && layer <= plan.blocks.size()) u *= plan.blocks[layer - 1].upsample;
        Tensor m = Tensor::zeros({B, tmax * u});
        for (i64 b = 0; b < B; ++b) {
            double* row = m.raw() + b * tmax * u;
            const i64 valid = lengths[static_cast<size_t>(b)] * u;
            for (i64 t = 0; t < valid; ++t) row[t] = 1.0;
        }
        masks.push_back(std::move(m));
    }
    return masks;
}

// Full generator forward.  cond: [B,Tc,F] (or [Tc,F]); z: [B,cond_dim] (or
// [cond_dim]).  Output: [B, lambda*Tc, 1] in (-1,1) (mu-law-domain audio).
inline Tensor generator_forward(const GeneratorPlan& plan, const ParamAccess& pa,
                                const Tensor& cond, const Tensor& z, BnMode mode,
                                const std::vector<Tensor>* masks = nullptr) {
    check(cond.dim(cond.rank() - 1) == plan.feature_dim, "generator: feature dim mismatch");
    check(cond.dim(cond.rank() - 2) >= 1, "generator: empty conditioning");
    check(z.dim(z.rank() - 1) == plan.cond_dim(), "generator: latent dim mismatch");
    check(masks == nullptr || masks->size() == plan.blocks.size() + 2,
          "generator: mask list must cover every conv rate");
    auto masked = [&](const Tensor& x, size_t layer) {
        return masks ? mul_time(x, (*masks)[layer]) : x;
    };
    Tensor x = conv1d(masked(cond, 0), pa("g.in_conv.w"), pa("g.in_conv.b"), 1);
    for (size_t i = 0; i < plan.blocks.size(); ++i) {
        GBlockConfig cfg{plan.block_in_ch(i), plan.blocks[i].out_ch, plan.blocks[i].upsample};
        const Tensor* m = masks ? &(*masks)[i + 1] : nullptr;
        x = gblock_forward(x, z, cfg, "g.block" + std::to_string(i + 1), pa, mode, m);
    }
    x = conv1d(masked(x, plan.blocks.size() + 1), pa("g.out_conv.w"), pa("g.out_conv.b"), 1);
    return tanh_act(x);
}

// Weight paths subject to spectral normalization: conv and linear weights,
// excluding CBN embedding maps and all biases.
inline std::vector<std::string> sn_weight_paths(const ParamStore& store, const std::string& prefix) {
    std::vector<std::string> out;
    for (const auto& [path, t] : store) {
        if (!ParamStore::is_param_path(path)) continue;
        if (path.rfind(prefix, 0) != 0) continue;
        if (path.size() < 2 || path.compare(path.size() - 2, 2, ".w") != 0) continue;
        if (path.find(".cbn") != std::string::npos) continue;
        out.push_back(path);
    }
    return out;
}

// One power-iteration pass over every normalized weight; returns the sigma
// cache used by ParamAccess for the rest of the step/evaluation.
inline std::map<std::string, double> compute_sn_sigmas(ParamStore& store,
                                                       const std::vector<std::string>& paths,
                                                       int n_iters, Rng* init_rng = nullptr) {
    std::map<std::string, double> sig;
    for (const std::string& p : paths) {
        const double s = spectral_norm_iterate(store, p, n_iters, init_rng);
        // An all-zero matrix has no direction to normalize; leave it untouched
        // (scale 1) until training moves it away from zero.
        sig[p] = s <= 1e-8 ? 1.0 : s;
    }
    return sig;
}

// Fresh z batch (plus a uniformly drawn speaker one-hot when applicable).
inline Tensor draw_latent_batch(const GeneratorPlan& plan, i64 batch, Rng& rng) {
    Tensor z = Tensor::zeros({batch, plan.cond_dim()});
    for (i64 b = 0; b < batch; ++b) {
        double* row = z.raw() + b * plan.cond_dim();
        for (i64 i = 0; i < plan.latent_dim; ++i) row[i] = rng.next_normal();
        if (plan.speakers > 1) row[plan.latent_dim + static_cast<i64>(rng.next_below(static_cast<u64>(plan.speakers)))] = 1.0;
    }
    return z;
}

// Spec-shaped single-item generation: cond [Tc,F], z [cond_dim] -> [lambda*Tc, 1].
inline Tensor generate(const GeneratorPlan& plan, const ParamAccess& pa, const Tensor& cond,
                       const Tensor& z, BnMode mode) {
    check(cond.rank() == 2, "generate: conditioning must be [Tc,F]");
    check(cond.dim(0) >= 1, "generate: empty conditioning");
    Tensor out = generator_forward(plan, pa, cond, z, mode);
    return out;  // [lambda*Tc, 1]
}

// Reset and re-accumulate standing statistics from n_passes forward passes
// with fresh latents over the supplied conditioning pool.
inline void accumulate_standing_stats(const GeneratorPlan& plan, ParamStore& store,
                                      const std::map<std::string, double>& sigmas,
                                      const std::vector<Tensor>& cond_pool, int n_passes,
                                      i64 batch_size, Rng& rng) {
    check(n_passes >= 1, "standing stats: n_passes must be >= 1");
    check(!cond_pool.empty(), "standing stats: empty conditioning pool");
    store.erase_contains("#aux:standing");
    const i64 tc = cond_pool.front().dim(0);
    ParamAccess pa{&store, nullptr, &sigmas};
    for (int pass = 0; pass < n_passes; ++pass) {
        Tensor cond = Tensor::zeros({batch_size, tc, plan.feature_dim});
        for (i64 b = 0; b < batch_size; ++b) {
            const Tensor& src = cond_pool[rng.next_below(cond_pool.size())];
            check(src.dim(0) == tc && src.dim(1) == plan.feature_dim,
                  "standing stats: conditioning pool shapes must agree");
            std::memcpy(cond.raw() + b * tc * plan.feature_dim, src.raw(),
                        static_cast<size_t>(tc * plan.feature_dim) * sizeof(double));
        }
        Tensor z = draw_latent_batch(plan, batch_size, rng);
        generator_forward(plan, pa, cond, z, BnMode::accumulate);
    }
}

// ---------------------------------------------------------------------------
// Static analysis
// ---------------------------------------------------------------------------

struct TraceRow {
    std::string label;
    i64 t = 0;
    i64 ch = 0;
};

struct GeneratorAnalysis {
    i64 layer_count = 0;
    // Reported receptive field: each GBlock's dilated span counted at the
    // block's input rate (upsampling accounted after its convolutions).
    i64 receptive_field_steps = 0;
    // Exact symbolic propagation through the physical upsample-first wiring.
    i64 receptive_field_steps_exact = 0;
    // Exact forward influence of a single conditioning frame, output samples.
    i64 influence_width_samples = 0;
    double flops_per_sample = 0.0;  // multiply-accumulate ops per output sample
    std::vector<TraceRow> trace;
};

namespace detail {

// Worst-case input span influencing S contiguous outputs of a x r
// nearest-neighbour upsampler.
inline i64 upsample_back_span(i64 s, i64 r) {
    if (s <= 1) return 1;
    return (s - 2) / r + 2;
}

}  // namespace detail

inline GeneratorAnalysis analyze_generator(const GeneratorPlan& plan) {
    GeneratorAnalysis a;
    const i64 tc = plan.reference_tc;
    const i64 nb = static_cast<i64>(plan.blocks.size());

    // Layer count: main convolutions only (input conv + 4 per GBlock +
    // output conv); skip and CBN embedding layers excluded by convention.
    a.layer_count = 1 + 4 * nb + (plan.has_out_conv ? 1 : 0);

    // Shape trace (Table-1 style rows at the reference conditioning length).
    a.trace.push_back({"linguistic features", tc, plan.feature_dim});
    a.trace.push_back({"conv k3", tc, plan.base_ch});
    i64 t = tc;
    for (i64 i = 0; i < nb; ++i) {
        t *= plan.blocks[static_cast<size_t>(i)].upsample;
        std::string label = "gblock";
        if (plan.blocks[static_cast<size_t>(i)].upsample > 1)
            label += " up" + std::to_string(plan.blocks[static_cast<size_t>(i)].upsample);
        a.trace.push_back({label, t, plan.blocks[static_cast<size_t>(i)].out_ch});
    }
    if (plan.has_out_conv) a.trace.push_back({"conv k3", t, 1});

    // FLOPs: fused multiply-accumulate count of every convolution (main,
    // skip) divided by output samples; K*Ci*Co per position.
    double macs = 0.0;
    macs += 3.0 * plan.feature_dim * plan.base_ch * tc;
    i64 tcur = tc;
    for (i64 i = 0; i < nb; ++i) {
        const i64 m = plan.block_in_ch(static_cast<size_t>(i));
        const i64 n = plan.blocks[static_cast<size_t>(i)].out_ch;
        tcur *= plan.blocks[static_cast<size_t>(i)].upsample;
        macs += 3.0 * m * n * tcur;            // conv d1
        macs += 3.0 * 3.0 * n * n * tcur;      // convs d2, d4, d8
        if (m != n) macs += 1.0 * m * n * tcur;  // skip k1
    }
    if (plan.has_out_conv) macs += 3.0 * plan.last_ch() * 1 * tcur;
    a.flops_per_sample = macs / static_cast<double>(tcur);

    // Receptive fields by backward span propagation.  Per conv the span
    // grows by (K-1)*d; the four GBlock convs contribute 2+4+8+16 = 30.
    {
        i64 s = 1;
        if (plan.has_out_conv) s += 2;
        for (i64 i = nb - 1; i >= 0; --i) {
            s = detail::upsample_back_span(s, plan.blocks[static_cast<size_t>(i)].upsample);
            s += 30;
        }
        s += 2;
        a.receptive_field_steps = s;
    }
    {
        i64 s = 1;
        if (plan.has_out_conv) s += 2;
        for (i64 i = nb - 1; i >= 0; --i) {
            s += 30;
            s = detail::upsample_back_span(s, plan.blocks[static_cast<size_t>(i)].upsample);
        }
        s += 2;
        a.receptive_field_steps_exact = s;
    }
    {
        i64 w = 1 + 2;
        for (i64 i = 0; i < nb; ++i) {
            w *= plan.blocks[static_cast<size_t>(i)].upsample;
            w += 30;
        }
        if (plan.has_out_conv) w += 2;
        a.influence_width_samples = w;
    }
    return a;
}

}  // namespace gantts
