#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gantts/blocks.hpp"

namespace gantts {

// ---------------------------------------------------------------------------
// Member configuration and structural plan
// ---------------------------------------------------------------------------

struct RwdConfig {
    i64 k = 1;               // input decimation factor (reshape into channels)
    bool conditional = true;
    i64 omega = 240;         // window length in decimated steps; span = omega*k samples
    i64 feature_dim = 8;     // conditioning channels (conditional members)
    i64 base_ch = 64;        // channels after the first block
    i64 max_ch = 512;        // channel cap while doubling
    i64 lambda = 120;        // audio samples per conditioning frame
};

// Prime factors of lambda/k in decreasing order with multiplicity;
// unconditional members keep only the first two.
inline std::vector<i64> downsample_plan(i64 k, bool conditional) {
    check(k >= 1 && 120 % k == 0, "downsample_plan: k must divide 120");
    i64 rem = 120 / k;
    std::vector<i64> factors;
    for (i64 p : {5, 3, 2}) {
        while (rem % p == 0) {
            factors.push_back(p);
            rem /= p;
        }
    }
    check(rem == 1, "downsample_plan: unexpected residue");
    if (!conditional && factors.size() > 2) factors.resize(2);
    return factors;
}

struct DiscriminatorPlan {
    RwdConfig cfg;
    std::vector<i64> factors;
    std::vector<DBlockConfig> blocks;  // first f=1 block, downsampling blocks, two f=1 tail blocks
    i64 head_in = 0;

    i64 block_count() const { return static_cast<i64>(blocks.size()); }
    i64 depth() const { return 2 * block_count() + 1; }  // 2 main convs per block + head
    i64 window_span() const { return cfg.omega * cfg.k; }
};

inline DiscriminatorPlan plan_discriminator(const RwdConfig& cfg) {
    check(cfg.omega >= 1, "discriminator plan: window must be positive");
    check(cfg.base_ch >= 1 && cfg.max_ch >= cfg.base_ch, "discriminator plan: bad channel schedule");
    DiscriminatorPlan plan;
    plan.cfg = cfg;
    plan.factors = downsample_plan(cfg.k, cfg.conditional);
    i64 ch = cfg.base_ch;
    plan.blocks.push_back({cfg.k, ch, 1, false, 0});
    for (size_t i = 0; i < plan.factors.size(); ++i) {
        const i64 out = std::min(ch * 2, cfg.max_ch);
        const bool is_cond = cfg.conditional && i + 1 == plan.factors.size();
        plan.blocks.push_back({ch, out, plan.factors[i], is_cond, is_cond ? cfg.feature_dim : 0});
        ch = out;
    }
    plan.blocks.push_back({ch, ch, 1, false, 0});
    plan.blocks.push_back({ch, ch, 1, false, 0});
    plan.head_in = ch;
    if (cfg.conditional) {
        i64 total = cfg.k;
        for (i64 f : plan.factors) total *= f;
        check(total == cfg.lambda,
              "discriminator plan: conditional downsampling must reach the conditioning rate");
        check(plan.window_span() % cfg.lambda == 0,
              "discriminator plan: window must cover whole conditioning frames");
    }
    return plan;
}

// The scalar head starts at zero so initial scores are exactly 0 and the
// hinge loss starts at 2; spectral normalization divides out any init scale,
// so a scaled random head could not achieve a small initial score.
inline void discriminator_init(ParamStore& store, const DiscriminatorPlan& plan,
                               const std::string& prefix, Rng& rng) {
    for (size_t i = 0; i < plan.blocks.size(); ++i)
        dblock_init(store, plan.blocks[i], prefix + ".block" + std::to_string(i + 1), rng);
    store.create(prefix + ".head.w", Tensor::zeros({plan.head_in, 1}));
    store.create(prefix + ".head.b", Tensor::zeros({1}));
}

inline std::pair<DiscriminatorPlan, ParamStore> build_base_discriminator(const RwdConfig& cfg,
                                                                         Rng& rng) {
    DiscriminatorPlan plan = plan_discriminator(cfg);
    ParamStore store;
    const std::string prefix = std::string("d.") + (cfg.conditional ? "c" : "u") + std::to_string(cfg.k);
    discriminator_init(store, plan, prefix, rng);
    return {plan, store};
}

// ---------------------------------------------------------------------------
// Window sampling
// ---------------------------------------------------------------------------

struct WindowSample {
    i64 offset = 0;      // j, audio samples
    i64 length = 0;      // omega*k
    i64 cond_begin = 0;  // j/lambda (conditional members)
    i64 cond_end = 0;    // (j+omega*k)/lambda
};

inline WindowSample sample_window(i64 n_samples, const RwdConfig& cfg, Rng& rng) {
    const i64 span = cfg.omega * cfg.k;
    check(span <= n_samples, "sample_window: window larger than clip");
    WindowSample ws;
    ws.length = span;
    if (cfg.conditional) {
        check(span % cfg.lambda == 0, "sample_window: window must cover whole conditioning frames");
        check((n_samples - span) % cfg.lambda == 0,
              "sample_window: clip and window misaligned with the conditioning rate");
        const i64 support = (n_samples - span) / cfg.lambda + 1;
        ws.offset = cfg.lambda * static_cast<i64>(rng.next_below(static_cast<u64>(support)));
        ws.cond_begin = ws.offset / cfg.lambda;
        ws.cond_end = (ws.offset + span) / cfg.lambda;
    } else {
        ws.offset = static_cast<i64>(rng.next_below(static_cast<u64>(n_samples - span + 1)));
    }
    return ws;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

// Base discriminator on an already-sliced window batch [B, omega*k, 1]
// (+ aligned conditioning slice [B, omega*k/lambda, F] for conditional
// members).  Returns per-item scores [B, 1].
inline Tensor rwd_window_scores(const DiscriminatorPlan& plan, const std::string& prefix,
                                const ParamAccess& pa, const Tensor& window,
                                const Tensor* cond_slice) {
    check(window.rank() == 3 && window.dim(2) == 1, "rwd: window batch must be [B,T,1]");
    check(window.dim(1) == plan.window_span(), "rwd: window length mismatch");
    Tensor h = block_reshape(window, plan.cfg.k);
    for (size_t i = 0; i < plan.blocks.size(); ++i) {
        const DBlockConfig& bc = plan.blocks[i];
        const Tensor* c = bc.conditional ? cond_slice : nullptr;
        if (bc.conditional) check(cond_slice != nullptr, "rwd: conditional member needs conditioning");
        h = dblock_apply(h, c, bc, prefix + ".block" + std::to_string(i + 1), pa);
    }
    h = mean_pool_time(h);
    return linear(h, pa(prefix + ".head.w"), pa(prefix + ".head.b"));
}

// Single-member forward on a whole clip batch: draws exactly one window
// offset (shared across batch items), slices audio and conditioning, and
// scores.  x: [B,N,1]; cond: [B,Tc,F] or null for unconditional members.
inline Tensor rwd_forward_batch(const DiscriminatorPlan& plan, const std::string& prefix,
                                const ParamAccess& pa, const Tensor& x, const Tensor* cond,
                                Rng& rng) {
    check(x.rank() == 3 && x.dim(2) == 1, "rwd: audio batch must be [B,N,1]");
    const i64 b = x.dim(0);
    const WindowSample ws = sample_window(x.dim(1), plan.cfg, rng);
    std::vector<i64> offs(static_cast<size_t>(b), ws.offset);
    Tensor win = gather_windows(x, offs, ws.length);
    if (!plan.cfg.conditional) return rwd_window_scores(plan, prefix, pa, win, nullptr);
    check(cond != nullptr, "rwd: conditional member needs conditioning");
    check(cond->rank() == 3 && cond->dim(0) == b, "rwd: conditioning batch mismatch");
    check(cond->dim(1) * plan.cfg.lambda == x.dim(1), "rwd: conditioning length mismatch");
    std::vector<i64> coffs(static_cast<size_t>(b), ws.cond_begin);
    Tensor cwin = gather_windows(*cond, coffs, ws.cond_end - ws.cond_begin);
    return rwd_window_scores(plan, prefix, pa, win, &cwin);
}

// Spec-shaped single-clip wrapper: x [N,1] (or [N]), cond [Tc,F] or null;
// returns a scalar score.  Consumes one offset from rng.
inline Tensor rwd_forward(const Tensor& x, const Tensor* cond, const DiscriminatorPlan& plan,
                          const std::string& prefix, const ParamAccess& pa, Rng& rng) {
    Tensor xb = x.rank() == 3 ? x : x.reshaped({1, x.dim(0), x.rank() == 2 ? x.dim(1) : 1});
    Tensor cb;
    const Tensor* cp = nullptr;
    if (cond != nullptr) {
        cb = cond->rank() == 3 ? *cond : cond->reshaped({1, cond->dim(0), cond->dim(1)});
        cp = &cb;
    }
    Tensor scores = rwd_forward_batch(plan, prefix, pa, xb, cp, rng);  // [1,1]
    return scores.reshaped({1});
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

struct EnsembleMember {
    std::string name;  // parameter path component under "d."
    RwdConfig cfg;
    DiscriminatorPlan plan;
    std::string prefix() const { return "d." + name; }
};

struct EnsembleConfig {
    std::string name;
    std::vector<EnsembleMember> members;

    void validate() const {
        check(!members.empty(), "ensemble: no members");
        bool any_cond = false;
        for (const auto& m : members) any_cond = any_cond || m.cfg.conditional;
        check(any_cond, "ensemble: at least one conditional member required");
        for (size_t i = 0; i < members.size(); ++i)
            for (size_t j = i + 1; j < members.size(); ++j)
                check(members[i].name != members[j].name, "ensemble: duplicate member name");
    }
};

// Builds members with collision-free names: base c{k}/u{k}; members sharing
// (k, conditional) gain w{omega}; members sharing (k, conditional, omega)
// additionally gain i{n} in declaration order.
inline EnsembleConfig make_ensemble(const std::string& name, const std::vector<RwdConfig>& cfgs) {
    EnsembleConfig ens;
    ens.name = name;
    std::map<std::string, int> by_kc, by_kcw;
    for (const auto& c : cfgs) {
        const std::string kc = (c.conditional ? "c" : "u") + std::to_string(c.k);
        ++by_kc[kc];
        ++by_kcw[kc + "w" + std::to_string(c.omega)];
    }
    std::map<std::string, int> seen;
    for (const auto& c : cfgs) {
        std::string n = (c.conditional ? "c" : "u") + std::to_string(c.k);
        const std::string kcw = n + "w" + std::to_string(c.omega);
        if (by_kc[n] > 1) n = kcw;
        if (by_kcw[kcw] > 1) n += "i" + std::to_string(++seen[kcw]);
        ens.members.push_back({n, c, plan_discriminator(c)});
    }
    ens.validate();
    return ens;
}

inline void ensemble_init(ParamStore& store, const EnsembleConfig& ens, Rng& rng) {
    for (const auto& m : ens.members) discriminator_init(store, m.plan, m.prefix(), rng);
}

// Per-item ensemble scores [B,1]: sum over members, each member drawing one
// window offset from its own split stream, reduced in member-index order.
inline Tensor ensemble_forward_batch(const EnsembleConfig& ens, const ParamAccess& pa,
                                     const Tensor& x, const Tensor& cond, Rng& rng) {
    Tensor total;
    for (size_t i = 0; i < ens.members.size(); ++i) {
        const EnsembleMember& m = ens.members[i];
        Rng mr = rng.split();
        Tensor s = rwd_forward_batch(m.plan, m.prefix(), pa, x,
                                     m.cfg.conditional ? &cond : nullptr, mr);
        total = i == 0 ? s : add(total, s);
    }
    return total;
}

// Spec-shaped single-clip wrapper returning the scalar ensemble score.
inline Tensor ensemble_forward(const Tensor& x, const Tensor& cond, const EnsembleConfig& ens,
                               const ParamAccess& pa, Rng& rng) {
    Tensor xb = x.rank() == 3 ? x : x.reshaped({1, x.dim(0), x.rank() == 2 ? x.dim(1) : 1});
    Tensor cb = cond.rank() == 3 ? cond : cond.reshaped({1, cond.dim(0), cond.dim(1)});
    Tensor scores = ensemble_forward_batch(ens, pa, xb, cb, rng);
    return scores.reshaped({1});
}

// ---------------------------------------------------------------------------
// Named ensembles (main model and its ablations)
// ---------------------------------------------------------------------------

struct EnsembleProfile {
    i64 clip_samples = 48000;  // N (full-window member size)
    i64 feature_dim = 567;
    i64 base_ch = 64;
    i64 max_ch = 512;
    i64 lambda = 120;
};

inline EnsembleProfile full_ensemble_profile() { return {48000, 567, 64, 512, 120}; }
inline EnsembleProfile toy_ensemble_profile() { return {4800, 8, 16, 64, 120}; }

inline const std::vector<std::string>& ablation_names() {
    static const std::vector<std::string> names = {
        "full_d",           "crwd1",
        "crwd_multi",       "crwd1_urwd1",
        "crwd1_urwd1_x5",   "rwd_nods_multiwindow",
        "rwd_star_480",     "rwd_star_240",
    };
    return names;
}

inline EnsembleConfig ablation_config(const std::string& name, const EnsembleProfile& p) {
    auto mk = [&](i64 k, bool cond, i64 omega) {
        return RwdConfig{k, cond, omega, p.feature_dim, p.base_ch, p.max_ch, p.lambda};
    };
    const std::vector<i64> ks = {1, 2, 4, 8, 15};
    std::vector<RwdConfig> cfgs;
    if (name == "full_d") {
        cfgs = {mk(1, true, p.clip_samples)};
    } else if (name == "crwd1") {
        cfgs = {mk(1, true, 240)};
    } else if (name == "crwd_multi") {
        for (i64 k : ks) cfgs.push_back(mk(k, true, 240));
    } else if (name == "crwd1_urwd1") {
        cfgs = {mk(1, true, 240), mk(1, false, 240)};
    } else if (name == "crwd1_urwd1_x5") {
        for (int i = 0; i < 5; ++i) {
            cfgs.push_back(mk(1, true, 240));
            cfgs.push_back(mk(1, false, 240));
        }
    } else if (name == "rwd_nods_multiwindow") {
        for (i64 k : ks) {
            cfgs.push_back(mk(1, true, 240 * k));
            cfgs.push_back(mk(1, false, 240 * k));
        }
    } else if (name == "rwd_star_480") {
        for (i64 k : ks) {
            cfgs.push_back(mk(k, true, 480));
            cfgs.push_back(mk(k, false, 480));
        }
    } else if (name == "rwd_star_240") {
        for (i64 k : ks) {
            cfgs.push_back(mk(k, true, 240));
            cfgs.push_back(mk(k, false, 240));
        }
    } else {
        throw error("unknown ensemble name: " + name);
    }
    return make_ensemble(name, cfgs);
}

inline EnsembleConfig ablation_config(const std::string& name) {
    return ablation_config(name, full_ensemble_profile());
}

}  // namespace gantts
