#pragma once

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gantts/config.hpp"
#include "gantts/dataset.hpp"
#include "gantts/distances.hpp"
#include "gantts/generator.hpp"
#include "gantts/rwd.hpp"

namespace gantts {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Hinge GAN losses over per-item score tensors (any shape, averaged):
// loss_D = mean(relu(1 - s_real)) + mean(relu(1 + s_fake)); loss_G = -mean(s_fake).
inline std::pair<Tensor, Tensor> hinge_losses(const Tensor& real_scores,
                                              const Tensor& fake_scores) {
    check(real_scores.numel() >= 1 && fake_scores.numel() >= 1, "hinge_losses: empty score list");
    Tensor ones = Tensor::full(real_scores.shape, 1.0);
    Tensor loss_d = add(mean_all(relu(sub(ones, real_scores))),
                        mean_all(relu(add_scalar(fake_scores, 1.0))));
    Tensor loss_g = scale(mean_all(fake_scores), -1.0);
    return {loss_d, loss_g};
}

// ---------------------------------------------------------------------------
// Training state
// ---------------------------------------------------------------------------

struct TrainState {
    TrainConfig cfg;
    GeneratorPlan gplan;
    EnsembleConfig ens;
    ParamStore g, d, ema;
    i64 step = 0;
    double last_loss_d = std::numeric_limits<double>::quiet_NaN();
    double last_loss_g = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> g_sn, d_sn, g_penalty;

    void refresh_path_lists() {
        g_sn = sn_weight_paths(g, "g.");
        d_sn = sn_weight_paths(d, "d.");
        g_penalty.clear();
        for (const auto& [path, t] : g) {
            if (!ParamStore::is_param_path(path)) continue;
            if (path.size() >= 2 && path.compare(path.size() - 2, 2, ".w") == 0)
                g_penalty.push_back(path);
        }
    }
};

inline TrainState init_train_state(const TrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    st.gplan = cfg.generator_plan();
    st.ens = cfg.ensemble_config();
    Rng gi = Rng::for_purpose(cfg.seed, "init-g");
    st.g = build_generator(st.gplan, gi);
    Rng di = Rng::for_purpose(cfg.seed, "init-d");
    ensemble_init(st.d, st.ens, di);
    st.ema = st.g.clone(/*params_only=*/true);
    st.refresh_path_lists();
    Rng su = Rng::for_purpose(cfg.seed, "sn-init");
    for (const auto& p : st.g_sn) spectral_norm_iterate(st.g, p, static_cast<int>(cfg.sn_warmup), &su);
    for (const auto& p : st.d_sn) spectral_norm_iterate(st.d, p, static_cast<int>(cfg.sn_warmup), &su);
    return st;
}

namespace detail {

inline std::map<std::string, std::vector<double>> collect_grads(Tape& tape, ParamStore& store) {
    std::map<std::string, std::vector<double>> grads;
    for (const auto& [path, t] : store) {
        if (!ParamStore::is_param_path(path)) continue;
        const std::vector<double>* g = tape.grad_of(tape.watch(store.get(path)));
        if (g != nullptr) grads.emplace(path, *g);
    }
    return grads;
}

}  // namespace detail

// One adversarial step: D update on (real, generated) with shared windows and
// conditioning, sigma refresh, G update on a fresh generated batch with the
// orthogonal penalty, then the EMA blend.
inline void train_step(TrainState& st) {
    const TrainConfig& cfg = st.cfg;
    const i64 s = st.step;
    const i64 b = cfg.batch_size;

    auto sig_g = compute_sn_sigmas(st.g, st.g_sn, static_cast<int>(cfg.sn_iters));
    auto sig_d = compute_sn_sigmas(st.d, st.d_sn, static_cast<int>(cfg.sn_iters));

    Rng data_rng = Rng::for_purpose(cfg.seed, "data", static_cast<u64>(s));
    auto [real_x, cond] = synth_batch(cfg.dataset, b, data_rng);

    Rng zd_rng = Rng::for_purpose(cfg.seed, "z-d", static_cast<u64>(s));
    Tensor z_d = draw_latent_batch(st.gplan, b, zd_rng);
    ParamAccess pa_g_const{&st.g, nullptr, &sig_g};
    Tensor fake_x = generator_forward(st.gplan, pa_g_const, cond, z_d, BnMode::train);

    Rng win_rng = Rng::for_purpose(cfg.seed, "windows", static_cast<u64>(s));
    Rng win_d = win_rng.split();
    Rng win_g = win_rng.split();

    double loss_d_val;
    {
        Tape td;
        ParamAccess pa_d{&st.d, &td, &sig_d};
        Rng wreal = win_d;  // identical copies: real and fake share each member's window
        Rng wfake = win_d;
        Tensor s_real = ensemble_forward_batch(st.ens, pa_d, real_x, cond, wreal);
        Tensor s_fake = ensemble_forward_batch(st.ens, pa_d, fake_x, cond, wfake);
        auto [loss_d, unused_g] = hinge_losses(s_real, s_fake);
        loss_d_val = loss_d.values()[0];
        td.backward(loss_d);
        auto grads = detail::collect_grads(td, st.d);
        adam_step(st.d, grads, cfg.lr_d, cfg.beta1, cfg.beta2, cfg.adam_eps);
    }

    // D weights moved; refresh their sigma estimates for the generator pass.
    auto sig_d2 = compute_sn_sigmas(st.d, st.d_sn, static_cast<int>(cfg.sn_iters));

    double loss_g_val;
    {
        Rng zg_rng = Rng::for_purpose(cfg.seed, "z-g", static_cast<u64>(s));
        Tensor z_g = draw_latent_batch(st.gplan, b, zg_rng);
        Tape tg;
        ParamAccess pa_g{&st.g, &tg, &sig_g};
        Tensor fake2 = generator_forward(st.gplan, pa_g, cond, z_g, BnMode::train);
        ParamAccess pa_d_const{&st.d, nullptr, &sig_d2};
        Tensor s_fake2 = ensemble_forward_batch(st.ens, pa_d_const, fake2, cond, win_g);
        Tensor loss = scale(mean_all(s_fake2), -1.0);
        if (cfg.ortho_beta != 0.0)
            for (const auto& p : st.g_penalty)
                loss = add(loss, orthogonal_offdiag_penalty(tg.watch(st.g.get(p)), cfg.ortho_beta));
        loss_g_val = loss.values()[0];
        tg.backward(loss);
        auto grads = detail::collect_grads(tg, st.g);
        adam_step(st.g, grads, cfg.lr_g, cfg.beta1, cfg.beta2, cfg.adam_eps);
    }

    ema_update(st.ema, st.g, cfg.ema_decay);

    check(std::isfinite(loss_d_val) && std::isfinite(loss_g_val),
          "train: non-finite loss at step " + std::to_string(s) + " (loss_d=" +
              std::to_string(loss_d_val) + ", loss_g=" + std::to_string(loss_g_val) + ")");
    st.last_loss_d = loss_d_val;
    st.last_loss_g = loss_g_val;
    ++st.step;
}

// Loss probe without updates: the hinge values the next train_step would see.
inline std::pair<double, double> probe_losses(TrainState& st) {
    const TrainConfig& cfg = st.cfg;
    const i64 s = st.step;
    const i64 b = cfg.batch_size;
    ParamStore gc = st.g.clone();  // scratch copies: no u-vector or stat side effects
    ParamStore dc = st.d.clone();
    auto sig_g = compute_sn_sigmas(gc, st.g_sn, static_cast<int>(cfg.sn_iters));
    auto sig_d = compute_sn_sigmas(dc, st.d_sn, static_cast<int>(cfg.sn_iters));
    Rng data_rng = Rng::for_purpose(cfg.seed, "data", static_cast<u64>(s));
    auto [real_x, cond] = synth_batch(cfg.dataset, b, data_rng);
    Rng zd_rng = Rng::for_purpose(cfg.seed, "z-d", static_cast<u64>(s));
    Tensor z_d = draw_latent_batch(st.gplan, b, zd_rng);
    ParamAccess pa_g{&gc, nullptr, &sig_g};
    Tensor fake_x = generator_forward(st.gplan, pa_g, cond, z_d, BnMode::train);
    Rng win_rng = Rng::for_purpose(cfg.seed, "windows", static_cast<u64>(s));
    Rng win_d = win_rng.split();
    ParamAccess pa_d{&st.d, nullptr, &sig_d};
    Rng wreal = win_d, wfake = win_d;
    Tensor s_real = ensemble_forward_batch(st.ens, pa_d, real_x, cond, wreal);
    Tensor s_fake = ensemble_forward_batch(st.ens, pa_d, fake_x, cond, wfake);
    auto [loss_d, loss_g] = hinge_losses(s_real, s_fake);
    return {loss_d.values()[0], loss_g.values()[0]};
}

// ---------------------------------------------------------------------------
// Evaluation on a frozen copy (training state untouched)
// ---------------------------------------------------------------------------

struct EvalCache {
    bool ready = false;
    std::vector<Tensor> cond_pool;               // [0, eval_clips): matched conditioning
    std::vector<std::vector<double>> real_audio;  // [0, 2*eval_clips)
    FeatureMatrix real_matched;                   // rows 0..N-1
    FeatureMatrix real_indep;                     // rows N..2N-1
};

inline void build_eval_cache(const TrainConfig& cfg, EvalCache& cache) {
    if (cache.ready) return;
    const i64 n = cfg.eval_clips;
    cache.cond_pool.reserve(static_cast<size_t>(n));
    cache.real_audio.reserve(static_cast<size_t>(2 * n));
    for (i64 i = 0; i < 2 * n; ++i) {
        Example ex = eval_example(cfg.dataset, cfg.seed, static_cast<u64>(i));
        if (i < n) cache.cond_pool.push_back(ex.features);
        cache.real_audio.emplace_back(ex.waveform.raw(), ex.waveform.raw() + ex.waveform.numel());
    }
    cache.real_matched.n = n;
    cache.real_matched.d = cfg.features.feature_dim;
    cache.real_indep.n = n;
    cache.real_indep.d = cfg.features.feature_dim;
    for (i64 i = 0; i < 2 * n; ++i) {
        std::vector<double> f = clip_features(cache.real_audio[static_cast<size_t>(i)], cfg.features);
        auto& dst = i < n ? cache.real_matched : cache.real_indep;
        dst.data.insert(dst.data.end(), f.begin(), f.end());
    }
    cache.ready = true;
}

// Inference-ready copy of a generator parameter set: fresh spectral-norm
// state (sn_warmup iterations) and standing statistics accumulated over the
// conditioning pool.
inline std::pair<ParamStore, std::map<std::string, double>> prepare_inference_store(
    const TrainConfig& cfg, const GeneratorPlan& gplan, const ParamStore& params,
    const std::vector<Tensor>& cond_pool, u64 stream_key) {
    ParamStore es = params.clone(/*params_only=*/true);
    std::vector<std::string> paths = sn_weight_paths(es, "g.");
    Rng snr = Rng::for_purpose(cfg.seed, "infer-sn", stream_key);
    std::map<std::string, double> sigs;
    for (const auto& p : paths)
        sigs[p] = spectral_norm_iterate(es, p, static_cast<int>(cfg.sn_warmup), &snr);
    Rng sr = Rng::for_purpose(cfg.seed, "standing", stream_key);
    accumulate_standing_stats(gplan, es, sigs, cond_pool, static_cast<int>(cfg.standing_passes),
                              cfg.standing_batch, sr);
    return {std::move(es), std::move(sigs)};
}

// Batched masked-free inference over a fixed conditioning pool with per-clip
// keyed latents (batch composition cannot affect results in infer mode).
inline std::vector<std::vector<double>> generate_eval_clips(const TrainConfig& cfg,
                                                            const GeneratorPlan& gplan,
                                                            ParamStore& es,
                                                            const std::map<std::string, double>& sigs,
                                                            const std::vector<Tensor>& cond_pool) {
    const i64 n = static_cast<i64>(cond_pool.size());
    const i64 tc = cond_pool.front().dim(0);
    const i64 clip = tc * gplan.lambda_total;
    ParamAccess pa{&es, nullptr, &sigs};
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<size_t>(n));
    for (i64 at = 0; at < n; at += cfg.batch_size) {
        const i64 bs = std::min(cfg.batch_size, n - at);
        Tensor cond = Tensor::zeros({bs, tc, gplan.feature_dim});
        Tensor z = Tensor::zeros({bs, gplan.cond_dim()});
        for (i64 j = 0; j < bs; ++j) {
            check(cond_pool[static_cast<size_t>(at + j)].dim(0) == tc,
                  "eval: conditioning pool lengths must agree");
            std::memcpy(cond.raw() + j * tc * gplan.feature_dim,
                        cond_pool[static_cast<size_t>(at + j)].raw(),
                        static_cast<size_t>(tc * gplan.feature_dim) * sizeof(double));
            Rng zr = Rng::for_purpose(cfg.seed, "eval-z", static_cast<u64>(at + j));
            double* row = z.raw() + j * gplan.cond_dim();
            for (i64 i = 0; i < gplan.latent_dim; ++i) row[i] = zr.next_normal();
            if (gplan.speakers > 1)
                row[gplan.latent_dim +
                    static_cast<i64>(zr.next_below(static_cast<u64>(gplan.speakers)))] = 1.0;
        }
        Tensor y = generator_forward(gplan, pa, cond, z, BnMode::infer);
        for (i64 j = 0; j < bs; ++j)
            out.emplace_back(y.raw() + j * clip, y.raw() + (j + 1) * clip);
    }
    return out;
}

struct EvalResult {
    double cfdsd_s = 0, ckdsd_s = 0, fdsd_s = 0, kdsd_s = 0;
};

inline EvalResult evaluate_generator(const TrainConfig& cfg, const GeneratorPlan& gplan,
                                     const ParamStore& params, EvalCache& cache, u64 stream_key) {
    build_eval_cache(cfg, cache);
    auto [es, sigs] = prepare_inference_store(cfg, gplan, params, cache.cond_pool, stream_key);
    auto gen = generate_eval_clips(cfg, gplan, es, sigs, cache.cond_pool);
    FeatureMatrix fg = features_of_clips(gen, cfg.features);
    EvalResult r;
    r.cfdsd_s = frechet_distance(fg, cache.real_matched);
    r.ckdsd_s = mmd2_unbiased(fg, cache.real_matched);
    r.fdsd_s = frechet_distance(fg, cache.real_indep);
    r.kdsd_s = mmd2_unbiased(fg, cache.real_indep);
    return r;
}

// True largest singular values of the spectrally-normalized discriminator
// weights (estimate-quality band; expected to straddle 1).
inline std::pair<double, double> sn_band(const ParamStore& store,
                                         const std::vector<std::string>& paths,
                                         const std::map<std::string, double>& sigmas) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (const auto& p : paths) {
        const Tensor& w = store.get(p);
        const auto [rows, cols] = detail::matrix_view(w);
        Eigen::Map<const detail::RowMat> W(w.raw(), rows, cols);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(W);
        const double true_sigma = svd.singularValues()(0);
        if (true_sigma < 1e-8) continue;  // zero-initialized heads carry no scale yet
        const double normed = true_sigma / sigmas.at(p);
        lo = std::min(lo, normed);
        hi = std::max(hi, normed);
    }
    if (hi == 0) return {1.0, 1.0};
    return {lo, hi};
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline std::string checkpoint_dir_name(i64 step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%06" PRId64, step);
    return buf;
}

inline void save_checkpoint(const std::string& dir, const TrainState& st,
                            const std::string& log_text) {
    std::filesystem::create_directories(dir);
    st.g.save(dir + "/g.gtts");
    st.d.save(dir + "/d.gtts");
    st.ema.save(dir + "/ema.gtts");
    std::ofstream meta(dir + "/meta.txt", std::ios::trunc);
    check(meta.good(), "checkpoint: cannot write meta in " + dir);
    char lbuf[128];
    std::snprintf(lbuf, sizeof lbuf, "step=%" PRId64 "\nlast_loss_d=%.17g\nlast_loss_g=%.17g\n",
                  st.step, st.last_loss_d, st.last_loss_g);
    meta << lbuf << st.cfg.serialize();
    check(meta.good(), "checkpoint: meta write failed in " + dir);
    std::ofstream log(dir + "/train.log", std::ios::trunc);
    log << log_text;
    check(log.good(), "checkpoint: log copy failed in " + dir);
}

inline std::string strip_steps_line(const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("steps=", 0) != 0) out << line << "\n";
    return out.str();
}

inline TrainState load_checkpoint(const std::string& dir, const TrainConfig& cfg) {
    TrainState st;
    st.cfg = cfg;
    st.gplan = cfg.generator_plan();
    st.ens = cfg.ensemble_config();
    st.g = ParamStore::load(dir + "/g.gtts");
    st.d = ParamStore::load(dir + "/d.gtts");
    st.ema = ParamStore::load(dir + "/ema.gtts");
    st.refresh_path_lists();
    std::ifstream meta(dir + "/meta.txt");
    check(meta.good(), "checkpoint: cannot read meta in " + dir);
    std::string text((std::istreambuf_iterator<char>(meta)), std::istreambuf_iterator<char>());
    std::istringstream in(text);
    std::string line;
    bool have_step = false;
    std::ostringstream rest;
    while (std::getline(in, line)) {
        if (line.rfind("step=", 0) == 0) {
            st.step = std::stoll(line.substr(5));
            have_step = true;
        } else if (line.rfind("last_loss_d=", 0) == 0) {
            st.last_loss_d = std::stod(line.substr(12));
        } else if (line.rfind("last_loss_g=", 0) == 0) {
            st.last_loss_g = std::stod(line.substr(12));
        } else {
            rest << line << "\n";
        }
    }
    check(have_step, "checkpoint: meta missing step in " + dir);
    check(strip_steps_line(rest.str()) == strip_steps_line(cfg.serialize()),
          "checkpoint: config does not match the checkpoint (only steps= may differ)");
    return st;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

inline std::string metric_line(i64 step, const EvalResult& ev, double loss_d, double loss_g) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "step %" PRId64
                  " cfdsd_s %.6f ckdsd_s %.6f fdsd_s %.6f kdsd_s %.6f loss_d %.6f loss_g %.6f\n",
                  step, ev.cfdsd_s, ev.ckdsd_s, ev.fdsd_s, ev.kdsd_s, loss_d, loss_g);
    return buf;
}

struct TrainHooks {
    bool quiet = false;  // suppress stdout mirroring of log lines
};

// Runs (or resumes) training, writing train.log, sn.log and checkpoints under
// out_dir.  Returns the final state.
inline TrainState train(const TrainConfig& cfg, const std::string& out_dir,
                        const std::string& resume_dir = "", const TrainHooks& hooks = {}) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    TrainState st = resume_dir.empty() ? init_train_state(cfg) : load_checkpoint(resume_dir, cfg);
    check(st.step <= cfg.steps, "train: checkpoint is beyond the requested step count");
    const std::string log_path = out_dir + "/train.log";
    const std::string sn_path = out_dir + "/sn.log";
    std::string log_text;
    std::ofstream log(log_path, std::ios::trunc);
    std::ofstream snlog(sn_path, std::ios::trunc);
    check(log.good() && snlog.good(), "train: cannot open logs under " + out_dir);
    EvalCache cache;

    for (;;) {
        const i64 s = st.step;
        if (s % cfg.log_every == 0 || s == cfg.steps) {
            double ld = st.last_loss_d, lg = st.last_loss_g;
            if (s == 0) {
                auto [pd, pg] = probe_losses(st);
                ld = pd;
                lg = pg;
            }
            EvalResult ev = evaluate_generator(cfg, st.gplan, st.ema, cache, static_cast<u64>(s));
            const std::string line = metric_line(s, ev, ld, lg);
            log << line;
            log.flush();
            log_text += line;
            if (!hooks.quiet) std::fputs(line.c_str(), stdout);
            ParamStore dscratch = st.d.clone();  // keep the live u vectors untouched
            auto sig_d = compute_sn_sigmas(dscratch, st.d_sn, static_cast<int>(cfg.sn_iters));
            auto [lo, hi] = sn_band(dscratch, st.d_sn, sig_d);
            char sbuf[128];
            std::snprintf(sbuf, sizeof sbuf, "step %" PRId64 " sn_sigma_min %.6f sn_sigma_max %.6f\n",
                          s, lo, hi);
            snlog << sbuf;
            snlog.flush();
        }
        if ((s > 0 && s % cfg.checkpoint_every == 0) || s == cfg.steps)
            save_checkpoint(out_dir + "/" + checkpoint_dir_name(s), st, log_text);
        if (s == cfg.steps) break;
        train_step(st);
    }
    return st;
}

}  // namespace gantts
