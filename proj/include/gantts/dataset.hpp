#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gantts/audio.hpp"
#include "gantts/rng.hpp"
#include "gantts/tensor.hpp"

namespace gantts {

// ---------------------------------------------------------------------------
// Synthetic conditioned-speech stand-in: harmonic phones over a pitch walk
// ---------------------------------------------------------------------------

struct SyntheticDatasetConfig {
    i64 sample_rate = 24000;  // rho_a
    i64 lambda = 120;         // audio samples per conditioning frame (rho_c = 200 Hz)
    i64 tc = 40;              // conditioning frames per clip
    i64 feature_dim = 8;      // >= phonemes + 3; channels beyond that stay zero
    i64 phonemes = 5;         // class 0 = silence
    i64 seg_min = 3;          // segment length bounds, frames
    i64 seg_max = 10;
    double f0_min = 80.0;  // Hz
    double f0_max = 300.0;
    double f0_step = 2.0;       // random-walk step, Hz per frame
    double noise_floor = 0.003;  // max |linear noise amplitude|
    double mu = 65535.0;

    i64 clip_samples() const { return lambda * tc; }

    void validate() const {
        check(sample_rate > 0 && lambda > 0 && tc > 0, "dataset: bad sizes");
        check(phonemes >= 2, "dataset: need silence plus at least one voiced class");
        check(feature_dim >= phonemes + 3, "dataset: feature dim too small for channel layout");
        check(1 <= seg_min && seg_min <= seg_max, "dataset: bad segment bounds");
        check(0 < f0_min && f0_min < f0_max, "dataset: bad f0 range");
        check(noise_floor >= 0 && noise_floor < 0.1, "dataset: implausible noise floor");
    }
};

struct Example {
    Tensor waveform;  // [lambda*tc, 1], mu-law domain, values in (-1,1)
    Tensor features;  // [tc, feature_dim]
};

namespace detail {

// Fixed per-class harmonic amplitude profiles (8 harmonics, class 0 silent),
// each normalized to unit total amplitude.
inline const std::vector<std::vector<double>>& harmonic_profiles(i64 phonemes) {
    static std::vector<std::vector<double>> table;
    if (table.size() != static_cast<size_t>(phonemes)) {
        table.assign(static_cast<size_t>(phonemes), std::vector<double>(8, 0.0));
        for (i64 c = 1; c < phonemes; ++c) {
            double total = 0;
            for (int h = 0; h < 8; ++h) {
                const double k = h + 1.0;
                double a = 0;
                switch (c % 4) {
                    case 1: a = 1.0 / k; break;                        // bright, saw-like
                    case 2: a = 1.0 / (k * k); break;                  // mellow
                    case 3: a = (h % 2 == 0) ? 1.0 / k : 0.0; break;   // odd harmonics
                    case 0: a = std::exp(-0.5 * (k - 3.0) * (k - 3.0)); break;  // formant bump
                }
                table[static_cast<size_t>(c)][static_cast<size_t>(h)] = a;
                total += a;
            }
            for (auto& a : table[static_cast<size_t>(c)]) a /= total;
        }
    }
    return table;
}

inline double normalized_log_f0(double f0, const SyntheticDatasetConfig& cfg) {
    const double mid = 0.5 * (std::log(cfg.f0_min) + std::log(cfg.f0_max));
    const double half = 0.5 * (std::log(cfg.f0_max) - std::log(cfg.f0_min));
    return (std::log(f0) - mid) / half;  // in [-1, 1]
}

}  // namespace detail

inline Example synth_example(const SyntheticDatasetConfig& cfg, Rng& rng) {
    cfg.validate();
    const i64 tc = cfg.tc, n = cfg.clip_samples();
    const auto& profiles = detail::harmonic_profiles(cfg.phonemes);

    // Piecewise-constant phoneme segments.
    std::vector<i64> cls(static_cast<size_t>(tc));
    for (i64 t = 0; t < tc;) {
        const i64 len = cfg.seg_min + static_cast<i64>(rng.next_below(
                                          static_cast<u64>(cfg.seg_max - cfg.seg_min + 1)));
        const i64 c = static_cast<i64>(rng.next_below(static_cast<u64>(cfg.phonemes)));
        for (i64 j = t; j < std::min(tc, t + len); ++j) cls[static_cast<size_t>(j)] = c;
        t += len;
    }

    // Smooth f0 random walk, per-frame energy targets, 3-frame smoothing.
    std::vector<double> f0(static_cast<size_t>(tc)), energy(static_cast<size_t>(tc));
    double f = cfg.f0_min + (cfg.f0_max - cfg.f0_min) * rng.next_double();
    double seg_energy = 0;
    i64 prev_cls = -1;
    for (i64 t = 0; t < tc; ++t) {
        f = std::clamp(f + cfg.f0_step * rng.next_normal(), cfg.f0_min, cfg.f0_max);
        f0[static_cast<size_t>(t)] = f;
        if (cls[static_cast<size_t>(t)] != prev_cls) {
            prev_cls = cls[static_cast<size_t>(t)];
            seg_energy = prev_cls == 0 ? 0.0 : 0.25 + 0.5 * rng.next_double();
        }
        energy[static_cast<size_t>(t)] = seg_energy;
    }
    std::vector<double> esm(static_cast<size_t>(tc));
    for (i64 t = 0; t < tc; ++t) {
        double acc = 0;
        int cnt = 0;
        for (i64 j = std::max<i64>(0, t - 1); j <= std::min(tc - 1, t + 1); ++j, ++cnt)
            acc += energy[static_cast<size_t>(j)];
        esm[static_cast<size_t>(t)] = acc / cnt;
        if (cls[static_cast<size_t>(t)] == 0) esm[static_cast<size_t>(t)] = 0.0;  // keep silence silent
    }

    // Features: [one-hot class | normalized log-f0 | energy | voicing | zeros].
    Tensor feats = Tensor::zeros({tc, cfg.feature_dim});
    for (i64 t = 0; t < tc; ++t) {
        double* row = feats.raw() + t * cfg.feature_dim;
        row[cls[static_cast<size_t>(t)]] = 1.0;
        row[cfg.phonemes] = detail::normalized_log_f0(f0[static_cast<size_t>(t)], cfg);
        row[cfg.phonemes + 1] = esm[static_cast<size_t>(t)];
        row[cfg.phonemes + 2] = cls[static_cast<size_t>(t)] == 0 ? 0.0 : 1.0;
    }

    // Waveform: summed harmonics with per-sample interpolated f0/energy and a
    // clamped Gaussian noise floor, then mu-law compressed.
    Tensor wave = Tensor::zeros({n, 1});
    const double sigma = cfg.noise_floor / 4.0;
    double phase = 0.0;
    for (i64 s = 0; s < n; ++s) {
        const i64 t = s / cfg.lambda;
        const double frac = static_cast<double>(s - t * cfg.lambda) / cfg.lambda;
        const i64 t2 = std::min(tc - 1, t + 1);
        const double fs = f0[static_cast<size_t>(t)] * (1 - frac) + f0[static_cast<size_t>(t2)] * frac;
        const double es = esm[static_cast<size_t>(t)] * (1 - frac) + esm[static_cast<size_t>(t2)] * frac;
        phase += 2.0 * M_PI * fs / cfg.sample_rate;
        if (phase > 2.0 * M_PI * 1e6) phase -= 2.0 * M_PI * 1e6;  // keep sin() accurate
        const i64 c = cls[static_cast<size_t>(t)];
        double v = 0;
        if (c != 0) {
            const auto& prof = profiles[static_cast<size_t>(c)];
            for (int h = 0; h < 8; ++h)
                if (prof[static_cast<size_t>(h)] != 0)
                    v += prof[static_cast<size_t>(h)] * std::sin((h + 1) * phase);
            v *= es;
        }
        const double noise = std::clamp(sigma * rng.next_normal(), -cfg.noise_floor, cfg.noise_floor);
        wave.raw()[s] = mulaw(std::clamp(v + noise, -1.0, 1.0), cfg.mu);
    }
    return {std::move(wave), std::move(feats)};
}

// Batched synthesis with one split stream per item: returns stacked
// ([B, lambda*tc, 1], [B, tc, F]).
inline std::pair<Tensor, Tensor> synth_batch(const SyntheticDatasetConfig& cfg, i64 batch,
                                             Rng& rng) {
    check(batch >= 1, "synth_batch: batch must be positive");
    Tensor x = Tensor::zeros({batch, cfg.clip_samples(), 1});
    Tensor c = Tensor::zeros({batch, cfg.tc, cfg.feature_dim});
    for (i64 b = 0; b < batch; ++b) {
        Rng item = rng.split();
        Example ex = synth_example(cfg, item);
        std::memcpy(x.raw() + b * cfg.clip_samples(), ex.waveform.raw(),
                    static_cast<size_t>(cfg.clip_samples()) * sizeof(double));
        std::memcpy(c.raw() + b * cfg.tc * cfg.feature_dim, ex.features.raw(),
                    static_cast<size_t>(cfg.tc * cfg.feature_dim) * sizeof(double));
    }
    return {std::move(x), std::move(c)};
}

// Deterministic held-out example for evaluation: index-keyed stream.
inline Example eval_example(const SyntheticDatasetConfig& cfg, u64 seed, u64 index) {
    Rng rng = Rng::for_purpose(seed, "eval-data", index);
    return synth_example(cfg, rng);
}

}  // namespace gantts
