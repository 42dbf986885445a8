#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "gantts/audio.hpp"
#include "gantts/common.hpp"

namespace gantts {

// ---------------------------------------------------------------------------
// Surrogate spectral features
// ---------------------------------------------------------------------------

struct FeatureExtractorConfig {
    i64 window = 480;      // w, samples; hop is w/2; Hann taper
    i64 feature_dim = 64;  // D lowest non-negative DFT bins

    void validate() const {
        check(window >= 2 && window % 2 == 0, "features: window must be even and >= 2");
        check(feature_dim >= 1 && feature_dim <= window / 2 + 1,
              "features: dim must be <= window/2 + 1");
    }
};

namespace detail {

struct FeatureTables {
    i64 w = 0, d = 0;
    std::vector<double> hann;      // [w]
    std::vector<double> cos_tab;   // [d][w], taper folded in
    std::vector<double> sin_tab;   // [d][w]
};

inline const FeatureTables& feature_tables(const FeatureExtractorConfig& cfg) {
    static FeatureTables t;
    if (t.w != cfg.window || t.d != cfg.feature_dim) {
        t.w = cfg.window;
        t.d = cfg.feature_dim;
        t.hann.resize(static_cast<size_t>(t.w));
        for (i64 i = 0; i < t.w; ++i)
            t.hann[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / t.w);
        t.cos_tab.assign(static_cast<size_t>(t.d * t.w), 0.0);
        t.sin_tab.assign(static_cast<size_t>(t.d * t.w), 0.0);
        for (i64 m = 0; m < t.d; ++m)
            for (i64 i = 0; i < t.w; ++i) {
                const double ang = 2.0 * M_PI * m * i / t.w;
                t.cos_tab[static_cast<size_t>(m * t.w + i)] = std::cos(ang) * t.hann[static_cast<size_t>(i)];
                t.sin_tab[static_cast<size_t>(m * t.w + i)] = std::sin(ang) * t.hann[static_cast<size_t>(i)];
            }
    }
    return t;
}

}  // namespace detail

// log(1 + |DFT(hann . window)|^2) over the feature_dim lowest bins.
inline std::vector<double> surrogate_features(const double* window,
                                              const FeatureExtractorConfig& cfg) {
    cfg.validate();
    const auto& t = detail::feature_tables(cfg);
    std::vector<double> out(static_cast<size_t>(cfg.feature_dim));
    for (i64 m = 0; m < cfg.feature_dim; ++m) {
        const double* ct = t.cos_tab.data() + m * cfg.window;
        const double* st = t.sin_tab.data() + m * cfg.window;
        double re = 0, im = 0;
        for (i64 i = 0; i < cfg.window; ++i) {
            re += ct[i] * window[i];
            im -= st[i] * window[i];
        }
        out[static_cast<size_t>(m)] = std::log1p(re * re + im * im);
    }
    return out;
}

inline std::vector<double> surrogate_features(const std::vector<double>& window,
                                              const FeatureExtractorConfig& cfg) {
    check(static_cast<i64>(window.size()) == cfg.window, "features: window length mismatch");
    return surrogate_features(window.data(), cfg);
}

// Average of per-window features at hop w/2: M = (len-w)/(w/2) + 1 windows.
inline std::vector<double> clip_features(const double* audio, i64 len,
                                         const FeatureExtractorConfig& cfg) {
    cfg.validate();
    check(len >= cfg.window, "clip_features: audio shorter than one window");
    const i64 hop = cfg.window / 2;
    const i64 m = (len - cfg.window) / hop + 1;
    std::vector<double> acc(static_cast<size_t>(cfg.feature_dim), 0.0);
    for (i64 i = 0; i < m; ++i) {
        std::vector<double> f = surrogate_features(audio + i * hop, cfg);
        for (i64 d = 0; d < cfg.feature_dim; ++d) acc[static_cast<size_t>(d)] += f[static_cast<size_t>(d)];
    }
    for (auto& v : acc) v /= static_cast<double>(m);
    return acc;
}

inline std::vector<double> clip_features(const std::vector<double>& audio,
                                         const FeatureExtractorConfig& cfg) {
    return clip_features(audio.data(), static_cast<i64>(audio.size()), cfg);
}

// ---------------------------------------------------------------------------
// Feature matrices
// ---------------------------------------------------------------------------

struct FeatureMatrix {
    i64 n = 0, d = 0;
    std::vector<double> data;  // row-major [n, d]

    const double* row(i64 i) const { return data.data() + i * d; }
    void validate() const {
        check(n >= 0 && d >= 1 && static_cast<i64>(data.size()) == n * d, "feature matrix: bad shape");
        for (double v : data) check(std::isfinite(v), "feature matrix: non-finite entry");
    }
};

inline void write_feature_matrix(const std::string& path, const FeatureMatrix& fm) {
    write_matrix(path, "GTFM", fm.n, fm.d, fm.data.data());
}

inline FeatureMatrix read_feature_matrix(const std::string& path) {
    FeatureMatrix fm;
    fm.data = read_matrix(path, "GTFM", &fm.n, &fm.d);
    fm.validate();
    return fm;
}

inline FeatureMatrix features_of_clips(const std::vector<std::vector<double>>& clips,
                                       const FeatureExtractorConfig& cfg) {
    FeatureMatrix fm;
    fm.n = static_cast<i64>(clips.size());
    fm.d = cfg.feature_dim;
    fm.data.reserve(static_cast<size_t>(fm.n * fm.d));
    for (const auto& clip : clips) {
        std::vector<double> f = clip_features(clip, cfg);
        fm.data.insert(fm.data.end(), f.begin(), f.end());
    }
    return fm;
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

inline double poly_kernel(const double* x, const double* y, i64 d) {
    double dot = 0;
    for (i64 i = 0; i < d; ++i) dot += x[i] * y[i];
    const double b = dot / static_cast<double>(d) + 1.0;
    return b * b * b;
}

inline double poly_kernel(const std::vector<double>& x, const std::vector<double>& y) {
    check(x.size() == y.size(), "poly_kernel: dim mismatch");
    return poly_kernel(x.data(), y.data(), static_cast<i64>(x.size()));
}

// Unbiased MMD^2 with the cubic polynomial kernel; may be negative.
inline double mmd2_unbiased(const FeatureMatrix& x, const FeatureMatrix& y) {
    check(x.d == y.d, "mmd2: dim mismatch");
    const i64 m = x.n, n = y.n, d = x.d;
    check(m >= 2 && n >= 2, "mmd2: need at least 2 rows per side");
    double sxx = 0, syy = 0, sxy = 0;
    for (i64 i = 0; i < m; ++i)
        for (i64 j = 0; j < m; ++j)
            if (i != j) sxx += poly_kernel(x.row(i), x.row(j), d);
    for (i64 i = 0; i < n; ++i)
        for (i64 j = 0; j < n; ++j)
            if (i != j) syy += poly_kernel(y.row(i), y.row(j), d);
    for (i64 i = 0; i < m; ++i)
        for (i64 j = 0; j < n; ++j) sxy += poly_kernel(x.row(i), y.row(j), d);
    return sxx / (static_cast<double>(m) * (m - 1)) + syy / (static_cast<double>(n) * (n - 1)) -
           2.0 * sxy / (static_cast<double>(m) * n);
}

namespace detail {

using EMat = Eigen::MatrixXd;
using EVec = Eigen::VectorXd;

inline void mean_cov(const FeatureMatrix& x, EVec& mu, EMat& cov) {
    const i64 n = x.n, d = x.d;
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        x.data.data(), n, d);
    mu = m.colwise().mean().transpose();
    EMat centered = m.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / static_cast<double>(n - 1);
}

}  // namespace detail

// Squared Frechet distance between Gaussian fits of two feature sets.
// Trace term via eigenvalues of Sx^(1/2) Sy Sx^(1/2), negatives clamped.
inline double frechet_distance2(const FeatureMatrix& x, const FeatureMatrix& y) {
    check(x.d == y.d, "frechet: dim mismatch");
    check(x.n >= 2 && y.n >= 2, "frechet: need at least 2 rows per side");
    detail::EVec mx, my;
    detail::EMat cx, cy;
    detail::mean_cov(x, mx, cx);
    detail::mean_cov(y, my, cy);
    Eigen::SelfAdjointEigenSolver<detail::EMat> esx(cx);
    check(esx.info() == Eigen::Success, "frechet: eigensolver failed");
    detail::EVec lx = esx.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    detail::EMat sqx = esx.eigenvectors() * lx.asDiagonal() * esx.eigenvectors().transpose();
    detail::EMat prod = sqx * cy * sqx;
    prod = 0.5 * (prod + prod.transpose());  // enforce symmetry against roundoff
    Eigen::SelfAdjointEigenSolver<detail::EMat> esp(prod);
    check(esp.info() == Eigen::Success, "frechet: eigensolver failed");
    double tr_sqrt = 0, clamped = 0, total = 0;
    for (i64 i = 0; i < x.d; ++i) {
        const double ev = esp.eigenvalues()(i);
        total += std::abs(ev);
        if (ev > 0) tr_sqrt += std::sqrt(ev);
        else clamped += -ev;
    }
    if (total > 0 && clamped / total > 1e-6)
        std::fprintf(stderr, "warning: frechet eigenvalue clamp removed %.3e of spectrum mass\n",
                     clamped / total);
    const double mean_term = (mx - my).squaredNorm();
    const double trace_term = cx.trace() + cy.trace() - 2.0 * tr_sqrt;
    return mean_term + trace_term;
}

// Reported value: square root of the squared-distance estimate (clamped at 0).
inline double frechet_distance(const FeatureMatrix& x, const FeatureMatrix& y) {
    return std::sqrt(std::max(0.0, frechet_distance2(x, y)));
}

// ---------------------------------------------------------------------------
// Evaluation protocol
// ---------------------------------------------------------------------------

struct DistanceReport {
    double fdsd_s = std::numeric_limits<double>::quiet_NaN();
    double kdsd_s = std::numeric_limits<double>::quiet_NaN();
    double cfdsd_s = std::numeric_limits<double>::quiet_NaN();
    double ckdsd_s = std::numeric_limits<double>::quiet_NaN();
    i64 n_gen = 0;
    i64 n_real = 0;
    bool has_conditional = false;
    bool has_unconditional = false;
    u64 seed = 0;
};

// matched=true: real clips 0..N-1 share the generator's conditioning
// (index-aligned) and feed the conditional distances; any further real clips
// form the independent split for the unconditional ones.
inline DistanceReport estimate_distances(const std::vector<std::vector<double>>& gen_audio,
                                         const std::vector<std::vector<double>>& real_audio,
                                         bool matched, const FeatureExtractorConfig& cfg) {
    const i64 ng = static_cast<i64>(gen_audio.size());
    const i64 nr = static_cast<i64>(real_audio.size());
    check(ng >= 2, "estimate_distances: need at least 2 generated clips");
    DistanceReport rep;
    rep.n_gen = ng;
    rep.n_real = nr;
    FeatureMatrix fg = features_of_clips(gen_audio, cfg);
    if (matched) {
        check(nr >= ng, "estimate_distances: matched mode needs real clips for every generated clip");
        FeatureMatrix fr_matched{ng, cfg.feature_dim, {}};
        for (i64 i = 0; i < ng; ++i) {
            std::vector<double> f = clip_features(real_audio[static_cast<size_t>(i)], cfg);
            fr_matched.data.insert(fr_matched.data.end(), f.begin(), f.end());
        }
        rep.cfdsd_s = frechet_distance(fg, fr_matched);
        rep.ckdsd_s = mmd2_unbiased(fg, fr_matched);
        rep.has_conditional = true;
        if (nr - ng >= 2) {
            FeatureMatrix fr_indep{nr - ng, cfg.feature_dim, {}};
            for (i64 i = ng; i < nr; ++i) {
                std::vector<double> f = clip_features(real_audio[static_cast<size_t>(i)], cfg);
                fr_indep.data.insert(fr_indep.data.end(), f.begin(), f.end());
            }
            rep.fdsd_s = frechet_distance(fg, fr_indep);
            rep.kdsd_s = mmd2_unbiased(fg, fr_indep);
            rep.has_unconditional = true;
        }
    } else {
        check(nr >= 2, "estimate_distances: need at least 2 real clips");
        FeatureMatrix fr = features_of_clips(real_audio, cfg);
        rep.fdsd_s = frechet_distance(fg, fr);
        rep.kdsd_s = mmd2_unbiased(fg, fr);
        rep.has_unconditional = true;
    }
    return rep;
}

}  // namespace gantts
