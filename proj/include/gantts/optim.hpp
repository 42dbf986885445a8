#pragma once

#include <map>

#include <Eigen/Dense>

#include "gantts/ops.hpp"
#include "gantts/param_store.hpp"
#include "gantts/rng.hpp"

namespace gantts {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Weights are viewed as matrices [rows, cols] with the output units (last
// tensor axis) as columns, rows = everything else.
inline std::pair<i64, i64> matrix_view(const Tensor& w) {
    check(w.rank() >= 1, "matrix view: rank-0 tensor");
    const i64 cols = w.rank() >= 2 ? w.dim(w.rank() - 1) : 1;
    return {w.numel() / cols, cols};
}

}  // namespace detail

// Orthogonal initialization: sample a standard-normal matrix, take the QR
// orthonormal factor (sign-fixed via the diagonal of R so the draw is
// deterministic in the Rng stream).  Columns are orthonormal when
// rows >= cols; otherwise the rows are (the transposed convention).
inline Tensor orthogonal_init(std::vector<i64> shape, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    const auto [rows, cols] = detail::matrix_view(t);
    const i64 big = std::max(rows, cols), small = std::min(rows, cols);
    detail::RowMat normal(big, small);
    for (i64 i = 0; i < big; ++i)
        for (i64 j = 0; j < small; ++j) normal(i, j) = rng.next_normal();
    Eigen::HouseholderQR<detail::RowMat> qr(normal);
    detail::RowMat q = qr.householderQ() * detail::RowMat::Identity(big, small);
    detail::RowMat r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
    for (i64 j = 0; j < small; ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
    Eigen::Map<detail::RowMat> out(t.raw(), rows, cols);
    if (rows >= cols) out = q;
    else out = q.transpose();
    return t;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction over every (path, gradient) pair.
// Moments and the per-parameter step counter live in the store under
// "<path>#adam_m", "<path>#adam_v", "<path>#adam_t".
inline void adam_step(ParamStore& store, const std::map<std::string, std::vector<double>>& grads,
                      double lr, double beta1, double beta2, double eps = 1e-8) {
    for (const auto& [path, g] : grads) {
        Tensor& p = store.get(path);
        check(static_cast<i64>(g.size()) == p.numel(),
              "adam_step: gradient size mismatch for '" + path + "'");
        Tensor& m = store.get_or_create(path + "#adam_m", p.shape);
        Tensor& v = store.get_or_create(path + "#adam_v", p.shape);
        Tensor& tc = store.get_or_create(path + "#adam_t", {1});
        const double t = (tc.raw()[0] += 1.0);
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        Tensor pn = Tensor::from(p.shape, *p.data);
        double* pm = m.raw();
        double* pv = v.raw();
        double* pp = pn.raw();
        const size_t n = g.size();
        for (size_t i = 0; i < n; ++i) {
            pm[i] = beta1 * pm[i] + (1.0 - beta1) * g[i];
            pv[i] = beta2 * pv[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = pm[i] / bc1;
            const double vhat = pv[i] / bc2;
            pp[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        store.set(path, std::move(pn));
    }
}

inline void adam_step(ParamStore& store, const std::map<std::string, std::vector<double>>& grads,
                      const AdamConfig& cfg) {
    adam_step(store, grads, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
}

// ---------------------------------------------------------------------------
// Spectral normalization
// ---------------------------------------------------------------------------

// Power-iteration estimate of the largest singular value.  `u` (length rows)
// is updated in place across `n_iters` iterations and persists between
// calls; sigma is computed as u^T W v with the final pair.
inline double spectral_sigma(const Tensor& w, std::vector<double>& u, int n_iters) {
    check(n_iters >= 1, "spectral norm: n_iters must be >= 1");
    const auto [rows, cols] = detail::matrix_view(w);
    check(static_cast<i64>(u.size()) == rows, "spectral norm: u length must equal rows");
    Eigen::Map<const detail::RowMat> W(w.raw(), rows, cols);
    Eigen::Map<Eigen::VectorXd> uv(u.data(), rows);
    Eigen::VectorXd v(cols), unew(rows);
    for (int it = 0; it < n_iters; ++it) {
        v = W.transpose() * uv;
        const double nv = v.norm();
        if (nv > 1e-12) v /= nv;
        unew = W * v;
        const double nu = unew.norm();
        // Keep the previous u on a degenerate (e.g. all-zero) matrix so the
        // iteration can recover once the weights move away from zero.
        if (nu > 1e-12) uv = unew / nu;
    }
    const double sigma = uv.dot(W * v);
    return std::max(sigma, 1e-12);
}

// Spec-level entry point: returns W / sigma as a fresh constant tensor.
inline Tensor spectral_normalize(const Tensor& w, std::vector<double>& u_state, int n_iters) {
    const double sigma = spectral_sigma(w, u_state, n_iters);
    Tensor out = Tensor::from(w.shape, *w.data);
    double* p = out.raw();
    const i64 n = out.numel();
    for (i64 i = 0; i < n; ++i) p[i] /= sigma;
    return out;
}

// Store-level helper: iterates the persisted u at "<path>#sn_u" (creating it
// from the given rng stream if absent) and returns the sigma estimate.
inline double spectral_norm_iterate(ParamStore& store, const std::string& path, int n_iters,
                                    Rng* init_rng = nullptr) {
    Tensor& w = store.get(path);
    const auto [rows, cols] = detail::matrix_view(w);
    const std::string upath = path + "#sn_u";
    if (!store.contains(upath)) {
        check(init_rng != nullptr, "spectral norm: u state missing for '" + path + "'");
        Tensor u0 = Tensor::zeros({rows});
        double norm2 = 0.0;
        for (i64 i = 0; i < rows; ++i) {
            const double v = init_rng->next_normal();
            u0.raw()[i] = v;
            norm2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-24));
        for (i64 i = 0; i < rows; ++i) u0.raw()[i] *= inv;
        store.create(upath, std::move(u0));
    }
    Tensor& ut = store.get(upath);
    std::vector<double> u(ut.raw(), ut.raw() + rows);
    const double sigma = spectral_sigma(w, u, n_iters);
    store.set(upath, Tensor::from({rows}, std::move(u)));
    return sigma;
}

// ---------------------------------------------------------------------------
// EMA
// ---------------------------------------------------------------------------

// shadow <- decay * shadow + (1 - decay) * live, over parameter paths
// (state entries under '#' are left to their owners).
inline void ema_update(ParamStore& shadow, const ParamStore& live, double decay) {
    check(decay >= 0.0 && decay <= 1.0, "ema_update: decay out of [0,1]");
    for (const auto& [path, lt] : live) {
        if (!ParamStore::is_param_path(path)) continue;
        Tensor& st = shadow.get(path);
        check(st.shape == lt.shape, "ema_update: shape mismatch at '" + path + "'");
        Tensor out = Tensor::zeros(st.shape);
        const double* ps = st.raw();
        const double* pl = lt.raw();
        double* po = out.raw();
        const i64 n = out.numel();
        for (i64 i = 0; i < n; ++i) po[i] = decay * ps[i] + (1.0 - decay) * pl[i];
        shadow.set(path, std::move(out));
    }
}

// Spec-level penalty wrapper including the beta coefficient.
inline Tensor orthogonal_offdiag_penalty(const Tensor& w, double beta) {
    check(beta >= 0.0, "orthogonal penalty: beta must be >= 0");
    if (beta == 0.0) return Tensor::scalar(0.0);
    return scale(ortho_offdiag_penalty(w), beta);
}

}  // namespace gantts
