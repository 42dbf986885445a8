#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Dense>

#include "gantts/tensor.hpp"

// Differentiable ops over Tensor.  Every op follows the same pattern:
// compute the value eagerly, and if any input lives on a tape, append a node
// whose closure accumulates input gradients in place.  Constants (tensors
// without a tape) flow through and simply receive no gradient, which is how
// e.g. a discriminator is applied "frozen" inside the generator's tape.

namespace gantts {

namespace detail {

struct BTC {
    i64 B, T, C;
};

inline BTC btc_of(const Tensor& x, const char* op) {
    if (x.rank() == 2) return {1, x.dim(0), x.dim(1)};
    check(x.rank() == 3, std::string(op) + ": expected rank 2 [T,C] or rank 3 [B,T,C], got " + x.shape_str());
    return {x.dim(0), x.dim(1), x.dim(2)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    check(a.shape == b.shape, "add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros(a.shape);
    const i64 n = out.numel();
    const double* pa = a.raw();
    const double* pb = b.raw();
    double* po = out.raw();
    for (i64 i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (Tape* tape = detail::common_tape({&a, &b})) {
        out.tape = tape;
        out.node = tape->add(n, [a, b](Tape& t, const std::vector<double>& g) {
            if (auto* ga = detail::grad_target(t, a))
                for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
            if (auto* gb = detail::grad_target(t, b))
                for (size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
        });
    }
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check(a.shape == b.shape, "sub: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros(a.shape);
    const i64 n = out.numel();
    const double* pa = a.raw();
    const double* pb = b.raw();
    double* po = out.raw();
    for (i64 i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    if (Tape* tape = detail::common_tape({&a, &b})) {
        out.tape = tape;
        out.node = tape->add(n, [a, b](Tape& t, const std::vector<double>& g) {
            if (auto* ga = detail::grad_target(t, a))
                for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
            if (auto* gb = detail::grad_target(t, b))
                for (size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
        });
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    check(a.shape == b.shape, "mul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros(a.shape);
    const i64 n = out.numel();
    const double* pa = a.raw();
    const double* pb = b.raw();
    double* po = out.raw();
    for (i64 i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    if (Tape* tape = detail::common_tape({&a, &b})) {
        out.tape = tape;
        out.node = tape->add(n, [a, b](Tape& t, const std::vector<double>& g) {
            if (auto* ga = detail::grad_target(t, a)) {
                const double* pb2 = b.raw();
                for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * pb2[i];
            }
            if (auto* gb = detail::grad_target(t, b)) {
                const double* pa2 = a.raw();
                for (size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * pa2[i];
            }
        });
    }
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = Tensor::zeros(a.shape);
    const i64 n = out.numel();
    const double* pa = a.raw();
    double* po = out.raw();
    for (i64 i = 0; i < n; ++i) po[i] = pa[i] * s;
    if (Tape* tape = detail::common_tape({&a})) {
        out.tape = tape;
        out.node = tape->add(n, [a, s](Tape& t, const std::vector<double>& g) {
            if (auto* ga = detail::grad_target(t, a))
                for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * s;
        });
    }
    return out;
}

inline Tensor add_scalar(const Tensor& a, double s) {
    Tensor out = Tensor::zeros(a.shape);
    const i64 n = out.numel();
    const double* pa = a.raw();
    double* po = out.raw();
    for (i64 i = 0; i < n; ++i) po[i] = pa[i] + s;
    if (Tape* tape = detail::common_tape({&a})) {
        out.tape = tape;
        out.node = tape->add(n, [a](Tape& t, const std::vector<double>& g) {
            if (auto* ga = detail::grad_target(t, a))
                for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        });
    }
    return out;
}

inline Tensor relu(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape);
    const i64 n = out.numel();
    const double* pa = a.raw();
    double* po = out.raw();
    for (i64 i = 0; i < n; ++i) po[i] = pa[i] > 0.0 ? pa[i] : 0.0;
    if (Tape* tape = detail::common_tape({&a})) {
        out.tape = tape;
        // Subgradient at 0 is taken as 0.
        out.node = tape->add(n, [a](Tape& t, const std::vector<double>& g) {
            if (auto* ga = detail::grad_target(t, a)) {
                const double* pa2 = a.raw();
                for (size_t i = 0; i < g.size(); ++i)
                    if (pa2[i] > 0.0) (*ga)[i] += g[i];
            }
        });
    }
    return out;
}

inline Tensor tanh_act(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape);
    const i64 n = out.numel();
    const double* pa = a.raw();
    double* po = out.raw();
    for (i64 i = 0; i < n; ++i) po[i] = std::tanh(pa[i]);
    if (Tape* tape = detail::common_tape({&a})) {
        out.tape = tape;
        auto out_data = out.data;
        out.node = tape->add(n, [a, out_data](Tape& t, const std::vector<double>& g) {
            if (auto* ga = detail::grad_target(t, a)) {
                const double* py = out_data->data();
                for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (1.0 - py[i] * py[i]);
            }
        });
    }
    return out;
}

inline Tensor square(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape);
    const i64 n = out.numel();
    const double* pa = a.raw();
    double* po = out.raw();
    for (i64 i = 0; i < n; ++i) po[i] = pa[i] * pa[i];
    if (Tape* tape = detail::common_tape({&a})) {
        out.tape = tape;
        out.node = tape->add(n, [a](Tape& t, const std::vector<double>& g) {
            if (auto* ga = detail::grad_target(t, a)) {
                const double* pa2 = a.raw();
                for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += 2.0 * g[i] * pa2[i];
            }
        });
    }
    return out;
}

// y = 1 / sqrt(a + eps), elementwise; dy/da = -y^3 / 2.
inline Tensor rsqrt_add(const Tensor& a, double eps) {
    Tensor out = Tensor::zeros(a.shape);
    const i64 n = out.numel();
    const double* pa = a.raw();
    double* po = out.raw();
    for (i64 i = 0; i < n; ++i) po[i] = 1.0 / std::sqrt(pa[i] + eps);
    if (Tape* tape = detail::common_tape({&a})) {
        out.tape = tape;
        auto out_data = out.data;
        out.node = tape->add(n, [a, out_data](Tape& t, const std::vector<double>& g) {
            if (auto* ga = detail::grad_target(t, a)) {
                const double* py = out_data->data();
                for (size_t i = 0; i < g.size(); ++i)
                    (*ga)[i] += g[i] * (-0.5 * py[i] * py[i] * py[i]);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions and channel broadcasts
// ---------------------------------------------------------------------------

inline Tensor mean_all(const Tensor& a) {
    const i64 n = a.numel();
    check(n > 0, "mean_all: empty tensor");
    double s = 0.0;
    const double* pa = a.raw();
    for (i64 i = 0; i < n; ++i) s += pa[i];
    Tensor out = Tensor::scalar(s / static_cast<double>(n));
    if (Tape* tape = detail::common_tape({&a})) {
        out.tape = tape;
        out.node = tape->add(1, [a, n](Tape& t, const std::vector<double>& g) {
            if (auto* ga = detail::grad_target(t, a)) {
                const double gi = g[0] / static_cast<double>(n);
                for (i64 i = 0; i < n; ++i) (*ga)[static_cast<size_t>(i)] += gi;
            }
        });
    }
    return out;
}

// Per-channel mean over batch and time: [B,T,C] (or [T,C]) -> [C].
inline Tensor mean_bt(const Tensor& x) {
    const auto d = detail::btc_of(x, "mean_bt");
    Tensor out = Tensor::zeros({d.C});
    const double* px = x.raw();
    double* po = out.raw();
    const i64 rows = d.B * d.T;
    for (i64 r = 0; r < rows; ++r) {
        const double* row = px + r * d.C;
        for (i64 c = 0; c < d.C; ++c) po[c] += row[c];
    }
    const double inv = 1.0 / static_cast<double>(rows);
    for (i64 c = 0; c < d.C; ++c) po[c] *= inv;
    if (Tape* tape = detail::common_tape({&x})) {
        out.tape = tape;
        out.node = tape->add(d.C, [x, d, inv](Tape& t, const std::vector<double>& g) {
            if (auto* gx = detail::grad_target(t, x)) {
                const i64 rows = d.B * d.T;
                for (i64 r = 0; r < rows; ++r) {
                    double* grow = gx->data() + r * d.C;
                    for (i64 c = 0; c < d.C; ++c) grow[c] += g[static_cast<size_t>(c)] * inv;
                }
            }
        });
    }
    return out;
}

// x - v with v broadcast over batch and time; v has shape [C].
inline Tensor sub_channel(const Tensor& x, const Tensor& v) {
    const auto d = detail::btc_of(x, "sub_channel");
    check(v.rank() == 1 && v.dim(0) == d.C, "sub_channel: v must be [C]");
    Tensor out = Tensor::zeros(x.shape);
    const double* px = x.raw();
    const double* pv = v.raw();
    double* po = out.raw();
    const i64 rows = d.B * d.T;
    for (i64 r = 0; r < rows; ++r)
        for (i64 c = 0; c < d.C; ++c) po[r * d.C + c] = px[r * d.C + c] - pv[c];
    if (Tape* tape = detail::common_tape({&x, &v})) {
        out.tape = tape;
        out.node = tape->add(out.numel(), [x, v, d](Tape& t, const std::vector<double>& g) {
            const i64 rows = d.B * d.T;
            if (auto* gx = detail::grad_target(t, x))
                for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
            if (auto* gv = detail::grad_target(t, v))
                for (i64 r = 0; r < rows; ++r)
                    for (i64 c = 0; c < d.C; ++c)
                        (*gv)[static_cast<size_t>(c)] -= g[static_cast<size_t>(r * d.C + c)];
        });
    }
    return out;
}

// x * v with v broadcast over batch and time; v has shape [C].
inline Tensor mul_channel(const Tensor& x, const Tensor& v) {
    const auto d = detail::btc_of(x, "mul_channel");
    check(v.rank() == 1 && v.dim(0) == d.C, "mul_channel: v must be [C]");
    Tensor out = Tensor::zeros(x.shape);
    const double* px = x.raw();
    const double* pv = v.raw();
    double* po = out.raw();
    const i64 rows = d.B * d.T;
    for (i64 r = 0; r < rows; ++r)
        for (i64 c = 0; c < d.C; ++c) po[r * d.C + c] = px[r * d.C + c] * pv[c];
    if (Tape* tape = detail::common_tape({&x, &v})) {
        out.tape = tape;
        out.node = tape->add(out.numel(), [x, v, d](Tape& t, const std::vector<double>& g) {
            const i64 rows = d.B * d.T;
            if (auto* gx = detail::grad_target(t, x)) {
                const double* pv2 = v.raw();
                for (i64 r = 0; r < rows; ++r)
                    for (i64 c = 0; c < d.C; ++c)
                        (*gx)[static_cast<size_t>(r * d.C + c)] += g[static_cast<size_t>(r * d.C + c)] * pv2[c];
            }
            if (auto* gv = detail::grad_target(t, v)) {
                const double* px2 = x.raw();
                for (i64 r = 0; r < rows; ++r)
                    for (i64 c = 0; c < d.C; ++c)
                        (*gv)[static_cast<size_t>(c)] += g[static_cast<size_t>(r * d.C + c)] * px2[r * d.C + c];
            }
        });
    }
    return out;
}

// x * s with s broadcast over time only: x [B,T,C] with s [B,C], or x [T,C]
// with s [C].  Used for per-item conditional gains.
inline Tensor mul_bc(const Tensor& x, const Tensor& s) {
    const auto d = detail::btc_of(x, "mul_bc");
    if (x.rank() == 2)
        check(s.rank() == 1 && s.dim(0) == d.C, "mul_bc: s must be [C] for [T,C] input");
    else
        check(s.rank() == 2 && s.dim(0) == d.B && s.dim(1) == d.C, "mul_bc: s must be [B,C]");
    Tensor out = Tensor::zeros(x.shape);
    const double* px = x.raw();
    const double* ps = s.raw();
    double* po = out.raw();
    for (i64 b = 0; b < d.B; ++b) {
        const double* srow = ps + b * d.C;
        for (i64 ti = 0; ti < d.T; ++ti) {
            const i64 off = (b * d.T + ti) * d.C;
            for (i64 c = 0; c < d.C; ++c) po[off + c] = px[off + c] * srow[c];
        }
    }
    if (Tape* tape = detail::common_tape({&x, &s})) {
        out.tape = tape;
        out.node = tape->add(out.numel(), [x, s, d](Tape& t, const std::vector<double>& g) {
            if (auto* gx = detail::grad_target(t, x)) {
                const double* ps2 = s.raw();
                for (i64 b = 0; b < d.B; ++b) {
                    const double* srow = ps2 + b * d.C;
                    for (i64 ti = 0; ti < d.T; ++ti) {
                        const i64 off = (b * d.T + ti) * d.C;
                        for (i64 c = 0; c < d.C; ++c)
                            (*gx)[static_cast<size_t>(off + c)] += g[static_cast<size_t>(off + c)] * srow[c];
                    }
                }
            }
            if (auto* gs = detail::grad_target(t, s)) {
                const double* px2 = x.raw();
                for (i64 b = 0; b < d.B; ++b) {
                    double* grow = gs->data() + b * d.C;
                    for (i64 ti = 0; ti < d.T; ++ti) {
                        const i64 off = (b * d.T + ti) * d.C;
                        for (i64 c = 0; c < d.C; ++c)
                            grow[c] += g[static_cast<size_t>(off + c)] * px2[off + c];
                    }
                }
            }
        });
    }
    return out;
}

// x + s with s broadcast over time only; shapes as in mul_bc.
inline Tensor add_bc(const Tensor& x, const Tensor& s) {
    const auto d = detail::btc_of(x, "add_bc");
    if (x.rank() == 2)
        check(s.rank() == 1 && s.dim(0) == d.C, "add_bc: s must be [C] for [T,C] input");
    else
        check(s.rank() == 2 && s.dim(0) == d.B && s.dim(1) == d.C, "add_bc: s must be [B,C]");
    Tensor out = Tensor::zeros(x.shape);
    const double* px = x.raw();
    const double* ps = s.raw();
    double* po = out.raw();
    for (i64 b = 0; b < d.B; ++b) {
        const double* srow = ps + b * d.C;
        for (i64 ti = 0; ti < d.T; ++ti) {
            const i64 off = (b * d.T + ti) * d.C;
            for (i64 c = 0; c < d.C; ++c) po[off + c] = px[off + c] + srow[c];
        }
    }
    if (Tape* tape = detail::common_tape({&x, &s})) {
        out.tape = tape;
        out.node = tape->add(out.numel(), [x, s, d](Tape& t, const std::vector<double>& g) {
            if (auto* gx = detail::grad_target(t, x))
                for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
            if (auto* gs = detail::grad_target(t, s)) {
                for (i64 b = 0; b < d.B; ++b) {
                    double* grow = gs->data() + b * d.C;
                    for (i64 ti = 0; ti < d.T; ++ti) {
                        const i64 off = (b * d.T + ti) * d.C;
                        for (i64 c = 0; c < d.C; ++c) grow[c] += g[static_cast<size_t>(off + c)];
                    }
                }
            }
        });
    }
    return out;
}

// x * m with m broadcast over channels: x [B,T,C] with m [B,T], or x [T,C]
// with m [T].  Used for validity masks on variable-length batches.
inline Tensor mul_time(const Tensor& x, const Tensor& m) {
    const auto d = detail::btc_of(x, "mul_time");
    if (x.rank() == 2)
        check(m.rank() == 1 && m.dim(0) == d.T, "mul_time: mask must be [T]");
    else
        check(m.rank() == 2 && m.dim(0) == d.B && m.dim(1) == d.T, "mul_time: mask must be [B,T]");
    Tensor out = Tensor::zeros(x.shape);
    const double* px = x.raw();
    const double* pm = m.raw();
    double* po = out.raw();
    const i64 rows = d.B * d.T;
    for (i64 r = 0; r < rows; ++r) {
        const double mv = pm[r];
        for (i64 c = 0; c < d.C; ++c) po[r * d.C + c] = px[r * d.C + c] * mv;
    }
    if (Tape* tape = detail::common_tape({&x, &m})) {
        out.tape = tape;
        out.node = tape->add(out.numel(), [x, m, d](Tape& t, const std::vector<double>& g) {
            const i64 rows = d.B * d.T;
            if (auto* gx = detail::grad_target(t, x)) {
                const double* pm2 = m.raw();
                for (i64 r = 0; r < rows; ++r) {
                    const double mv = pm2[r];
                    for (i64 c = 0; c < d.C; ++c)
                        (*gx)[static_cast<size_t>(r * d.C + c)] += g[static_cast<size_t>(r * d.C + c)] * mv;
                }
            }
            if (auto* gm = detail::grad_target(t, m)) {
                const double* px2 = x.raw();
                for (i64 r = 0; r < rows; ++r) {
                    double acc = 0.0;
                    for (i64 c = 0; c < d.C; ++c)
                        acc += g[static_cast<size_t>(r * d.C + c)] * px2[r * d.C + c];
                    (*gm)[static_cast<size_t>(r)] += acc;
                }
            }
        });
    }
    return out;
}

// Mean over the time axis: [B,T,C] -> [B,C] (or [T,C] -> [C]).
inline Tensor mean_pool_time(const Tensor& x) {
    const auto d = detail::btc_of(x, "mean_pool_time");
    Tensor out = x.rank() == 2 ? Tensor::zeros({d.C}) : Tensor::zeros({d.B, d.C});
    const double* px = x.raw();
    double* po = out.raw();
    const double inv = 1.0 / static_cast<double>(d.T);
    for (i64 b = 0; b < d.B; ++b) {
        double* orow = po + b * d.C;
        for (i64 ti = 0; ti < d.T; ++ti) {
            const double* row = px + (b * d.T + ti) * d.C;
            for (i64 c = 0; c < d.C; ++c) orow[c] += row[c];
        }
        for (i64 c = 0; c < d.C; ++c) orow[c] *= inv;
    }
    if (Tape* tape = detail::common_tape({&x})) {
        out.tape = tape;
        out.node = tape->add(out.numel(), [x, d, inv](Tape& t, const std::vector<double>& g) {
            if (auto* gx = detail::grad_target(t, x)) {
                for (i64 b = 0; b < d.B; ++b) {
                    const double* grow = g.data() + b * d.C;
                    for (i64 ti = 0; ti < d.T; ++ti) {
                        double* xrow = gx->data() + (b * d.T + ti) * d.C;
                        for (i64 c = 0; c < d.C; ++c) xrow[c] += grow[c] * inv;
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

// Nearest-neighbour upsampling along time by integer ratio r:
// out[b, t, c] = x[b, floor(t / r), c].
inline Tensor upsample_nearest(const Tensor& x, i64 r) {
    check(r >= 1, "upsample_nearest: ratio must be >= 1");
    const auto d = detail::btc_of(x, "upsample_nearest");
    Tensor out = x.rank() == 2 ? Tensor::zeros({d.T * r, d.C})
                               : Tensor::zeros({d.B, d.T * r, d.C});
    const double* px = x.raw();
    double* po = out.raw();
    for (i64 b = 0; b < d.B; ++b)
        for (i64 ti = 0; ti < d.T; ++ti) {
            const double* row = px + (b * d.T + ti) * d.C;
            for (i64 j = 0; j < r; ++j)
                std::memcpy(po + ((b * d.T + ti) * r + j) * d.C, row,
                            static_cast<size_t>(d.C) * sizeof(double));
        }
    if (Tape* tape = detail::common_tape({&x})) {
        out.tape = tape;
        out.node = tape->add(out.numel(), [x, d, r](Tape& t, const std::vector<double>& g) {
            if (auto* gx = detail::grad_target(t, x)) {
                for (i64 b = 0; b < d.B; ++b)
                    for (i64 ti = 0; ti < d.T; ++ti) {
                        double* xrow = gx->data() + (b * d.T + ti) * d.C;
                        for (i64 j = 0; j < r; ++j) {
                            const double* grow = g.data() + ((b * d.T + ti) * r + j) * d.C;
                            for (i64 c = 0; c < d.C; ++c) xrow[c] += grow[c];
                        }
                    }
            }
        });
    }
    return out;
}

// Fold f consecutive frames into the channel axis:
// [B, T, C] -> [B, T/f, f*C], out[b, t', j*C + c] = x[b, t'*f + j, c].
// With channels innermost this is a pure reinterpretation of the same
// buffer, so the payload is shared and backward is the identity.
inline Tensor block_reshape(const Tensor& x, i64 f) {
    check(f >= 1, "block_reshape: factor must be >= 1");
    const auto d = detail::btc_of(x, "block_reshape");
    check(d.T % f == 0, "block_reshape: time length " + std::to_string(d.T) +
                            " not divisible by factor " + std::to_string(f));
    Tensor out = x.rank() == 2 ? x.reshaped({d.T / f, f * d.C})
                               : x.reshaped({d.B, d.T / f, f * d.C});
    out.tape = nullptr;
    out.node = -1;
    if (Tape* tape = detail::common_tape({&x})) {
        out.tape = tape;
        out.node = tape->add(out.numel(), [x](Tape& t, const std::vector<double>& g) {
            if (auto* gx = detail::grad_target(t, x))
                for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
        });
    }
    return out;
}

// Per-item window extraction along time: out[b, t, c] = x[b, offsets[b] + t, c].
inline Tensor gather_windows(const Tensor& x, const std::vector<i64>& offsets, i64 len) {
    check(x.rank() == 3, "gather_windows: expected [B,T,C], got " + x.shape_str());
    const i64 B = x.dim(0), T = x.dim(1), C = x.dim(2);
    check(static_cast<i64>(offsets.size()) == B, "gather_windows: need one offset per item");
    check(len >= 1 && len <= T, "gather_windows: window length out of range");
    for (i64 off : offsets)
        check(off >= 0 && off + len <= T, "gather_windows: offset out of range");
    Tensor out = Tensor::zeros({B, len, C});
    const double* px = x.raw();
    double* po = out.raw();
    for (i64 b = 0; b < B; ++b)
        std::memcpy(po + b * len * C, px + (b * T + offsets[static_cast<size_t>(b)]) * C,
                    static_cast<size_t>(len * C) * sizeof(double));
    if (Tape* tape = detail::common_tape({&x})) {
        out.tape = tape;
        auto offs = offsets;
        out.node = tape->add(out.numel(), [x, offs, len, B, T, C](Tape& t, const std::vector<double>& g) {
            if (auto* gx = detail::grad_target(t, x)) {
                for (i64 b = 0; b < B; ++b) {
                    const double* grow = g.data() + b * len * C;
                    double* xrow = gx->data() + (b * T + offs[static_cast<size_t>(b)]) * C;
                    for (i64 i = 0; i < len * C; ++i) xrow[i] += grow[i];
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// linear and conv1d
// ---------------------------------------------------------------------------

// Affine map: x [B,Din] (or [Din]) with w [Din,Dout], bias [Dout].
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    check(w.rank() == 2, "linear: weight must be [Din,Dout]");
    const i64 Din = w.dim(0), Dout = w.dim(1);
    check(bias.rank() == 1 && bias.dim(0) == Dout, "linear: bias must be [Dout]");
    i64 B = 1;
    bool batched = false;
    if (x.rank() == 1) {
        check(x.dim(0) == Din, "linear: input size mismatch");
    } else {
        check(x.rank() == 2 && x.dim(1) == Din, "linear: input must be [B,Din]");
        B = x.dim(0);
        batched = true;
    }
    Tensor out = batched ? Tensor::zeros({B, Dout}) : Tensor::zeros({Dout});
    const double* px = x.raw();
    const double* pw = w.raw();
    const double* pb = bias.raw();
    double* po = out.raw();
    for (i64 b = 0; b < B; ++b) {
        double* orow = po + b * Dout;
        std::memcpy(orow, pb, static_cast<size_t>(Dout) * sizeof(double));
        const double* xrow = px + b * Din;
        for (i64 i = 0; i < Din; ++i) {
            const double xv = xrow[i];
            const double* wrow = pw + i * Dout;
            for (i64 o = 0; o < Dout; ++o) orow[o] += xv * wrow[o];
        }
    }
    if (Tape* tape = detail::common_tape({&x, &w, &bias})) {
        out.tape = tape;
        out.node = tape->add(out.numel(), [x, w, bias, B, Din, Dout](Tape& t, const std::vector<double>& g) {
            if (auto* gx = detail::grad_target(t, x)) {
                const double* pw2 = w.raw();
                for (i64 b = 0; b < B; ++b) {
                    const double* grow = g.data() + b * Dout;
                    double* xg = gx->data() + b * Din;
                    for (i64 i = 0; i < Din; ++i) {
                        const double* wrow = pw2 + i * Dout;
                        double acc = 0.0;
                        for (i64 o = 0; o < Dout; ++o) acc += wrow[o] * grow[o];
                        xg[i] += acc;
                    }
                }
            }
            if (auto* gw = detail::grad_target(t, w)) {
                const double* px2 = x.raw();
                for (i64 b = 0; b < B; ++b) {
                    const double* grow = g.data() + b * Dout;
                    const double* xrow = px2 + b * Din;
                    for (i64 i = 0; i < Din; ++i) {
                        const double xv = xrow[i];
                        double* wg = gw->data() + i * Dout;
                        for (i64 o = 0; o < Dout; ++o) wg[o] += xv * grow[o];
                    }
                }
            }
            if (auto* gb = detail::grad_target(t, bias)) {
                for (i64 b = 0; b < B; ++b) {
                    const double* grow = g.data() + b * Dout;
                    for (i64 o = 0; o < Dout; ++o) (*gb)[static_cast<size_t>(o)] += grow[o];
                }
            }
        });
    }
    return out;
}

namespace detail {

using ConvMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// For tap k with offset o = (k - (K-1)/2)*dil, the valid output rows form a
// contiguous range [lo, hi), so each tap is one GEMM over that row block.
struct TapRange {
    i64 lo, len, off;
};

inline TapRange tap_range(i64 k, i64 K, i64 dil, i64 T) {
    const i64 off = (k - (K - 1) / 2) * dil;
    const i64 lo = std::max<i64>(0, -off);
    const i64 hi = std::min<i64>(T, T - off);
    return {lo, std::max<i64>(0, hi - lo), off};
}

inline void conv1d_fwd(const double* x, const double* w, const double* bias, double* out,
                       i64 B, i64 T, i64 Ci, i64 Co, i64 K, i64 dil) {
    for (i64 b = 0; b < B; ++b) {
        Eigen::Map<const ConvMat> X(x + b * T * Ci, T, Ci);
        Eigen::Map<ConvMat> O(out + b * T * Co, T, Co);
        O.rowwise() = Eigen::Map<const Eigen::RowVectorXd>(bias, Co);
        for (i64 k = 0; k < K; ++k) {
            const TapRange r = tap_range(k, K, dil, T);
            if (r.len == 0) continue;
            Eigen::Map<const ConvMat> Wk(w + k * Ci * Co, Ci, Co);
            O.middleRows(r.lo, r.len).noalias() += X.middleRows(r.lo + r.off, r.len) * Wk;
        }
    }
}

inline void conv1d_bwd_x(const double* w, const double* g, double* gx,
                         i64 B, i64 T, i64 Ci, i64 Co, i64 K, i64 dil) {
    for (i64 b = 0; b < B; ++b) {
        Eigen::Map<const ConvMat> G(g + b * T * Co, T, Co);
        Eigen::Map<ConvMat> GX(gx + b * T * Ci, T, Ci);
        for (i64 k = 0; k < K; ++k) {
            const TapRange r = tap_range(k, K, dil, T);
            if (r.len == 0) continue;
            Eigen::Map<const ConvMat> Wk(w + k * Ci * Co, Ci, Co);
            GX.middleRows(r.lo + r.off, r.len).noalias() +=
                G.middleRows(r.lo, r.len) * Wk.transpose();
        }
    }
}

inline void conv1d_bwd_w(const double* x, const double* g, double* gw,
                         i64 B, i64 T, i64 Ci, i64 Co, i64 K, i64 dil) {
    for (i64 b = 0; b < B; ++b) {
        Eigen::Map<const ConvMat> X(x + b * T * Ci, T, Ci);
        Eigen::Map<const ConvMat> G(g + b * T * Co, T, Co);
        for (i64 k = 0; k < K; ++k) {
            const TapRange r = tap_range(k, K, dil, T);
            if (r.len == 0) continue;
            Eigen::Map<ConvMat> GW(gw + k * Ci * Co, Ci, Co);
            GW.noalias() += X.middleRows(r.lo + r.off, r.len).transpose() * G.middleRows(r.lo, r.len);
        }
    }
}

}  // namespace detail

// Dilated 1-d convolution with "same" zero padding.
//   x: [B,T,Ci] or [T,Ci]; w: [K,Ci,Co] (K odd); bias: [Co]; output keeps T.
//   out[t, co] = bias[co] + sum_{k, ci} w[k,ci,co] * x[t + (k - (K-1)/2)*dil, ci]
// with out-of-range taps reading zero.
inline Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, i64 dil = 1) {
    check(w.rank() == 3, "conv1d: weight must be [K,Ci,Co]");
    const i64 K = w.dim(0), Ci = w.dim(1), Co = w.dim(2);
    check(K % 2 == 1, "conv1d: kernel size must be odd");
    check(dil >= 1, "conv1d: dilation must be >= 1");
    check(bias.rank() == 1 && bias.dim(0) == Co, "conv1d: bias must be [Co]");
    const auto d = detail::btc_of(x, "conv1d");
    check(d.C == Ci, "conv1d: input channels " + std::to_string(d.C) +
                         " do not match weight " + std::to_string(Ci));
    Tensor out = x.rank() == 2 ? Tensor::zeros({d.T, Co}) : Tensor::zeros({d.B, d.T, Co});
    detail::conv1d_fwd(x.raw(), w.raw(), bias.raw(), out.raw(), d.B, d.T, Ci, Co, K, dil);
    if (Tape* tape = detail::common_tape({&x, &w, &bias})) {
        out.tape = tape;
        out.node = tape->add(out.numel(), [x, w, bias, d, Ci, Co, K, dil](Tape& t, const std::vector<double>& g) {
            if (auto* gx = detail::grad_target(t, x))
                detail::conv1d_bwd_x(w.raw(), g.data(), gx->data(), d.B, d.T, Ci, Co, K, dil);
            if (auto* gw = detail::grad_target(t, w))
                detail::conv1d_bwd_w(x.raw(), g.data(), gw->data(), d.B, d.T, Ci, Co, K, dil);
            if (auto* gb = detail::grad_target(t, bias)) {
                const i64 rows = d.B * d.T;
                for (i64 r = 0; r < rows; ++r) {
                    const double* grow = g.data() + r * Co;
                    for (i64 co = 0; co < Co; ++co) (*gb)[static_cast<size_t>(co)] += grow[co];
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// orthogonality penalty
// ---------------------------------------------------------------------------

// Sum of squared off-diagonal entries of W^T W, with W flattened to a matrix
// whose columns are the output units (last axis).  Gradient: 4 W (M - diag M)
// where M = W^T W.
inline Tensor ortho_offdiag_penalty(const Tensor& w) {
    check(w.rank() >= 2, "ortho_offdiag_penalty: need rank >= 2");
    const i64 cols = w.dim(w.rank() - 1);
    const i64 rows = w.numel() / cols;
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> A(w.raw(), rows, cols);
    Mat M = A.transpose() * A;
    Mat off = M;
    off.diagonal().setZero();
    Tensor out = Tensor::scalar(off.squaredNorm());
    if (Tape* tape = detail::common_tape({&w})) {
        out.tape = tape;
        out.node = tape->add(1, [w, rows, cols](Tape& t, const std::vector<double>& g) {
            if (auto* gw = detail::grad_target(t, w)) {
                Eigen::Map<const Mat> A2(w.raw(), rows, cols);
                Mat M2 = A2.transpose() * A2;
                M2.diagonal().setZero();
                Mat grad = 4.0 * (A2 * M2);
                const double g0 = g[0];
                const double* pg = grad.data();
                for (size_t i = 0; i < gw->size(); ++i) (*gw)[i] += g0 * pg[i];
            }
        });
    }
    return out;
}

}  // namespace gantts
