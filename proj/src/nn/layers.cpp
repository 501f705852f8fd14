#include "eddynet/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace eddynet::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

// Double-precision reductions over a contiguous run, split across 8 independent lanes so the
// loop vectorizes; lane order is fixed, so results are reproducible.
constexpr std::size_t kLanes = 8;

template <typename T>
double lane_sum(const T* p, std::size_t n) {
    double acc[kLanes] = {};
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes)
        for (std::size_t l = 0; l < kLanes; ++l) acc[l] += static_cast<double>(p[i + l]);
    for (; i < n; ++i) acc[0] += static_cast<double>(p[i]);
    double s = 0.0;
    for (double a : acc) s += a;
    return s;
}

template <typename T>
double lane_sq_dev(const T* p, std::size_t n, double mean) {
    double acc[kLanes] = {};
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        for (std::size_t l = 0; l < kLanes; ++l) {
            const double d = static_cast<double>(p[i + l]) - mean;
            acc[l] += d * d;
        }
    }
    for (; i < n; ++i) {
        const double d = static_cast<double>(p[i]) - mean;
        acc[0] += d * d;
    }
    double s = 0.0;
    for (double a : acc) s += a;
    return s;
}

template <typename T>
double lane_dot(const T* a, const T* b, std::size_t n) {
    double acc[kLanes] = {};
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes)
        for (std::size_t l = 0; l < kLanes; ++l) acc[l] += static_cast<double>(a[i + l]) * b[i + l];
    for (; i < n; ++i) acc[0] += static_cast<double>(a[i]) * b[i];
    double s = 0.0;
    for (double x : acc) s += x;
    return s;
}

// Unfolds a (cin, h, w) item into a (cin*9, h*w) matrix for a 3x3 same-padded convolution.
template <typename T>
void im2col3x3(const T* x, std::size_t cin, std::size_t h, std::size_t w, T* col) {
    const std::size_t hw = h * w;
    for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* src = x + ci * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = col + ((ci * 3 + ky) * 3 + kx) * hw;
                const int dy = ky - 1;
                const int dx = kx - 1;
                for (std::size_t y = 0; y < h; ++y) {
                    T* dst = row + y * w;
                    const long sy = static_cast<long>(y) + dy;
                    if (sy < 0 || sy >= static_cast<long>(h)) {
                        std::fill_n(dst, w, T(0));
                        continue;
                    }
                    const T* s = src + sy * w;
                    if (dx == 0) {
                        std::copy_n(s, w, dst);
                    } else if (dx < 0) {
                        dst[0] = T(0);
                        std::copy_n(s, w - 1, dst + 1);
                    } else {
                        std::copy_n(s + 1, w - 1, dst);
                        dst[w - 1] = T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col3x3: accumulates a (cin*9, h*w) matrix back into a (cin, h, w) item.
template <typename T>
void col2im3x3(const T* col, std::size_t cin, std::size_t h, std::size_t w, T* x) {
    const std::size_t hw = h * w;
    for (std::size_t ci = 0; ci < cin; ++ci) {
        T* dst = x + ci * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = col + ((ci * 3 + ky) * 3 + kx) * hw;
                const int dy = ky - 1;
                const int dx = kx - 1;
                for (std::size_t y = 0; y < h; ++y) {
                    const long sy = static_cast<long>(y) + dy;
                    if (sy < 0 || sy >= static_cast<long>(h)) continue;
                    const T* s = row + y * w;
                    T* d = dst + sy * w;
                    if (dx == 0) {
                        for (std::size_t x0 = 0; x0 < w; ++x0) d[x0] += s[x0];
                    } else if (dx < 0) {
                        for (std::size_t x0 = 1; x0 < w; ++x0) d[x0 - 1] += s[x0];
                    } else {
                        for (std::size_t x0 = 0; x0 + 1 < w; ++x0) d[x0 + 1] += s[x0];
                    }
                }
            }
        }
    }
}

void check_kind(LayerKind got, std::initializer_list<LayerKind> allowed, const char* op) {
    for (auto k : allowed) {
        if (k == got) return;
    }
    throw std::invalid_argument(std::string(op) + ": unsupported layer kind " + to_string(got));
}

template <typename T>
void check_conv_input(const Tensor4<T>& input, const LayerParams<T>& params, const char* op) {
    if (input.c() != params.weights.c()) {
        throw ShapeError(std::string(op) + ": input shape " + input.shape().str() +
                         " does not match weight shape " + params.weights.shape().str());
    }
}

}  // namespace

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv3x3: return "conv3x3";
        case LayerKind::conv1x1: return "conv1x1";
        case LayerKind::transposed_conv: return "transposed_conv";
        case LayerKind::batchnorm: return "batchnorm";
    }
    return "unknown(" + std::to_string(static_cast<std::uint32_t>(kind)) + ")";
}

// ---------------------------------------------------------------------------
// LayerParams

template <typename T>
std::size_t LayerParams<T>::in_channels() const {
    switch (kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1: return weights.c();
        case LayerKind::transposed_conv: return weights.n();
        case LayerKind::batchnorm: return gamma.size();
    }
    return 0;
}

template <typename T>
std::size_t LayerParams<T>::out_channels() const {
    switch (kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1: return weights.n();
        case LayerKind::transposed_conv: return weights.c();
        case LayerKind::batchnorm: return gamma.size();
    }
    return 0;
}

template <typename T>
std::size_t LayerParams<T>::trainable_count() const {
    if (!trainable) return 0;
    return weights.size() + bias.size() + gamma.size() + beta.size();
}

template <typename T>
std::size_t LayerParams<T>::total_count() const {
    return weights.size() + bias.size() + gamma.size() + beta.size() + moving_mean.size() +
           moving_var.size();
}

template <typename T>
void LayerParams<T>::validate() const {
    const std::string k = to_string(kind);
    auto fail = [&](const std::string& what) {
        throw ShapeError(k + " layer: " + what + " (weights " + weights.shape().str() + ", bias " +
                         std::to_string(bias.size()) + ")");
    };
    switch (kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1: {
            const std::size_t ks = kind == LayerKind::conv3x3 ? 3 : 1;
            if (weights.h() != ks || weights.w() != ks || weights.n() == 0 || weights.c() == 0)
                fail("kernel must be out x in x " + std::to_string(ks) + " x " + std::to_string(ks));
            if (bias.size() != weights.n()) fail("bias length must equal output channels");
            if (!gamma.empty() || !beta.empty() || !moving_mean.empty() || !moving_var.empty())
                fail("convolution carries batchnorm vectors");
            break;
        }
        case LayerKind::transposed_conv:
            if (weights.h() != weights.w() || (weights.h() != 2 && weights.h() != 3) ||
                weights.n() == 0 || weights.c() == 0)
                fail("kernel must be in x out x k x k with k in {2, 3}");
            if (bias.size() != weights.c()) fail("bias length must equal output channels");
            if (!gamma.empty() || !beta.empty() || !moving_mean.empty() || !moving_var.empty())
                fail("convolution carries batchnorm vectors");
            break;
        case LayerKind::batchnorm: {
            const std::size_t c = gamma.size();
            if (!weights.empty() || !bias.empty()) fail("batchnorm carries convolution weights");
            if (c == 0 || beta.size() != c || moving_mean.size() != c || moving_var.size() != c)
                fail("gamma/beta/moving_mean/moving_var must share a non-zero length");
            for (T v : moving_var) {
                if (!(v > T(0))) throw std::invalid_argument("batchnorm moving variance must be > 0");
            }
            break;
        }
        default:
            throw std::invalid_argument("unknown layer kind " + k);
    }
}

template <typename T>
LayerParams<T> make_conv(std::size_t in, std::size_t out, std::size_t kernel) {
    if (kernel != 1 && kernel != 3) throw std::invalid_argument("make_conv: kernel must be 1 or 3");
    LayerParams<T> p;
    p.kind = kernel == 3 ? LayerKind::conv3x3 : LayerKind::conv1x1;
    p.weights = Tensor4<T>(out, in, kernel, kernel);
    p.bias.assign(out, T(0));
    return p;
}

template <typename T>
LayerParams<T> make_transposed_conv(std::size_t in, std::size_t out, std::size_t kernel) {
    if (kernel != 2 && kernel != 3)
        throw std::invalid_argument("make_transposed_conv: kernel must be 2 or 3");
    LayerParams<T> p;
    p.kind = LayerKind::transposed_conv;
    p.weights = Tensor4<T>(in, out, kernel, kernel);
    p.bias.assign(out, T(0));
    return p;
}

template <typename T>
LayerParams<T> make_batchnorm(std::size_t channels) {
    LayerParams<T> p;
    p.kind = LayerKind::batchnorm;
    p.gamma.assign(channels, T(1));
    p.beta.assign(channels, T(0));
    p.moving_mean.assign(channels, T(0));
    p.moving_var.assign(channels, T(1));
    return p;
}

template <typename T>
LayerGrads<T> LayerGrads<T>::zeros_like(const LayerParams<T>& p) {
    LayerGrads g;
    g.weights = Tensor4<T>(p.weights.shape());
    g.bias.assign(p.bias.size(), T(0));
    g.gamma.assign(p.gamma.size(), T(0));
    g.beta.assign(p.beta.size(), T(0));
    return g;
}

template <typename T>
void LayerGrads<T>::add(const LayerGrads& other) {
    require_shape(other.weights.shape(), weights.shape(), "LayerGrads::add");
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += other.weights[i];
    auto acc = [](std::vector<T>& a, const std::vector<T>& b) {
        if (a.size() != b.size()) throw ShapeError("LayerGrads::add: vector length mismatch");
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    acc(bias, other.bias);
    acc(gamma, other.gamma);
    acc(beta, other.beta);
}

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const LayerParams<T>& params) {
    check_kind(params.kind, {LayerKind::conv3x3, LayerKind::conv1x1}, "conv2d_forward");
    check_conv_input(input, params, "conv2d_forward");
    const std::size_t cin = input.c(), cout = params.weights.n();
    const std::size_t h = input.h(), w = input.w(), hw = h * w;
    const bool k3 = params.kind == LayerKind::conv3x3;
    const std::size_t kdim = cin * (k3 ? 9 : 1);

    Tensor4<T> out(input.n(), cout, h, w);
    std::vector<T> col(k3 ? kdim * hw : 0);
    ConstMatMap<T> wm(params.weights.data(), cout, kdim);
    ConstVecMap<T> bias(params.bias.data(), cout);
    for (std::size_t n = 0; n < input.n(); ++n) {
        const T* src = input.item(n);
        if (k3) {
            im2col3x3(src, cin, h, w, col.data());
            src = col.data();
        }
        MatMap<T> om(out.item(n), cout, hw);
        om.noalias() = wm * ConstMatMap<T>(src, kdim, hw);
        om.colwise() += bias;
    }
    return out;
}

template <typename T>
LayerBackward<T> conv2d_backward(const Tensor4<T>& input, const LayerParams<T>& params,
                                 const Tensor4<T>& grad_out) {
    check_kind(params.kind, {LayerKind::conv3x3, LayerKind::conv1x1}, "conv2d_backward");
    check_conv_input(input, params, "conv2d_backward");
    const std::size_t cin = input.c(), cout = params.weights.n();
    const std::size_t h = input.h(), w = input.w(), hw = h * w;
    require_shape(grad_out.shape(), Shape4{input.n(), cout, h, w}, "conv2d_backward grad_out");
    const bool k3 = params.kind == LayerKind::conv3x3;
    const std::size_t kdim = cin * (k3 ? 9 : 1);

    LayerBackward<T> res;
    res.grad_input = Tensor4<T>(input.shape());
    res.grads = LayerGrads<T>::zeros_like(params);
    std::vector<T> col(k3 ? kdim * hw : 0);
    std::vector<T> dcol(k3 ? kdim * hw : 0);
    ConstMatMap<T> wm(params.weights.data(), cout, kdim);
    MatMap<T> dw(res.grads.weights.data(), cout, kdim);
    for (std::size_t n = 0; n < input.n(); ++n) {
        ConstMatMap<T> g(grad_out.item(n), cout, hw);
        // Eigen's row sums peel to the pointer's alignment, which makes them allocation dependent.
        for (std::size_t co = 0; co < cout; ++co)
            res.grads.bias[co] += static_cast<T>(lane_sum(grad_out.item(n) + co * hw, hw));
        if (k3) {
            im2col3x3(input.item(n), cin, h, w, col.data());
            dw.noalias() += g * ConstMatMap<T>(col.data(), kdim, hw).transpose();
            MatMap<T>(dcol.data(), kdim, hw).noalias() = wm.transpose() * g;
            col2im3x3(dcol.data(), cin, h, w, res.grad_input.item(n));
        } else {
            dw.noalias() += g * ConstMatMap<T>(input.item(n), kdim, hw).transpose();
            MatMap<T>(res.grad_input.item(n), kdim, hw).noalias() = wm.transpose() * g;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Transposed convolution

template <typename T>
Tensor4<T> transposed_conv2d_forward(const Tensor4<T>& input, const LayerParams<T>& params) {
    check_kind(params.kind, {LayerKind::transposed_conv}, "transposed_conv2d_forward");
    if (input.c() != params.weights.n()) {
        throw ShapeError("transposed_conv2d_forward: input shape " + input.shape().str() +
                         " does not match weight shape " + params.weights.shape().str());
    }
    const std::size_t cin = input.c(), cout = params.weights.c(), k = params.weights.h();
    const std::size_t h = input.h(), w = input.w(), hw = h * w;
    const std::size_t oh = 2 * h, ow = 2 * w;
    const std::size_t rows = cout * k * k;

    Tensor4<T> out(input.n(), cout, oh, ow);
    std::vector<T> cols(rows * hw);
    ConstMatMap<T> wm(params.weights.data(), cin, rows);
    for (std::size_t n = 0; n < input.n(); ++n) {
        MatMap<T>(cols.data(), rows, hw).noalias() =
            wm.transpose() * ConstMatMap<T>(input.item(n), cin, hw);
        for (std::size_t co = 0; co < cout; ++co) {
            T* dst = out.plane(n, co);
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const T* src = cols.data() + ((co * k + ky) * k + kx) * hw;
                    for (std::size_t i = 0; i < h; ++i) {
                        const std::size_t oy = 2 * i + ky;
                        if (oy >= oh) continue;
                        T* drow = dst + oy * ow;
                        const T* srow = src + i * w;
                        for (std::size_t j = 0; j < w; ++j) {
                            const std::size_t ox = 2 * j + kx;
                            if (ox < ow) drow[ox] += srow[j];
                        }
                    }
                }
            }
            const T b = params.bias[co];
            for (std::size_t i = 0; i < oh * ow; ++i) dst[i] += b;
        }
    }
    return out;
}

template <typename T>
LayerBackward<T> transposed_conv2d_backward(const Tensor4<T>& input, const LayerParams<T>& params,
                                            const Tensor4<T>& grad_out) {
    check_kind(params.kind, {LayerKind::transposed_conv}, "transposed_conv2d_backward");
    if (input.c() != params.weights.n()) {
        throw ShapeError("transposed_conv2d_backward: input shape " + input.shape().str() +
                         " does not match weight shape " + params.weights.shape().str());
    }
    const std::size_t cin = input.c(), cout = params.weights.c(), k = params.weights.h();
    const std::size_t h = input.h(), w = input.w(), hw = h * w;
    const std::size_t oh = 2 * h, ow = 2 * w;
    const std::size_t rows = cout * k * k;
    require_shape(grad_out.shape(), Shape4{input.n(), cout, oh, ow},
                  "transposed_conv2d_backward grad_out");

    LayerBackward<T> res;
    res.grad_input = Tensor4<T>(input.shape());
    res.grads = LayerGrads<T>::zeros_like(params);
    std::vector<T> dcols(rows * hw);
    ConstMatMap<T> wm(params.weights.data(), cin, rows);
    MatMap<T> dw(res.grads.weights.data(), cin, rows);
    for (std::size_t n = 0; n < input.n(); ++n) {
        for (std::size_t co = 0; co < cout; ++co) {
            const T* g = grad_out.plane(n, co);
            res.grads.bias[co] += static_cast<T>(lane_sum(g, oh * ow));
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    T* dst = dcols.data() + ((co * k + ky) * k + kx) * hw;
                    for (std::size_t i = 0; i < h; ++i) {
                        const std::size_t oy = 2 * i + ky;
                        for (std::size_t j = 0; j < w; ++j) {
                            const std::size_t ox = 2 * j + kx;
                            dst[i * w + j] = (oy < oh && ox < ow) ? g[oy * ow + ox] : T(0);
                        }
                    }
                }
            }
        }
        ConstMatMap<T> dc(dcols.data(), rows, hw);
        ConstMatMap<T> x(input.item(n), cin, hw);
        dw.noalias() += x * dc.transpose();
        MatMap<T>(res.grad_input.item(n), cin, hw).noalias() = wm * dc;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Max pooling

template <typename T>
PoolResult<T> maxpool2x2_forward(const Tensor4<T>& input) {
    if (input.h() % 2 != 0 || input.w() % 2 != 0) {
        throw ShapeError("maxpool2x2_forward: spatial size must be even, got " + input.shape().str());
    }
    const std::size_t oh = input.h() / 2, ow = input.w() / 2, w = input.w();
    PoolResult<T> res;
    res.input_shape = input.shape();
    res.output = Tensor4<T>(input.n(), input.c(), oh, ow);
    res.argmax.resize(res.output.size());
    std::size_t o = 0;
    for (std::size_t n = 0; n < input.n(); ++n) {
        for (std::size_t c = 0; c < input.c(); ++c) {
            const std::size_t base = input.index(n, c, 0, 0);
            const T* src = input.data() + base;
            for (std::size_t i = 0; i < oh; ++i) {
                for (std::size_t j = 0; j < ow; ++j, ++o) {
                    std::size_t best = (2 * i) * w + 2 * j;
                    const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
                    for (std::size_t q : cand) {
                        if (src[q] > src[best]) best = q;
                    }
                    res.output[o] = src[best];
                    res.argmax[o] = static_cast<std::uint32_t>(base + best);
                }
            }
        }
    }
    return res;
}

template <typename T>
Tensor4<T> maxpool2x2_backward(const PoolResult<T>& pool, const Tensor4<T>& grad_out) {
    require_shape(grad_out.shape(), pool.output.shape(), "maxpool2x2_backward grad_out");
    Tensor4<T> gin(pool.input_shape);
    for (std::size_t o = 0; o < grad_out.size(); ++o) gin[pool.argmax[o]] += grad_out[o];
    return gin;
}

// ---------------------------------------------------------------------------
// Batch normalization

template <typename T>
BatchNormResult<T> batchnorm_forward(const Tensor4<T>& input, const LayerParams<T>& params, Mode mode,
                                     double epsilon) {
    check_kind(params.kind, {LayerKind::batchnorm}, "batchnorm_forward");
    const std::size_t C = input.c(), plane = input.shape().plane();
    if (params.gamma.size() != C) {
        throw ShapeError("batchnorm_forward: input shape " + input.shape().str() + " has " +
                         std::to_string(C) + " channels, layer has " +
                         std::to_string(params.gamma.size()));
    }
    BatchNormResult<T> res;
    auto& cache = res.cache;
    cache.mode = mode;
    cache.count = input.n() * plane;
    cache.mean.assign(C, 0.0);
    cache.var.assign(C, 0.0);
    cache.inv_std.assign(C, 0.0);
    if (mode == Mode::train) {
        if (cache.count == 0) throw ShapeError("batchnorm_forward: empty batch " + input.shape().str());
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t n = 0; n < input.n(); ++n) s += lane_sum(input.plane(n, c), plane);
            const double mean = s / static_cast<double>(cache.count);
            double ss = 0.0;
            for (std::size_t n = 0; n < input.n(); ++n) ss += lane_sq_dev(input.plane(n, c), plane, mean);
            cache.mean[c] = mean;
            cache.var[c] = ss / static_cast<double>(cache.count);
        }
    } else {
        if (params.moving_mean.size() != C || params.moving_var.size() != C) {
            throw std::invalid_argument("batchnorm_forward: infer mode requires initialized moving statistics");
        }
        for (std::size_t c = 0; c < C; ++c) {
            if (!(params.moving_var[c] > T(0)) || !std::isfinite(static_cast<double>(params.moving_mean[c]))) {
                throw std::invalid_argument("batchnorm_forward: invalid moving statistics in channel " +
                                            std::to_string(c));
            }
            cache.mean[c] = params.moving_mean[c];
            cache.var[c] = params.moving_var[c];
        }
    }
    res.output = Tensor4<T>(input.shape());
    cache.normalized = Tensor4<T>(input.shape());
    for (std::size_t c = 0; c < C; ++c) {
        cache.inv_std[c] = 1.0 / std::sqrt(cache.var[c] + epsilon);
        const T mean = static_cast<T>(cache.mean[c]);
        const T inv = static_cast<T>(cache.inv_std[c]);
        const T g = params.gamma[c], b = params.beta[c];
        for (std::size_t n = 0; n < input.n(); ++n) {
            const T* p = input.plane(n, c);
            T* xh = cache.normalized.plane(n, c);
            T* o = res.output.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                xh[i] = (p[i] - mean) * inv;
                o[i] = g * xh[i] + b;
            }
        }
    }
    return res;
}

template <typename T>
LayerBackward<T> batchnorm_backward(const BatchNormCache<T>& cache, const LayerParams<T>& params,
                                    const Tensor4<T>& grad_out) {
    check_kind(params.kind, {LayerKind::batchnorm}, "batchnorm_backward");
    require_shape(grad_out.shape(), cache.normalized.shape(), "batchnorm_backward grad_out");
    const std::size_t C = grad_out.c(), plane = grad_out.shape().plane();
    LayerBackward<T> res;
    res.grad_input = Tensor4<T>(grad_out.shape());
    res.grads = LayerGrads<T>::zeros_like(params);
    const double m = static_cast<double>(cache.count);
    for (std::size_t c = 0; c < C; ++c) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (std::size_t n = 0; n < grad_out.n(); ++n) {
            sum_dy += lane_sum(grad_out.plane(n, c), plane);
            sum_dy_xh += lane_dot(grad_out.plane(n, c), cache.normalized.plane(n, c), plane);
        }
        res.grads.gamma[c] = static_cast<T>(sum_dy_xh);
        res.grads.beta[c] = static_cast<T>(sum_dy);
        const double gamma = params.gamma[c];
        const double inv = cache.inv_std[c];
        for (std::size_t n = 0; n < grad_out.n(); ++n) {
            const T* g = grad_out.plane(n, c);
            const T* xh = cache.normalized.plane(n, c);
            T* gi = res.grad_input.plane(n, c);
            if (cache.mode == Mode::train) {
                const T scale = static_cast<T>(gamma * inv / m);
                const T a = static_cast<T>(sum_dy);
                const T b = static_cast<T>(sum_dy_xh);
                const T mm = static_cast<T>(m);
                for (std::size_t i = 0; i < plane; ++i) gi[i] = scale * (mm * g[i] - a - xh[i] * b);
            } else {
                const T scale = static_cast<T>(gamma * inv);
                for (std::size_t i = 0; i < plane; ++i) gi[i] = scale * g[i];
            }
        }
    }
    return res;
}

template <typename T>
void update_moving_statistics(LayerParams<T>& params, const BatchNormCache<T>& cache, double momentum) {
    check_kind(params.kind, {LayerKind::batchnorm}, "update_moving_statistics");
    if (cache.mode != Mode::train) return;
    const std::size_t C = params.gamma.size();
    if (cache.mean.size() != C) throw ShapeError("update_moving_statistics: channel mismatch");
    const double m = static_cast<double>(cache.count);
    const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
    for (std::size_t c = 0; c < C; ++c) {
        params.moving_mean[c] =
            static_cast<T>(momentum * params.moving_mean[c] + (1.0 - momentum) * cache.mean[c]);
        params.moving_var[c] =
            static_cast<T>(momentum * params.moving_var[c] + (1.0 - momentum) * cache.var[c] * unbias);
    }
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& input) {
    Tensor4<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
    return out;
}

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& input, const Tensor4<T>& grad_out) {
    require_shape(grad_out.shape(), input.shape(), "relu_backward grad_out");
    Tensor4<T> gin(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) gin[i] = input[i] > T(0) ? grad_out[i] : T(0);
    return gin;
}

template <typename T>
Tensor4<T> selu_forward(const Tensor4<T>& input) {
    const T lambda = static_cast<T>(kSeluLambda);
    const T la = static_cast<T>(kSeluLambda * kSeluAlpha);
    Tensor4<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const T x = input[i];
        out[i] = x > T(0) ? lambda * x : la * std::expm1(x);
    }
    return out;
}

template <typename T>
Tensor4<T> selu_backward(const Tensor4<T>& input, const Tensor4<T>& grad_out) {
    require_shape(grad_out.shape(), input.shape(), "selu_backward grad_out");
    const T lambda = static_cast<T>(kSeluLambda);
    const T la = static_cast<T>(kSeluLambda * kSeluAlpha);
    Tensor4<T> gin(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const T x = input[i];
        gin[i] = grad_out[i] * (x > T(0) ? lambda : la * std::exp(x));
    }
    return gin;
}

// ---------------------------------------------------------------------------
// Dropout

namespace {
void check_rate(double rate, const char* op) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::invalid_argument(std::string(op) + ": rate must be in [0, 1), got " + std::to_string(rate));
    }
}
}  // namespace

template <typename T>
DropoutResult<T> dropout_forward(const Tensor4<T>& input, double rate, Rng& rng, Mode mode) {
    check_rate(rate, "dropout");
    DropoutResult<T> res;
    if (mode == Mode::infer || rate == 0.0) {
        res.output = input;
        return res;
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    res.output = Tensor4<T>(input.shape());
    res.gain.resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const bool keep = u(rng) >= rate;
        res.gain[i] = keep ? scale : T(0);
        res.output[i] = input[i] * res.gain[i];
    }
    return res;
}

template <typename T>
DropoutResult<T> alpha_dropout_forward(const Tensor4<T>& input, double rate, Rng& rng, Mode mode) {
    check_rate(rate, "alpha_dropout");
    DropoutResult<T> res;
    if (mode == Mode::infer || rate == 0.0) {
        res.output = input;
        return res;
    }
    const double keep_prob = 1.0 - rate;
    const double sat = -kSeluLambda * kSeluAlpha;
    const double a = 1.0 / std::sqrt(keep_prob * (1.0 + rate * sat * sat));
    const double b = -a * sat * rate;
    const T at = static_cast<T>(a);
    const T dropped = static_cast<T>(a * sat + b);
    const T bt = static_cast<T>(b);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    res.output = Tensor4<T>(input.shape());
    res.gain.resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const bool keep = u(rng) >= rate;
        res.gain[i] = keep ? at : T(0);
        res.output[i] = keep ? at * input[i] + bt : dropped;
    }
    return res;
}

template <typename T>
Tensor4<T> dropout_backward(const DropoutResult<T>& fwd, const Tensor4<T>& grad_out) {
    require_shape(grad_out.shape(), fwd.output.shape(), "dropout_backward grad_out");
    if (fwd.gain.empty()) return grad_out;
    Tensor4<T> gin(grad_out.shape());
    for (std::size_t i = 0; i < gin.size(); ++i) gin[i] = grad_out[i] * fwd.gain[i];
    return gin;
}

// ---------------------------------------------------------------------------
// Softmax

template <typename T>
Tensor4<T> softmax_channels(const Tensor4<T>& logits) {
    const std::size_t C = logits.c(), plane = logits.shape().plane();
    Tensor4<T> out(logits.shape());
    std::vector<T> mx(plane), sum(plane);
    for (std::size_t n = 0; n < logits.n(); ++n) {
        std::fill(mx.begin(), mx.end(), -std::numeric_limits<T>::infinity());
        std::fill(sum.begin(), sum.end(), T(0));
        for (std::size_t c = 0; c < C; ++c) {
            const T* x = logits.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) mx[i] = std::max(mx[i], x[i]);
        }
        for (std::size_t c = 0; c < C; ++c) {
            const T* x = logits.plane(n, c);
            T* o = out.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                o[i] = std::exp(x[i] - mx[i]);
                sum[i] += o[i];
            }
        }
        for (std::size_t c = 0; c < C; ++c) {
            T* o = out.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) o[i] /= sum[i];
        }
    }
    return out;
}

template <typename T>
Tensor4<T> softmax_channels_backward(const Tensor4<T>& probabilities, const Tensor4<T>& grad_out) {
    require_shape(grad_out.shape(), probabilities.shape(), "softmax_channels_backward grad_out");
    const std::size_t C = probabilities.c(), plane = probabilities.shape().plane();
    Tensor4<T> gin(probabilities.shape());
    std::vector<T> dot(plane);
    for (std::size_t n = 0; n < probabilities.n(); ++n) {
        std::fill(dot.begin(), dot.end(), T(0));
        for (std::size_t c = 0; c < C; ++c) {
            const T* p = probabilities.plane(n, c);
            const T* g = grad_out.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) dot[i] += p[i] * g[i];
        }
        for (std::size_t c = 0; c < C; ++c) {
            const T* p = probabilities.plane(n, c);
            const T* g = grad_out.plane(n, c);
            T* o = gin.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) o[i] = p[i] * (g[i] - dot[i]);
        }
    }
    return gin;
}

#define EDDYNET_INSTANTIATE_LAYERS(T)                                                                   \
    template struct LayerParams<T>;                                                                     \
    template struct LayerGrads<T>;                                                                      \
    template LayerParams<T> make_conv<T>(std::size_t, std::size_t, std::size_t);                        \
    template LayerParams<T> make_transposed_conv<T>(std::size_t, std::size_t, std::size_t);             \
    template LayerParams<T> make_batchnorm<T>(std::size_t);                                             \
    template Tensor4<T> conv2d_forward(const Tensor4<T>&, const LayerParams<T>&);                       \
    template LayerBackward<T> conv2d_backward(const Tensor4<T>&, const LayerParams<T>&,                 \
                                              const Tensor4<T>&);                                       \
    template Tensor4<T> transposed_conv2d_forward(const Tensor4<T>&, const LayerParams<T>&);            \
    template LayerBackward<T> transposed_conv2d_backward(const Tensor4<T>&, const LayerParams<T>&,      \
                                                         const Tensor4<T>&);                            \
    template PoolResult<T> maxpool2x2_forward(const Tensor4<T>&);                                       \
    template Tensor4<T> maxpool2x2_backward(const PoolResult<T>&, const Tensor4<T>&);                   \
    template BatchNormResult<T> batchnorm_forward(const Tensor4<T>&, const LayerParams<T>&, Mode,       \
                                                  double);                                              \
    template LayerBackward<T> batchnorm_backward(const BatchNormCache<T>&, const LayerParams<T>&,       \
                                                 const Tensor4<T>&);                                    \
    template void update_moving_statistics(LayerParams<T>&, const BatchNormCache<T>&, double);          \
    template Tensor4<T> relu_forward(const Tensor4<T>&);                                                \
    template Tensor4<T> relu_backward(const Tensor4<T>&, const Tensor4<T>&);                            \
    template Tensor4<T> selu_forward(const Tensor4<T>&);                                                \
    template Tensor4<T> selu_backward(const Tensor4<T>&, const Tensor4<T>&);                            \
    template DropoutResult<T> dropout_forward(const Tensor4<T>&, double, Rng&, Mode);                   \
    template DropoutResult<T> alpha_dropout_forward(const Tensor4<T>&, double, Rng&, Mode);             \
    template Tensor4<T> dropout_backward(const DropoutResult<T>&, const Tensor4<T>&);                   \
    template Tensor4<T> softmax_channels(const Tensor4<T>&);                                            \
    template Tensor4<T> softmax_channels_backward(const Tensor4<T>&, const Tensor4<T>&);

EDDYNET_INSTANTIATE_LAYERS(float)
EDDYNET_INSTANTIATE_LAYERS(double)

#undef EDDYNET_INSTANTIATE_LAYERS

}  // namespace eddynet::nn
