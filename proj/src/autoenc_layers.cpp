#include "airshape/autoenc/layers.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "airshape/errors.hpp"
#include "airshape/parallel.hpp"

namespace airshape::ae {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatCM = Eigen::MatrixXd;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

void init_uniform(Param& p, double bound, Rng& rng) {
    for (auto& v : p.w) v = rng.uniform(-bound, bound);
}

// col is (in_ch * k * k) x (H * W), column-major (one column per pixel).
void im2col(const double* x, int c, int h, int w, int k, double* col) {
    const int pad = k / 2;
    const int rows = c * k * k;
    size_t idx = 0;
    for (int oh = 0; oh < h; ++oh)
        for (int ow = 0; ow < w; ++ow) {
            double* column = col + idx * rows;
            ++idx;
            int r = 0;
            for (int ci = 0; ci < c; ++ci) {
                const double* plane = x + size_t(ci) * h * w;
                for (int kr = 0; kr < k; ++kr) {
                    int ih = oh + kr - pad;
                    if (ih < 0 || ih >= h) {
                        for (int kc = 0; kc < k; ++kc) column[r++] = 0.0;
                        continue;
                    }
                    for (int kc = 0; kc < k; ++kc) {
                        int iw = ow + kc - pad;
                        column[r++] = (iw < 0 || iw >= w) ? 0.0 : plane[size_t(ih) * w + iw];
                    }
                }
            }
        }
}

// scatter-add of a col matrix back to the image (adjoint of im2col)
void col2im_add(const double* col, int c, int h, int w, int k, double* x) {
    const int pad = k / 2;
    const int rows = c * k * k;
    size_t idx = 0;
    for (int oh = 0; oh < h; ++oh)
        for (int ow = 0; ow < w; ++ow) {
            const double* column = col + idx * rows;
            ++idx;
            int r = 0;
            for (int ci = 0; ci < c; ++ci) {
                double* plane = x + size_t(ci) * h * w;
                for (int kr = 0; kr < k; ++kr) {
                    int ih = oh + kr - pad;
                    if (ih < 0 || ih >= h) {
                        r += k;
                        continue;
                    }
                    for (int kc = 0; kc < k; ++kc) {
                        int iw = ow + kc - pad;
                        if (iw >= 0 && iw < w) plane[size_t(ih) * w + iw] += column[r];
                        ++r;
                    }
                }
            }
        }
}

} // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int ksize, Rng& init)
    : in_ch_(in_ch), out_ch_(out_ch), k_(ksize) {
    weight_.name = name + ".weight";
    weight_.shape = {out_ch, in_ch, ksize, ksize};
    weight_.w.resize(size_t(out_ch) * in_ch * ksize * ksize);
    weight_.g.resize(weight_.w.size(), 0.0);
    bias_.name = name + ".bias";
    bias_.shape = {out_ch};
    bias_.w.resize(out_ch, 0.0);
    bias_.g.resize(out_ch, 0.0);
    init_uniform(weight_, 1.0 / std::sqrt(double(in_ch) * ksize * ksize), init);
}

std::string Conv2d::describe() const {
    return "conv " + std::to_string(k_) + "x" + std::to_string(k_) + " " +
           std::to_string(in_ch_) + "->" + std::to_string(out_ch_);
}

Tensor Conv2d::forward(const Tensor& x, Mode mode) {
    if (x.c() != in_ch_) throw ShapeMismatch("conv input channels");
    const int B = x.b(), H = x.h(), W = x.w();
    const int P = H * W;
    const int rows = in_ch_ * k_ * k_;
    Tensor y(B, out_ch_, H, W);

    parallel_for(B, jobs, [&](int s) {
        CMapRM wmat(weight_.w.data(), out_ch_, rows);
        MapRM ymat(y.sample(s), out_ch_, P);
        if (k_ == 1) {
            CMapRM xmat(x.sample(s), in_ch_, P);
            ymat.noalias() = wmat * xmat;
        } else {
            std::vector<double> col(size_t(rows) * P);
            im2col(x.sample(s), in_ch_, H, W, k_, col.data());
            Eigen::Map<const MatCM> colmat(col.data(), rows, P);
            ymat.noalias() = wmat * colmat;
        }
        for (int co = 0; co < out_ch_; ++co) ymat.row(co).array() += bias_.w[co];
    });

    if (mode == Mode::Train) {
        cached_input_ = x;
        has_cache_ = true;
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    if (!has_cache_) throw ShapeMismatch("conv backward without cached forward");
    const Tensor& x = cached_input_;
    const int B = x.b(), H = x.h(), W = x.w();
    const int P = H * W;
    const int rows = in_ch_ * k_ * k_;

    Tensor dx(B, in_ch_, H, W);
    // per-sample weight-gradient buffers reduced in sample order keep the
    // result independent of the thread count
    std::vector<std::vector<double>> dw_s(B);
    std::vector<std::vector<double>> db_s(B);

    parallel_for(B, jobs, [&](int s) {
        dw_s[s].assign(weight_.w.size(), 0.0);
        db_s[s].assign(bias_.w.size(), 0.0);
        CMapRM dymat(dy.sample(s), out_ch_, P);
        CMapRM wmat(weight_.w.data(), out_ch_, rows);
        MapRM dwmat(dw_s[s].data(), out_ch_, rows);

        if (k_ == 1) {
            CMapRM xmat(x.sample(s), in_ch_, P);
            dwmat.noalias() = dymat * xmat.transpose();
            MapRM dxmat(dx.sample(s), in_ch_, P);
            dxmat.noalias() = wmat.transpose() * dymat;
        } else {
            std::vector<double> col(size_t(rows) * P);
            im2col(x.sample(s), in_ch_, H, W, k_, col.data());
            Eigen::Map<const MatCM> colmat(col.data(), rows, P);
            dwmat.noalias() = dymat * colmat.transpose();

            MatCM dcol(rows, P);
            dcol.noalias() = wmat.transpose() * dymat;
            col2im_add(dcol.data(), in_ch_, H, W, k_, dx.sample(s));
        }
        // fixed-order reduction; Eigen's vectorized sum depends on alignment
        const double* dys = dy.sample(s);
        for (int co = 0; co < out_ch_; ++co) {
            double acc = 0.0;
            const double* row = dys + size_t(co) * P;
            for (int p = 0; p < P; ++p) acc += row[p];
            db_s[s][co] = acc;
        }
    });

    for (int s = 0; s < B; ++s) {
        for (size_t i = 0; i < weight_.g.size(); ++i) weight_.g[i] += dw_s[s][i];
        for (size_t i = 0; i < bias_.g.size(); ++i) bias_.g[i] += db_s[s][i];
    }
    has_cache_ = false;
    cached_input_ = Tensor();
    return dx;
}

// ------------------------------------------------------- ConvTranspose2x2

ConvTranspose2x2::ConvTranspose2x2(std::string name, int in_ch, int out_ch, Rng& init)
    : in_ch_(in_ch), out_ch_(out_ch) {
    weight_.name = name + ".weight";
    weight_.shape = {in_ch, out_ch, 2, 2};
    weight_.w.resize(size_t(in_ch) * out_ch * 4);
    weight_.g.resize(weight_.w.size(), 0.0);
    bias_.name = name + ".bias";
    bias_.shape = {out_ch};
    bias_.w.resize(out_ch, 0.0);
    bias_.g.resize(out_ch, 0.0);
    init_uniform(weight_, 1.0 / std::sqrt(double(in_ch) * 4.0), init);
}

std::string ConvTranspose2x2::describe() const {
    return "upconv 2x2 " + std::to_string(in_ch_) + "->" + std::to_string(out_ch_);
}

Tensor ConvTranspose2x2::forward(const Tensor& x, Mode mode) {
    if (x.c() != in_ch_) throw ShapeMismatch("upconv input channels");
    const int B = x.b(), H = x.h(), W = x.w();
    Tensor y(B, out_ch_, H * 2, W * 2);

    parallel_for(B, jobs, [&](int s) {
        const double* xs = x.sample(s);
        double* ys = y.sample(s);
        const size_t op = size_t(H * 2) * (W * 2);
        for (int co = 0; co < out_ch_; ++co) {
            double* plane = ys + co * op;
            for (size_t i = 0; i < op; ++i) plane[i] = bias_.w[co];
        }
        for (int ci = 0; ci < in_ch_; ++ci) {
            const double* xplane = xs + size_t(ci) * H * W;
            const double* wrow = weight_.w.data() + size_t(ci) * out_ch_ * 4;
            for (int co = 0; co < out_ch_; ++co) {
                double* yplane = ys + size_t(co) * op;
                const double w00 = wrow[co * 4 + 0], w01 = wrow[co * 4 + 1];
                const double w10 = wrow[co * 4 + 2], w11 = wrow[co * 4 + 3];
                for (int ih = 0; ih < H; ++ih) {
                    const double* xr = xplane + size_t(ih) * W;
                    double* y0 = yplane + size_t(2 * ih) * (W * 2);
                    double* y1 = y0 + (W * 2);
                    for (int iw = 0; iw < W; ++iw) {
                        double v = xr[iw];
                        y0[2 * iw] += v * w00;
                        y0[2 * iw + 1] += v * w01;
                        y1[2 * iw] += v * w10;
                        y1[2 * iw + 1] += v * w11;
                    }
                }
            }
        }
    });

    if (mode == Mode::Train) {
        cached_input_ = x;
        has_cache_ = true;
    }
    return y;
}

Tensor ConvTranspose2x2::backward(const Tensor& dy) {
    if (!has_cache_) throw ShapeMismatch("upconv backward without cached forward");
    const Tensor& x = cached_input_;
    const int B = x.b(), H = x.h(), W = x.w();
    Tensor dx(B, in_ch_, H, W);
    std::vector<std::vector<double>> dw_s(B), db_s(B);

    parallel_for(B, jobs, [&](int s) {
        dw_s[s].assign(weight_.w.size(), 0.0);
        db_s[s].assign(bias_.w.size(), 0.0);
        const double* xs = x.sample(s);
        const double* dys = dy.sample(s);
        double* dxs = dx.sample(s);
        const size_t op = size_t(H * 2) * (W * 2);
        for (int co = 0; co < out_ch_; ++co) {
            const double* dplane = dys + size_t(co) * op;
            double acc = 0;
            for (size_t i = 0; i < op; ++i) acc += dplane[i];
            db_s[s][co] = acc;
        }
        for (int ci = 0; ci < in_ch_; ++ci) {
            const double* xplane = xs + size_t(ci) * H * W;
            double* dxplane = dxs + size_t(ci) * H * W;
            double* dwrow = dw_s[s].data() + size_t(ci) * out_ch_ * 4;
            for (int co = 0; co < out_ch_; ++co) {
                const double* dyplane = dys + size_t(co) * op;
                const double* wrow = weight_.w.data() + size_t(ci) * out_ch_ * 4 + co * 4;
                double g00 = 0, g01 = 0, g10 = 0, g11 = 0;
                for (int ih = 0; ih < H; ++ih) {
                    const double* xr = xplane + size_t(ih) * W;
                    double* dxr = dxplane + size_t(ih) * W;
                    const double* d0 = dyplane + size_t(2 * ih) * (W * 2);
                    const double* d1 = d0 + (W * 2);
                    for (int iw = 0; iw < W; ++iw) {
                        const double a = d0[2 * iw], b = d0[2 * iw + 1];
                        const double c = d1[2 * iw], d = d1[2 * iw + 1];
                        dxr[iw] += a * wrow[0] + b * wrow[1] + c * wrow[2] + d * wrow[3];
                        const double v = xr[iw];
                        g00 += v * a;
                        g01 += v * b;
                        g10 += v * c;
                        g11 += v * d;
                    }
                }
                dwrow[co * 4 + 0] += g00;
                dwrow[co * 4 + 1] += g01;
                dwrow[co * 4 + 2] += g10;
                dwrow[co * 4 + 3] += g11;
            }
        }
    });

    for (int s = 0; s < B; ++s) {
        for (size_t i = 0; i < weight_.g.size(); ++i) weight_.g[i] += dw_s[s][i];
        for (size_t i = 0; i < bias_.g.size(); ++i) bias_.g[i] += db_s[s][i];
    }
    has_cache_ = false;
    cached_input_ = Tensor();
    return dx;
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels) : channels_(channels), name_(name) {
    gamma_.name = name + ".gamma";
    gamma_.shape = {channels};
    gamma_.w.assign(channels, 1.0);
    gamma_.g.assign(channels, 0.0);
    beta_.name = name + ".beta";
    beta_.shape = {channels};
    beta_.w.assign(channels, 0.0);
    beta_.g.assign(channels, 0.0);
    running_mean_.name = name + ".running_mean";
    running_mean_.v.assign(channels, 0.0);
    running_var_.name = name + ".running_var";
    running_var_.v.assign(channels, 1.0);
}

std::string BatchNorm2d::describe() const { return "batchnorm " + std::to_string(channels_); }

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
    if (x.c() != channels_) throw ShapeMismatch("batchnorm channels");
    const int B = x.b(), H = x.h(), W = x.w();
    const size_t plane = size_t(H) * W;
    const double n = double(B) * plane;
    Tensor y(B, channels_, H, W);

    if (mode == Mode::Eval) {
        for (int c = 0; c < channels_; ++c) {
            const double inv = 1.0 / std::sqrt(running_var_.v[c] + kEps);
            const double g = gamma_.w[c], b = beta_.w[c], m = running_mean_.v[c];
            for (int s = 0; s < B; ++s) {
                const double* xp = x.sample(s) + c * plane;
                double* yp = y.sample(s) + c * plane;
                for (size_t i = 0; i < plane; ++i) yp[i] = (xp[i] - m) * inv * g + b;
            }
        }
        return y;
    }

    mu_.assign(channels_, 0.0);
    var_.assign(channels_, 0.0);
    for (int c = 0; c < channels_; ++c) {
        double sum = 0;
        for (int s = 0; s < B; ++s) {
            const double* xp = x.sample(s) + c * plane;
            for (size_t i = 0; i < plane; ++i) sum += xp[i];
        }
        mu_[c] = sum / n;
        double sq = 0;
        for (int s = 0; s < B; ++s) {
            const double* xp = x.sample(s) + c * plane;
            for (size_t i = 0; i < plane; ++i) {
                double d = xp[i] - mu_[c];
                sq += d * d;
            }
        }
        var_[c] = sq / n; // biased, used for normalization
        const double inv = 1.0 / std::sqrt(var_[c] + kEps);
        const double g = gamma_.w[c], b = beta_.w[c];
        for (int s = 0; s < B; ++s) {
            const double* xp = x.sample(s) + c * plane;
            double* yp = y.sample(s) + c * plane;
            for (size_t i = 0; i < plane; ++i) yp[i] = (xp[i] - mu_[c]) * inv * g + b;
        }
        const double unbiased = n > 1 ? var_[c] * n / (n - 1) : var_[c];
        running_mean_.v[c] = (1 - kMomentum) * running_mean_.v[c] + kMomentum * mu_[c];
        running_var_.v[c] = (1 - kMomentum) * running_var_.v[c] + kMomentum * unbiased;
    }

    cached_input_ = x;
    has_cache_ = true;
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
    if (!has_cache_) throw ShapeMismatch("batchnorm backward without cached forward");
    const Tensor& x = cached_input_;
    const int B = x.b(), H = x.h(), W = x.w();
    const size_t plane = size_t(H) * W;
    const double n = double(B) * plane;
    Tensor dx(B, channels_, H, W);

    for (int c = 0; c < channels_; ++c) {
        const double inv = 1.0 / std::sqrt(var_[c] + kEps);
        const double g = gamma_.w[c];
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int s = 0; s < B; ++s) {
            const double* xp = x.sample(s) + c * plane;
            const double* dp = dy.sample(s) + c * plane;
            for (size_t i = 0; i < plane; ++i) {
                double xhat = (xp[i] - mu_[c]) * inv;
                sum_dy += dp[i];
                sum_dy_xhat += dp[i] * xhat;
            }
        }
        gamma_.g[c] += sum_dy_xhat;
        beta_.g[c] += sum_dy;
        // dx = (g*inv/n) * (n*dy - sum(dy) - xhat * sum(dy*xhat))
        for (int s = 0; s < B; ++s) {
            const double* xp = x.sample(s) + c * plane;
            const double* dp = dy.sample(s) + c * plane;
            double* dxp = dx.sample(s) + c * plane;
            for (size_t i = 0; i < plane; ++i) {
                double xhat = (xp[i] - mu_[c]) * inv;
                dxp[i] = g * inv / n * (n * dp[i] - sum_dy - xhat * sum_dy_xhat);
            }
        }
    }
    has_cache_ = false;
    cached_input_ = Tensor();
    return dx;
}

// ------------------------------------------------------------------ ReLU

Tensor ReLU::forward(const Tensor& x, Mode mode) {
    Tensor y = x;
    for (auto& v : y.data)
        if (v < 0) v = 0;
    if (mode == Mode::Train) {
        cached_input_ = x;
        has_cache_ = true;
    }
    return y;
}

Tensor ReLU::backward(const Tensor& dy) {
    if (!has_cache_) throw ShapeMismatch("relu backward without cached forward");
    Tensor dx = dy;
    for (size_t i = 0; i < dx.data.size(); ++i)
        if (cached_input_.data[i] <= 0) dx.data[i] = 0;
    has_cache_ = false;
    cached_input_ = Tensor();
    return dx;
}

// ------------------------------------------------------------ MaxPool2x2

Tensor MaxPool2x2::forward(const Tensor& x, Mode mode) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0) throw ShapeMismatch("maxpool needs even dims");
    const int B = x.b(), C = x.c(), H = x.h() / 2, W = x.w() / 2;
    Tensor y(B, C, H, W);
    argmax_.assign(y.size(), 0);
    for (int s = 0; s < B; ++s)
        for (int c = 0; c < C; ++c) {
            const double* xp = x.sample(s) + size_t(c) * x.plane();
            double* yp = y.sample(s) + size_t(c) * y.plane();
            uint8_t* am = argmax_.data() + (size_t(s) * C + c) * y.plane();
            for (int r = 0; r < H; ++r)
                for (int col = 0; col < W; ++col) {
                    const double v00 = xp[size_t(2 * r) * x.w() + 2 * col];
                    const double v01 = xp[size_t(2 * r) * x.w() + 2 * col + 1];
                    const double v10 = xp[size_t(2 * r + 1) * x.w() + 2 * col];
                    const double v11 = xp[size_t(2 * r + 1) * x.w() + 2 * col + 1];
                    double best = v00;
                    uint8_t arg = 0;
                    if (v01 > best) { best = v01; arg = 1; }
                    if (v10 > best) { best = v10; arg = 2; }
                    if (v11 > best) { best = v11; arg = 3; }
                    yp[size_t(r) * W + col] = best;
                    am[size_t(r) * W + col] = arg;
                }
        }
    in_shape_ = x.shape;
    has_cache_ = (mode == Mode::Train);
    return y;
}

Tensor MaxPool2x2::backward(const Tensor& dy) {
    if (!has_cache_) throw ShapeMismatch("maxpool backward without cached forward");
    Tensor dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    const int B = dy.b(), C = dy.c(), H = dy.h(), W = dy.w();
    for (int s = 0; s < B; ++s)
        for (int c = 0; c < C; ++c) {
            const double* dp = dy.sample(s) + size_t(c) * dy.plane();
            double* dxp = dx.sample(s) + size_t(c) * dx.plane();
            const uint8_t* am = argmax_.data() + (size_t(s) * C + c) * dy.plane();
            for (int r = 0; r < H; ++r)
                for (int col = 0; col < W; ++col) {
                    uint8_t arg = am[size_t(r) * W + col];
                    int ih = 2 * r + (arg >> 1);
                    int iw = 2 * col + (arg & 1);
                    dxp[size_t(ih) * dx.w() + iw] += dp[size_t(r) * W + col];
                }
        }
    has_cache_ = false;
    return dx;
}

} // namespace airshape::ae
