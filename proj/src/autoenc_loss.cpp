#include "airshape/autoenc/loss.hpp"

#include <cmath>

#include "airshape/errors.hpp"

namespace airshape::ae {

namespace {
constexpr double kClamp = 1e-12;
}

LossParts bce_dice_loss(const Tensor& recon, const Tensor& target) {
    if (recon.shape != target.shape) throw ShapeMismatch("loss shapes differ");
    const size_t n = recon.size();
    if (n == 0) throw ShapeMismatch("empty loss input");

    double bce = 0.0, sum_rt = 0.0, sum_r = 0.0, sum_t = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double r = recon.data[i];
        const double t = target.data[i];
        if (!std::isfinite(r) || !std::isfinite(t)) throw NonFinite("loss input");
        const double rc = r < kClamp ? kClamp : (r > 1.0 - kClamp ? 1.0 - kClamp : r);
        bce -= t * std::log(rc) + (1.0 - t) * std::log(1.0 - rc);
        sum_rt += r * t;
        sum_r += r;
        sum_t += t;
    }
    LossParts parts;
    parts.bce = bce / double(n);
    parts.dice = 1.0 - (2.0 * sum_rt + kDiceEps) / (sum_r + sum_t + kDiceEps);
    parts.total = 0.5 * parts.bce + 0.5 * parts.dice;
    return parts;
}

Tensor bce_dice_grad_logits(const Tensor& recon, const Tensor& target, double loss_scale) {
    if (recon.shape != target.shape) throw ShapeMismatch("loss shapes differ");
    const size_t n = recon.size();

    double sum_rt = 0.0, sum_r = 0.0, sum_t = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sum_rt += recon.data[i] * target.data[i];
        sum_r += recon.data[i];
        sum_t += target.data[i];
    }
    const double denom = sum_r + sum_t + kDiceEps;
    const double numer = 2.0 * sum_rt + kDiceEps;

    Tensor dz(recon.shape[0], recon.shape[1], recon.shape[2], recon.shape[3]);
    for (size_t i = 0; i < n; ++i) {
        const double r = recon.data[i];
        const double t = target.data[i];
        // BCE through the sigmoid: (r - t)/n wherever the clamp is inactive
        double g = 0.0;
        if (r > kClamp && r < 1.0 - kClamp) g += 0.5 * (r - t) / double(n);
        // Dice, with the explicit sigmoid derivative r(1-r)
        const double ddice_dr = -(2.0 * t * denom - numer) / (denom * denom);
        g += 0.5 * ddice_dr * r * (1.0 - r);
        dz.data[i] = loss_scale * g;
        if (!std::isfinite(dz.data[i])) throw NonFinite("loss gradient");
    }
    return dz;
}

} // namespace airshape::ae
