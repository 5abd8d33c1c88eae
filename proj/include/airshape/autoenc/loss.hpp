#ifndef AIRSHAPE_AUTOENC_LOSS_HPP
#define AIRSHAPE_AUTOENC_LOSS_HPP

#include "airshape/autoenc/tensor.hpp"

namespace airshape::ae {

// 0.5 * BCE + 0.5 * Dice loss.
//   BCE  = mean over all elements of -[t ln r + (1-t) ln(1-r)]
//   Dice = 1 - (2*sum(r*t) + eps) / (sum(r) + sum(t) + eps), eps = 1
// Sums run over the whole tensor. BCE clamps r to [1e-12, 1-1e-12].
struct LossParts {
    double total = 0.0;
    double bce = 0.0;
    double dice = 0.0;
};

inline constexpr double kDiceEps = 1.0;

// Throws NonFinite if recon or target contain NaN/Inf.
LossParts bce_dice_loss(const Tensor& recon, const Tensor& target);

// d(loss_scale * loss)/d(logits) where recon = sigmoid(logits); the BCE term
// collapses to (r - t)/N so saturation never amplifies.
Tensor bce_dice_grad_logits(const Tensor& recon, const Tensor& target, double loss_scale = 1.0);

} // namespace airshape::ae

#endif
