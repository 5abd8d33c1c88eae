#include "airshape/autoenc/optim.hpp"

#include <cmath>

namespace airshape::ae {

double lr_at(double epoch, double lr0, double first_period, double period_mult) {
    double t = epoch;
    double period = first_period;
    while (t > period) {
        t -= period;
        period *= period_mult;
    }
    return 0.5 * lr0 * (1.0 + std::cos(M_PI * t / period));
}

double lr_for_training_epoch(int epoch, double lr0, double first_period, double period_mult) {
    if (epoch == 0) return lr0;
    return lr_at(double(epoch) + 1e-9, lr0, first_period, period_mult);
}

Adam::Adam(std::vector<Param*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Param* p : params_) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Param* p = params_[pi];
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (size_t i = 0; i < p->size(); ++i) {
            const double g = p->g[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p->w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

} // namespace airshape::ae
