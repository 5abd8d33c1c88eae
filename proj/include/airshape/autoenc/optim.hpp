#ifndef AIRSHAPE_AUTOENC_OPTIM_HPP
#define AIRSHAPE_AUTOENC_OPTIM_HPP

#include <vector>

#include "airshape/autoenc/layers.hpp"

namespace airshape::ae {

// Cosine annealing with warm restarts: lr = 0.5*lr0*(1 + cos(pi*t/T_i)) with
// periods T0, 2*T0, 4*T0, ... Period boundaries belong to the ending period,
// so lr_at(T0) = 0 and lr just after a boundary restarts at lr0.
double lr_at(double epoch, double lr0 = 0.001, double first_period = 20.0, double period_mult = 2.0);

// Schedule value used inside the training loop: integer restart boundaries
// resolve to the restarting period (epoch 20 trains at lr0 again).
double lr_for_training_epoch(int epoch, double lr0, double first_period = 20.0, double period_mult = 2.0);

// Standard bias-corrected Adam over a fixed parameter list.
class Adam {
public:
    Adam(std::vector<Param*> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    // one update from the accumulated gradients; does not clear them
    void step(double lr);
    long steps_taken() const { return t_; }

private:
    std::vector<Param*> params_;
    std::vector<std::vector<double>> m_, v_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
};

} // namespace airshape::ae

#endif
