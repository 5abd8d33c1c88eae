#include <doctest.h>

#include <cmath>

#include "airshape/autoenc/loss.hpp"
#include "airshape/autoenc/net.hpp"
#include "airshape/autoenc/optim.hpp"
#include "airshape/errors.hpp"
#include "airshape/rng.hpp"
#include "test_helpers.hpp"

using namespace airshape;
using namespace airshape::ae;

namespace {

ArchitectureDescriptor tiny_arch() {
    ArchitectureDescriptor arch;
    arch.input_channels = 3;
    arch.input_size = 8;
    arch.encoder_channels = {4};
    arch.bottleneck_channels = 8;
    return arch;
}

Tensor random_batch(Rng& rng, int b, int c, int hw) {
    Tensor t(b, c, hw, hw);
    for (auto& v : t.data) v = rng.uniform();
    return t;
}

Tensor random_binary(Rng& rng, int b, int c, int hw) {
    Tensor t(b, c, hw, hw);
    for (auto& v : t.data) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
    return t;
}

double loss_of(UNetNoskip& net, const Tensor& input, const Tensor& target) {
    ForwardResult out = net.forward(input, Mode::Train);
    return bce_dice_loss(out.recon, target).total;
}

void zero_params(UNetNoskip& net) {
    for (Param* p : net.params()) std::fill(p->w.begin(), p->w.end(), 0.0);
}

} // namespace

TEST_SUITE_BEGIN("autoenc");

TEST_CASE("gradients match central finite differences on the tiny net") {
    Rng rng(1001);
    UNetNoskip net(tiny_arch(), 42);
    Tensor input = random_batch(rng, 2, 3, 8);
    Tensor target = random_binary(rng, 2, 3, 8);

    ForwardResult out = net.forward(input, Mode::Train);
    net.zero_grad();
    net.backward(out.recon, target);

    std::vector<double> analytic;
    for (Param* p : net.params())
        for (double g : p->g) analytic.push_back(g);

    const double h = 1e-5;
    double max_rel = 0.0;
    size_t idx = 0;
    for (Param* p : net.params())
        for (size_t i = 0; i < p->w.size(); ++i) {
            const double keep = p->w[i];
            p->w[i] = keep + h;
            double lp = loss_of(net, input, target);
            p->w[i] = keep - h;
            double lm = loss_of(net, input, target);
            p->w[i] = keep;
            double fd = (lp - lm) / (2.0 * h);
            double ga = analytic[idx++];
            double rel = std::abs(fd - ga) / std::max({1e-4, std::abs(fd), std::abs(ga)});
            max_rel = std::max(max_rel, rel);
        }
    CHECK(idx == net.param_count());
    CHECK(max_rel < 1e-5);
}

TEST_CASE("constructed stationary point has vanishing gradients") {
    // with every weight zero and a uniform output level rho, the per-logit
    // gradient of 0.5*BCE + 0.5*Dice (target 0.5 everywhere) is
    //   g(rho) = 0.5*(rho-0.5)/n - 0.25*n*rho*(1-rho)/(n*rho + n/2 + 1)^2
    // solve g(rho)=0 by bisection, then plant rho via the head bias
    UNetNoskip net(tiny_arch(), 7);
    Tensor input = random_batch(*(new Rng(55)), 2, 3, 8); // arbitrary input
    Tensor target(2, 3, 8, 8);
    for (auto& v : target.data) v = 0.5;
    const double n = double(target.size());

    auto g = [&](double rho) {
        double denom = n * rho + 0.5 * n + 1.0;
        return 0.5 * (rho - 0.5) / n - 0.25 * n * rho * (1.0 - rho) / (denom * denom);
    };
    double lo = 0.5, hi = 0.7;
    REQUIRE(g(lo) <= 0.0);
    REQUIRE(g(hi) > 0.0);
    for (int iter = 0; iter < 200; ++iter) {
        double mid = 0.5 * (lo + hi);
        (g(mid) <= 0.0 ? lo : hi) = mid;
    }
    const double rho = 0.5 * (lo + hi);

    zero_params(net);
    for (Param* p : net.params())
        if (p->name == "head.bias")
            for (auto& v : p->w) v = std::log(rho / (1.0 - rho));

    ForwardResult out = net.forward(input, Mode::Train);
    for (double v : out.recon.data) CHECK(v == doctest::Approx(rho).epsilon(1e-12));

    net.zero_grad();
    net.backward(out.recon, target);
    double max_abs = 0.0;
    for (Param* p : net.params())
        for (double gv : p->g) max_abs = std::max(max_abs, std::abs(gv));
    CHECK(max_abs < 1e-8);

    // finite differences agree that this is stationary
    const double h = 1e-5;
    double max_fd = 0.0;
    for (Param* p : net.params())
        for (size_t i = 0; i < p->w.size(); ++i) {
            const double keep = p->w[i];
            p->w[i] = keep + h;
            double lp = loss_of(net, input, target);
            p->w[i] = keep - h;
            double lm = loss_of(net, input, target);
            p->w[i] = keep;
            max_fd = std::max(max_fd, std::abs((lp - lm) / (2.0 * h)));
        }
    CHECK(max_fd < 1e-8);
}

TEST_CASE("gradients scale linearly with the loss scale") {
    Rng rng(73);
    UNetNoskip net(tiny_arch(), 5);
    Tensor input = random_batch(rng, 2, 3, 8);
    Tensor target = random_binary(rng, 2, 3, 8);

    ForwardResult out = net.forward(input, Mode::Train);
    net.zero_grad();
    net.backward(out.recon, target, 1.0);
    std::vector<double> g1;
    for (Param* p : net.params())
        for (double g : p->g) g1.push_back(g);

    out = net.forward(input, Mode::Train);
    net.zero_grad();
    net.backward(out.recon, target, 4.0); // power of two: scaling is exact
    size_t i = 0;
    for (Param* p : net.params())
        for (double g : p->g) CHECK(g == 4.0 * g1[i++]);
}

TEST_CASE("forward output matches input shape and zero weights give 0.5 everywhere") {
    Rng rng(99);
    UNetNoskip net(tiny_arch(), 3);
    Tensor input = random_batch(rng, 3, 3, 8);
    ForwardResult out = net.forward(input, Mode::Eval);
    CHECK(out.recon.shape == input.shape);
    for (double v : out.recon.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }

    zero_params(net);
    Tensor zeros(2, 3, 8, 8);
    out = net.forward(zeros, Mode::Eval);
    for (double v : out.recon.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

    Tensor wrong(2, 3, 16, 16);
    CHECK_THROWS_AS(net.forward(wrong, Mode::Eval), ShapeMismatch);
}

TEST_CASE("bottleneck shape follows the architecture (desk profile)") {
    ArchitectureDescriptor arch;
    arch.input_size = 64;
    arch.encoder_channels = {8, 16, 32, 64};
    arch.bottleneck_channels = 128;
    CHECK(arch.bottleneck_hw() == 4);
    UNetNoskip net(arch, 21);
    Rng rng(15);
    Tensor input = random_batch(rng, 2, 3, 64);
    ForwardResult out = net.forward(input, Mode::Eval);
    CHECK(out.bottleneck.b() == 2);
    CHECK(out.bottleneck.c() == 128);
    CHECK(out.bottleneck.h() == 4);
    CHECK(out.bottleneck.w() == 4);
    CHECK(out.recon.shape == input.shape);
}

TEST_CASE("reference architecture parameter count is in the contract range") {
    ArchitectureDescriptor arch; // 256 reference
    UNetNoskip net(arch, 0);
    size_t count = net.param_count();
    CHECK(count >= 430000);
    CHECK(count <= 600000);
    CHECK(arch.bottleneck_hw() == 16);
    CHECK(arch.bottleneck_dim() == 32768);

    size_t from_summary = 0;
    for (const auto& row : net.summary()) from_summary += row.param_count;
    CHECK(from_summary == count);
}

TEST_CASE("loss closed forms") {
    // perfect reconstruction in the clamped limit
    Rng rng(7);
    Tensor target = random_binary(rng, 1, 3, 8);
    Tensor recon = target;
    for (auto& v : recon.data) v = v > 0.5 ? 1.0 - 1e-7 : 1e-7;
    LossParts parts = bce_dice_loss(recon, target);
    CHECK(parts.dice < 1e-6);
    CHECK(parts.total < 1e-5);

    // uniform 0.5 prediction against all-zero target
    Tensor half(1, 3, 8, 8), zeros(1, 3, 8, 8);
    for (auto& v : half.data) v = 0.5;
    parts = bce_dice_loss(half, zeros);
    const double n = double(half.size());
    const double sum_r = 0.5 * n;
    CHECK(parts.bce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(parts.dice == doctest::Approx(1.0 - kDiceEps / (sum_r + kDiceEps)).epsilon(1e-12));
    CHECK(parts.total == doctest::Approx(0.5 * (std::log(2.0) + 1.0 - 1.0 / (sum_r + 1.0))).epsilon(1e-12));
}

TEST_CASE("loss is permutation invariant and rejects non-finite input") {
    Rng rng(17);
    Tensor recon = random_batch(rng, 1, 1, 8);
    Tensor target = random_binary(rng, 1, 1, 8);
    double base = bce_dice_loss(recon, target).total;

    std::vector<size_t> perm(recon.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    Tensor recon_p = recon, target_p = target;
    for (size_t i = 0; i < perm.size(); ++i) {
        recon_p.data[i] = recon.data[perm[i]];
        target_p.data[i] = target.data[perm[i]];
    }
    CHECK(bce_dice_loss(recon_p, target_p).total == doctest::Approx(base).epsilon(1e-12));

    recon.data[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(bce_dice_loss(recon, target), NonFinite);
}

TEST_CASE("cosine annealing schedule with warm restarts") {
    CHECK(lr_at(0.0) == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(lr_at(10.0) == doctest::Approx(0.0005).epsilon(1e-12));
    CHECK(lr_at(20.0) == doctest::Approx(0.0).epsilon(1e-15));        // end of period 1
    CHECK(lr_at(20.0 + 1e-9) == doctest::Approx(0.001).epsilon(1e-9)); // restart
    CHECK(lr_at(40.0) == doctest::Approx(0.0005).epsilon(1e-12));     // middle of period 2
    CHECK(lr_at(60.0) == doctest::Approx(0.0).epsilon(1e-15));        // end of period 2
    CHECK(lr_at(140.0) == doctest::Approx(0.0).epsilon(1e-15));       // end of period 3

    // the training loop restarts on the boundary epoch itself
    CHECK(lr_for_training_epoch(0, 0.001) == doctest::Approx(0.001));
    CHECK(lr_for_training_epoch(20, 0.001) == doctest::Approx(0.001).epsilon(1e-9));
    CHECK(lr_for_training_epoch(10, 0.001) == doctest::Approx(0.0005).epsilon(1e-6));

    Rng rng(19);
    for (int i = 0; i < 200; ++i) {
        double e = rng.uniform(0.0, 300.0);
        double lr = lr_at(e);
        CHECK(lr >= 0.0);
        CHECK(lr <= 0.001);
    }
}

TEST_CASE("adam steps") {
    Param a, b;
    a.name = "a";
    a.w = {1.0, -2.0};
    a.g = {0.0, 0.0};
    b.name = "b";
    b.w = {0.5};
    b.g = {0.0};
    Adam adam({&a, &b});

    adam.step(0.1);
    CHECK(a.w[0] == 1.0);
    CHECK(a.w[1] == -2.0);
    CHECK(b.w[0] == 0.5);

    // first effective step with |g| >> eps moves by about lr*sign(g)
    a.g = {0.3, -4.0};
    b.g = {0.0};
    Adam fresh({&a, &b});
    fresh.step(0.1);
    CHECK(a.w[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
    CHECK(a.w[1] == doctest::Approx(-2.0 + 0.1).epsilon(1e-6));
    CHECK(b.w[0] == 0.5); // untouched tensor stays put
}

TEST_CASE("checkpoint round-trip reproduces parameters and metadata") {
    UNetNoskip net(tiny_arch(), 77);
    CheckpointMeta meta;
    meta.seed = 77;
    meta.epoch = 9;
    meta.loss = 0.125;
    meta.config_hash = "cafef00d";
    auto dir = testutil::temp_dir("ckpt");
    save_checkpoint(net, meta, dir / "model.ckpt");

    auto [loaded, meta2] = load_checkpoint(dir / "model.ckpt");
    CHECK(meta2.seed == 77);
    CHECK(meta2.epoch == 9);
    CHECK(meta2.loss == doctest::Approx(0.125));
    CHECK(meta2.config_hash == "cafef00d");

    // float32 rounding is the only allowed difference; saving again must be
    // byte-identical
    save_checkpoint(*loaded, meta2, dir / "model2.ckpt");
    auto [reloaded, meta3] = load_checkpoint(dir / "model2.ckpt");
    auto p1 = loaded->params();
    auto p2 = reloaded->params();
    REQUIRE(p1.size() == p2.size());
    for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->w == p2[i]->w);

    Rng rng(5);
    Tensor input = random_batch(rng, 1, 3, 8);
    ForwardResult o1 = loaded->forward(input, Mode::Eval);
    ForwardResult o2 = reloaded->forward(input, Mode::Eval);
    CHECK(o1.recon.data == o2.recon.data);
}

TEST_CASE("parallel execution is bit-identical to sequential") {
    Rng rng(31);
    ArchitectureDescriptor arch;
    arch.input_size = 16;
    arch.encoder_channels = {4, 8};
    arch.bottleneck_channels = 16;
    Tensor input = random_batch(rng, 6, 3, 16);
    Tensor target = random_binary(rng, 6, 3, 16);

    auto run = [&](int jobs) {
        UNetNoskip net(arch, 123);
        net.set_jobs(jobs);
        ForwardResult out = net.forward(input, Mode::Train);
        net.zero_grad();
        net.backward(out.recon, target);
        std::vector<double> all = out.recon.data;
        for (Param* p : net.params()) all.insert(all.end(), p->g.begin(), p->g.end());
        return all;
    };
    CHECK(run(1) == run(4));
}

TEST_SUITE_END();
