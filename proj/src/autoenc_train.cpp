#include "airshape/autoenc/train.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "airshape/autoenc/loss.hpp"
#include "airshape/autoenc/optim.hpp"
#include "airshape/errors.hpp"

namespace airshape::ae {

Tensor stack_to_tensor(const vox::MipStack& stack) {
    Tensor t(1, 3, stack.size, stack.size);
    for (int v = 0; v < 3; ++v)
        std::copy(stack.views[size_t(v)].px.begin(), stack.views[size_t(v)].px.end(),
                  t.data.begin() + size_t(v) * t.plane());
    return t;
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, uint64_t seed) {
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    std::vector<int> fold_of(labels.size(), -1);
    Rng rng(derive_seed(seed, "folds"));
    int next = 0;
    for (auto& [cls, idx] : by_class) {
        rng.shuffle(idx);
        for (size_t i = 0; i < idx.size(); ++i) {
            fold_of[idx[i]] = next;
            next = (next + 1) % folds;
        }
    }
    return fold_of;
}

namespace {

Tensor gather_batch(const std::vector<Tensor>& subjects, const std::vector<size_t>& idx,
                    size_t begin, size_t end) {
    const Tensor& first = subjects[idx[begin]];
    Tensor batch(int(end - begin), first.c(), first.h(), first.w());
    for (size_t i = begin; i < end; ++i)
        std::copy(subjects[idx[i]].data.begin(), subjects[idx[i]].data.end(),
                  batch.data.begin() + (i - begin) * batch.sample_size());
    return batch;
}

// mean loss over a subject set, eval mode, batched
double eval_loss(UNetNoskip& net, const std::vector<Tensor>& subjects, const std::vector<size_t>& idx,
                 int batch_size) {
    double weighted = 0.0;
    size_t count = 0;
    for (size_t b = 0; b < idx.size(); b += size_t(batch_size)) {
        size_t e = std::min(idx.size(), b + size_t(batch_size));
        Tensor batch = gather_batch(subjects, idx, b, e);
        ForwardResult out = net.forward(batch, Mode::Eval);
        weighted += bce_dice_loss(out.recon, batch).total * double(e - b);
        count += e - b;
    }
    return weighted / double(count);
}

// one optimization epoch; returns mean train loss
double train_epoch(UNetNoskip& net, Adam& adam, const std::vector<Tensor>& subjects,
                   std::vector<size_t>& order, Rng& rng, int batch_size, double lr) {
    rng.shuffle(order);
    double weighted = 0.0;
    size_t count = 0;
    for (size_t b = 0; b < order.size(); b += size_t(batch_size)) {
        size_t e = std::min(order.size(), b + size_t(batch_size));
        Tensor batch = gather_batch(subjects, order, b, e);
        ForwardResult out = net.forward(batch, Mode::Train);
        LossParts loss = bce_dice_loss(out.recon, batch);
        net.zero_grad();
        net.backward(out.recon, batch);
        adam.step(lr);
        weighted += loss.total * double(e - b);
        count += e - b;
    }
    return weighted / double(count);
}

} // namespace

TrainResult train(const ArchitectureDescriptor& arch, const std::vector<Tensor>& subjects,
                  const std::vector<int>& class_labels, const TrainConfig& config) {
    if (subjects.size() != class_labels.size()) throw SizeMismatch("subjects vs labels");
    std::map<int, int> class_counts;
    for (int c : class_labels) class_counts[c]++;
    for (const auto& [cls, n] : class_counts)
        if (n < config.folds)
            throw InsufficientData("class " + std::to_string(cls) + " has " + std::to_string(n) +
                                   " samples; need >= " + std::to_string(config.folds));

    TrainResult result;
    result.fold_of_subject = stratified_folds(class_labels, config.folds, config.seed);

    for (int fold = 0; fold < config.folds; ++fold) {
        std::vector<size_t> train_idx, val_idx;
        for (size_t i = 0; i < subjects.size(); ++i)
            (result.fold_of_subject[i] == fold ? val_idx : train_idx).push_back(i);

        UNetNoskip net(arch, derive_seed(config.seed, "init", uint64_t(fold)));
        net.set_jobs(config.jobs);
        Adam adam(net.params(), config.beta1, config.beta2, config.adam_eps);
        Rng order_rng(derive_seed(config.seed, "order", uint64_t(fold)));

        FoldOutcome outcome;
        outcome.fold = fold;
        outcome.best_val_loss = std::numeric_limits<double>::infinity();
        int epochs_without_improvement = 0;

        std::vector<size_t> order = train_idx;
        for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
            double lr = lr_for_training_epoch(epoch, config.lr0, config.first_period, config.period_mult);
            double train_loss = train_epoch(net, adam, subjects, order, order_rng, config.batch_size, lr);
            double val_loss = eval_loss(net, subjects, val_idx, config.batch_size);
            result.curves.push_back({fold, epoch, lr, train_loss, val_loss});
            outcome.epochs_run = epoch + 1;

            if (val_loss < outcome.best_val_loss - config.improvement_tol) {
                outcome.best_val_loss = val_loss;
                outcome.best_epoch = epoch;
                outcome.best_state = net.snapshot_state();
                epochs_without_improvement = 0;
            } else {
                ++epochs_without_improvement;
            }
            if (epochs_without_improvement >= config.early_stop_patience) break;
        }
        if (outcome.best_state.empty()) outcome.best_state = net.snapshot_state();
        result.folds.push_back(std::move(outcome));
    }

    result.best_fold = 0;
    for (int f = 1; f < int(result.folds.size()); ++f)
        if (result.folds[size_t(f)].best_val_loss < result.folds[size_t(result.best_fold)].best_val_loss)
            result.best_fold = f;
    return result;
}

FineTuneInfo fine_tune(UNetNoskip& net, const std::vector<Tensor>& subjects, const TrainConfig& config) {
    std::vector<size_t> all(subjects.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;

    FineTuneInfo info;
    info.initial_lr = config.fine_tune_lr0;
    info.loss_before = eval_loss(net, subjects, all, config.batch_size);

    Adam adam(net.params(), config.beta1, config.beta2, config.adam_eps);
    Rng order_rng(derive_seed(config.seed, "finetune-order"));
    std::vector<size_t> order = all;
    for (int epoch = 0; epoch < config.fine_tune_epochs; ++epoch) {
        double lr = lr_for_training_epoch(epoch, config.fine_tune_lr0, config.first_period, config.period_mult);
        double train_loss = train_epoch(net, adam, subjects, order, order_rng, config.batch_size, lr);
        info.curves.push_back({-1, epoch, lr, train_loss, 0.0});
        info.epochs_run = epoch + 1;
    }
    info.loss_after = eval_loss(net, subjects, all, config.batch_size);
    return info;
}

std::vector<EpochRecord> train_single(UNetNoskip& net, const std::vector<Tensor>& subjects,
                                      int epochs, double lr0, const TrainConfig& config) {
    Adam adam(net.params(), config.beta1, config.beta2, config.adam_eps);
    Rng order_rng(derive_seed(config.seed, "single-order"));
    std::vector<size_t> order(subjects.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<EpochRecord> curves;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double lr = lr_for_training_epoch(epoch, lr0, config.first_period, config.period_mult);
        double train_loss = train_epoch(net, adam, subjects, order, order_rng, config.batch_size, lr);
        curves.push_back({-1, epoch, lr, train_loss, 0.0});
    }
    return curves;
}

std::vector<double> encode(UNetNoskip& net, const vox::MipStack& stack) {
    Tensor t = stack_to_tensor(stack);
    ForwardResult out = net.forward(t, Mode::Eval);
    return out.bottleneck.data;
}

} // namespace airshape::ae
