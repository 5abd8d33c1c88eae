#ifndef AIRSHAPE_AUTOENC_TRAIN_HPP
#define AIRSHAPE_AUTOENC_TRAIN_HPP

#include <cstdint>
#include <vector>

#include "airshape/autoenc/net.hpp"
#include "airshape/voxform.hpp"

namespace airshape::ae {

struct TrainConfig {
    int batch_size = 12;
    double lr0 = 0.001;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double first_period = 20.0, period_mult = 2.0;
    int early_stop_patience = 10;
    double improvement_tol = 1e-6; // strict decrease required to count as improvement
    int max_epochs = 60;
    int folds = 5;
    uint64_t seed = 0;
    int jobs = 1;
    double fine_tune_lr0 = 1e-4;
    int fine_tune_epochs = 5;
};

struct EpochRecord {
    int fold = 0; // -1 for fine-tuning
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct FoldOutcome {
    int fold = 0;
    double best_val_loss = 0.0;
    int best_epoch = 0;
    int epochs_run = 0;
    std::vector<std::vector<double>> best_state; // params + buffers at the best epoch
};

struct TrainResult {
    std::vector<FoldOutcome> folds;
    std::vector<EpochRecord> curves;
    std::vector<int> fold_of_subject;
    int best_fold = -1;
};

struct FineTuneInfo {
    int epochs_run = 0;
    double initial_lr = 0.0;
    double loss_before = 0.0;
    double loss_after = 0.0;
    std::vector<EpochRecord> curves;
};

// 3-view stack as a 1 x 3 x H x W training sample.
Tensor stack_to_tensor(const vox::MipStack& stack);

// Deterministic stratified fold assignment: indices grouped by label,
// shuffled with the seed, dealt round-robin.
std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, uint64_t seed);

// K-fold training of the autoencoder (targets are the inputs). Early
// stopping on validation loss after `early_stop_patience` epochs without an
// improvement greater than improvement_tol; each fold keeps its best-epoch
// weights. Throws InsufficientData when any class has fewer samples than
// folds.
TrainResult train(const ArchitectureDescriptor& arch, const std::vector<Tensor>& subjects,
                  const std::vector<int>& class_labels, const TrainConfig& config);

// Fixed-epoch fine-tuning pass (no early stopping, schedule restarted at
// fine_tune_lr0). loss_before/loss_after are eval-mode losses on `subjects`.
FineTuneInfo fine_tune(UNetNoskip& net, const std::vector<Tensor>& subjects, const TrainConfig& config);

// Plain optimization over all subjects, no folds or early stopping. Returns
// one record per epoch (fold = -1, val_loss = 0).
std::vector<EpochRecord> train_single(UNetNoskip& net, const std::vector<Tensor>& subjects,
                                      int epochs, double lr0, const TrainConfig& config);

// Eval-mode bottleneck features, flattened.
std::vector<double> encode(UNetNoskip& net, const vox::MipStack& stack);

} // namespace airshape::ae

#endif
