#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "imn/data/dataset.hpp"
#include "imn/model/model.hpp"
#include "imn/training/metrics.hpp"

namespace imn {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double lambda_l1 = 1e-4;
  std::uint64_t seed = 0;
  std::size_t patience = 0;          // epochs without a val AUROC gain before stopping; 0 disables
  std::size_t checkpoint_every = 0;  // write <checkpoint_dir>/epoch_NNN every n epochs; 0 disables
  std::filesystem::path checkpoint_dir;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_auroc;
  double mean_abs_w = 0.0;  // over the validation set, eval mode
  MetricsReport val;
};

/// One history line: {"epoch", "train_loss", "val_auroc", "mean_abs_W"}.
nlohmann::json history_line(const EpochRecord& record);

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::optional<double> best_val_auroc;
  bool stopped_early = false;
};

/// Trains with Adam on shuffled mini-batches and leaves `model` holding the
/// parameters of the epoch with the best validation AUROC (the last epoch if
/// AUROC is never defined). `train` must carry the train split tag and `val`
/// the val tag; both must be labeled, normalized and disjoint by id.
FitResult fit(ImnModel& model, const Dataset& train, const Dataset& val, const TrainConfig& config,
              const std::function<void(const EpochRecord&)>& on_epoch = {});

struct Predictions {
  std::vector<double> scores;  // positive-class probability per record
  std::vector<int> labels;
  double mean_abs_w = 0.0;
};

Predictions predict_dataset(const ImnModel& model, const Dataset& data, std::size_t batch_size = 32);

/// Eval-mode metrics at the given threshold.
MetricsReport evaluate(const ImnModel& model, const Dataset& data, double threshold = kDefaultThreshold);

}  // namespace imn
