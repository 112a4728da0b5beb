#include "imn/training/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "imn/model/checkpoint.hpp"
#include "imn/tensor/random.hpp"
#include "imn/training/loss.hpp"

namespace imn {

namespace {

void check_split(const Dataset& data, Split expected, const ImnConfig& config) {
  const std::string name(to_string(expected));
  if (data.split != expected) {
    throw DataError("fit expects a " + name + " split but was given one tagged '" + std::string(to_string(data.split)) +
                    "'");
  }
  if (data.empty()) throw DataError(name + " split is empty");
  if (!data.labeled()) throw DataError(name + " split is not labeled");
  for (const auto& r : data.records) {
    if (!r.normalized) throw DataError(name + " record '" + r.id + "' is not normalized");
    if (r.num_leads() != config.num_leads || r.length() != config.signal_length) {
      throw DataError(name + " record '" + r.id + "' has shape " + to_string(r.signal.shape()) + ", model expects (" +
                      std::to_string(config.num_leads) + ", " + std::to_string(config.signal_length) + ")");
    }
  }
  for (int y : data.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= std::max<std::size_t>(config.num_outputs, 2)) {
      throw DataError(name + " split has label " + std::to_string(y) + " outside the model's classes");
    }
  }
}

Tensor<float> stack(const Dataset& data, std::span<const std::size_t> indices) {
  const auto& first = data.records[indices[0]].signal;
  const std::size_t leads = first.extent(0), length = first.extent(1), stride = leads * length;
  Tensor<float> batch({indices.size(), leads, length});
  auto out = batch.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = data.records[indices[i]].signal.data();
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return batch;
}

std::string epoch_dir_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03zu", epoch);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(lambda_l1 >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (checkpoint_every > 0 && checkpoint_dir.empty()) {
    throw std::invalid_argument("checkpoint cadence set without a checkpoint directory");
  }
}

nlohmann::json history_line(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_auroc", nullptr}, {"mean_abs_W", r.mean_abs_w}};
  if (r.val_auroc) j["val_auroc"] = *r.val_auroc;
  return j;
}

Predictions predict_dataset(const ImnModel& model, const Dataset& data, std::size_t batch_size) {
  if (data.empty()) throw DataError("cannot predict on an empty dataset");
  std::vector<const Tensor<float>*> signals;
  signals.reserve(data.size());
  for (const auto& r : data.records) signals.push_back(&r.signal);
  const auto outputs = model.predict_batch(signals, batch_size);

  Predictions p;
  p.labels = data.labels;
  p.scores.reserve(outputs.size());
  double abs_sum = 0.0;
  std::size_t count = 0;
  for (const auto& out : outputs) {
    p.scores.push_back(static_cast<double>(out.positive_probability()));
    for (float w : out.weights.data()) abs_sum += std::abs(static_cast<double>(w));
    count += out.weights.size();
  }
  p.mean_abs_w = abs_sum / static_cast<double>(count);
  return p;
}

MetricsReport evaluate(const ImnModel& model, const Dataset& data, double threshold) {
  if (!data.labeled()) throw DataError("evaluate needs a non-empty labeled dataset");
  const auto p = predict_dataset(model, data);
  return compute_metrics(p.scores, p.labels, threshold);
}

FitResult fit(ImnModel& model, const Dataset& train, const Dataset& val, const TrainConfig& config,
              const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  check_split(train, Split::train, model.config());
  check_split(val, Split::val, model.config());
  std::set<std::string> train_ids;
  for (const auto& r : train.records) train_ids.insert(r.id);
  for (const auto& r : val.records) {
    if (train_ids.count(r.id)) throw DataError("record '" + r.id + "' appears in both train and val splits");
  }

  Rng rng(config.seed);
  Adam<float> adam(AdamOptions{config.learning_rate});
  model.set_requires_grad(true);
  const auto params = model.parameters();
  const Formulation formulation = model.formulation();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  FitResult result;
  ImnModel best = model;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, n);
      std::vector<int> targets(n);
      for (std::size_t i = 0; i < n; ++i) targets[i] = train.labels[idx[i]];

      const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index);
      Tape<float> tape;
      try {
        auto x = tape.constant(stack(train, idx));
        auto graph = model.forward(tape, x, BnMode::train);
        auto loss = composite_loss(tape, formulation, graph.logits, targets, graph.weights, config.lambda_l1);
        const float value = loss.total.value()[0];
        if (!std::isfinite(value)) throw NumericError("non-finite training loss");
        tape.backward(loss.total);
        adam.step(params);
        loss_sum += static_cast<double>(value) * static_cast<double>(n);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (" + where + ")");
      }
      model.zero_grad();
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    const auto p = predict_dataset(model, val);
    record.val = compute_metrics(p.scores, p.labels);
    record.val_auroc = record.val.auroc;
    record.mean_abs_w = p.mean_abs_w;

    const bool improved =
        record.val_auroc && (!result.best_val_auroc || *record.val_auroc > *result.best_val_auroc);
    if (improved || (!result.best_val_auroc && !record.val_auroc)) {
      if (improved) result.best_val_auroc = record.val_auroc;
      result.best_epoch = epoch;
      best = model;
      since_best = 0;
    } else {
      ++since_best;
    }

    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      save_checkpoint(model, config.checkpoint_dir / epoch_dir_name(epoch));
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
    if (config.patience > 0 && since_best >= config.patience && epoch < config.epochs) {
      result.stopped_early = true;
      break;
    }
  }

  model = std::move(best);
  model.set_requires_grad(false);
  return result;
}

}  // namespace imn
