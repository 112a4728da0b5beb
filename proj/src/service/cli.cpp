#include "imn/service/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "imn/attribution/ablation.hpp"
#include "imn/attribution/export.hpp"
#include "imn/data/io.hpp"
#include "imn/data/synthetic.hpp"
#include "imn/model/checkpoint.hpp"
#include "imn/service/api.hpp"
#include "imn/service/http_server.hpp"
#include "imn/training/trainer.hpp"

namespace imn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Superclass parse_task(const std::string& task) {
  std::string upper = task;
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char ch) { return std::toupper(ch); });
  const Superclass s = parse_superclass(upper);
  if (s == Superclass::NORM) throw UsageError("--task must be one of cd, hyp, mi, sttc");
  return s;
}

std::optional<Formulation> formulation_guard(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return parse_formulation(text);
}

FoldSplits load_task(const fs::path& manifest, const std::string& task) {
  const Dataset all = load_records(load_manifest(manifest));
  FoldSplits splits = split_folds(curate_binary_task(all, parse_task(task)));
  for (Dataset* d : {&splits.train, &splits.val, &splits.test}) {
    for (auto& r : d->records) {
      if (!r.normalized) r = zscore(r);
    }
  }
  return splits;
}

EcgRecord find_record(const fs::path& manifest, const std::string& id) {
  const DatasetManifest m = load_manifest(manifest);
  for (const auto& e : m.records) {
    if (e.id != id) continue;
    EcgRecord r = load_record(m.base_dir / e.path);
    return r.normalized ? r : zscore(r);
  }
  throw DataError("unknown record id '" + id + "'");
}

SegmentMask parse_segment(const std::string& text) {
  std::vector<std::size_t> parts;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = text.find(':', pos);
    const std::string piece = text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(piece, &used);
      if (used != piece.size() || piece.empty() || piece[0] == '-') throw std::invalid_argument(piece);
      parts.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--segment '" + text + "' must be START:END or LEAD:START:END");
    }
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (parts.size() == 2) return {std::nullopt, parts[0], parts[1]};
  if (parts.size() == 3) return {parts[0], parts[1], parts[2]};
  throw UsageError("--segment '" + text + "' must be START:END or LEAD:START:END");
}

void emit(const json& doc, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << doc.dump(2) << "\n";
  } else {
    write_text(path, doc.dump(2) + "\n");
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interpretable hypernetwork for 12-lead ECG classification", "imn"};
  app.require_subcommand(1);

  // synth
  SynthSpec synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a seeded synthetic two-class dataset");
  synth_cmd->add_option("--out", synth_out, "Output directory (manifest.json + records/)")->required();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--records-per-class", synth.records_per_class, "Records per class");
  synth_cmd->add_option("--freq-len", synth.signal_length, "Samples per lead (L)");
  synth_cmd->add_option("--fs", synth.fs, "Sampling rate in Hz");
  synth_cmd->add_option("--noise", synth.noise_std, "White noise standard deviation");
  synth_cmd->add_option("--amplitude", synth.anomaly.amplitude, "Anomaly plateau amplitude");
  synth_cmd->add_option("--onset", synth.anomaly.onset, "Anomaly onset as a fraction of L");
  synth_cmd->add_option("--duration", synth.anomaly.duration, "Anomaly duration as a fraction of L");
  synth_cmd->add_option("--anomaly-leads", synth.anomaly.leads, "Leads carrying the anomaly")->delimiter(',');

  // shared options
  std::string manifest, checkpoint, task = "mi", formulation, out_path;
  std::size_t freq_len = 0;

  // train
  TrainConfig train;
  std::string variant = "transnet", history_path;
  std::size_t train_limit = 0;
  std::string train_formulation = "binary";
  auto* train_cmd = app.add_subcommand("train", "Train a model on the folds 1-8 / fold 9 split of a manifest");
  train_cmd->add_option("--manifest", manifest, "Dataset manifest")->required();
  train_cmd->add_option("--checkpoint", checkpoint, "Output checkpoint directory")->required();
  train_cmd->add_option("--task", task, "Curation target: cd, hyp, mi or sttc");
  train_cmd->add_option("--formulation", train_formulation, "binary or categorical");
  train_cmd->add_option("--variant", variant, "transnet or direct");
  train_cmd->add_option("--freq-len", freq_len, "Expected samples per lead (checked against the records)");
  train_cmd->add_option("--lambda", train.lambda_l1, "Weight of the mean |W| penalty");
  train_cmd->add_option("--seed", train.seed, "Seed for initialization and shuffling");
  train_cmd->add_option("--epochs", train.epochs, "Maximum number of epochs");
  train_cmd->add_option("--batch-size", train.batch_size, "Mini-batch size");
  train_cmd->add_option("--lr", train.learning_rate, "Adam learning rate");
  train_cmd->add_option("--patience", train.patience, "Stop after this many epochs without a val AUROC gain (0 = off)");
  train_cmd->add_option("--checkpoint-every", train.checkpoint_every, "Also save <checkpoint>/epoch_NNN every n epochs");
  train_cmd->add_option("--history", history_path, "History JSONL path (default <checkpoint>/history.jsonl)");
  train_cmd->add_option("--train-limit", train_limit, "Use only the first n training records (0 = all)");

  // eval
  std::string split = "test";
  double threshold = kDefaultThreshold;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval_cmd->add_option("--manifest", manifest, "Dataset manifest")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--task", task, "Curation target: cd, hyp, mi or sttc");
  eval_cmd->add_option("--formulation", formulation, "Require this formulation");
  eval_cmd->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--threshold", threshold, "Decision threshold");
  eval_cmd->add_option("--out", out_path, "Write the metrics JSON here instead of stdout");

  // attribute
  std::string record_id, sign = "positive", heatmap_path;
  std::optional<std::size_t> k;
  std::size_t window = 0, stride = 0, top_k = 5;
  auto* attr_cmd = app.add_subcommand("attribute", "Export the segment-aggregated impact map of one record");
  attr_cmd->add_option("--manifest", manifest, "Dataset manifest")->required();
  attr_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  attr_cmd->add_option("--id", record_id, "Record id")->required();
  attr_cmd->add_option("--window", window, "Window length in samples")->required();
  attr_cmd->add_option("--stride", stride, "Stride in samples")->required();
  attr_cmd->add_option("--k", k, "Class index (default: positive class)");
  attr_cmd->add_option("--top-k", top_k, "Number of top contributors");
  attr_cmd->add_option("--sign", sign, "positive, negative or absolute");
  attr_cmd->add_option("--formulation", formulation, "Require this formulation");
  attr_cmd->add_option("--out", out_path, "Write the export JSON here instead of stdout");
  attr_cmd->add_option("--heatmap", heatmap_path, "Also write the C x T contribution matrix as CSV");

  // ablate
  std::vector<std::size_t> leads;
  std::vector<std::string> segments;
  std::string mode = "rerun";
  auto* ablate_cmd = app.add_subcommand("ablate", "Zero leads or segments of one record and re-predict");
  ablate_cmd->add_option("--manifest", manifest, "Dataset manifest")->required();
  ablate_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  ablate_cmd->add_option("--id", record_id, "Record id")->required();
  ablate_cmd->add_option("--leads", leads, "Leads to zero entirely")->delimiter(',');
  ablate_cmd->add_option("--segment", segments, "START:END (all leads) or LEAD:START:END; repeatable");
  ablate_cmd->add_option("--mode", mode, "rerun or frozen");
  ablate_cmd->add_option("--k", k, "Class index (default: positive class)");
  ablate_cmd->add_option("--formulation", formulation, "Require this formulation");

  // serve
  std::string host = kDefaultHost;
  int port = kDefaultPort;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the explorer HTTP API");
  serve_cmd->add_option("--manifest", manifest, "Dataset manifest")->required();
  serve_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  serve_cmd->add_option("--host", host, "Bind address")->envname("IMN_HOST");
  serve_cmd->add_option("--port", port, "Port")->envname("IMN_PORT");
  serve_cmd->add_option("--formulation", formulation, "Require this formulation");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) {
      const fs::path path = write_dataset(generate_synthetic(synth), synth_out);
      out << "wrote " << 2 * synth.records_per_class << " records to " << path.string() << "\n";
    } else if (train_cmd->parsed()) {
      FoldSplits splits = load_task(manifest, task);
      for (const auto& w : splits.warnings) err << "warning: " << w << "\n";
      if (train_limit > 0 && splits.train.size() > train_limit) {
        splits.train.records.resize(train_limit);
        splits.train.labels.resize(train_limit);
      }
      if (splits.train.empty()) throw DataError("no training records for task '" + task + "'");
      const std::size_t length = splits.train.records.front().length();
      if (freq_len != 0 && freq_len != length) {
        throw UsageError("--freq-len " + std::to_string(freq_len) + " disagrees with record length " +
                         std::to_string(length));
      }
      ImnConfig config = make_config(parse_formulation(train_formulation), length);
      config.num_leads = splits.train.records.front().num_leads();
      config.lambda_l1 = train.lambda_l1;
      config.variant = parse_variant(variant);
      ImnModel model(config, train.seed);

      if (history_path.empty()) history_path = (fs::path(checkpoint) / "history.jsonl").string();
      fs::create_directories(checkpoint);
      if (train.checkpoint_every > 0) train.checkpoint_dir = checkpoint;
      std::ofstream history(history_path, std::ios::binary | std::ios::trunc);
      if (!history) throw std::runtime_error("cannot write '" + history_path + "'");
      const FitResult result = fit(model, splits.train, splits.val, train, [&](const EpochRecord& r) {
        history << history_line(r).dump() << "\n";
        history.flush();
        err << "epoch " << r.epoch << " loss " << r.train_loss << " val_auroc "
            << (r.val_auroc ? std::to_string(*r.val_auroc) : std::string("n/a")) << "\n";
      });
      save_checkpoint(model, checkpoint);
      json summary = {{"checkpoint", checkpoint},
                      {"history", history_path},
                      {"best_epoch", result.best_epoch},
                      {"best_val_auroc", nullptr},
                      {"epochs_run", result.history.size()},
                      {"stopped_early", result.stopped_early}};
      if (result.best_val_auroc) summary["best_val_auroc"] = *result.best_val_auroc;
      out << summary.dump(2) << "\n";
    } else if (eval_cmd->parsed()) {
      const ImnModel model = load_checkpoint(checkpoint, formulation_guard(formulation));
      const FoldSplits splits = load_task(manifest, task);
      const Dataset& data = split == "train" ? splits.train : (split == "val" ? splits.val : splits.test);
      if (data.empty()) throw DataError(split + " split is empty for task '" + task + "'");
      json report = to_json(evaluate(model, data, threshold));
      report["split"] = split;
      emit(report, out_path, out);
    } else if (attr_cmd->parsed()) {
      const ImnModel model = load_checkpoint(checkpoint, formulation_guard(formulation));
      const EcgRecord r = find_record(manifest, record_id);
      const auto map = impact_map(r.signal, model.predict(r.signal), k.value_or(default_class(model)), r.id);
      const auto grid = aggregate_segments(map, window, stride);
      emit(attribution_export(map, grid, top_k_contributors(grid, top_k, parse_rank_sign(sign))), out_path, out);
      if (!heatmap_path.empty()) write_text(heatmap_path, heatmap_csv(grid));
    } else if (ablate_cmd->parsed()) {
      const ImnModel model = load_checkpoint(checkpoint, formulation_guard(formulation));
      const EcgRecord r = find_record(manifest, record_id);
      AblationRequest req;
      req.lead_mask = leads;
      for (const auto& s : segments) req.segments.push_back(parse_segment(s));
      req.mode = parse_ablation_mode(mode);
      req.k = k;
      const AblationResult result = ablate(model, r, req);
      for (const auto& w : result.warnings) err << "warning: " << w << "\n";
      json doc = ablation_json(result);
      doc["id"] = r.id;
      out << doc.dump(2) << "\n";
    } else if (serve_cmd->parsed()) {
      const ExplorerService service(load_checkpoint(checkpoint, formulation_guard(formulation)),
                                    load_records(load_manifest(manifest)));
      HttpServer server(service);
      out << "listening on http://" << host << ":" << port << "\n" << std::flush;
      server.listen(host, port);
    }
  } catch (const ModelMismatchError& e) {
    err << "error [model_mismatch]: " << e.what() << "\n";
    return kExitModelMismatch;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace imn
