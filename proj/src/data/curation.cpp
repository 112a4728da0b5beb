#include "imn/data/dataset.hpp"

namespace imn {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::unassigned: return "unassigned";
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

bool xor_included(const LabelSet& labels, Superclass target) {
  return labels.contains(target) != labels.contains(Superclass::NORM);
}

Dataset curate_binary_task(const Dataset& input, Superclass target) {
  if (target == Superclass::NORM) throw DataError("curation target must be a pathology, not NORM");
  Dataset out;
  out.split = input.split;
  for (const auto& record : input.records) {
    if (!xor_included(record.labels, target)) continue;
    out.records.push_back(record);
    out.labels.push_back(record.labels.contains(target) ? 1 : 0);
  }
  return out;
}

FoldSplits split_folds(const Dataset& input) {
  FoldSplits splits;
  splits.train.split = Split::train;
  splits.val.split = Split::val;
  splits.test.split = Split::test;
  const bool labeled = input.labeled();
  for (std::size_t i = 0; i < input.records.size(); ++i) {
    const auto& record = input.records[i];
    if (record.fold < 1 || record.fold > 10) {
      throw DataError("record '" + record.id + "' has missing or invalid fold " + std::to_string(record.fold));
    }
    Dataset& target = record.fold <= 8 ? splits.train : (record.fold == 9 ? splits.val : splits.test);
    target.records.push_back(record);
    if (labeled) target.labels.push_back(input.labels[i]);
  }
  if (splits.train.empty()) splits.warnings.emplace_back("train split (folds 1-8) is empty");
  if (splits.val.empty()) splits.warnings.emplace_back("validation split (fold 9) is empty");
  if (splits.test.empty()) splits.warnings.emplace_back("test split (fold 10) is empty");
  return splits;
}

Dataset normalize(const Dataset& input) {
  Dataset out;
  out.split = input.split;
  out.labels = input.labels;
  out.records.reserve(input.records.size());
  for (const auto& r : input.records) out.records.push_back(zscore(r));
  return out;
}

}  // namespace imn
