#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "imn/data/record.hpp"

namespace imn {

/// Provenance tag carried by every dataset so that training code can refuse
/// anything that is not a train or validation split.
enum class Split { unassigned, train, val, test };

std::string_view to_string(Split s);

struct Dataset {
  std::vector<EcgRecord> records;
  std::vector<int> labels;  // parallel to records once curated; empty before
  Split split = Split::unassigned;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  bool labeled() const noexcept { return !records.empty() && labels.size() == records.size(); }
};

/// Keeps a record iff exactly one of {target, NORM} is among its labels.
/// Label 1 means the target is present, 0 means NORM is present.
Dataset curate_binary_task(const Dataset& input, Superclass target);

/// True when the record would be kept for `target`.
bool xor_included(const LabelSet& labels, Superclass target);

struct FoldSplits {
  Dataset train;  // folds 1-8
  Dataset val;    // fold 9
  Dataset test;   // fold 10
  std::vector<std::string> warnings;
};

FoldSplits split_folds(const Dataset& input);

/// Z-scores every record of a dataset (labels and split tag are kept).
Dataset normalize(const Dataset& input);

}  // namespace imn
