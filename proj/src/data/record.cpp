#include "imn/data/record.hpp"

#include <cmath>

namespace imn {

std::string_view to_string(Superclass s) {
  switch (s) {
    case Superclass::NORM: return "NORM";
    case Superclass::MI: return "MI";
    case Superclass::STTC: return "STTC";
    case Superclass::CD: return "CD";
    case Superclass::HYP: return "HYP";
  }
  return "?";
}

Superclass parse_superclass(std::string_view token) {
  for (auto s : kAllSuperclasses) {
    if (to_string(s) == token) return s;
  }
  throw DataError("unknown label token '" + std::string(token) + "'");
}

LabelSet::LabelSet(std::initializer_list<Superclass> labels) {
  for (auto s : labels) insert(s);
}

LabelSet LabelSet::from_bits(std::uint8_t bits) {
  LabelSet set;
  set.bits_ = static_cast<std::uint8_t>(bits & 0x1F);
  return set;
}

std::vector<std::string> LabelSet::tokens() const {
  std::vector<std::string> out;
  for (auto s : kAllSuperclasses) {
    if (contains(s)) out.emplace_back(to_string(s));
  }
  return out;
}

LabelSet LabelSet::parse(const std::vector<std::string>& tokens) {
  LabelSet set;
  for (const auto& t : tokens) set.insert(parse_superclass(t));
  return set;
}

void EcgRecord::validate() const {
  if (signal.rank() != 2) {
    throw DataError("record '" + id + "': signal must be (C, L), got " + to_string(signal.shape()));
  }
  if (!signal.all_finite()) throw DataError("record '" + id + "': signal contains non-finite values");
  if (fold < 1 || fold > 10) throw DataError("record '" + id + "': fold " + std::to_string(fold) + " outside 1..10");
}

EcgRecord zscore(const EcgRecord& record, double eps) {
  if (record.normalized) throw DataError("record '" + record.id + "' is already normalized");
  EcgRecord out = record;
  const std::size_t leads = record.num_leads(), length = record.length();
  for (std::size_t c = 0; c < leads; ++c) {
    const float* x = record.signal.data().data() + c * length;
    double mean = 0.0;
    for (std::size_t t = 0; t < length; ++t) mean += x[t];
    mean /= static_cast<double>(length);
    double var = 0.0;
    for (std::size_t t = 0; t < length; ++t) var += (x[t] - mean) * (x[t] - mean);
    const double sigma = std::sqrt(var / static_cast<double>(length));
    float* y = out.signal.data().data() + c * length;
    for (std::size_t t = 0; t < length; ++t) y[t] = static_cast<float>((x[t] - mean) / (sigma + eps));
  }
  out.normalized = true;
  return out;
}

}  // namespace imn
