#include "imn/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "imn/tensor/random.hpp"

namespace imn {

namespace {

struct Wave {
  double offset_s;  // relative to the R peak
  double width_s;
  double amplitude;
};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

void SynthSpec::validate() const {
  if (num_leads == 0 || signal_length == 0) throw DataError("synthetic spec needs C >= 1 and L >= 1");
  if (!(fs > 0.0)) throw DataError("synthetic spec needs fs > 0");
  if (!(beat_rate_bpm > 0.0)) throw DataError("synthetic spec needs a positive beat rate");
  if (beat_rate_jitter < 0.0 || beat_rate_jitter >= 1.0) throw DataError("beat rate jitter must be in [0, 1)");
  if (lead_gain_jitter < 0.0 || lead_gain_jitter >= 1.0) throw DataError("lead gain jitter must be in [0, 1)");
  if (noise_std < 0.0) throw DataError("noise std must be >= 0");
  if (anomaly.onset < 0.0 || anomaly.duration < 0.0 || anomaly.onset + anomaly.duration > 1.0) {
    throw DataError("anomaly interval must satisfy 0 <= onset and onset + duration <= 1");
  }
  for (auto lead : anomaly.leads) {
    if (lead >= num_leads) {
      throw DataError("anomaly lead " + std::to_string(lead) + " outside [0, " + std::to_string(num_leads) + ")");
    }
  }
}

std::pair<std::size_t, std::size_t> anomaly_range(const SynthSpec& spec) {
  const double length = static_cast<double>(spec.signal_length);
  const auto begin = static_cast<std::size_t>(std::ceil(spec.anomaly.onset * length));
  const auto end = static_cast<std::size_t>(std::ceil((spec.anomaly.onset + spec.anomaly.duration) * length));
  return {std::min(begin, spec.signal_length), std::min(end, spec.signal_length)};
}

EcgRecord synthesize_record(const SynthSpec& spec, std::uint64_t record_seed, bool positive) {
  spec.validate();
  Rng rng(mix(spec.seed, record_seed));
  const std::size_t leads = spec.num_leads, length = spec.signal_length;

  const double rate = spec.beat_rate_bpm * rng.uniform(1.0 - spec.beat_rate_jitter, 1.0 + spec.beat_rate_jitter);
  const double rr = 60.0 / rate;
  const double phase = rng.uniform(0.0, rr);
  const Wave waves[] = {
      {-0.20, 0.025, spec.p_amplitude},        {-0.03, 0.010, -0.1 * spec.qrs_amplitude},
      {0.00, 0.012, spec.qrs_amplitude},       {0.03, 0.010, -0.25 * spec.qrs_amplitude},
      {0.25, 0.040, spec.t_amplitude},
  };

  std::vector<double> gains(leads);
  for (std::size_t c = 0; c < leads; ++c) {
    const double pattern = 0.6 + 0.4 * std::cos(0.7 * static_cast<double>(c));
    gains[c] = pattern * rng.uniform(1.0 - spec.lead_gain_jitter, 1.0 + spec.lead_gain_jitter);
  }

  const double duration_s = static_cast<double>(length) / spec.fs;
  std::vector<double> beat(length, 0.0);
  for (double r_peak = phase - rr; r_peak < duration_s + rr; r_peak += rr) {
    for (std::size_t t = 0; t < length; ++t) {
      const double time = static_cast<double>(t) / spec.fs;
      for (const auto& w : waves) {
        const double d = (time - r_peak - w.offset_s) / w.width_s;
        if (std::abs(d) < 8.0) beat[t] += w.amplitude * std::exp(-0.5 * d * d);
      }
    }
  }

  EcgRecord record;
  record.id = std::string(positive ? "pos" : "neg") + "_" + std::to_string(record_seed);
  record.fs = spec.fs;
  record.labels = positive ? LabelSet{Superclass::MI} : LabelSet{Superclass::NORM};
  record.signal = Tensor<float>({leads, length});
  auto out = record.signal.data();
  for (std::size_t c = 0; c < leads; ++c) {
    for (std::size_t t = 0; t < length; ++t) {
      out[c * length + t] = static_cast<float>(gains[c] * beat[t] + spec.noise_std * rng.normal());
    }
  }
  if (positive) {
    const auto [begin, end] = anomaly_range(spec);
    for (auto c : spec.anomaly.leads) {
      for (std::size_t t = begin; t < end; ++t) {
        out[c * length + t] = static_cast<float>(static_cast<double>(out[c * length + t]) + spec.anomaly.amplitude);
      }
    }
    record.notes = "synthetic plateau on " + std::to_string(spec.anomaly.leads.size()) + " leads, samples [" +
                   std::to_string(begin) + ", " + std::to_string(end) + ")";
  }
  return record;
}

Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Dataset out;
  out.records.reserve(2 * spec.records_per_class);
  for (std::size_t i = 0; i < spec.records_per_class; ++i) {
    const int fold = static_cast<int>(i % 10) + 1;
    for (bool positive : {false, true}) {
      EcgRecord r = synthesize_record(spec, 2 * i + (positive ? 1 : 0), positive);
      r.fold = fold;
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace imn
