#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "imn/data/dataset.hpp"

namespace imn {

struct AnomalySpec {
  std::vector<std::size_t> leads{6, 7, 8};
  double onset = 0.5;     // fraction of L
  double duration = 0.1;  // fraction of L
  double amplitude = 0.1;
};

/// Parameters of the seeded synthetic two-class task. Negatives are
/// quasi-periodic beats built from Gaussian bumps (P, Q, R, S, T) plus white
/// noise; positives add a plateau on the anomaly leads and interval.
struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t records_per_class = 100;
  std::size_t num_leads = 12;
  std::size_t signal_length = 256;
  double fs = 100.0;
  double beat_rate_bpm = 72.0;
  double beat_rate_jitter = 0.1;  // relative, uniform
  double p_amplitude = 0.15;
  double qrs_amplitude = 1.0;
  double t_amplitude = 0.3;
  double lead_gain_jitter = 0.2;  // relative, uniform
  double noise_std = 0.1;
  AnomalySpec anomaly;

  /// Throws DataError on out-of-range fields.
  void validate() const;
};

/// Sample range [begin, end) of the anomaly: every t with
/// onset*L <= t < (onset+duration)*L.
std::pair<std::size_t, std::size_t> anomaly_range(const SynthSpec& spec);

/// One raw record. The waveform and noise depend only on (spec, record_seed),
/// so the positive and negative record of the same seed differ exactly by the
/// anomaly plateau.
EcgRecord synthesize_record(const SynthSpec& spec, std::uint64_t record_seed, bool positive);

/// records_per_class negatives ({NORM}) and positives ({MI}), interleaved
/// pairwise. Both members of pair i share fold (i mod 10) + 1.
Dataset generate_synthetic(const SynthSpec& spec);

}  // namespace imn
