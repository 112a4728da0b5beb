#include "imn/model/config.hpp"

#include <string>

namespace imn {

std::string_view to_string(Formulation f) { return f == Formulation::binary ? "binary" : "categorical"; }

std::string_view to_string(Variant v) { return v == Variant::transnet ? "transnet" : "direct"; }

Formulation parse_formulation(std::string_view text) {
  if (text == "binary") return Formulation::binary;
  if (text == "categorical") return Formulation::categorical;
  throw ConfigError("unknown formulation '" + std::string(text) + "' (expected binary or categorical)");
}

Variant parse_variant(std::string_view text) {
  if (text == "transnet") return Variant::transnet;
  if (text == "direct") return Variant::direct;
  throw ConfigError("unknown variant '" + std::string(text) + "' (expected transnet or direct)");
}

void ImnConfig::validate() const {
  if (num_leads == 0) throw ConfigError("num_leads must be positive");
  if (num_outputs == 0) throw ConfigError("num_outputs must be at least 1");
  if (!(lambda_l1 >= 0.0)) throw ConfigError("lambda_l1 must be non-negative");
  if (pool_factor < 1) throw ConfigError("pool_factor must be at least 1");
  const std::size_t reduction = pool_factor * pool_factor;
  if (signal_length == 0 || signal_length % reduction != 0) {
    throw ConfigError("signal_length " + std::to_string(signal_length) + " must be a positive multiple of " +
                      std::to_string(reduction));
  }
  for (auto c : encoder_channels) {
    if (c == 0) throw ConfigError("encoder channel widths must be positive");
  }
  if (encoder_kernel_h % 2 == 0 || encoder_kernel_w % 2 == 0 || decoder_kernel_h % 2 == 0 ||
      decoder_kernel_w % 2 == 0) {
    throw ConfigError("kernel sizes must be odd so that same padding preserves extents");
  }
}

ImnConfig make_config(Formulation formulation, std::size_t signal_length, std::size_t classes) {
  ImnConfig config;
  config.signal_length = signal_length;
  if (formulation == Formulation::binary) {
    config.num_outputs = 1;
  } else {
    if (classes < 2) throw ConfigError("categorical formulation needs at least 2 classes");
    config.num_outputs = classes;
  }
  config.validate();
  return config;
}

}  // namespace imn
