#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace imn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// K >= 2 heads with softmax, or a single sigmoid logit.
enum class Formulation { categorical, binary };

/// `transnet` generates W through the learned upsampling decoder; `direct` is
/// the ablation that projects the latent straight to K maps and replicates
/// them back to full length.
enum class Variant { transnet, direct };

std::string_view to_string(Formulation f);
std::string_view to_string(Variant v);
Formulation parse_formulation(std::string_view text);
Variant parse_variant(std::string_view text);

struct ImnConfig {
  std::size_t num_leads = 12;
  std::size_t signal_length = 256;
  std::size_t num_outputs = 1;
  double lambda_l1 = 1e-4;
  std::array<std::size_t, 3> encoder_channels{16, 32, 64};
  std::size_t encoder_kernel_h = 3;
  std::size_t encoder_kernel_w = 15;
  std::size_t decoder_kernel_h = 3;
  std::size_t decoder_kernel_w = 3;
  std::size_t pool_factor = 2;
  Variant variant = Variant::transnet;

  Formulation formulation() const noexcept {
    return num_outputs == 1 ? Formulation::binary : Formulation::categorical;
  }
  std::size_t latent_channels() const noexcept { return encoder_channels[2]; }
  std::size_t latent_length() const noexcept { return signal_length / (pool_factor * pool_factor); }

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  friend bool operator==(const ImnConfig&, const ImnConfig&) = default;
};

/// Config for the given formulation: K=1 for binary, K=`classes` otherwise.
ImnConfig make_config(Formulation formulation, std::size_t signal_length, std::size_t classes = 2);

}  // namespace imn
