#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "imn/model/model.hpp"
#include "imn/tensor/ops.hpp"
#include "imn/tensor/random.hpp"
#include "imn/training/loss.hpp"

namespace imn::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.normal(0.0, scale));
  return t;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    Rng rng(reinterpret_cast<std::uintptr_t>(this) ^ ++counter);
    path_ = std::filesystem::temp_directory_path() / ("imn_" + tag + "_" + std::to_string(rng.next() % 1000000000));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename T>
Tensor<T>& tensor_named(BasicImnModel<T>& model, const std::string& name) {
  Tensor<T>* found = nullptr;
  model.visit_tensors([&](const std::string& n, Tensor<T>& t, bool) {
    if (n == name) found = &t;
  });
  if (!found) throw std::invalid_argument("no tensor named " + name);
  return *found;
}

/// Model whose batch-norm running statistics come from one train-mode pass
/// over random signals, so that eval-mode calls are allowed.
template <typename T>
BasicImnModel<T> warmed_model(const ImnConfig& config, std::uint64_t seed, std::size_t batch = 4) {
  BasicImnModel<T> model(config, seed);
  Rng rng(seed + 1000);
  Tape<T> tape;
  model.forward(tape, tape.constant(random_tensor<T>({batch, config.num_leads, config.signal_length}, rng)),
                BnMode::train);
  return model;
}

/// Comparison rule for analytic vs numeric derivatives: relative error, except
/// that analytic values below 1e-8 in magnitude are compared absolutely.
struct GradTolerance {
  double relative = 1e-4;
  double tiny = 1e-8;
  double absolute = 1e-7;
};

struct GradReport {
  double max_relative = 0.0;  // over entries compared relatively
  double max_absolute = 0.0;  // over entries compared absolutely
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::string worst;

  bool ok() const { return failures == 0; }
};

inline void grade(GradReport& report, double analytic, double numeric, const GradTolerance& tol,
                  const std::string& label) {
  ++report.checked;
  if (std::abs(analytic) < tol.tiny) {
    const double err = std::abs(analytic - numeric);
    report.max_absolute = std::max(report.max_absolute, err);
    if (err >= tol.absolute) {
      ++report.failures;
      report.worst = label + " analytic " + std::to_string(analytic) + " numeric " + std::to_string(numeric);
    }
    return;
  }
  const double err = std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
  if (err > report.max_relative) {
    report.max_relative = err;
    if (err >= tol.relative) report.worst = label + " analytic " + std::to_string(analytic) + " numeric " +
                                            std::to_string(numeric);
  }
  if (err >= tol.relative) ++report.failures;
}

/// Builds a scalar loss from the given inputs, each recorded with
/// tape.parameter so that gradients reach them.
using LossBuilder = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

inline double evaluate_loss(const LossBuilder& build, std::vector<Tensor<double>*>& inputs) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (auto* t : inputs) vars.push_back(tape.parameter(*t));
  return build(tape, vars).value()[0];
}

/// Central finite differences with step h against the tape's gradient, for
/// every element of every input.
inline GradReport check_gradients(std::vector<Tensor<double>*> inputs, const LossBuilder& build, double h = 1e-5,
                                  const GradTolerance& tol = {}) {
  for (auto* t : inputs) {
    t->set_requires_grad(true);
    t->zero_grad();
  }
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (auto* t : inputs) vars.push_back(tape.parameter(*t));
    tape.backward(build(tape, vars));
  }
  std::vector<std::vector<double>> analytic;
  for (auto* t : inputs) analytic.emplace_back(t->grad().begin(), t->grad().end());

  GradReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto data = inputs[i]->data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + h;
      const double up = evaluate_loss(build, inputs);
      data[j] = saved - h;
      const double down = evaluate_loss(build, inputs);
      data[j] = saved;
      grade(report, analytic[i][j], (up - down) / (2.0 * h), tol,
            "input " + std::to_string(i) + "[" + std::to_string(j) + "]");
    }
  }
  return report;
}

/// Central difference of `f` at 0 with step h. For a smooth function the
/// estimates at h and h/2 agree to O(h^2); when they disagree by more than
/// `tol.relative`, the stencil straddles a kink such as a max-pool argmax
/// switch or a zero crossing of |W|, and the step is divided by 10, up to
/// `refinements` times. `refined` reports whether that happened.
struct CentralDifference {
  double value = 0.0;
  bool refined = false;
};

inline CentralDifference central_difference(const std::function<double(double)>& f, double h,
                                            const GradTolerance& tol, int refinements = 3) {
  CentralDifference out;
  for (int i = 0;; ++i) {
    const double full = (f(h) - f(-h)) / (2.0 * h);
    const double half = (f(h / 2) - f(-h / 2)) / h;
    out.value = full;
    const double scale = std::max({std::abs(full), std::abs(half), tol.tiny});
    if (std::abs(full - half) <= tol.relative * scale || i == refinements) return out;
    out.refined = true;
    h /= 10.0;
  }
}

/// Finite-difference check of the composite loss through a 64-bit IMN in train
/// mode. Every trainable tensor contributes up to `samples_per_tensor` entries
/// (all of them when smaller), and one random unit direction over the full
/// parameter vector is checked as a whole.
struct ModelGradientCheck {
  GradReport entries;
  GradReport direction;
  std::size_t parameters = 0;
  std::size_t tensors = 0;
  std::size_t refined = 0;
};

inline ModelGradientCheck check_model_gradients(Formulation formulation, std::uint64_t seed,
                                                std::size_t samples_per_tensor = 24, std::size_t length = 64,
                                                double lambda = 1e-4, double h = 1e-5,
                                                const GradTolerance& tol = {}) {
  auto config = make_config(formulation, length);
  BasicImnModel<double> model(config, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t batch = 2;
  auto signal = random_tensor<double>({batch, config.num_leads, length}, rng);
  std::vector<int> targets{0, 1};
  if (formulation == Formulation::categorical) targets = {1, 0};

  auto loss_value = [&]() {
    Tape<double> tape;
    auto graph = model.forward(tape, tape.constant(signal), BnMode::train);
    return composite_loss(tape, formulation, graph.logits, targets, graph.weights, lambda).total.value()[0];
  };

  model.set_requires_grad(true);
  model.zero_grad();
  {
    Tape<double> tape;
    auto graph = model.forward(tape, tape.constant(signal), BnMode::train);
    tape.backward(composite_loss(tape, formulation, graph.logits, targets, graph.weights, lambda).total);
  }

  ModelGradientCheck out;
  std::vector<std::pair<std::string, Tensor<double>*>> params;
  model.visit_tensors([&](const std::string& name, Tensor<double>& t, bool trainable) {
    if (trainable) params.emplace_back(name, &t);
  });
  out.tensors = params.size();

  for (auto& [name, t] : params) {
    out.parameters += t->size();
    std::vector<std::size_t> picks(t->size());
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
    if (picks.size() > samples_per_tensor) {
      rng.shuffle(picks);
      picks.resize(samples_per_tensor);
    }
    for (std::size_t j : picks) {
      auto data = t->data();
      const double saved = data[j];
      const auto fd = central_difference(
          [&](double step) {
            data[j] = saved + step;
            const double v = loss_value();
            data[j] = saved;
            return v;
          },
          h, tol);
      out.refined += fd.refined;
      grade(out.entries, t->grad()[j], fd.value, tol, name + "[" + std::to_string(j) + "]");
    }
  }

  std::vector<std::vector<double>> dir, saved;
  double norm = 0.0;
  for (auto& [name, t] : params) {
    auto& d = dir.emplace_back(t->size());
    for (double& v : d) {
      v = rng.normal();
      norm += v * v;
    }
    saved.emplace_back(t->data().begin(), t->data().end());
  }
  norm = std::sqrt(norm);
  double analytic = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < dir[i].size(); ++j) {
      dir[i][j] /= norm;
      analytic += dir[i][j] * params[i].second->grad()[j];
    }
  }
  const auto fd = central_difference(
      [&](double step) {
        for (std::size_t i = 0; i < params.size(); ++i) {
          auto data = params[i].second->data();
          for (std::size_t j = 0; j < data.size(); ++j) data[j] = saved[i][j] + step * dir[i][j];
        }
        const double v = loss_value();
        for (std::size_t i = 0; i < params.size(); ++i) {
          std::copy(saved[i].begin(), saved[i].end(), params[i].second->data().begin());
        }
        return v;
      },
      h, tol);
  out.refined += fd.refined;
  grade(out.direction, analytic, fd.value, tol, "random direction");
  return out;
}

}  // namespace imn::testing
