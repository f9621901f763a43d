#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "crt/dataset.hpp"
#include "crt/model.hpp"
#include "crt/synth.hpp"
#include "crt/tensor.hpp"

namespace crt::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& x : t.data()) x = u(rng);
  return t;
}

// Max over elements of |a − n| / max(|a|, |n|, floor) where a is the tape
// gradient of sum(f(x) ∘ probe) and n its central difference with step h.
inline double fd_max_relative_error(const std::function<Var(Tape&, Var)>& f, Tensor x,
                                    std::uint64_t seed = 1, double h = 1e-5,
                                    double floor = 1e-6) {
  std::mt19937_64 rng(seed);
  Tensor probe;
  auto loss = [&](Tape& tape, Var in) {
    Var out = f(tape, in);
    if (probe.empty()) probe = random_tensor(out.shape(), rng);
    return sum(mul(out, tape.constant(probe)));
  };
  Tensor analytic;
  {
    Tape tape;
    Var in = tape.leaf(x);
    Var l = loss(tape, in);
    tape.backward(l);
    analytic = in.grad();
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double original = x[i];
    x[i] = original + h;
    Tape tp(false);
    const double plus = loss(tp, tp.leaf(x)).value().item();
    x[i] = original - h;
    Tape tm(false);
    const double minus = loss(tm, tm.leaf(x)).value().item();
    x[i] = original;
    const double numeric = (plus - minus) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

// Small synthetic scenes with a compact feature width.
inline SceneSet small_scenes(std::size_t count, std::uint64_t seed, std::size_t visual_dim = 24,
                             std::size_t min_objects = 2, std::size_t max_objects = 6) {
  SynthOptions o;
  o.seed = seed;
  o.count = count;
  o.visual_dim = visual_dim;
  o.min_objects = min_objects;
  o.max_objects = max_objects;
  return synth_generate(o);
}

// Same measure as above for a model parameter driven through `loss`, which
// must build its graph on the given tape and return a scalar.
inline double parameter_fd_max_relative_error(Parameter& p,
                                              const std::function<Var(Tape&)>& loss,
                                              double h = 1e-5, double floor = 1e-6) {
  p.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  const Tensor analytic = p.grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double original = p.value[i];
    p.value[i] = original + h;
    Tape tp(false);
    const double plus = loss(tp).value().item();
    p.value[i] = original - h;
    Tape tm(false);
    const double minus = loss(tm).value().item();
    p.value[i] = original;
    const double numeric = (plus - minus) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  p.zero_grad();
  return worst;
}

inline ModelConfig small_config(std::size_t visual_dim, char condition = 'g',
                                std::size_t layers = 2) {
  ModelConfig c;
  c.visual_dim = visual_dim;
  c.d_model = 16;
  c.layers = layers;
  c.heads = 2;
  c.d_ff = 32;
  c.geometry_dim = 16;
  c.max_len = 12;
  c.ablation = AblationFlags::from_condition(condition);
  return c;
}

inline Vocabulary vocab_of(const SceneSet& set) {
  std::vector<std::string> sentences;
  for (const auto& s : set.scenes)
    sentences.insert(sentences.end(), s.sentences.begin(), s.sentences.end());
  return build_vocab(sentences);
}

}  // namespace crt::testing
