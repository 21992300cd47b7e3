#include "cfx/amortized.hpp"

#include <chrono>
#include <cmath>

#include "cfx/error.hpp"
#include "cfx/ops.hpp"

namespace cfx::amortized {
namespace {

constexpr std::uint64_t kOrderStream = 1;
constexpr std::int64_t kEvalChunk = 64;

Var squared_error(const Var& a, const Var& b, PixelReduction r) {
  const auto rows = static_cast<float>(a.shape()[0]);
  const auto per_row = static_cast<float>(a.value().size()) / rows;
  const float s = r == PixelReduction::Sum ? 1.0f / rows : 1.0f / (rows * per_row);
  return ops::scale(ops::l2_sq(a, b), s);
}

Tensor as_batch(const Tensor& x) {
  if (x.shape() == Shape{28, 28, 1}) return x.reshaped({1, 28, 28, 1});
  if (x.shape() == Shape{1, 28, 28, 1}) return x;
  throw DimensionError("expected a single 28x28x1 image, got " + shape_str(x.shape()));
}

int argmax_row(const Tensor& p, std::int64_t r) {
  const std::int64_t k = p.dim(1);
  int best = 0;
  for (std::int64_t j = 1; j < k; ++j)
    if (p[r * k + j] > p[r * k + best]) best = static_cast<int>(j);
  return best;
}

/// Calls fn(x_rows, pairs, x_cf) for every pair of `data`, in chunks.
void for_each_pair_chunk(const models::Generator& g, const mnist::Dataset& data,
                         const std::function<void(const Tensor&, const Pairs&, const Tensor&)>& fn) {
  for (std::int64_t r = 0; r < data.size(); r += kEvalChunk) {
    const std::int64_t e = std::min(data.size(), r + kEvalChunk);
    const std::span<const int> labels(data.labels.data() + r, static_cast<std::size_t>(e - r));
    const Pairs pairs = expand_pairs(labels);
    const Tensor x = data.images.slice_rows(r, e);
    const Var z = g.encode(constant(x));
    const Var code = ops::concat_cols(ops::gather_rows(z, pairs.source), constant(pairs.target_onehot));
    fn(mnist::gather(x, pairs.source), pairs, g.decode(code).value());
  }
}

}  // namespace

void AmortizedTrainConfig::validate() const {
  if (!(alpha > 0.0f)) throw ConfigError("alpha must be positive");
  if (!(beta > 0.0f)) throw ConfigError("beta must be positive");
  if (!(gamma >= 0.0f)) throw ConfigError("gamma must be non-negative");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch <= 0) throw ConfigError("batch must be positive");
  adam.validate();
}

Pairs expand_pairs(std::span<const int> labels, int classes) {
  Pairs p;
  const auto n = static_cast<std::int64_t>(labels.size()) * (classes - 1);
  p.source.reserve(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw ConfigError("expand_pairs: label out of range");
    for (int c = 0; c < classes; ++c) {
      if (c == labels[i]) continue;
      p.source.push_back(static_cast<std::int64_t>(i));
      p.y.push_back(labels[i]);
      p.y_cf.push_back(c);
    }
  }
  if (!p.y_cf.empty()) p.target_onehot = mnist::one_hot_rows(p.y_cf, classes);
  return p;
}

LossTerms dadgcex_loss(const Var& x, const Var& x_cf, const Tensor& y_cf_onehot, const models::Discriminator& d,
                       const models::Autoencoder* daae, const AmortizedTrainConfig& cfg) {
  if (!d.frozen()) throw ContractError("dadgcex_loss: discriminator must be frozen");
  if (daae && !daae->frozen()) throw ContractError("dadgcex_loss: DA-AE must be frozen");
  if (!daae && cfg.gamma != 0.0f) throw ContractError("dadgcex_loss: gamma > 0 needs a DA-AE");
  if (x.shape() != x_cf.shape()) throw DimensionError("dadgcex_loss: x and x_cf differ in shape");

  LossTerms t;
  t.term_g = squared_error(x, x_cf, cfg.reduction);
  t.term_d = ops::categorical_cross_entropy(d.forward(x_cf, false, nullptr), constant(y_cf_onehot));
  t.total = ops::add(ops::scale(t.term_g, cfg.alpha), ops::scale(t.term_d, cfg.beta));
  if (daae) {
    t.term_da = squared_error(x_cf, daae->forward(x_cf), cfg.reduction);
    t.total = ops::add(t.total, ops::scale(t.term_da, cfg.gamma));
  }
  return t;
}

models::TrainReport train_amortized(models::Generator& g, const models::Discriminator& d,
                                    const models::Autoencoder* daae, const mnist::Dataset& train,
                                    const AmortizedTrainConfig& cfg, const models::EpochCallback& on_epoch) {
  cfg.validate();
  if (!d.frozen()) throw ContractError("train_amortized: discriminator must be frozen");
  if (daae && !daae->frozen()) throw ContractError("train_amortized: DA-AE must be frozen");
  if (!daae && cfg.gamma != 0.0f) throw ContractError("train_amortized: gamma > 0 needs a DA-AE");
  if (g.frozen()) throw ContractError("train_amortized: generator is frozen");

  const auto t0 = std::chrono::steady_clock::now();
  models::TrainReport rep{daae ? "dadgcex" : "dgcex", {}, {}, "validity", 0.0, 0.0, cfg.seed, cfg.epochs};
  mnist::BatchIterator it(train, cfg.batch, Rng(cfg.seed).split(kOrderStream)());
  long step = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    it.start_epoch(static_cast<std::uint64_t>(e));
    double total = 0.0;
    std::int64_t batches = 0;
    mnist::Batch b;
    while (it.next(b)) {
      if (!b.images.all_finite()) throw TrainingError("non-finite input batch", e, step);
      const Pairs pairs = expand_pairs(b.labels);
      const Var z = g.encode(constant(b.images));
      const Var code = ops::concat_cols(ops::gather_rows(z, pairs.source), constant(pairs.target_onehot));
      const Var x_cf = g.decode(code);
      const Var x = constant(mnist::gather(b.images, pairs.source));
      const LossTerms terms = dadgcex_loss(x, x_cf, pairs.target_onehot, d, daae, cfg);
      const double l = terms.total.value().item();
      if (!std::isfinite(l)) throw TrainingError("non-finite training loss", e, step);
      backward(terms.total);
      adam_step(g.parameters(), cfg.adam);
      total += l;
      ++batches;
      ++step;
    }
    rep.epoch_losses.push_back(total / static_cast<double>(batches));
    rep.epoch_checksums.push_back(g.checksum());
    if (on_epoch) on_epoch(e, rep.epoch_losses.back());
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

CounterfactualResult explain_amortized(const models::Generator& g, const models::Discriminator& d, const Tensor& x,
                                       int y_cf, Method method) {
  if (method == Method::CFPROTO) throw ConfigError("explain_amortized: CFPROTO is not an amortized method");
  if (y_cf < 0 || y_cf >= mnist::kClasses) throw ConfigError("explain_amortized: target class out of range");
  const Tensor xb = as_batch(x);
  const auto t0 = std::chrono::steady_clock::now();
  CounterfactualResult r;
  r.method = method;
  r.y = argmax_row(d.forward(constant(xb), false, nullptr).value(), 0);
  if (r.y == y_cf)
    throw ContractError("explain_amortized: target class " + std::to_string(y_cf) + " is already the prediction");
  r.y_cf = y_cf;
  r.x_cf = g.forward(constant(xb), constant(mnist::one_hot_rows(std::vector<int>{y_cf}))).value();
  r.y_pred_cf = argmax_row(d.forward(constant(r.x_cf), false, nullptr).value(), 0);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.x = xb;
  r.valid = r.y_pred_cf == y_cf;
  return r;
}

double validity_rate(const models::Generator& g, const models::Discriminator& d, const mnist::Dataset& data) {
  std::int64_t hit = 0, n = 0;
  for_each_pair_chunk(g, data, [&](const Tensor&, const Pairs& pairs, const Tensor& x_cf) {
    const Tensor p = d.predict(x_cf);
    for (std::size_t i = 0; i < pairs.y_cf.size(); ++i) hit += argmax_row(p, static_cast<std::int64_t>(i)) == pairs.y_cf[i];
    n += static_cast<std::int64_t>(pairs.y_cf.size());
  });
  return static_cast<double>(hit) / static_cast<double>(n);
}

double mean_pair_distance(const models::Generator& g, const mnist::Dataset& data) {
  double total = 0.0;
  std::int64_t n = 0;
  for_each_pair_chunk(g, data, [&](const Tensor& x, const Pairs& pairs, const Tensor& x_cf) {
    total += squared_distance(x, x_cf);
    n += static_cast<std::int64_t>(pairs.y_cf.size());
  });
  return total / static_cast<double>(n);
}

}  // namespace cfx::amortized
