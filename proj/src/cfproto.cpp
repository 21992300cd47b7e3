#include "cfx/cfproto.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "cfx/error.hpp"
#include "cfx/ops.hpp"

namespace cfx::cfproto {
namespace {

using Clock = std::chrono::steady_clock;

/// Step-size halvings per iteration before the step is taken regardless.
constexpr int kMaxHalvings = 30;

Tensor as_batch(const Tensor& x) {
  if (x.shape() == Shape{28, 28, 1}) return x.reshaped({1, 28, 28, 1});
  if (x.shape() == Shape{1, 28, 28, 1}) return x;
  throw DimensionError("cfproto: expected a single 28x28x1 image, got " + shape_str(x.shape()));
}

int argmax(std::span<const float> p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

void check_class(int c, const char* what) {
  if (c < 0 || c >= mnist::kClasses)
    throw ConfigError(std::string("cfproto: ") + what + " " + std::to_string(c) + " outside [0,10)");
}

double hinge_value(std::span<const float> p, int label, float kappa, double sign) {
  if (p.size() < 2) throw DimensionError("fkappa: need at least 2 probabilities, got " + std::to_string(p.size()));
  if (label < 0 || static_cast<std::size_t>(label) >= p.size())
    throw ConfigError("fkappa: class " + std::to_string(label) + " outside [0," + std::to_string(p.size()) + ")");
  if (!(kappa >= 0.0f)) throw ConfigError("fkappa: kappa must be >= 0");
  double other = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i)
    if (static_cast<int>(i) != label) other = std::max(other, static_cast<double>(p[i]));
  return std::max(sign * (p[static_cast<std::size_t>(label)] - other), -static_cast<double>(kappa));
}

/// Soft-threshold at `t`, then project x + δ onto [0,1].
void prox(std::span<const float> x, std::span<float> v, float t) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    float s = v[i] > t ? v[i] - t : (v[i] < -t ? v[i] + t : 0.0f);
    v[i] = std::clamp(s, -x[i], 1.0f - x[i]);
  }
}

}  // namespace

void CFProtoConfig::validate() const {
  if (!(beta >= 0.0f)) throw ConfigError("cfproto: beta must be non-negative");
  if (!(gamma >= 0.0f)) throw ConfigError("cfproto: gamma must be non-negative");
  if (!(theta >= 0.0f)) throw ConfigError("cfproto: theta must be non-negative");
  if (!(c_init > 0.0f)) throw ConfigError("cfproto: c_init must be positive");
  if (!(kappa >= 0.0f)) throw ConfigError("cfproto: kappa must be >= 0");
  if (K <= 0) throw ConfigError("cfproto: K must be positive");
  if (c_steps <= 0) throw ConfigError("cfproto: c_steps must be positive");
  if (inner_steps <= 0) throw ConfigError("cfproto: inner_steps must be positive");
  if (!(step_size > 0.0f)) throw ConfigError("cfproto: step_size must be positive");
  if (!(c_multiplier > 1.0f)) throw ConfigError("cfproto: c_multiplier must be > 1");
}

PrototypeIndex::PrototypeIndex(const models::Autoencoder& ae, const mnist::Dataset& train)
    : PrototypeIndex(models::map_rows(train.images, 500, [&](const Tensor& b) { return ae.encode(b); }),
                     train.labels) {}

PrototypeIndex::PrototypeIndex(Tensor latents, std::vector<int> labels) : by_class_(mnist::kClasses) {
  if (latents.rank() != 2) throw DimensionError("PrototypeIndex: latents must be (N,d), got " + shape_str(latents.shape()));
  if (latents.dim(0) != static_cast<std::int64_t>(labels.size()))
    throw DimensionError("PrototypeIndex: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(latents.dim(0)) + " latents");
  dim_ = latents.dim(1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_class(labels[i], "label");
    const float* row = latents.ptr() + static_cast<std::int64_t>(i) * dim_;
    by_class_[static_cast<std::size_t>(labels[i])].insert(by_class_[static_cast<std::size_t>(labels[i])].end(), row,
                                                          row + dim_);
  }
}

std::int64_t PrototypeIndex::class_size(int cls) const {
  check_class(cls, "class");
  return static_cast<std::int64_t>(by_class_[static_cast<std::size_t>(cls)].size()) / std::max<std::int64_t>(dim_, 1);
}

PrototypeSet PrototypeIndex::prototypes(std::span<const float> z, int K, int y, std::optional<int> y_cf) const {
  if (static_cast<std::int64_t>(z.size()) != dim_)
    throw DimensionError("PrototypeIndex: query has " + std::to_string(z.size()) + " values, latents have " +
                         std::to_string(dim_));
  if (K <= 0) throw ConfigError("PrototypeIndex: K must be positive");
  check_class(y, "class");
  if (y_cf) check_class(*y_cf, "target");

  PrototypeSet ps{Tensor({mnist::kClasses, dim_}), std::vector<double>(mnist::kClasses), -1};
  std::vector<std::pair<double, std::int64_t>> dist;
  for (int c = 0; c < mnist::kClasses; ++c) {
    const std::int64_t n = class_size(c);
    if (n < K)
      throw Error("PrototypeIndex: class " + std::to_string(c) + " has " + std::to_string(n) + " members, K = " +
                  std::to_string(K));
    const float* lat = by_class_[static_cast<std::size_t>(c)].data();
    dist.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::int64_t j = 0; j < dim_; ++j) {
        const double d = static_cast<double>(lat[i * dim_ + j]) - z[static_cast<std::size_t>(j)];
        s += d * d;
      }
      dist[static_cast<std::size_t>(i)] = {s, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + K, dist.end());
    std::vector<double> mean(static_cast<std::size_t>(dim_), 0.0);
    for (int k = 0; k < K; ++k)
      for (std::int64_t j = 0; j < dim_; ++j) mean[static_cast<std::size_t>(j)] += lat[dist[k].second * dim_ + j];
    double d2 = 0.0;
    for (std::int64_t j = 0; j < dim_; ++j) {
      const float m = static_cast<float>(mean[static_cast<std::size_t>(j)] / K);
      ps.protos[c * dim_ + j] = m;
      const double d = static_cast<double>(m) - z[static_cast<std::size_t>(j)];
      d2 += d * d;
    }
    ps.distances[static_cast<std::size_t>(c)] = d2;
  }
  if (y_cf) {
    ps.target = *y_cf;
  } else {
    for (int c = 0; c < mnist::kClasses; ++c)
      if (c != y && (ps.target < 0 || ps.distances[static_cast<std::size_t>(c)] <
                                          ps.distances[static_cast<std::size_t>(ps.target)]))
        ps.target = c;
  }
  return ps;
}

PrototypeSet compute_prototypes(const models::Autoencoder& ae, const mnist::Dataset& train, const Tensor& x, int K,
                                int y, std::optional<int> y_cf) {
  const PrototypeIndex index(ae, train);
  return index.prototypes(ae.encode(as_batch(x)).data(), K, y, y_cf);
}

double fkappa_loss(std::span<const float> probs, int y, float kappa) {
  return hinge_value(probs, y, kappa, 1.0);
}

double fkappa_target_loss(std::span<const float> probs, int target, float kappa) {
  return hinge_value(probs, target, kappa, -1.0);
}

ObjectiveTerms objective_terms(const Tensor& x, const Var& delta, const models::Discriminator& d,
                               const models::Autoencoder& ae, const Tensor& proto, int target, float c,
                               const CFProtoConfig& cfg) {
  if (x.shape() != delta.shape())
    throw DimensionError("cfproto: x " + shape_str(x.shape()) + " vs delta " + shape_str(delta.shape()));
  if (proto.size() != models::kLatent)
    throw DimensionError("cfproto: prototype has " + std::to_string(proto.size()) + " values");
  const int targets[1] = {target};

  ObjectiveTerms t;
  const Var x_cf = ops::add(constant(x), delta);
  t.probs = d.forward(x_cf, false, nullptr);
  t.hinge = ops::target_hinge(t.probs, targets, cfg.kappa);
  t.l1 = ops::l1(delta);
  t.l2 = ops::l2_sq(delta, constant(Tensor(delta.shape())));
  const Var z = ae.encode(x_cf);
  t.ae = ops::l2_sq(x_cf, ae.decode(z));
  t.proto = ops::l2_sq(z, constant(proto.reshaped({1, models::kLatent})));
  t.smooth = ops::add(ops::add(ops::scale(t.hinge, c), t.l2),
                      ops::add(ops::scale(t.ae, cfg.gamma), ops::scale(t.proto, cfg.theta)));
  t.total = ops::add(t.smooth, ops::scale(t.l1, cfg.beta));
  return t;
}

Explanation explain(const Tensor& x_in, const models::Discriminator& d, const models::Autoencoder& ae,
                    const PrototypeIndex& index, const CFProtoConfig& cfg, std::optional<int> y_cf) {
  cfg.validate();
  if (!d.frozen()) throw ContractError("cfproto: discriminator must be frozen");
  if (!ae.frozen()) throw ContractError("cfproto: autoencoder must be frozen");
  const Tensor x = as_batch(x_in);
  const auto t0 = Clock::now();

  Explanation ex;
  CounterfactualResult& r = ex.result;
  r.method = Method::CFPROTO;
  r.x = x;
  r.y = argmax(d.forward(constant(x), false, nullptr).value().data());
  ex.prototypes = index.prototypes(ae.encode(x).data(), cfg.K, r.y, y_cf);
  const int target = ex.prototypes.target;
  const Tensor proto = ex.prototypes.proto(target);
  r.y_cf = target;

  const auto n = static_cast<std::size_t>(x.size());
  double best = std::numeric_limits<double>::infinity();
  Tensor last;
  float c = cfg.c_init;
  for (int round = 0; round < cfg.c_steps; ++round) {
    Tensor delta(x.shape()), slack(x.shape()), next(x.shape());
    bool found = false;
    float step = cfg.step_size;
    for (int k = 0; k < cfg.inner_steps; ++k) {
      const Var v = variable(slack);
      const ObjectiveTerms t = objective_terms(x, v, d, ae, proto, target, c, cfg);
      ex.trace.objective.push_back(t.total.value().item());
      if (argmax(t.probs.value().data()) == target) {
        found = true;
        const double dist = cfg.beta * l1_norm(slack) + squared_distance(slack, Tensor(slack.shape()));
        if (dist < best) {
          best = dist;
          r.x_cf = Tensor(x.shape());
          for (std::size_t i = 0; i < n; ++i) r.x_cf.data()[i] = std::clamp(x.data()[i] + slack.data()[i], 0.0f, 1.0f);
          ex.trace.accepted.push_back(dist);
        }
      }
      backward(t.smooth);
      const Tensor& g = v.grad();
      const double f_slack = t.smooth.value().item();
      for (int tries = 0;; ++tries) {
        for (std::size_t i = 0; i < n; ++i) next.data()[i] = slack.data()[i] - step * g.data()[i];
        prox(x.data(), next.data(), step * cfg.beta);
        if (tries == kMaxHalvings) break;
        double lin = 0.0, quad = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double dv = static_cast<double>(next.data()[i]) - slack.data()[i];
          lin += static_cast<double>(g.data()[i]) * dv;
          quad += dv * dv;
        }
        const double f_next =
            objective_terms(x, constant(next), d, ae, proto, target, c, cfg).smooth.value().item();
        if (f_next <= f_slack + lin + quad / (2.0 * step)) break;
        step *= 0.5f;
      }
      const float mom = static_cast<float>(k) / static_cast<float>(k + 3);
      for (std::size_t i = 0; i < n; ++i) slack.data()[i] = next.data()[i] + mom * (next.data()[i] - delta.data()[i]);
      prox(x.data(), slack.data(), 0.0f);
      std::swap(delta, next);
    }
    ex.trace.rounds.push_back({c, found});
    c = found ? c / cfg.c_multiplier : c * cfg.c_multiplier;
    last = std::move(delta);
  }

  if (r.x_cf.empty()) {
    r.x_cf = Tensor(x.shape());
    for (std::size_t i = 0; i < n; ++i) r.x_cf.data()[i] = std::clamp(x.data()[i] + last.data()[i], 0.0f, 1.0f);
  }
  r.y_pred_cf = argmax(d.forward(constant(r.x_cf), false, nullptr).value().data());
  r.valid = r.y_pred_cf == target;
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return ex;
}

Explanation explain(const Tensor& x, const models::Discriminator& d, const models::Autoencoder& ae,
                    const mnist::Dataset& train, const CFProtoConfig& cfg, std::optional<int> y_cf) {
  return explain(x, d, ae, PrototypeIndex(ae, train), cfg, y_cf);
}

}  // namespace cfx::cfproto
