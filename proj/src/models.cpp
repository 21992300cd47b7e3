#include "cfx/models.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

#include "cfx/error.hpp"
#include "cfx/ops.hpp"

namespace cfx::models {
namespace {

using ops::Padding;

// Independent RNG streams derived from a model seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kOrderStream = 1;
constexpr std::uint64_t kDropoutStream = 2;

constexpr std::int64_t kEvalChunk = 500;

std::vector<float> uniform(std::int64_t n, float limit, Rng& rng) {
  std::vector<float> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return v;
}

void check_image_batch(const Var& x, const char* who) {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != 28 || s[2] != 28 || s[3] != 1)
    throw DimensionError(std::string(who) + ": expected (B,28,28,1), got " + shape_str(s));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require_finite(double loss, int epoch, long step) {
  if (!std::isfinite(loss)) throw TrainingError("non-finite training loss", epoch, step);
}

}  // namespace

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::Discriminator: return "discriminator";
    case Arch::Autoencoder: return "autoencoder";
    case Arch::Generator: return "generator";
  }
  return "?";
}

Arch arch_from_name(const std::string& name) {
  for (Arch a : {Arch::Discriminator, Arch::Autoencoder, Arch::Generator})
    if (arch_name(a) == name) return a;
  throw ParseError("unknown architecture '" + name + "'");
}

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p->value().size();
  return n;
}

void Model::set_frozen(bool frozen) {
  for (const auto& p : params_) p->set_frozen(frozen);
}

bool Model::frozen() const {
  for (const auto& p : params_)
    if (!p->frozen()) return false;
  return true;
}

std::uint64_t Model::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value().ptr());
    for (std::size_t i = 0; i < static_cast<std::size_t>(p->value().size()) * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

ParameterPtr Model::add(const std::string& name, Shape shape, std::int64_t fan_in, std::int64_t fan_out, bool relu,
                        Rng& rng) {
  const double limit = relu ? std::sqrt(6.0 / static_cast<double>(fan_in))
                            : std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  const std::int64_t n = shape_size(shape);
  auto p = std::make_shared<Parameter>(name, Tensor(std::move(shape), uniform(n, static_cast<float>(limit), rng)));
  params_.push_back(p);
  return p;
}

ParameterPtr Model::add_bias(const std::string& name, std::int64_t n) {
  auto p = std::make_shared<Parameter>(name, Tensor({n}));
  params_.push_back(p);
  return p;
}

Discriminator::Discriminator(std::uint64_t seed) : Model(Arch::Discriminator, seed) {
  Rng rng = Rng(seed).split(kInitStream);
  c1_ = add("conv1.kernel", {2, 2, 1, 32}, 4, 128, true, rng);
  c1b_ = add_bias("conv1.bias", 32);
  c2_ = add("conv2.kernel", {2, 2, 32, 64}, 128, 256, true, rng);
  c2b_ = add_bias("conv2.bias", 64);
  d1_ = add("dense1.weights", {3136, 256}, 3136, 256, true, rng);
  d1b_ = add_bias("dense1.bias", 256);
  d2_ = add("dense2.weights", {256, 10}, 256, 10, false, rng);
  d2b_ = add_bias("dense2.bias", 10);
}

Var Discriminator::forward(const Var& x, bool training, Rng* rng) const {
  check_image_batch(x, "discriminator");
  if (training && !rng) throw ContractError("discriminator: training forward needs an rng");
  Rng unused;
  Rng& r = rng ? *rng : unused;
  Var h = ops::maxpool2d(ops::relu(ops::conv2d(x, c1_->var(), c1b_->var(), 1, Padding::Same)));
  h = ops::maxpool2d(ops::relu(ops::conv2d(h, c2_->var(), c2b_->var(), 1, Padding::Same)));
  h = ops::dropout(h, 0.3f, training, r);
  h = ops::relu(ops::dense(ops::flatten(h), d1_->var(), d1b_->var()));
  h = ops::dropout(h, 0.5f, training, r);
  return ops::softmax(ops::dense(h, d2_->var(), d2b_->var()));
}

Tensor Discriminator::predict(const Tensor& x) const {
  return map_rows(x, kEvalChunk, [this](const Tensor& chunk) { return forward(constant(chunk), false, nullptr).value(); });
}

std::vector<int> Discriminator::predict_labels(const Tensor& x) const {
  const Tensor p = predict(x);
  const std::int64_t k = p.dim(1);
  std::vector<int> out(static_cast<std::size_t>(p.dim(0)));
  for (std::int64_t r = 0; r < p.dim(0); ++r) {
    int best = 0;
    for (std::int64_t j = 1; j < k; ++j)
      if (p[r * k + j] > p[r * k + best]) best = static_cast<int>(j);
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

Autoencoder::Autoencoder(Arch arch, std::uint64_t seed, std::int64_t condition_dim)
    : Model(arch, seed), condition_dim_(condition_dim) {
  Rng rng = Rng(seed).split(kInitStream);
  const std::int64_t code = kLatent + condition_dim;
  e1_ = add("enc.conv1.kernel", {2, 2, 1, 32}, 4, 128, true, rng);
  e1b_ = add_bias("enc.conv1.bias", 32);
  e2_ = add("enc.conv2.kernel", {2, 2, 32, 64}, 128, 256, true, rng);
  e2b_ = add_bias("enc.conv2.bias", 64);
  ez_ = add("enc.dense.weights", {3136, kLatent}, 3136, kLatent, false, rng);
  ezb_ = add_bias("enc.dense.bias", kLatent);
  dz_ = add("dec.dense.weights", {code, 3136}, code, 3136, false, rng);
  dzb_ = add_bias("dec.dense.bias", 3136);
  t1_ = add("dec.convT1.kernel", {2, 2, 64, 64}, 256, 256, true, rng);
  t1b_ = add_bias("dec.convT1.bias", 64);
  t2_ = add("dec.convT2.kernel", {2, 2, 32, 64}, 256, 128, true, rng);
  t2b_ = add_bias("dec.convT2.bias", 32);
  t3_ = add("dec.convT3.kernel", {2, 2, 1, 32}, 128, 4, false, rng);
  t3b_ = add_bias("dec.convT3.bias", 1);
}

Var Autoencoder::encode(const Var& x) const {
  check_image_batch(x, "encoder");
  Var h = ops::relu(ops::conv2d(x, e1_->var(), e1b_->var(), 2, Padding::Same));
  h = ops::relu(ops::conv2d(h, e2_->var(), e2b_->var(), 2, Padding::Same));
  return ops::dense(ops::flatten(h), ez_->var(), ezb_->var());
}

Var Autoencoder::decode(const Var& code) const {
  if (code.value().rank() != 2 || code.shape()[1] != kLatent + condition_dim_)
    throw DimensionError("decoder: expected (B," + std::to_string(kLatent + condition_dim_) + "), got " +
                         shape_str(code.shape()));
  const std::int64_t b = code.shape()[0];
  Var h = ops::reshape(ops::dense(code, dz_->var(), dzb_->var()), Shape{b, 7, 7, 64});
  h = ops::relu(ops::conv_transpose2d(h, t1_->var(), t1b_->var(), 2));
  h = ops::relu(ops::conv_transpose2d(h, t2_->var(), t2b_->var(), 2));
  return ops::sigmoid(ops::conv_transpose2d(h, t3_->var(), t3b_->var(), 1));
}

Tensor Autoencoder::encode(const Tensor& x) const {
  return map_rows(x, kEvalChunk, [this](const Tensor& chunk) { return encode(constant(chunk)).value(); });
}

Tensor Autoencoder::reconstruct(const Tensor& x) const {
  if (condition_dim_ != 0) throw ContractError("reconstruct: conditional decoder needs a target");
  return map_rows(x, kEvalChunk, [this](const Tensor& chunk) { return Autoencoder::forward(constant(chunk)).value(); });
}

Var Generator::forward(const Var& x, const Var& target_onehot) const {
  if (target_onehot.value().rank() != 2 || target_onehot.shape()[0] != x.shape()[0] ||
      target_onehot.shape()[1] != condition_dim_)
    throw DimensionError("generator: condition must be (B,10), got " + shape_str(target_onehot.shape()));
  return decode(ops::concat_cols(encode(x), target_onehot));
}

Tensor Generator::generate(const Tensor& x, const Tensor& target_onehot) const {
  if (target_onehot.rank() != 2 || target_onehot.dim(0) != x.dim(0))
    throw DimensionError("generator: condition rows must match inputs");
  std::vector<Tensor> parts;
  for (std::int64_t r = 0; r < x.dim(0); r += kEvalChunk) {
    const std::int64_t e = std::min(x.dim(0), r + kEvalChunk);
    parts.push_back(forward(constant(x.slice_rows(r, e)), constant(target_onehot.slice_rows(r, e))).value());
  }
  return concat_rows(parts);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch <= 0) throw ConfigError("batch must be positive");
  adam.validate();
}

Tensor map_rows(const Tensor& x, std::int64_t chunk, const std::function<Tensor(const Tensor&)>& fn) {
  if (x.rank() < 1 || x.dim(0) == 0) throw DimensionError("map_rows: empty input");
  if (x.dim(0) <= chunk) return fn(x);
  std::vector<Tensor> parts;
  for (std::int64_t r = 0; r < x.dim(0); r += chunk) parts.push_back(fn(x.slice_rows(r, std::min(x.dim(0), r + chunk))));
  return concat_rows(parts);
}

double accuracy(const Discriminator& d, const mnist::Dataset& data) {
  const auto pred = d.predict_labels(data.images);
  std::int64_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == data.labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double mean_reconstruction_error(const Autoencoder& ae, const Tensor& images) {
  const Tensor r = ae.reconstruct(images);
  return squared_distance(images, r) / static_cast<double>(images.dim(0));
}

TrainReport train_discriminator(Discriminator& d, const mnist::Dataset& train, const mnist::Dataset& test,
                                const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (d.frozen()) throw ContractError("train_discriminator: model is frozen");
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport rep{"discriminator", {}, {}, "test_accuracy", 0.0, 0.0, cfg.seed, cfg.epochs};
  const Rng root(cfg.seed);
  mnist::BatchIterator it(train, cfg.batch, root.split(kOrderStream)());
  Rng drop = root.split(kDropoutStream);
  long step = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    it.start_epoch(static_cast<std::uint64_t>(e));
    double total = 0.0;
    std::int64_t seen = 0;
    mnist::Batch b;
    while (it.next(b)) {
      if (!b.images.all_finite()) throw TrainingError("non-finite input batch", e, step);
      Var probs = d.forward(constant(b.images), true, &drop);
      Var loss = ops::categorical_cross_entropy(probs, constant(b.onehot));
      const double l = loss.value().item();
      require_finite(l, e, step);
      backward(loss);
      adam_step(d.parameters(), cfg.adam);
      total += l * static_cast<double>(b.labels.size());
      seen += static_cast<std::int64_t>(b.labels.size());
      ++step;
    }
    rep.epoch_losses.push_back(total / static_cast<double>(seen));
    rep.epoch_checksums.push_back(d.checksum());
    if (on_epoch) on_epoch(e, rep.epoch_losses.back());
  }
  rep.metric = accuracy(d, test);
  rep.seconds = seconds_since(t0);
  return rep;
}

TrainReport train_autoencoder(Autoencoder& ae, const mnist::Dataset& train, const TrainConfig& cfg,
                              const EpochCallback& on_epoch) {
  cfg.validate();
  if (ae.arch() != Arch::Autoencoder) throw ContractError("train_autoencoder: needs an unconditioned autoencoder");
  if (ae.frozen()) throw ContractError("train_autoencoder: model is frozen");
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport rep{"autoencoder", {}, {}, "mean_reconstruction_error", 0.0, 0.0, cfg.seed, cfg.epochs};
  const Rng root(cfg.seed);
  mnist::BatchIterator it(train, cfg.batch, root.split(kOrderStream)());
  long step = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    it.start_epoch(static_cast<std::uint64_t>(e));
    double total = 0.0;
    std::int64_t seen = 0;
    mnist::Batch b;
    while (it.next(b)) {
      if (!b.images.all_finite()) throw TrainingError("non-finite input batch", e, step);
      Var x = constant(b.images);
      Var loss = ops::scale(ops::l2_sq(ae.forward(x), x), 1.0f / static_cast<float>(b.images.size()));
      const double l = loss.value().item();
      require_finite(l, e, step);
      backward(loss);
      adam_step(ae.parameters(), cfg.adam);
      total += l * static_cast<double>(b.labels.size());
      seen += static_cast<std::int64_t>(b.labels.size());
      ++step;
    }
    rep.epoch_losses.push_back(total / static_cast<double>(seen));
    rep.epoch_checksums.push_back(ae.checksum());
    if (on_epoch) on_epoch(e, rep.epoch_losses.back());
  }
  rep.metric = mean_reconstruction_error(ae, train.images);
  rep.seconds = seconds_since(t0);
  return rep;
}

}  // namespace cfx::models
