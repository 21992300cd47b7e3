#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>

#include "../support/gradcheck.hpp"
#include "cfx/checkpoint.hpp"
#include "cfx/error.hpp"
#include "cfx/io.hpp"
#include "cfx/models.hpp"
#include "doctest.h"

using namespace cfx;
using namespace cfx::models;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path d = fs::temp_directory_path() / ("cfx_models_test_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

std::optional<fs::path> mnist_dir() {
  const char* env = std::getenv("CFX_MNIST_DIR");
  if (!env || !*env) return std::nullopt;
  const fs::path dir(env);
  if (!fs::exists(dir / "t10k-labels-idx1-ubyte") && !fs::exists(dir / "t10k-labels-idx1-ubyte.gz")) return std::nullopt;
  return dir;
}

Tensor random_images(std::int64_t n, std::uint64_t seed) {
  Rng rng(seed);
  return testing::random_tensor({n, 28, 28, 1}, rng, 0.0f, 1.0f);
}

std::int64_t count(const Model& m, const std::string& name) {
  for (const auto& p : m.parameters())
    if (p->name() == name) return p->value().size();
  return -1;
}

}  // namespace

TEST_CASE("parameter counts match the layer list") {
  const Discriminator d(1);
  CHECK(count(d, "conv1.kernel") + count(d, "conv1.bias") == 160);
  CHECK(count(d, "conv2.kernel") + count(d, "conv2.bias") == 8256);
  CHECK(count(d, "dense1.weights") + count(d, "dense1.bias") == 803072);
  CHECK(count(d, "dense2.weights") + count(d, "dense2.bias") == 2570);
  CHECK(d.parameter_count() == 814058);

  const Autoencoder ae(1);
  CHECK(count(ae, "enc.dense.weights") + count(ae, "enc.dense.bias") == 50192);
  CHECK(count(ae, "dec.dense.weights") + count(ae, "dec.dense.bias") == 53312);
  CHECK(count(ae, "dec.convT1.kernel") + count(ae, "dec.convT1.bias") == 16448);
  CHECK(count(ae, "dec.convT2.kernel") + count(ae, "dec.convT2.bias") == 8224);
  CHECK(count(ae, "dec.convT3.kernel") + count(ae, "dec.convT3.bias") == 129);
  CHECK(ae.parameter_count() == 136721);

  const Generator g(1);
  CHECK(count(g, "dec.dense.weights") + count(g, "dec.dense.bias") == 84672);
  CHECK(g.parameter_count() == 168081);
}

TEST_CASE("forward shapes and ranges") {
  const Discriminator d(2);
  const Autoencoder ae(3);
  const Generator g(4);
  const Tensor x = random_images(7, 5);

  const Tensor p = d.predict(x);
  REQUIRE(p.shape() == Shape{7, 10});
  for (std::int64_t r = 0; r < 7; ++r) {
    double s = 0.0;
    for (std::int64_t j = 0; j < 10; ++j) s += p[r * 10 + j];
    CHECK(std::abs(s - 1.0) <= 1e-5);
  }

  CHECK(ae.encode(x).shape() == Shape{7, 16});
  const Tensor rec = ae.reconstruct(x);
  CHECK(rec.shape() == x.shape());
  for (float v : rec.data()) CHECK((v > 0.0f && v < 1.0f));

  Tensor onehot({7, 10});
  for (int r = 0; r < 7; ++r) onehot[r * 10 + r] = 1.0f;
  const Tensor gen = g.generate(x, onehot);
  CHECK(gen.shape() == x.shape());
  for (float v : gen.data()) CHECK((v > 0.0f && v < 1.0f));

  CHECK_THROWS_AS(d.predict(Tensor({2, 27, 28, 1})), DimensionError);
  CHECK_THROWS_AS(g.generate(x, Tensor({7, 9})), DimensionError);
  CHECK_THROWS_AS(g.reconstruct(x), ContractError);
}

TEST_CASE("eval mode is deterministic and chunking does not change results") {
  const Discriminator d(8);
  const Autoencoder ae(9);
  const Tensor x = random_images(1203, 10);
  CHECK(d.predict(x) == d.predict(x));
  CHECK(ae.reconstruct(x) == ae.reconstruct(x));
  CHECK(d.predict(x).slice_rows(1000, 1203) == d.predict(x.slice_rows(1000, 1203)));
}

TEST_CASE("equal seeds build equal models") {
  CHECK(Discriminator(5).checksum() == Discriminator(5).checksum());
  CHECK(Discriminator(5).checksum() != Discriminator(6).checksum());
  CHECK(Generator(5).checksum() == Generator(5).checksum());
}

TEST_CASE("two samples are memorised") {
  mnist::Dataset two{random_images(2, 11), {3, 8}};
  Discriminator d(12);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch = 2;
  const auto rep = train_discriminator(d, two, two, cfg);
  CHECK(rep.metric == 1.0);
  CHECK(rep.epoch_losses.size() == 200);
  CHECK(rep.epoch_losses.back() < rep.epoch_losses.front());
}

TEST_CASE("constant-zero data is reconstructed almost exactly") {
  mnist::Dataset zeros{Tensor({64, 28, 28, 1}), std::vector<int>(64, 0)};
  Autoencoder ae(13);
  const double before = mean_reconstruction_error(ae, zeros.images);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch = 8;
  cfg.adam.learning_rate = 5e-2f;
  const auto rep = train_autoencoder(ae, zeros, cfg);
  CHECK(rep.metric < 0.01 * before);
}

TEST_CASE("non-finite losses raise a training error with position") {
  mnist::Dataset bad{random_images(4, 14), {0, 1, 2, 3}};
  bad.images[5] = std::numeric_limits<float>::quiet_NaN();
  Discriminator d(15);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 4;
  try {
    train_discriminator(d, bad, bad, cfg);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() == 0);
    CHECK(e.step() == 0);
  }
  TrainConfig neg;
  neg.batch = 0;
  CHECK_THROWS_AS(train_discriminator(d, bad, bad, neg), ConfigError);
}

TEST_CASE("checkpoints round-trip and reject corruption") {
  const auto dir = scratch_dir();
  Generator g(21);
  g.parameters()[3]->value()[0] = 0.125f;
  checkpoint::save(g, dir / "g.ckpt", R"({"epochs":3})");
  const Generator back = checkpoint::load<Generator>(dir / "g.ckpt");
  CHECK(back.checksum() == g.checksum());
  const auto h = checkpoint::read_header(dir / "g.ckpt");
  CHECK(h.arch == Arch::Generator);
  CHECK(h.seed == 21);
  CHECK(h.metadata_json == R"({"epochs":3})");

  CHECK(checkpoint::serialize(Generator(21)) == checkpoint::serialize(Generator(21)));

  Autoencoder wrong(1);
  CHECK_THROWS_AS(checkpoint::load_into(wrong, dir / "g.ckpt"), ParseError);

  std::string bytes = io::read_text(dir / "g.ckpt");
  bytes[bytes.size() / 2] ^= 0x01;
  io::write_atomic(dir / "bad.ckpt", bytes);
  CHECK_THROWS_AS(checkpoint::load<Generator>(dir / "bad.ckpt"), ParseError);
  io::write_atomic(dir / "short.ckpt", bytes.substr(0, 100));
  CHECK_THROWS_AS(checkpoint::load<Generator>(dir / "short.ckpt"), ParseError);
  io::write_atomic(dir / "junk.ckpt", "hello\n");
  CHECK_THROWS_AS(checkpoint::read_header(dir / "junk.ckpt"), ParseError);

  for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().string().find(".tmp.") == std::string::npos);
}

TEST_CASE("untrained discriminator guesses at chance on MNIST") {
  const auto dir = mnist_dir();
  if (!dir) {
    MESSAGE("CFX_MNIST_DIR not set; skipping");
    return;
  }
  const auto test = mnist::load(*dir, mnist::Split::Test).head(2000);
  Discriminator d(0);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto rep = train_discriminator(d, test, test, cfg);
  CHECK(std::abs(rep.metric - 0.1) <= 0.05);
}

TEST_CASE("short autoencoder training cuts reconstruction error tenfold") {
  const auto dir = mnist_dir();
  if (!dir) {
    MESSAGE("CFX_MNIST_DIR not set; skipping");
    return;
  }
  const auto data = mnist::load(*dir, mnist::Split::Test).head(3000);
  Autoencoder ae(3);
  const double before = mean_reconstruction_error(ae, data.images);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch = 32;
  const auto rep = train_autoencoder(ae, data, cfg);
  MESSAGE("reconstruction error " << before << " -> " << rep.metric);
  CHECK(rep.metric * 10.0 <= before);
}
