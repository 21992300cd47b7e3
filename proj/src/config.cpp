#include "cfx/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <tuple>
#include <vector>

#include "cfx/error.hpp"
#include "cfx/io.hpp"
#include "cfx/rng.hpp"

namespace cfx::config {

namespace {

using C = ExperimentConfig;

template <typename T>
std::string fmt(T v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_num(const std::string& key, const std::string& s) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw ConfigError("config key '" + key + "': cannot parse '" + s + "'");
  return v;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const C&)> get;
  std::function<void(C&, const std::string&)> set;
};

template <typename T>
Field num(std::string section, std::string key, std::function<T&(C&)> ref) {
  const std::string full = section + "." + key;
  return {section, key, [ref](const C& c) { return fmt(ref(const_cast<C&>(c))); },
          [ref, full](C& c, const std::string& v) { ref(c) = parse_num<T>(full, v); }};
}

void add_train(std::vector<Field>& f, const std::string& s, models::TrainConfig C::*m) {
  f.push_back(num<int>(s, "epochs", [m](C& c) -> int& { return (c.*m).epochs; }));
  f.push_back(num<std::int64_t>(s, "batch", [m](C& c) -> std::int64_t& { return (c.*m).batch; }));
  f.push_back(num<float>(s, "learning_rate", [m](C& c) -> float& { return (c.*m).adam.learning_rate; }));
  f.push_back(num<float>(s, "beta1", [m](C& c) -> float& { return (c.*m).adam.beta1; }));
  f.push_back(num<float>(s, "beta2", [m](C& c) -> float& { return (c.*m).adam.beta2; }));
  f.push_back(num<float>(s, "eps", [m](C& c) -> float& { return (c.*m).adam.eps; }));
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> f;
    f.push_back({"run", "preset", [](const C& c) { return preset_name(c.preset); },
                 [](C& c, const std::string& v) {
                   if (v == "full") c.preset = Preset::Full;
                   else if (v == "desk") c.preset = Preset::Desk;
                   else throw ConfigError("run.preset must be full or desk, got '" + v + "'");
                 }});
    f.push_back(num<std::uint64_t>("run", "seed", [](C& c) -> std::uint64_t& { return c.seed; }));
    f.push_back({"run", "out", [](const C& c) { return c.out_dir.string(); },
                 [](C& c, const std::string& v) { c.out_dir = v; }});
    f.push_back({"data", "mnist_dir", [](const C& c) { return c.mnist_dir.string(); },
                 [](C& c, const std::string& v) { c.mnist_dir = v; }});
    f.push_back(num<std::int64_t>("data", "train_size", [](C& c) -> std::int64_t& { return c.train_size; }));
    f.push_back(num<std::int64_t>("data", "eval_size", [](C& c) -> std::int64_t& { return c.eval_size; }));
    add_train(f, "discriminator", &C::discriminator);
    add_train(f, "autoencoder", &C::autoencoder);
    add_train(f, "class_autoencoder", &C::class_autoencoder);
    const std::string g = "generator";
    f.push_back(num<float>(g, "alpha", [](C& c) -> float& { return c.generator.alpha; }));
    f.push_back(num<float>(g, "beta", [](C& c) -> float& { return c.generator.beta; }));
    f.push_back(num<float>(g, "gamma", [](C& c) -> float& { return c.generator.gamma; }));
    f.push_back({g, "reduction",
                 [](const C& c) { return std::string(c.generator.reduction == amortized::PixelReduction::Sum ? "sum" : "mean"); },
                 [](C& c, const std::string& v) {
                   if (v == "sum") c.generator.reduction = amortized::PixelReduction::Sum;
                   else if (v == "mean") c.generator.reduction = amortized::PixelReduction::Mean;
                   else throw ConfigError("generator.reduction must be sum or mean, got '" + v + "'");
                 }});
    f.push_back(num<int>(g, "epochs", [](C& c) -> int& { return c.generator.epochs; }));
    f.push_back(num<std::int64_t>(g, "batch", [](C& c) -> std::int64_t& { return c.generator.batch; }));
    f.push_back(num<float>(g, "learning_rate", [](C& c) -> float& { return c.generator.adam.learning_rate; }));
    f.push_back(num<float>(g, "beta1", [](C& c) -> float& { return c.generator.adam.beta1; }));
    f.push_back(num<float>(g, "beta2", [](C& c) -> float& { return c.generator.adam.beta2; }));
    f.push_back(num<float>(g, "eps", [](C& c) -> float& { return c.generator.adam.eps; }));
    const std::string p = "cfproto";
    f.push_back(num<float>(p, "beta", [](C& c) -> float& { return c.cfproto.beta; }));
    f.push_back(num<float>(p, "gamma", [](C& c) -> float& { return c.cfproto.gamma; }));
    f.push_back(num<float>(p, "theta", [](C& c) -> float& { return c.cfproto.theta; }));
    f.push_back(num<float>(p, "c_init", [](C& c) -> float& { return c.cfproto.c_init; }));
    f.push_back(num<float>(p, "kappa", [](C& c) -> float& { return c.cfproto.kappa; }));
    f.push_back(num<int>(p, "K", [](C& c) -> int& { return c.cfproto.K; }));
    f.push_back(num<int>(p, "c_steps", [](C& c) -> int& { return c.cfproto.c_steps; }));
    f.push_back(num<int>(p, "inner_steps", [](C& c) -> int& { return c.cfproto.inner_steps; }));
    f.push_back(num<float>(p, "step_size", [](C& c) -> float& { return c.cfproto.step_size; }));
    f.push_back(num<float>(p, "c_multiplier", [](C& c) -> float& { return c.cfproto.c_multiplier; }));
    f.push_back(num<double>("metrics", "epsilon", [](C& c) -> double& { return c.metrics.epsilon; }));
    f.push_back(num<int>("report", "grid_rows", [](C& c) -> int& { return c.grid_rows; }));
    return f;
  }();
  return f;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string preset_name(Preset p) { return p == Preset::Desk ? "desk" : "full"; }

void ExperimentConfig::validate() const {
  if (train_size <= 0) throw ConfigError("data.train_size must be positive");
  if (eval_size <= 0) throw ConfigError("data.eval_size must be positive");
  if (grid_rows <= 0) throw ConfigError("report.grid_rows must be positive");
  if (out_dir.empty()) throw ConfigError("run.out must not be empty");
  discriminator.validate();
  autoencoder.validate();
  class_autoencoder.validate();
  generator.validate();
  cfproto.validate();
  metrics.validate();
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  auto adam = [](const AdamConfig& a) { return std::tie(a.learning_rate, a.beta1, a.beta2, a.eps); };
  auto train = [&](const models::TrainConfig& t) { return std::tuple(t.epochs, t.batch, adam(t.adam)); };
  auto gen = [&](const amortized::AmortizedTrainConfig& g) {
    return std::tuple(g.alpha, g.beta, g.gamma, g.reduction, g.epochs, g.batch, adam(g.adam));
  };
  auto cfp = [](const cfproto::CFProtoConfig& c) {
    return std::tie(c.beta, c.gamma, c.theta, c.c_init, c.kappa, c.K, c.c_steps, c.inner_steps, c.step_size,
                    c.c_multiplier);
  };
  return preset == o.preset && seed == o.seed && out_dir == o.out_dir && mnist_dir == o.mnist_dir &&
         train_size == o.train_size && eval_size == o.eval_size && train(discriminator) == train(o.discriminator) &&
         train(autoencoder) == train(o.autoencoder) && train(class_autoencoder) == train(o.class_autoencoder) &&
         gen(generator) == gen(o.generator) && cfp(cfproto) == cfp(o.cfproto) &&
         metrics.epsilon == o.metrics.epsilon && grid_rows == o.grid_rows;
}

ExperimentConfig preset_defaults(Preset p) {
  ExperimentConfig c;
  c.preset = p;
  if (p == Preset::Desk) {
    c.train_size = 10000;
    c.eval_size = 500;
    c.discriminator.epochs /= 2;
    c.autoencoder.epochs /= 2;
    c.class_autoencoder.epochs /= 2;
    c.generator.epochs /= 2;
  }
  return c;
}

ExperimentConfig parse_ini(std::string_view text, Preset fallback) {
  std::map<std::pair<std::string, std::string>, std::pair<std::string, int>> values;
  std::string section;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    const std::string at = "config line " + std::to_string(line_no) + ": ";
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(at + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(at + "expected key = value");
    if (section.empty()) throw ConfigError(at + "key outside any section");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (!values.emplace(std::pair(section, key), std::pair(trim(std::string_view(line).substr(eq + 1)), line_no)).second)
      throw ConfigError(at + "duplicate key " + section + "." + key);
  }
  ExperimentConfig c = preset_defaults(fallback);
  if (auto it = values.find({"run", "preset"}); it != values.end()) {
    fields().front().set(c, it->second.first);
    c = preset_defaults(c.preset);
  }
  for (const auto& f : fields()) {
    auto it = values.find({f.section, f.key});
    if (it == values.end()) continue;
    f.set(c, it->second.first);
    values.erase(it);
  }
  if (!values.empty()) {
    const auto& [k, v] = *values.begin();
    throw ConfigError("config line " + std::to_string(v.second) + ": unknown key " + k.first + "." + k.second);
  }
  c.validate();
  return c;
}

ExperimentConfig load(const std::filesystem::path& path, Preset fallback) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_ini(io::read_text(path), fallback);
}

std::string to_ini(const ExperimentConfig& c) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(c) + '\n';
  }
  return out;
}

std::uint64_t component_seed(std::uint64_t run_seed, SeedStream stream, int offset) {
  Rng child = Rng(run_seed).split(static_cast<std::uint64_t>(stream) + static_cast<std::uint64_t>(offset));
  return child();
}

}  // namespace cfx::config
