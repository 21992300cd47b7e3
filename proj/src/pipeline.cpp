#include "cfx/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <map>

#include "cfx/amortized.hpp"
#include "cfx/cfproto.hpp"
#include "cfx/checkpoint.hpp"
#include "cfx/error.hpp"
#include "cfx/io.hpp"
#include "cfx/mnist.hpp"
#include "json.hpp"

namespace cfx::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using config::ExperimentConfig;
using config::SeedStream;

namespace {

constexpr std::int64_t kProgressEvery = 50;

const std::vector<Method> kAllMethods = {Method::CFPROTO, Method::DGCEx, Method::DADGCEx};

std::string method_key(Method m) {
  switch (m) {
    case Method::CFPROTO: return "cfproto";
    case Method::DGCEx: return "dgcex";
    case Method::DADGCEx: return "dadgcex";
  }
  return "?";
}

void write_file(const fs::path& path, const std::string& bytes) {
  fs::create_directories(path.parent_path());
  io::write_atomic(path, bytes);
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw PrerequisiteError(what + " not found at " + path.string());
}

mnist::Dataset load_split(const ExperimentConfig& cfg, mnist::Split split) {
  if (!fs::is_directory(cfg.mnist_dir)) throw ConfigError("data.mnist_dir does not exist: " + cfg.mnist_dir.string());
  return mnist::load(cfg.mnist_dir, split);
}

mnist::Dataset train_rows(const ExperimentConfig& cfg) {
  auto full = load_split(cfg, mnist::Split::Train);
  if (cfg.train_size > full.size())
    throw ConfigError("data.train_size " + std::to_string(cfg.train_size) + " exceeds the " +
                      std::to_string(full.size()) + " training images");
  return full.head(cfg.train_size);
}

mnist::Dataset eval_rows(const ExperimentConfig& cfg, const mnist::Dataset& test) {
  if (cfg.eval_size > test.size())
    throw ConfigError("data.eval_size " + std::to_string(cfg.eval_size) + " exceeds the " +
                      std::to_string(test.size()) + " test images");
  return test.head(cfg.eval_size);
}

template <class M>
M load_frozen(const fs::path& path, const std::string& what) {
  require_file(path, what + " checkpoint");
  M m = checkpoint::load<M>(path);
  m.set_frozen(true);
  return m;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json report_json(const models::TrainReport& r) {
  json j;
  j["model"] = r.model;
  j["seed"] = r.seed;
  j["epochs"] = r.epochs;
  j["epoch_losses"] = r.epoch_losses;
  json sums = json::array();
  for (auto c : r.epoch_checksums) sums.push_back(hex64(c));
  j["epoch_checksums"] = sums;
  j[r.metric_name.empty() ? "metric" : r.metric_name] = r.metric;
  return j;
}

std::string metadata(const ExperimentConfig& cfg, Component c, const models::TrainReport& r) {
  json j;
  j["component"] = component_name(c);
  j["run_seed"] = cfg.seed;
  j["train_size"] = cfg.train_size;
  j["epochs"] = r.epochs;
  return j.dump();
}

models::EpochCallback epoch_printer(std::ostream& progress, const std::string& name, int epochs) {
  return [&progress, name, epochs](int e, double loss) {
    progress << "[" << name << "] epoch " << (e + 1) << "/" << epochs << " loss " << loss << std::endl;
  };
}

void save_reports(const ExperimentConfig& cfg, Component c, const std::vector<models::TrainReport>& reps) {
  json arr = json::array();
  std::string timing = "model,seconds\n";
  for (const auto& r : reps) {
    arr.push_back(report_json(r));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", r.seconds);
    timing += r.model + "," + buf + "\n";
  }
  const std::string name = component_name(c);
  write_file(cfg.out_dir / "reports" / ("train_" + name + ".json"), (reps.size() == 1 ? arr[0] : arr).dump(2) + "\n");
  write_file(cfg.out_dir / "timing" / ("train_" + name + ".csv"), timing);
}

models::TrainReport train_generator(const ExperimentConfig& cfg, Component c, const mnist::Dataset& train,
                                    std::ostream& progress) {
  const fs::path& out = cfg.out_dir;
  const auto d = load_frozen<models::Discriminator>(paths::checkpoint(out, "discriminator"), "discriminator");
  std::optional<models::Autoencoder> daae;
  amortized::AmortizedTrainConfig gc = cfg.generator;
  gc.seed = config::component_seed(cfg.seed, SeedStream::Generator);
  if (c == Component::DADGCEx) {
    daae = load_frozen<models::Autoencoder>(paths::checkpoint(out, "ae"), "DA-AE (train ae first)");
  } else {
    gc.gamma = 0.0f;
  }
  models::Generator g(gc.seed);
  const std::string name = component_name(c);
  auto rep = amortized::train_amortized(g, d, daae ? &*daae : nullptr, train, gc, epoch_printer(progress, name, gc.epochs));
  const auto test = load_split(cfg, mnist::Split::Test);
  rep.metric = amortized::validity_rate(g, d, eval_rows(cfg, test));
  rep.metric_name = "eval_pair_validity";
  checkpoint::save(g, paths::generator_checkpoint(out, c == Component::DGCEx ? Method::DGCEx : Method::DADGCEx),
                   metadata(cfg, c, rep));
  return rep;
}

std::vector<std::int64_t> read_speed(const fs::path& path, std::map<std::int64_t, double>& out) {
  const std::string text = io::read_text(path);
  std::vector<std::int64_t> ids;
  std::size_t start = text.find('\n') + 1;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::int64_t id = std::stoll(line.substr(0, comma));
    out[id] = std::stod(line.substr(comma + 1));
    ids.push_back(id);
  }
  return ids;
}

std::string speed_csv(const std::vector<std::pair<std::int64_t, double>>& rows) {
  std::string out = "instance_id,seconds\n";
  for (const auto& [id, s] : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f", s);
    out += std::to_string(id) + "," + buf + "\n";
  }
  return out;
}

LogEntry entry_of(std::int64_t id, int label, const CounterfactualResult& r) {
  return {id, label, r.y, r.y_cf, r.y_pred_cf, r.valid};
}

void write_log(const ExperimentConfig& cfg, const ExplanationLog& log,
               const std::vector<std::pair<std::int64_t, double>>& speed) {
  write_file(paths::log(cfg.out_dir, log.method), log_jsonl(log));
  fs::create_directories(paths::log_images(cfg.out_dir, log.method).parent_path());
  mnist::write_idx_floats(paths::log_images(cfg.out_dir, log.method), log.x_cf);
  write_file(paths::speed(cfg.out_dir, log.method), speed_csv(speed));
}

struct Explainers {
  std::optional<models::Discriminator> d;
  std::optional<models::Autoencoder> ae;
  std::optional<cfproto::PrototypeIndex> index;
  std::optional<models::Generator> g;
};

Explainers load_explainers(const ExperimentConfig& cfg, Method m) {
  Explainers e;
  e.d = load_frozen<models::Discriminator>(paths::checkpoint(cfg.out_dir, "discriminator"), "discriminator");
  if (m == Method::CFPROTO) {
    e.ae = load_frozen<models::Autoencoder>(paths::checkpoint(cfg.out_dir, "ae"), "autoencoder");
    e.index.emplace(*e.ae, train_rows(cfg));
  } else {
    e.g = load_frozen<models::Generator>(paths::generator_checkpoint(cfg.out_dir, m), method_name(m) + " generator");
  }
  return e;
}

CounterfactualResult run_one(const ExperimentConfig& cfg, const Explainers& e, Method m, const Tensor& x,
                             std::optional<int> target) {
  if (m == Method::CFPROTO) return cfproto::explain(x, *e.d, *e.ae, *e.index, cfg.cfproto, target).result;
  return amortized::explain_amortized(*e.g, *e.d, x, *target, m);
}

void print_progress(std::ostream& progress, Method m, std::int64_t done, std::int64_t n, double valid, double secs) {
  progress << "[explain " << method_key(m) << "] " << done << "/" << n << " valid " << valid << "/" << done << " ("
           << secs << " s)" << std::endl;
}

}  // namespace

std::string component_name(Component c) {
  switch (c) {
    case Component::Discriminator: return "discriminator";
    case Component::Autoencoder: return "ae";
    case Component::ClassAutoencoders: return "ae-per-class";
    case Component::DGCEx: return "dgcex";
    case Component::DADGCEx: return "dadgcex";
  }
  return "?";
}

Component component_from_name(const std::string& name) {
  for (auto c : {Component::Discriminator, Component::Autoencoder, Component::ClassAutoencoders, Component::DGCEx,
                 Component::DADGCEx})
    if (component_name(c) == name) return c;
  throw ConfigError("unknown component '" + name + "' (expected discriminator, ae, ae-per-class, dgcex or dadgcex)");
}

namespace paths {
fs::path checkpoint(const fs::path& out, const std::string& name) { return out / "checkpoints" / (name + ".ckpt"); }
fs::path class_checkpoint(const fs::path& out, int cls) { return checkpoint(out, "ae_class_" + std::to_string(cls)); }
fs::path generator_checkpoint(const fs::path& out, Method m) { return checkpoint(out, method_key(m)); }
fs::path log(const fs::path& out, Method m) { return out / "logs" / (method_key(m) + ".jsonl"); }
fs::path log_images(const fs::path& out, Method m) { return out / "logs" / (method_key(m) + "_xcf.idx"); }
fs::path speed(const fs::path& out, Method m) { return out / "timing" / ("speed_" + method_key(m) + ".csv"); }
}  // namespace paths

TrainSummary train(const ExperimentConfig& cfg, Component c, std::ostream& progress) {
  cfg.validate();
  const auto train = train_rows(cfg);
  TrainSummary s{c, {}};
  const fs::path& out = cfg.out_dir;
  const std::string name = component_name(c);
  switch (c) {
    case Component::Discriminator: {
      auto tc = cfg.discriminator;
      tc.seed = config::component_seed(cfg.seed, SeedStream::Discriminator);
      models::Discriminator d(tc.seed);
      const auto test = load_split(cfg, mnist::Split::Test);
      s.reports.push_back(models::train_discriminator(d, train, test, tc, epoch_printer(progress, name, tc.epochs)));
      checkpoint::save(d, paths::checkpoint(out, "discriminator"), metadata(cfg, c, s.reports.back()));
      progress << "[" << name << "] test accuracy " << s.reports.back().metric << std::endl;
      break;
    }
    case Component::Autoencoder: {
      auto tc = cfg.autoencoder;
      tc.seed = config::component_seed(cfg.seed, SeedStream::Autoencoder);
      models::Autoencoder ae(tc.seed);
      s.reports.push_back(models::train_autoencoder(ae, train, tc, epoch_printer(progress, name, tc.epochs)));
      checkpoint::save(ae, paths::checkpoint(out, "ae"), metadata(cfg, c, s.reports.back()));
      break;
    }
    case Component::ClassAutoencoders: {
      for (int k = 0; k < mnist::kClasses; ++k) {
        auto tc = cfg.class_autoencoder;
        tc.seed = config::component_seed(cfg.seed, SeedStream::ClassAutoencoder, k);
        models::Autoencoder ae(tc.seed);
        const std::string label = "ae_class_" + std::to_string(k);
        auto rep = models::train_autoencoder(ae, mnist::class_subset(train, k), tc, epoch_printer(progress, label, tc.epochs));
        rep.model = label;
        checkpoint::save(ae, paths::class_checkpoint(out, k), metadata(cfg, c, rep));
        s.reports.push_back(std::move(rep));
      }
      break;
    }
    case Component::DGCEx:
    case Component::DADGCEx:
      s.reports.push_back(train_generator(cfg, c, train, progress));
      progress << "[" << name << "] eval pair validity " << s.reports.back().metric << std::endl;
      break;
  }
  save_reports(cfg, c, s.reports);
  return s;
}

std::string log_jsonl(const ExplanationLog& log) {
  std::string out;
  for (const auto& e : log.entries) {
    json j;
    j["id"] = e.id;
    j["method"] = method_name(log.method);
    j["label"] = e.label;
    j["y"] = e.y;
    j["y_cf"] = e.y_cf;
    j["y_pred_cf"] = e.y_pred_cf;
    j["valid"] = e.valid;
    out += j.dump() + "\n";
  }
  return out;
}

ExplanationLog read_log(const fs::path& out, Method m) {
  const fs::path path = paths::log(out, m), images = paths::log_images(out, m);
  require_file(path, method_name(m) + " explanation log (run explain first)");
  require_file(images, method_name(m) + " counterfactual images");
  ExplanationLog log;
  log.method = m;
  const std::string text = io::read_text(path);
  std::size_t start = 0;
  int line_no = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (method_from_name(j.at("method").get<std::string>()) != m) throw InvariantError("method mismatch");
      log.entries.push_back({j.at("id").get<std::int64_t>(), j.at("label").get<int>(), j.at("y").get<int>(),
                             j.at("y_cf").get<int>(), j.at("y_pred_cf").get<int>(), j.at("valid").get<bool>()});
    } catch (const std::exception& e) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  log.x_cf = mnist::read_idx_floats(images);
  if (log.x_cf.rank() != 4 || log.x_cf.dim(0) != static_cast<std::int64_t>(log.entries.size()))
    throw ParseError(images.string() + ": image count does not match " + path.string());
  return log;
}

void explain_protocol(const ExperimentConfig& cfg, std::optional<Method> method, std::ostream& progress) {
  cfg.validate();
  const auto test = load_split(cfg, mnist::Split::Test);
  const auto rows = eval_rows(cfg, test);
  const std::int64_t n = rows.size();
  std::vector<Method> methods = method ? std::vector<Method>{*method} : kAllMethods;

  for (Method m : methods) {
    // Amortized methods reuse the CFPROTO targets.
    std::optional<ExplanationLog> proto_log;
    if (m != Method::CFPROTO) {
      proto_log = read_log(cfg.out_dir, Method::CFPROTO);
      if (static_cast<std::int64_t>(proto_log->entries.size()) != n)
        throw PrerequisiteError("CFPROTO log covers " + std::to_string(proto_log->entries.size()) +
                                " instances but data.eval_size is " + std::to_string(n) + "; rerun explain");
    }
    const Explainers e = load_explainers(cfg, m);
    ExplanationLog log;
    log.method = m;
    std::vector<Tensor> images;
    std::vector<std::pair<std::int64_t, double>> speed;
    double valid = 0, total = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const Tensor x = rows.images.row(i);
      std::optional<int> target;
      if (proto_log) {
        const auto& pe = proto_log->entries[static_cast<std::size_t>(i)];
        if (pe.id != i) throw InvariantError("CFPROTO log out of order at line " + std::to_string(i + 1));
        target = pe.y_cf;
      }
      const CounterfactualResult r = run_one(cfg, e, m, x, target);
      if (proto_log && r.y != proto_log->entries[static_cast<std::size_t>(i)].y)
        throw InvariantError("instance " + std::to_string(i) + ": " + method_name(m) + " sees prediction " +
                             std::to_string(r.y) + ", CFPROTO logged " +
                             std::to_string(proto_log->entries[static_cast<std::size_t>(i)].y));
      log.entries.push_back(entry_of(i, rows.labels[static_cast<std::size_t>(i)], r));
      images.push_back(r.x_cf.reshaped({1, 28, 28, 1}));
      speed.emplace_back(i, r.seconds);
      valid += r.valid;
      total += r.seconds;
      if ((i + 1) % kProgressEvery == 0 || i + 1 == n) print_progress(progress, m, i + 1, n, valid, total);
    }
    log.x_cf = concat_rows(images);
    write_log(cfg, log, speed);
  }
}

CounterfactualResult explain_single(const ExperimentConfig& cfg, const SingleRequest& req, std::ostream& progress) {
  cfg.validate();
  const auto test = load_split(cfg, mnist::Split::Test);
  if (req.id < 0 || req.id >= test.size())
    throw ConfigError("instance id " + std::to_string(req.id) + " outside the test split [0, " +
                      std::to_string(test.size()) + ")");
  if (req.target && (*req.target < 0 || *req.target >= mnist::kClasses))
    throw ConfigError("target class must lie in [0, 9]");
  const Explainers e = load_explainers(cfg, req.method);
  const Tensor x = test.images.row(req.id);
  const int pred = e.d->predict_labels(x)[0];
  std::optional<int> target = req.target;
  if (target && *target == pred)
    throw ConfigError("target class " + std::to_string(*target) + " is already the predicted class");
  if (!target && req.method != Method::CFPROTO) {
    const auto proto_log = read_log(cfg.out_dir, Method::CFPROTO);
    for (const auto& pe : proto_log.entries)
      if (pe.id == req.id) target = pe.y_cf;
    if (!target)
      throw PrerequisiteError("no --target given and the CFPROTO log has no entry for id " + std::to_string(req.id));
  }
  const CounterfactualResult r = run_one(cfg, e, req.method, x, target);
  ExplanationLog log{req.method, {entry_of(req.id, test.labels[static_cast<std::size_t>(req.id)], r)},
                     r.x_cf.reshaped({1, 28, 28, 1})};
  const std::string stem = method_key(req.method) + "_id" + std::to_string(req.id) + "_to" + std::to_string(r.y_cf);
  const fs::path dir = cfg.out_dir / "single";
  write_file(dir / (stem + ".jsonl"), log_jsonl(log));
  mnist::write_idx_floats(dir / (stem + "_xcf.idx"), log.x_cf);
  write_file(dir / (stem + ".pgm"), eval::pgm_bytes(eval::image_grid({{x, r.x_cf}})));
  write_file(dir / (stem + "_seconds.csv"), speed_csv({{req.id, r.seconds}}));
  progress << "[explain " << method_key(req.method) << "] id " << req.id << " y " << r.y << " -> " << r.y_pred_cf
           << " (target " << r.y_cf << ", " << (r.valid ? "valid" : "invalid") << ", " << r.seconds << " s)" << std::endl;
  return r;
}

Evaluation evaluate(const ExperimentConfig& cfg, std::vector<Method> methods, std::ostream& progress) {
  cfg.validate();
  if (methods.empty()) throw ConfigError("evaluate needs at least one method");
  // Canonical order so outputs and Evaluation::validity do not depend on the request order.
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());
  const fs::path& out = cfg.out_dir;
  std::vector<ExplanationLog> logs;
  std::vector<std::map<std::int64_t, double>> seconds(methods.size());
  for (std::size_t k = 0; k < methods.size(); ++k) {
    logs.push_back(read_log(out, methods[k]));
    require_file(paths::speed(out, methods[k]), method_name(methods[k]) + " timing log");
    read_speed(paths::speed(out, methods[k]), seconds[k]);
  }
  const auto ae_all = load_frozen<models::Autoencoder>(paths::checkpoint(out, "ae"), "autoencoder");
  std::vector<models::Autoencoder> ae_class;
  for (int c = 0; c < mnist::kClasses; ++c)
    ae_class.push_back(load_frozen<models::Autoencoder>(paths::class_checkpoint(out, c),
                                                        "class " + std::to_string(c) + " autoencoder"));

  Evaluation ev;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    const auto& log = logs[k];
    const Tensor rec_all = ae_all.reconstruct(log.x_cf);
    std::vector<Tensor> rec_class;
    for (const auto& ae : ae_class) rec_class.push_back(ae.reconstruct(log.x_cf));
    constexpr std::int64_t kPix = 784;
    auto row = [&](const Tensor& t, std::size_t i) {
      return t.data().subspan(i * kPix, kPix);
    };
    std::int64_t valid = 0;
    for (std::size_t i = 0; i < log.entries.size(); ++i) {
      const auto& e = log.entries[i];
      if (e.y < 0 || e.y >= mnist::kClasses || e.y_cf < 0 || e.y_cf >= mnist::kClasses)
        throw InvariantError(method_name(log.method) + " log: class out of range for id " + std::to_string(e.id));
      const auto it = seconds[k].find(e.id);
      if (it == seconds[k].end())
        throw InvariantError(method_name(log.method) + " timing log has no entry for id " + std::to_string(e.id));
      eval::EvalRecord rec{e.id, log.method, e.y, e.y_cf,
                           eval::im1_from(row(log.x_cf, i), row(rec_class[e.y_cf], i), row(rec_class[e.y], i),
                                          cfg.metrics.epsilon),
                           eval::im2_from(row(log.x_cf, i), row(rec_class[e.y_cf], i), row(rec_all, i),
                                          cfg.metrics.epsilon),
                           it->second};
      rec.validate();
      ev.records.push_back(rec);
      valid += e.valid;
    }
    ev.validity.push_back(static_cast<double>(valid) / static_cast<double>(log.entries.size()));
    progress << "[evaluate] " << method_name(log.method) << ": " << log.entries.size() << " records, validity "
             << ev.validity.back() << std::endl;
  }
  eval::check_protocol(ev.records);
  ev.report = eval::summarize(ev.records);

  std::string validity = "method,n,valid_rate\n";
  for (std::size_t k = 0; k < methods.size(); ++k) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", ev.validity[k]);
    validity += method_name(methods[k]) + "," + std::to_string(logs[k].entries.size()) + "," + buf + "\n";
  }
  write_file(out / "eval" / "records.csv", eval::records_csv(ev.records));
  write_file(out / "eval" / "summary.txt", eval::summary_text(ev.report));
  write_file(out / "eval" / "summary.csv", eval::summary_csv(ev.report));
  write_file(out / "eval" / "pairwise.txt", eval::pairwise_text(ev.report));
  write_file(out / "eval" / "pairwise.csv", eval::pairwise_csv(ev.report));
  write_file(out / "eval" / "histograms.csv", eval::histogram_csv(ev.report));
  write_file(out / "eval" / "validity.csv", validity);
  write_file(out / "timing" / "speed_summary.txt", eval::speed_text(ev.report));
  write_file(out / "timing" / "speed_summary.csv", eval::speed_csv(ev.report));
  progress << eval::summary_text(ev.report) << eval::pairwise_text(ev.report) << eval::speed_text(ev.report);
  return ev;
}

void report(const ExperimentConfig& cfg, std::ostream& progress) {
  cfg.validate();
  const fs::path& out = cfg.out_dir;
  std::vector<ExplanationLog> logs;
  for (Method m : kAllMethods)
    if (fs::exists(paths::log(out, m))) logs.push_back(read_log(out, m));
  if (logs.empty()) throw PrerequisiteError("no explanation logs under " + (out / "logs").string() + " (run explain)");
  for (const char* f : {"summary.txt", "pairwise.txt", "validity.csv"})
    require_file(out / "eval" / f, std::string("eval/") + f + " (run evaluate)");

  const auto test = load_split(cfg, mnist::Split::Test);
  const auto n = std::min<std::int64_t>(cfg.grid_rows, static_cast<std::int64_t>(logs.front().entries.size()));
  std::vector<std::vector<Tensor>> grid;
  std::string legend = "Image grid rows (id, label, y -> y_cf):\n";
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& e = logs.front().entries[static_cast<std::size_t>(i)];
    std::vector<Tensor> row = {test.images.row(e.id)};
    for (const auto& log : logs) {
      if (log.entries[static_cast<std::size_t>(i)].id != e.id)
        throw InvariantError("explanation logs disagree on instance order");
      row.push_back(log.x_cf.row(i));
    }
    grid.push_back(std::move(row));
    legend += "  " + std::to_string(e.id) + ", " + std::to_string(e.label) + ", " + std::to_string(e.y) + " -> " +
              std::to_string(e.y_cf) + "\n";
  }
  write_file(out / "report" / "grid.pgm", eval::pgm_bytes(eval::image_grid(grid)));

  std::string text = "Counterfactual explanation report\n\nrun.seed = " + std::to_string(cfg.seed) +
                     ", preset = " + config::preset_name(cfg.preset) + ", train_size = " +
                     std::to_string(cfg.train_size) + ", eval_size = " + std::to_string(cfg.eval_size) + "\n\n";
  text += "Training\n";
  for (auto c : {Component::Discriminator, Component::Autoencoder, Component::ClassAutoencoders, Component::DGCEx,
                 Component::DADGCEx}) {
    const fs::path p = out / "reports" / ("train_" + component_name(c) + ".json");
    if (!fs::exists(p)) continue;
    json j = json::parse(io::read_text(p));
    if (!j.is_array()) j = json::array({j});
    for (const auto& r : j) {
      std::string metric;
      for (auto it = r.begin(); it != r.end(); ++it)
        if (it.key() != "model" && it.key() != "seed" && it.key() != "epochs" && it.key() != "epoch_losses" &&
            it.key() != "epoch_checksums")
          metric = it.key() + " " + it.value().dump();
      text += "  " + r.at("model").get<std::string>() + ": " + std::to_string(r.at("epochs").get<int>()) +
              " epochs, " + metric + "\n";
    }
  }
  text += "\nColumns of report/grid.pgm: original";
  for (const auto& log : logs) text += ", " + method_name(log.method);
  text += "\n" + legend;
  text += "\nSummary\n" + io::read_text(out / "eval" / "summary.txt");
  text += "\n" + io::read_text(out / "eval" / "pairwise.txt");
  text += "\nValidity\n" + io::read_text(out / "eval" / "validity.csv");
  text += "\nSpeed is recorded separately in timing/speed_summary.txt.\n";
  write_file(out / "report" / "report.txt", text);
  progress << text;
}

Evaluation run_all(const ExperimentConfig& cfg, std::ostream& progress) {
  for (auto c : {Component::Discriminator, Component::Autoencoder, Component::ClassAutoencoders, Component::DGCEx,
                 Component::DADGCEx})
    train(cfg, c, progress);
  explain_protocol(cfg, std::nullopt, progress);
  Evaluation ev = evaluate(cfg, kAllMethods, progress);
  report(cfg, progress);
  return ev;
}

}  // namespace cfx::pipeline
