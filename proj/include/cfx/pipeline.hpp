#pragma once

// Pipeline stages. Stages talk to each other only through files under the
// run's output directory:
//   checkpoints/<name>.ckpt         model weights
//   reports/train_<name>.json       per-epoch losses, checksums, final metric
//   logs/<method>.jsonl             one explanation per line, protocol order
//   logs/<method>_xcf.idx           counterfactual images, same order
//   eval/                           records, summary, pairwise, histograms, validity
//   report/                         image grid and combined text report
//   timing/                         every wall-clock measurement
// Only files under timing/ and the seconds column of eval/records.csv carry
// wall-clock data; everything else is a function of the config and seed.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cfx/config.hpp"
#include "cfx/counterfactual.hpp"
#include "cfx/eval.hpp"

namespace cfx::pipeline {

enum class Component { Discriminator, Autoencoder, ClassAutoencoders, DGCEx, DADGCEx };

std::string component_name(Component c);
/// "discriminator", "ae", "ae-per-class", "dgcex", "dadgcex".
Component component_from_name(const std::string& name);

namespace paths {
std::filesystem::path checkpoint(const std::filesystem::path& out, const std::string& name);
std::filesystem::path class_checkpoint(const std::filesystem::path& out, int cls);
std::filesystem::path generator_checkpoint(const std::filesystem::path& out, Method m);
std::filesystem::path log(const std::filesystem::path& out, Method m);
std::filesystem::path log_images(const std::filesystem::path& out, Method m);
std::filesystem::path speed(const std::filesystem::path& out, Method m);
}  // namespace paths

struct TrainSummary {
  Component component;
  /// One entry per trained model.
  std::vector<models::TrainReport> reports;
};

/// Trains one component and writes its checkpoints and reports. Throws
/// PrerequisiteError naming a missing dependency checkpoint.
TrainSummary train(const config::ExperimentConfig& cfg, Component c, std::ostream& progress);

/// One logged explanation.
struct LogEntry {
  std::int64_t id = 0;
  int label = -1;
  int y = -1;
  int y_cf = -1;
  int y_pred_cf = -1;
  bool valid = false;
};

struct ExplanationLog {
  Method method = Method::CFPROTO;
  std::vector<LogEntry> entries;
  /// (N,28,28,1), row i belongs to entries[i].
  Tensor x_cf;
};

std::string log_jsonl(const ExplanationLog& log);
ExplanationLog read_log(const std::filesystem::path& out, Method m);

/// Protocol run over the first eval_size test instances. CFPROTO runs first
/// and fixes each instance's y_cf; amortized methods read it from the CFPROTO
/// log. With `method` set only that method runs, and an amortized method then
/// needs an existing CFPROTO log.
void explain_protocol(const config::ExperimentConfig& cfg, std::optional<Method> method, std::ostream& progress);

struct SingleRequest {
  Method method = Method::DADGCEx;
  std::int64_t id = 0;
  /// Without a target CFPROTO picks the nearest prototype class and the
  /// amortized methods reuse the CFPROTO log entry.
  std::optional<int> target;
};

/// One explanation written under single/ as a JSONL line, an IDX image and a
/// two-column PGM grid. Throws ConfigError for an id outside the test split or
/// a target equal to the predicted class.
CounterfactualResult explain_single(const config::ExperimentConfig& cfg, const SingleRequest& req,
                                    std::ostream& progress);

struct Evaluation {
  std::vector<eval::EvalRecord> records;
  eval::Report report;
  /// Fraction of valid explanations per method, in report method order.
  std::vector<double> validity;
};

/// Scores every logged explanation and writes eval/. Throws PrerequisiteError
/// for missing logs or checkpoints and InvariantError on a protocol violation.
Evaluation evaluate(const config::ExperimentConfig& cfg, std::vector<Method> methods, std::ostream& progress);

/// Image grid of the first grid_rows instances and a combined text report
/// from the training reports and eval/ outputs.
void report(const config::ExperimentConfig& cfg, std::ostream& progress);

/// Every stage in order.
Evaluation run_all(const config::ExperimentConfig& cfg, std::ostream& progress);

}  // namespace cfx::pipeline
