#pragma once

// Interpretability metrics, their aggregation into summary and pairwise
// tables, distribution histograms and image grids.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfx/counterfactual.hpp"
#include "cfx/models.hpp"

namespace cfx::eval {

struct MetricsConfig {
  double epsilon = 1e-8;

  void validate() const;
};

/// ‖x_cf − r_ycf‖₂² / (‖x_cf − r_y‖₂² + ε) from precomputed reconstructions.
double im1_from(std::span<const float> x_cf, std::span<const float> rec_ycf, std::span<const float> rec_y,
                double epsilon);
/// ‖r_ycf − r_all‖₂² / (‖x_cf‖₁ + ε) from precomputed reconstructions.
double im2_from(std::span<const float> x_cf, std::span<const float> rec_ycf, std::span<const float> rec_all,
                double epsilon);

double im1(const models::Autoencoder& ae_ycf, const models::Autoencoder& ae_y, const Tensor& x_cf,
           const MetricsConfig& cfg = {});
double im2(const models::Autoencoder& ae_ycf, const models::Autoencoder& ae_all, const Tensor& x_cf,
           const MetricsConfig& cfg = {});

/// Linear-interpolation quantile of unsorted `values`: with v sorted and
/// i = floor(q·(n−1)), v[i] + frac·(v[i+1] − v[i]). Throws Error when empty.
double quantile(std::span<const double> values, double q);
/// Q3 − Q1.
double iqr(std::span<const double> values);

/// Mean over aligned pairs of 1 if a < b, 0.5 if equal, else 0. Throws
/// DimensionError on length mismatch or empty input.
double paired_lower_prob(std::span<const double> a, std::span<const double> b);
/// As above, after checking both sides list the same instance ids in the same
/// order. Throws InvariantError otherwise.
double paired_lower_prob(std::span<const std::int64_t> ids_a, std::span<const double> a,
                         std::span<const std::int64_t> ids_b, std::span<const double> b);

struct EvalRecord {
  std::int64_t instance_id = 0;
  Method method = Method::CFPROTO;
  int y = -1;
  int y_cf = -1;
  /// Raw values; IM2 is scaled by 10 only when rendered.
  double im1 = 0.0;
  double im2 = 0.0;
  double seconds = 0.0;

  /// Throws InvariantError for negative or non-finite metrics.
  void validate() const;
};

/// `instance_id,method,y,y_cf,im1,im2,seconds` with a header row. Reals are
/// printed with 17 significant digits so reading back is exact.
std::string records_csv(std::span<const EvalRecord> records);
std::vector<EvalRecord> parse_records_csv(std::string_view text);

/// Every instance id must carry one record per method and the same y and y_cf
/// across methods. Throws InvariantError naming the first offending id.
void check_protocol(std::span<const EvalRecord> records);

struct Stat {
  double mean = 0.0;
  double iqr = 0.0;
};

struct MethodSummary {
  Method method = Method::CFPROTO;
  std::int64_t n = 0;
  Stat im1;
  /// Raw; rendered ×10.
  Stat im2;
  Stat seconds;
};

/// p[i][j] = P(metric of method i < metric of method j); empty on the diagonal.
struct PairMatrix {
  std::string metric;
  std::vector<std::vector<std::optional<double>>> p;
};

struct Histogram {
  Method method = Method::CFPROTO;
  std::string metric;
  /// 65 edges spanning the range pooled over methods.
  std::vector<double> edges;
  std::vector<std::int64_t> counts;
};

inline constexpr int kHistogramBins = 64;

struct Report {
  /// Methods present, in enum order.
  std::vector<Method> methods;
  std::vector<MethodSummary> summary;
  PairMatrix im1;
  PairMatrix im2;
  std::vector<Histogram> histograms;
};

/// Groups by method in enum order and by ascending instance id inside each
/// group, so the result does not depend on record order. Throws InvariantError
/// when a method has no records or the protocol check fails.
Report summarize(std::span<const EvalRecord> records);

/// IM1 and IM2(x10) mean and IQR per method. Holds no wall-clock data, so
/// equal record metrics give equal bytes.
std::string summary_text(const Report& r);
std::string summary_csv(const Report& r);
/// Per-instance seconds, mean and IQR per method.
std::string speed_text(const Report& r);
std::string speed_csv(const Report& r);
/// Both matrices, rows beat columns; diagonal rendered as "-".
std::string pairwise_text(const Report& r);
/// `metric,row,col,p` with "-" on the diagonal.
std::string pairwise_csv(const Report& r);
/// `method,metric,bin_left,bin_right,count`.
std::string histogram_csv(const Report& r);

struct GrayImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels;
};

inline constexpr std::int64_t kGutter = 2;

/// One row per entry; each row holds the original followed by the
/// counterfactuals in column order. Images hold 784 values in [0,1] and map to
/// bytes by round(255·v) after clamping. Gutters are white. Throws
/// DimensionError for ragged rows or non-28×28 images.
GrayImage image_grid(const std::vector<std::vector<Tensor>>& rows);

/// Binary PGM, maxval 255.
std::string pgm_bytes(const GrayImage& img);
/// Accepts P5 with maxval 255 and comment lines in the header.
GrayImage parse_pgm(std::string_view bytes);

}  // namespace cfx::eval
