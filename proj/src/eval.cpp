#include "cfx/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <cctype>

#include "cfx/error.hpp"

namespace cfx::eval {

namespace {

constexpr std::int64_t kSide = 28;
constexpr std::size_t kPixels = kSide * kSide;

void require_same(std::span<const float> a, std::span<const float> b, const char* what) {
  if (a.size() != b.size() || a.empty())
    throw DimensionError(std::string(what) + ": sizes " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
}

double sq_dist(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

Tensor as_batch(const Tensor& x) {
  if (x.size() != static_cast<std::int64_t>(kPixels))
    throw DimensionError("expected one 28x28 image, got " + shape_str(x.shape()));
  return x.reshaped({1, kSide, kSide, 1});
}

std::string fmt_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string fmt_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

template <typename T>
T parse_number(const std::string& s, std::size_t line_no) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError("records csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
  return v;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

/// Records of one method, ascending by instance id.
using Groups = std::map<Method, std::vector<EvalRecord>>;

Groups group(std::span<const EvalRecord> records) {
  Groups g;
  for (const auto& r : records) g[r.method].push_back(r);
  for (auto& [m, rs] : g)
    std::sort(rs.begin(), rs.end(),
              [](const EvalRecord& a, const EvalRecord& b) { return a.instance_id < b.instance_id; });
  return g;
}

std::vector<double> column(const std::vector<EvalRecord>& rs, double EvalRecord::*field) {
  std::vector<double> v;
  v.reserve(rs.size());
  for (const auto& r : rs) v.push_back(r.*field);
  return v;
}

Stat stat_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return {s / static_cast<double>(v.size()), iqr(v)};
}

PairMatrix pair_matrix(const Groups& g, const std::vector<Method>& methods, double EvalRecord::*field,
                       std::string metric) {
  PairMatrix pm{std::move(metric), {}};
  for (Method a : methods) {
    std::vector<std::optional<double>> row;
    const auto va = column(g.at(a), field);
    for (Method b : methods) {
      if (a == b) {
        row.emplace_back();
        continue;
      }
      row.emplace_back(paired_lower_prob(va, column(g.at(b), field)));
    }
    pm.p.push_back(std::move(row));
  }
  return pm;
}

void add_histograms(Report& r, const Groups& g, double EvalRecord::*field, const std::string& metric) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& [m, rs] : g)
    for (const auto& rec : rs) {
      lo = std::min(lo, rec.*field);
      hi = std::max(hi, rec.*field);
    }
  if (!(hi > lo)) hi = lo + 1.0;
  std::vector<double> edges(kHistogramBins + 1);
  for (int i = 0; i <= kHistogramBins; ++i) edges[i] = lo + (hi - lo) * i / kHistogramBins;
  edges[kHistogramBins] = hi;
  for (Method m : r.methods) {
    Histogram h{m, metric, edges, std::vector<std::int64_t>(kHistogramBins, 0)};
    for (const auto& rec : g.at(m)) {
      const double v = rec.*field;
      int idx = static_cast<int>(std::floor((v - lo) / (hi - lo) * kHistogramBins));
      idx = std::clamp(idx, 0, kHistogramBins - 1);
      // Snap to the edges actually reported so each bin is [left, right).
      while (idx > 0 && v < edges[idx]) --idx;
      while (idx < kHistogramBins - 1 && v >= edges[idx + 1]) ++idx;
      ++h.counts[idx];
    }
    r.histograms.push_back(std::move(h));
  }
}

std::uint8_t to_byte(float v) {
  const float c = v > 0.0f ? (v < 1.0f ? v : 1.0f) : 0.0f;
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

void MetricsConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("metrics epsilon must be positive and finite");
}

double im1_from(std::span<const float> x_cf, std::span<const float> rec_ycf, std::span<const float> rec_y,
                double epsilon) {
  require_same(x_cf, rec_ycf, "im1");
  require_same(x_cf, rec_y, "im1");
  return sq_dist(x_cf, rec_ycf) / (sq_dist(x_cf, rec_y) + epsilon);
}

double im2_from(std::span<const float> x_cf, std::span<const float> rec_ycf, std::span<const float> rec_all,
                double epsilon) {
  require_same(x_cf, rec_ycf, "im2");
  require_same(x_cf, rec_all, "im2");
  double l1 = 0.0;
  for (float v : x_cf) l1 += std::fabs(static_cast<double>(v));
  return sq_dist(rec_ycf, rec_all) / (l1 + epsilon);
}

double im1(const models::Autoencoder& ae_ycf, const models::Autoencoder& ae_y, const Tensor& x_cf,
           const MetricsConfig& cfg) {
  cfg.validate();
  const Tensor x = as_batch(x_cf);
  return im1_from(x.data(), ae_ycf.reconstruct(x).data(), ae_y.reconstruct(x).data(), cfg.epsilon);
}

double im2(const models::Autoencoder& ae_ycf, const models::Autoencoder& ae_all, const Tensor& x_cf,
           const MetricsConfig& cfg) {
  cfg.validate();
  const Tensor x = as_batch(x_cf);
  return im2_from(x.data(), ae_ycf.reconstruct(x).data(), ae_all.reconstruct(x).data(), cfg.epsilon);
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw Error("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level must lie in [0,1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(i);
  return v[i] + frac * (v[i + 1] - v[i]);
}

double iqr(std::span<const double> values) { return quantile(values, 0.75) - quantile(values, 0.25); }

double paired_lower_prob(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("paired samples differ in length");
  if (a.empty()) throw DimensionError("paired samples are empty");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] < b[i] ? 1.0 : (a[i] == b[i] ? 0.5 : 0.0);
  return s / static_cast<double>(a.size());
}

double paired_lower_prob(std::span<const std::int64_t> ids_a, std::span<const double> a,
                         std::span<const std::int64_t> ids_b, std::span<const double> b) {
  if (ids_a.size() != a.size() || ids_b.size() != b.size()) throw DimensionError("ids and values differ in length");
  if (ids_a.size() != ids_b.size()) throw InvariantError("paired samples cover different instance counts");
  for (std::size_t i = 0; i < ids_a.size(); ++i)
    if (ids_a[i] != ids_b[i])
      throw InvariantError("paired samples misaligned at position " + std::to_string(i) + ": id " +
                           std::to_string(ids_a[i]) + " vs " + std::to_string(ids_b[i]));
  return paired_lower_prob(a, b);
}

void EvalRecord::validate() const {
  if (!(std::isfinite(im1) && im1 >= 0.0) || !(std::isfinite(im2) && im2 >= 0.0))
    throw InvariantError("instance " + std::to_string(instance_id) + " (" + method_name(method) +
                         "): metrics must be finite and non-negative");
}

std::string records_csv(std::span<const EvalRecord> records) {
  std::string out = "instance_id,method,y,y_cf,im1,im2,seconds\n";
  for (const auto& r : records) {
    out += std::to_string(r.instance_id) + ',' + method_name(r.method) + ',' + std::to_string(r.y) + ',' +
           std::to_string(r.y_cf) + ',' + fmt_real(r.im1) + ',' + fmt_real(r.im2) + ',' + fmt_real(r.seconds) + '\n';
  }
  return out;
}

std::vector<EvalRecord> parse_records_csv(std::string_view text) {
  std::vector<EvalRecord> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line != "instance_id,method,y,y_cf,im1,im2,seconds")
        throw ParseError("records csv: unexpected header '" + std::string(line) + "'");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) throw ParseError("records csv line " + std::to_string(line_no) + ": expected 7 fields");
    EvalRecord r;
    r.instance_id = parse_number<std::int64_t>(f[0], line_no);
    try {
      r.method = method_from_name(f[1]);
    } catch (const ConfigError& e) {
      throw ParseError("records csv line " + std::to_string(line_no) + ": " + e.what());
    }
    r.y = parse_number<int>(f[2], line_no);
    r.y_cf = parse_number<int>(f[3], line_no);
    r.im1 = parse_number<double>(f[4], line_no);
    r.im2 = parse_number<double>(f[5], line_no);
    r.seconds = parse_number<double>(f[6], line_no);
    out.push_back(r);
  }
  if (line_no == 0) throw ParseError("records csv: missing header");
  return out;
}

void check_protocol(std::span<const EvalRecord> records) {
  std::set<Method> methods;
  for (const auto& r : records) methods.insert(r.method);
  std::map<std::int64_t, std::vector<const EvalRecord*>> by_id;
  for (const auto& r : records) by_id[r.instance_id].push_back(&r);
  for (const auto& [id, rs] : by_id) {
    std::set<Method> seen;
    for (const auto* r : rs)
      if (!seen.insert(r->method).second)
        throw InvariantError("instance " + std::to_string(id) + " has two " + method_name(r->method) + " records");
    if (seen.size() != methods.size())
      throw InvariantError("instance " + std::to_string(id) + " is missing a method");
    for (const auto* r : rs)
      if (r->y != rs.front()->y || r->y_cf != rs.front()->y_cf)
        throw InvariantError("instance " + std::to_string(id) + ": " + method_name(r->method) +
                             " used y/y_cf " + std::to_string(r->y) + "/" + std::to_string(r->y_cf) + ", " +
                             method_name(rs.front()->method) + " used " + std::to_string(rs.front()->y) + "/" +
                             std::to_string(rs.front()->y_cf));
  }
}

Report summarize(std::span<const EvalRecord> records) {
  if (records.empty()) throw InvariantError("no records to summarize");
  for (const auto& r : records) r.validate();
  check_protocol(records);
  const Groups g = group(records);
  Report rep;
  for (const auto& [m, rs] : g) {
    if (rs.empty()) throw InvariantError(method_name(m) + " has no records");
    rep.methods.push_back(m);
    rep.summary.push_back({m, static_cast<std::int64_t>(rs.size()), stat_of(column(rs, &EvalRecord::im1)),
                           stat_of(column(rs, &EvalRecord::im2)), stat_of(column(rs, &EvalRecord::seconds))});
  }
  rep.im1 = pair_matrix(g, rep.methods, &EvalRecord::im1, "im1");
  rep.im2 = pair_matrix(g, rep.methods, &EvalRecord::im2, "im2");
  add_histograms(rep, g, &EvalRecord::im1, "im1");
  add_histograms(rep, g, &EvalRecord::im2, "im2");
  return rep;
}

static std::string render_table(const std::vector<std::string>& head, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    w[c] = head[c].size();
    for (const auto& row : rows) w[c] = std::max(w[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s = pad(cells[0], w[0]);
    for (std::size_t c = 1; c < cells.size(); ++c) s += "  " + pad_left(cells[c], w[c]);
    return s + '\n';
  };
  std::string out = line(head);
  for (const auto& row : rows) out += line(row);
  return out;
}

std::string summary_text(const Report& r) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : r.summary)
    rows.push_back({method_name(s.method), std::to_string(s.n), fmt_fixed(s.im1.mean, 4), fmt_fixed(s.im1.iqr, 4),
                    fmt_fixed(10.0 * s.im2.mean, 4), fmt_fixed(10.0 * s.im2.iqr, 4)});
  return render_table({"Method", "n", "IM1 mean", "IM1 IQR", "IM2(x10) mean", "IM2(x10) IQR"}, rows);
}

std::string summary_csv(const Report& r) {
  std::string out = "method,n,im1_mean,im1_iqr,im2x10_mean,im2x10_iqr\n";
  for (const auto& s : r.summary)
    out += method_name(s.method) + ',' + std::to_string(s.n) + ',' + fmt_real(s.im1.mean) + ',' +
           fmt_real(s.im1.iqr) + ',' + fmt_real(10.0 * s.im2.mean) + ',' + fmt_real(10.0 * s.im2.iqr) + '\n';
  return out;
}

std::string speed_text(const Report& r) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : r.summary)
    rows.push_back({method_name(s.method), std::to_string(s.n), fmt_fixed(s.seconds.mean, 6),
                    fmt_fixed(s.seconds.iqr, 6)});
  return render_table({"Method", "n", "Speed mean (s/it)", "Speed IQR (s/it)"}, rows);
}

std::string speed_csv(const Report& r) {
  std::string out = "method,n,seconds_mean,seconds_iqr\n";
  for (const auto& s : r.summary)
    out += method_name(s.method) + ',' + std::to_string(s.n) + ',' + fmt_real(s.seconds.mean) + ',' +
           fmt_real(s.seconds.iqr) + '\n';
  return out;
}

std::string pairwise_text(const Report& r) {
  std::size_t w = 6;
  for (Method m : r.methods) w = std::max(w, method_name(m).size());
  std::string out;
  for (const PairMatrix* pm : {&r.im1, &r.im2}) {
    if (!out.empty()) out += '\n';
    out += "P(row < column), " + std::string(pm == &r.im1 ? "IM1" : "IM2") + '\n';
    out += pad("", w);
    for (Method m : r.methods) out += "  " + pad_left(method_name(m), w);
    out += '\n';
    for (std::size_t i = 0; i < r.methods.size(); ++i) {
      out += pad(method_name(r.methods[i]), w);
      for (const auto& cell : pm->p[i]) out += "  " + pad_left(cell ? fmt_fixed(*cell, 4) : "-", w);
      out += '\n';
    }
  }
  return out;
}

std::string pairwise_csv(const Report& r) {
  std::string out = "metric,row,col,p\n";
  for (const PairMatrix* pm : {&r.im1, &r.im2})
    for (std::size_t i = 0; i < r.methods.size(); ++i)
      for (std::size_t j = 0; j < r.methods.size(); ++j)
        out += pm->metric + ',' + method_name(r.methods[i]) + ',' + method_name(r.methods[j]) + ',' +
               (pm->p[i][j] ? fmt_real(*pm->p[i][j]) : std::string("-")) + '\n';
  return out;
}

std::string histogram_csv(const Report& r) {
  std::string out = "method,metric,bin_left,bin_right,count\n";
  for (const auto& h : r.histograms)
    for (int i = 0; i < kHistogramBins; ++i)
      out += method_name(h.method) + ',' + h.metric + ',' + fmt_real(h.edges[i]) + ',' + fmt_real(h.edges[i + 1]) +
             ',' + std::to_string(h.counts[i]) + '\n';
  return out;
}

GrayImage image_grid(const std::vector<std::vector<Tensor>>& rows) {
  if (rows.empty() || rows.front().empty()) throw DimensionError("image grid needs at least one image");
  const auto cols = static_cast<std::int64_t>(rows.front().size());
  for (const auto& row : rows) {
    if (static_cast<std::int64_t>(row.size()) != cols) throw DimensionError("image grid rows differ in length");
    for (const auto& img : row) {
      const auto& s = img.shape();
      const bool ok = img.size() == static_cast<std::int64_t>(kPixels) &&
                      ((s.size() == 2 && s[0] == kSide) || (s.size() == 3 && s[0] == kSide && s[2] == 1) ||
                       (s.size() == 4 && s[0] == 1 && s[1] == kSide && s[3] == 1));
      if (!ok) throw DimensionError("image grid expects 28x28 images, got " + shape_str(s));
    }
  }
  const auto nrows = static_cast<std::int64_t>(rows.size());
  GrayImage g;
  g.width = cols * kSide + (cols - 1) * kGutter;
  g.height = nrows * kSide + (nrows - 1) * kGutter;
  g.pixels.assign(static_cast<std::size_t>(g.width * g.height), 255);
  for (std::int64_t r = 0; r < nrows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) {
      const float* src = rows[r][c].ptr();
      const std::int64_t y0 = r * (kSide + kGutter), x0 = c * (kSide + kGutter);
      for (std::int64_t i = 0; i < kSide; ++i)
        for (std::int64_t j = 0; j < kSide; ++j) g.pixels[(y0 + i) * g.width + x0 + j] = to_byte(src[i * kSide + j]);
    }
  return g;
}

std::string pgm_bytes(const GrayImage& img) {
  if (static_cast<std::int64_t>(img.pixels.size()) != img.width * img.height)
    throw DimensionError("pgm: pixel count does not match width x height");
  std::string out = "P5\n" + std::to_string(img.width) + ' ' + std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

GrayImage parse_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::int64_t {
    skip_space();
    std::int64_t v = 0;
    auto res = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), v);
    if (res.ec != std::errc() || v <= 0) throw ParseError("pgm: bad header field at byte " + std::to_string(pos));
    pos = static_cast<std::size_t>(res.ptr - bytes.data());
    return v;
  };
  if (bytes.substr(0, 2) != "P5") throw ParseError("pgm: missing P5 magic at byte 0");
  pos = 2;
  GrayImage g;
  g.width = read_int();
  g.height = read_int();
  if (read_int() != 255) throw ParseError("pgm: maxval must be 255 (byte " + std::to_string(pos) + ")");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ParseError("pgm: expected whitespace after maxval at byte " + std::to_string(pos));
  ++pos;
  const auto n = static_cast<std::size_t>(g.width * g.height);
  if (bytes.size() - pos != n)
    throw ParseError("pgm: expected " + std::to_string(n) + " pixel bytes at byte " + std::to_string(pos) + ", found " +
                     std::to_string(bytes.size() - pos));
  g.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return g;
}

}  // namespace cfx::eval
