#include "udap/evalreport.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "udap/ddim.hpp"
#include "udap/ops.hpp"

namespace udap {
namespace {

constexpr int kSize = 32;

float bilinear(float c00, float c01, float c10, float c11, float u, float v) {
  const float top = c00 + (c10 - c00) * u;
  const float bot = c01 + (c11 - c01) * u;
  return top + (bot - top) * v;
}

float signed_uniform(SplitMix64& rng, float lo, float hi) {
  const float mag = rng.uniform(lo, hi);
  return rng.uniform_int(0, 1) == 0 ? mag : -mag;
}

/// Rescaled bilinear ramp b·u + c·v + d·u·v with |b| ≥ 2|d|, so every row
/// keeps a nonzero horizontal slope after the [0.1, 0.9] rescale.
void paint_gradient(ArrayXf& px, SplitMix64& rng) {
  const float b = signed_uniform(rng, 0.2f, 0.4f);
  const float c = signed_uniform(rng, 0.0f, 0.3f);
  const float d = signed_uniform(rng, 0.0f, 0.1f);
  const float corners[4] = {0.0f, b, c, b + c + d};
  const float mn = std::min({corners[0], corners[1], corners[2], corners[3]});
  const float mx = std::max({corners[0], corners[1], corners[2], corners[3]});
  const float span = mx - mn;  // ≥ |b| ≥ 0.2 by construction
  for (int y = 0; y < kSize; ++y) {
    const float v = static_cast<float>(y) / (kSize - 1);
    for (int x = 0; x < kSize; ++x) {
      const float u = static_cast<float>(x) / (kSize - 1);
      const float raw = b * u + c * v + d * u * v;
      px[y * kSize + x] = 0.1f + 0.8f * (raw - mn) / span;
    }
  }
}

void paint_shapes(ArrayXf& px, SplitMix64& rng) {
  const float c00 = rng.uniform(0.3f, 0.7f);
  const float c10 = rng.uniform(0.3f, 0.7f);
  const float c01 = rng.uniform(0.3f, 0.7f);
  const float c11 = rng.uniform(0.3f, 0.7f);
  for (int y = 0; y < kSize; ++y) {
    const float v = static_cast<float>(y) / (kSize - 1);
    for (int x = 0; x < kSize; ++x) {
      const float u = static_cast<float>(x) / (kSize - 1);
      px[y * kSize + x] = bilinear(c00, c01, c10, c11, u, v);
    }
  }
  const int count = rng.uniform_int(2, 4);
  for (int s = 0; s < count; ++s) {
    const bool is_rect = rng.uniform_int(0, 1) == 0;
    const float cx = rng.uniform(6.0f, 26.0f);
    const float cy = rng.uniform(6.0f, 26.0f);
    const float rx = rng.uniform(3.0f, 9.0f);
    const float ry = rng.uniform(3.0f, 9.0f);
    const float val = rng.uniform(0.2f, 0.8f);
    for (int y = 0; y < kSize; ++y) {
      for (int x = 0; x < kSize; ++x) {
        const float dx = (static_cast<float>(x) - cx) / rx;
        const float dy = (static_cast<float>(y) - cy) / ry;
        const bool inside = is_rect ? (dx >= -1.0f && dx <= 1.0f &&
                                       dy >= -1.0f && dy <= 1.0f)
                                    : (dx * dx + dy * dy <= 1.0f);
        if (inside) px[y * kSize + x] = val;
      }
    }
  }
}

double median_of(std::vector<float> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  if (n % 2 == 1) return static_cast<double>(v[n / 2]);
  return 0.5 * (static_cast<double>(v[n / 2 - 1]) +
                static_cast<double>(v[n / 2]));
}

double mean_of(const std::vector<float>& v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x);
  return acc / static_cast<double>(v.size());
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void check_csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") != std::string::npos)
    throw std::invalid_argument("emit_report: field '" + s +
                                "' contains CSV delimiters");
}

/// Write via a temp file + rename so readers never see partial output.
void write_atomic(const std::filesystem::path& path,
                  const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("emit_report: cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
      throw std::runtime_error("emit_report: short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

const char* corpus_kind_str(CorpusKind kind) {
  switch (kind) {
    case CorpusKind::Shapes: return "shapes";
    case CorpusKind::Gradients: return "gradients";
    case CorpusKind::Mixed: return "mixed";
  }
  throw std::logic_error("corpus_kind_str: bad kind");
}

CorpusKind corpus_kind_from_str(const std::string& s) {
  if (s == "shapes") return CorpusKind::Shapes;
  if (s == "gradients") return CorpusKind::Gradients;
  if (s == "mixed") return CorpusKind::Mixed;
  throw std::invalid_argument("unknown corpus kind '" + s + "'");
}

ImageSet gen_procedural_corpus(int n, uint64_t seed, CorpusKind kind) {
  if (n < 1)
    throw std::invalid_argument("gen_procedural_corpus: n must be >= 1");
  ImageSet set;
  set.source = std::string("procgen:") + corpus_kind_str(kind) +
               ":seed=" + std::to_string(seed);
  for (int i = 0; i < n; ++i) {
    SplitMix64 rng = SplitMix64::fork(seed, static_cast<uint64_t>(i));
    bool shapes = kind == CorpusKind::Shapes;
    if (kind == CorpusKind::Mixed) shapes = rng.uniform_int(0, 1) == 0;
    ArrayXf px(kSize * kSize);
    if (shapes)
      paint_shapes(px, rng);
    else
      paint_gradient(px, rng);
    set.add(Tensor::from_array({1, kSize, kSize}, std::move(px)),
            ImageLabel::Clean);
  }
  return set;
}

std::vector<PairMetrics> image_metrics(const ImageSet& a, const ImageSet& b) {
  if (a.images.size() != b.images.size())
    throw std::invalid_argument("image_metrics: set sizes differ (" +
                                std::to_string(a.images.size()) + " vs " +
                                std::to_string(b.images.size()) + ")");
  std::vector<PairMetrics> out;
  out.reserve(a.images.size());
  for (size_t i = 0; i < a.images.size(); ++i) {
    const Tensor& ta = a.images[i];
    const Tensor& tb = b.images[i];
    if (ta.shape() != tb.shape())
      throw std::invalid_argument("image_metrics: shape mismatch at image " +
                                  std::to_string(i));
    const ArrayXf diff = ta.values() - tb.values();
    double acc = 0.0;
    for (int k = 0; k < diff.size(); ++k)
      acc += static_cast<double>(diff[k]) * static_cast<double>(diff[k]);
    const double mse = acc / static_cast<double>(diff.size());
    PairMetrics m;
    m.mse = static_cast<float>(mse);
    m.psnr = mse == 0.0 ? std::numeric_limits<float>::infinity()
                        : static_cast<float>(10.0 * std::log10(1.0 / mse));
    out.push_back(m);
  }
  return out;
}

float recon_error(const Tensor& image, const ModelBundle& bundle, int t_hat) {
  Tensor xb = batch_of_one(image);
  Tensor z0 = bundle.codec.encode(xb);
  return ddim_metric_loss(xb, z0, bundle, t_hat).scalar_value();
}

GapReport recon_gap(const ImageSet& clean, const ImageSet& adversarial,
                    const ModelBundle& bundle, int t_hat) {
  if (clean.images.empty() || adversarial.images.empty())
    throw std::invalid_argument("recon_gap: both image sets must be non-empty");
  GapReport report;
  for (const Tensor& img : clean.images)
    report.clean_errors.push_back(recon_error(img, bundle, t_hat));
  for (const Tensor& img : adversarial.images)
    report.adv_errors.push_back(recon_error(img, bundle, t_hat));
  report.clean_median = median_of(report.clean_errors);
  report.clean_mean = mean_of(report.clean_errors);
  report.adv_median = median_of(report.adv_errors);
  report.adv_mean = mean_of(report.adv_errors);
  report.gap_defined = report.clean_median > 0.0;
  report.gap_ratio =
      report.gap_defined ? report.adv_median / report.clean_median : 0.0;
  return report;
}

nlohmann::ordered_json aggregate_rows(const std::vector<MetricRow>& rows) {
  std::map<std::string, std::vector<float>> by_metric;
  for (const MetricRow& r : rows)
    by_metric[r.metric].push_back(static_cast<float>(r.value));
  nlohmann::ordered_json agg = nlohmann::ordered_json::object();
  for (const auto& [metric, vals] : by_metric) {
    nlohmann::ordered_json entry;
    entry["count"] = vals.size();
    entry["mean"] = mean_of(vals);
    entry["median"] = median_of(vals);
    entry["min"] = static_cast<double>(
        *std::min_element(vals.begin(), vals.end()));
    entry["max"] = static_cast<double>(
        *std::max_element(vals.begin(), vals.end()));
    agg[metric] = entry;
  }
  return agg;
}

void emit_report(const ReportInputs& inputs, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root))
    throw std::runtime_error("emit_report: cannot create output directory " +
                             root.string());

  std::string csv = "image_id,label,metric,value\n";
  for (const MetricRow& r : inputs.rows) {
    check_csv_field(r.image_id);
    check_csv_field(r.label);
    check_csv_field(r.metric);
    csv += r.image_id + "," + r.label + "," + r.metric + "," +
           format_double(r.value) + "\n";
  }
  write_atomic(root / "metrics.csv", csv);

  if (!inputs.traces.empty()) {
    fs::create_directories(root / "traces", ec);
    if (ec)
      throw std::runtime_error("emit_report: cannot create " +
                               (root / "traces").string());
  }
  nlohmann::ordered_json trace_summaries = nlohmann::ordered_json::object();
  for (const TraceEntry& t : inputs.traces) {
    check_csv_field(t.image_id);
    std::string tcsv = "epoch,loss\n";
    for (size_t e = 0; e < t.trace.loss_curve.size(); ++e)
      tcsv += std::to_string(e) + "," +
              format_double(static_cast<double>(t.trace.loss_curve[e])) + "\n";
    write_atomic(root / "traces" / (t.image_id + ".csv"), tcsv);

    nlohmann::ordered_json s;
    s["termination"] = termination_str(t.trace.termination);
    s["epochs_run"] = t.trace.epochs_run;
    s["wall_time_ms"] = t.trace.wall_time_ms;
    s["best_loss"] = static_cast<double>(t.trace.best_loss);
    s["change_linf"] = static_cast<double>(t.trace.change_linf);
    s["failed"] = t.trace.failed;
    if (t.trace.failed) s["error"] = t.trace.error;
    trace_summaries[t.image_id] = s;
  }

  nlohmann::ordered_json summary;
  summary["config"] = inputs.config_echo.is_null()
                          ? nlohmann::ordered_json::object()
                          : inputs.config_echo;
  summary["bundle"] = inputs.bundle_meta.is_null()
                          ? nlohmann::ordered_json::object()
                          : inputs.bundle_meta;
  summary["aggregates"] = aggregate_rows(inputs.rows);
  summary["traces"] = trace_summaries;
  write_atomic(root / "summary.json", summary.dump(2) + "\n");
}

std::vector<MetricRow> load_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_metrics_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "image_id,label,metric,value")
    throw std::runtime_error("load_metrics_csv: bad header in " + path);
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<std::string, 4> fields;
    size_t start = 0;
    for (int f = 0; f < 3; ++f) {
      const size_t comma = line.find(',', start);
      if (comma == std::string::npos)
        throw std::runtime_error("load_metrics_csv: malformed row '" + line +
                                 "'");
      fields[f] = line.substr(start, comma - start);
      start = comma + 1;
    }
    fields[3] = line.substr(start);
    MetricRow r;
    r.image_id = fields[0];
    r.label = fields[1];
    r.metric = fields[2];
    auto res = std::from_chars(fields[3].data(),
                               fields[3].data() + fields[3].size(), r.value);
    if (res.ec != std::errc() ||
        res.ptr != fields[3].data() + fields[3].size())
      throw std::runtime_error("load_metrics_csv: bad value '" + fields[3] +
                               "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<std::pair<int, float>> load_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_trace_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,loss")
    throw std::runtime_error("load_trace_csv: bad header in " + path);
  std::vector<std::pair<int, float>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("load_trace_csv: malformed row '" + line + "'");
    int epoch = 0;
    auto r1 = std::from_chars(line.data(), line.data() + comma, epoch);
    double loss = 0.0;
    auto r2 = std::from_chars(line.data() + comma + 1,
                              line.data() + line.size(), loss);
    if (r1.ec != std::errc() || r2.ec != std::errc() ||
        r2.ptr != line.data() + line.size())
      throw std::runtime_error("load_trace_csv: malformed row '" + line + "'");
    rows.emplace_back(epoch, static_cast<float>(loss));
  }
  return rows;
}

nlohmann::ordered_json load_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_summary: cannot open " + path);
  return nlohmann::ordered_json::parse(in);
}

}  // namespace udap
