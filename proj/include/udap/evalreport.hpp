#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "udap/bundle.hpp"
#include "udap/imageset.hpp"
#include "udap/purify.hpp"

namespace udap {

enum class CorpusKind { Shapes, Gradients, Mixed };

const char* corpus_kind_str(CorpusKind kind);
CorpusKind corpus_kind_from_str(const std::string& s);

/// n deterministic grayscale 32×32 images: random rectangles/ellipses over
/// bilinear backgrounds, or affine-with-twist intensity ramps. Pixels are
/// pure f32 arithmetic on splitmix draws, so the set is bit-identical for a
/// given (n, seed, kind) on any IEEE platform.
ImageSet gen_procedural_corpus(int n, uint64_t seed, CorpusKind kind);

struct PairMetrics {
  float mse = 0.0f;
  float psnr = 0.0f;  // +inf sentinel for identical pairs
};

/// Per-pair MSE and PSNR = 10·log10(1/MSE) between equal-shaped sets.
std::vector<PairMetrics> image_metrics(const ImageSet& a, const ImageSet& b);

struct GapReport {
  std::vector<float> clean_errors;
  std::vector<float> adv_errors;
  double clean_median = 0.0;
  double clean_mean = 0.0;
  double adv_median = 0.0;
  double adv_mean = 0.0;
  /// median(adversarial) / median(clean); undefined when the clean median
  /// is 0 (degenerate perfect-reconstruction bundles).
  double gap_ratio = 0.0;
  bool gap_defined = false;
};

/// L_DDIM of one image at its own encoded latent — the per-image
/// reconstruction error used for gap statistics and τ calibration.
float recon_error(const Tensor& image, const ModelBundle& bundle, int t_hat);

GapReport recon_gap(const ImageSet& clean, const ImageSet& adversarial,
                    const ModelBundle& bundle, int t_hat);

struct MetricRow {
  std::string image_id;
  std::string label;
  std::string metric;
  double value = 0.0;
};

struct TraceEntry {
  std::string image_id;
  PurifyTrace trace;
};

struct ReportInputs {
  std::vector<MetricRow> rows;
  std::vector<TraceEntry> traces;
  nlohmann::ordered_json config_echo;    // resolved run config
  nlohmann::ordered_json bundle_meta;    // dataset id, seeds, version tag
};

/// Writes out_dir/metrics.csv (long format), out_dir/traces/<id>.csv and
/// out_dir/summary.json with per-metric aggregates, config echo and trace
/// summaries. Field order and float formatting are deterministic; wall-clock
/// times appear only in summary.json so metrics.csv is bit-reproducible.
void emit_report(const ReportInputs& inputs, const std::string& out_dir);

std::vector<MetricRow> load_metrics_csv(const std::string& path);
std::vector<std::pair<int, float>> load_trace_csv(const std::string& path);
nlohmann::ordered_json load_summary(const std::string& path);

/// Recompute the summary.json "aggregates" object from metric rows; emitted
/// and recomputed aggregates must agree to 1e-9.
nlohmann::ordered_json aggregate_rows(const std::vector<MetricRow>& rows);

}  // namespace udap
