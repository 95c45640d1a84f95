#include "udap/cli.hpp"

#include <array>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "udap/attacks.hpp"
#include "udap/ddim.hpp"
#include "udap/evalreport.hpp"
#include "udap/purify.hpp"
#include "udap/storage.hpp"
#include "udap/train.hpp"

namespace udap {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

/// A required input artifact (bundle, image set) that is not on disk.
struct MissingDependencyError : std::runtime_error {
  std::string dependency;
  std::string path;
  MissingDependencyError(std::string dep, std::string p)
      : std::runtime_error("missing " + dep + ": " + p +
                           " (run the producing stage first)"),
        dependency(std::move(dep)),
        path(std::move(p)) {}
};

/// Raw flag values; only the ones the parsed subcommand counted are applied.
struct FlagBag {
  std::string config;
  uint64_t seed = 0;
  std::string out, data, bundle, adv, purified;
  int T = 0;
  float beta_start = 0.0f, beta_end = 0.0f;
  float tau = 0.0f, lr = 0.0f;
  int k = 0, t_hat = 0;
  bool gate = true;
  std::string family, corpus_kind;
  float xi = 0.0f, step_size = 0.0f, lambda = 0.0f;
  int steps = 0, corpus_n = 0, ae_epochs = 0, denoiser_steps = 0;
  int workers = 1;
};

void add_common(CLI::App* sub, FlagBag& bag) {
  sub->add_option("--config", bag.config, "run config JSON file");
  sub->add_option("--seed", bag.seed,
                  "run seed (flag > config file > UDAP_SEED > 0)");
  sub->add_option("--out", bag.out, "output directory");
}

void add_data(CLI::App* sub, FlagBag& bag) {
  sub->add_option("--data", bag.data, "input image set directory");
}

void add_bundle(CLI::App* sub, FlagBag& bag) {
  sub->add_option("--bundle", bag.bundle, "model bundle checkpoint");
}

void add_purify_flags(CLI::App* sub, FlagBag& bag) {
  sub->add_option("--tau", bag.tau, "termination threshold on L_DDIM");
  sub->add_option("--k", bag.k, "max purification epochs");
  sub->add_option("--t-hat", bag.t_hat, "inversion depth");
  sub->add_option("--lr", bag.lr, "latent Adam step size");
  sub->add_flag("--gate,!--no-gate", bag.gate,
                "stop as soon as the loss crosses tau");
}

void add_attack_flags(CLI::App* sub, FlagBag& bag) {
  sub->add_option("--family", bag.family, "encoder|denoiser|hybrid");
  sub->add_option("--xi", bag.xi, "L-inf budget");
  sub->add_option("--steps", bag.steps, "PGD iterations");
  sub->add_option("--step-size", bag.step_size, "PGD step size");
  sub->add_option("--lambda", bag.lambda, "encoder share of the hybrid"
                                          " objective");
  sub->add_option("--t-hat", bag.t_hat, "inversion depth");
}

void add_workers(CLI::App* sub, FlagBag& bag) {
  sub->add_option("--workers", bag.workers, "per-image worker threads")
      ->check(CLI::PositiveNumber);
}

uint64_t parse_env_seed(const char* text) {
  uint64_t v = 0;
  const char* end = text + std::strlen(text);
  auto [ptr, ec] = std::from_chars(text, end, v);
  if (ec != std::errc() || ptr != end)
    throw std::invalid_argument(
        "UDAP_SEED must be a non-negative integer, got '" +
        std::string(text) + "'");
  return v;
}

/// flags > config file > defaults; the seed additionally falls back to
/// UDAP_SEED between file and default.
RunConfig resolve(const CLI::App* sub, const FlagBag& bag) {
  ordered_json doc = ordered_json::object();
  if (!bag.config.empty()) {
    std::ifstream in(bag.config);
    if (!in) throw StorageError("storage: cannot open " + bag.config);
    try {
      doc = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("run config: " + bag.config + ": " +
                                  e.what());
    }
  }
  RunConfig cfg = parse_run_config(doc);

  auto have = [&](const std::string& name) {
    const CLI::Option* opt = sub->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };

  if (have("--seed")) {
    cfg.seed = bag.seed;
  } else if (!doc.contains("seed")) {
    if (const char* env = std::getenv("UDAP_SEED"))
      cfg.seed = parse_env_seed(env);
  }

  if (have("--t")) cfg.schedule_T = bag.T;
  if (have("--beta-start")) cfg.beta_start = bag.beta_start;
  if (have("--beta-end")) cfg.beta_end = bag.beta_end;

  if (have("--tau")) cfg.purify.tau = bag.tau;
  if (have("--k")) cfg.purify.max_epochs = bag.k;
  if (have("--t-hat")) cfg.purify.t_hat = bag.t_hat;
  if (have("--lr")) cfg.purify.lr = bag.lr;
  if (have("--gate")) cfg.purify.gate_enabled = bag.gate;

  if (have("--family")) cfg.attack.family = family_from_str(bag.family);
  if (have("--xi")) cfg.attack.xi = bag.xi;
  if (have("--steps")) cfg.attack.steps = bag.steps;
  if (have("--step-size")) cfg.attack.step_size = bag.step_size;
  if (have("--lambda")) cfg.attack.hybrid_weight = bag.lambda;

  if (have("--corpus-n")) cfg.corpus_n = bag.corpus_n;
  if (have("--corpus-kind"))
    cfg.corpus_kind = corpus_kind_from_str(bag.corpus_kind);
  if (have("--ae-epochs")) cfg.ae_epochs = bag.ae_epochs;
  if (have("--denoiser-steps")) cfg.denoiser_steps = bag.denoiser_steps;

  if (have("--out")) cfg.out_path = bag.out;
  if (have("--data")) cfg.data_path = bag.data;
  if (have("--bundle")) cfg.bundle_path = bag.bundle;
  if (have("--adv")) cfg.adv_path = bag.adv;
  if (have("--purified")) cfg.purified_path = bag.purified;

  cfg.attack.seed = cfg.seed;
  cfg.purify.seed = cfg.seed;
  cfg.attack.t_hat = cfg.purify.t_hat;
  return cfg;
}

std::string need_out(const RunConfig& cfg) {
  if (cfg.out_path.empty())
    throw std::invalid_argument(
        "an output directory is required (--out or paths.out)");
  std::error_code ec;
  fs::create_directories(cfg.out_path, ec);
  if (ec || !fs::is_directory(cfg.out_path))
    throw StorageError("storage: cannot create output directory " +
                       cfg.out_path);
  return cfg.out_path;
}

ImageSet need_imageset(const std::string& path, const char* role,
                       const char* flag) {
  if (path.empty())
    throw std::invalid_argument(std::string(role) + " image set required (" +
                                flag + ")");
  if (!fs::exists(fs::path(path) / "manifest.json"))
    throw MissingDependencyError(std::string(role) + " image set", path);
  return load_imageset(path);
}

ModelBundle need_bundle(const RunConfig& cfg) {
  if (cfg.bundle_path.empty())
    throw std::invalid_argument(
        "a model bundle is required (--bundle or paths.bundle)");
  if (!fs::exists(cfg.bundle_path))
    throw MissingDependencyError("model bundle", cfg.bundle_path);
  return load_bundle(cfg.bundle_path);
}

std::string image_id(size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "img_%05zu", index);
  return buf;
}

std::string short_float(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void emit(const RunConfig& cfg, std::vector<MetricRow> rows,
          std::vector<TraceEntry> traces, ordered_json bundle_meta) {
  ReportInputs inputs;
  inputs.rows = std::move(rows);
  inputs.traces = std::move(traces);
  inputs.config_echo = run_config_echo(cfg);
  inputs.bundle_meta = std::move(bundle_meta);
  emit_report(inputs, need_out(cfg));
}

int cmd_gen_data(const RunConfig& cfg) {
  const std::string out = need_out(cfg);
  ImageSet set = gen_procedural_corpus(cfg.corpus_n, cfg.seed,
                                       cfg.corpus_kind);
  save_imageset(set, out);
  emit(cfg, {}, {}, ordered_json::object());
  std::cout << "wrote " << set.size() << " " << corpus_kind_str(cfg.corpus_kind)
            << " images to " << out << "\n";
  return 0;
}

int cmd_train_ae(const RunConfig& cfg) {
  const std::string out = need_out(cfg);
  ImageSet data = need_imageset(cfg.data_path, "training", "--data");
  TrainStats stats;
  ModelBundle bundle;
  bundle.schedule = cfg.make_schedule();
  bundle.codec = train_autoencoder(data, cfg.ae_epochs, cfg.seed, {}, &stats);
  bundle.denoiser = Denoiser::make_null();
  bundle.meta.dataset_id = data.source;
  bundle.meta.train_seed = cfg.seed;
  const std::string path = (fs::path(out) / "bundle.udap").string();
  save_bundle(bundle, path);

  std::vector<MetricRow> rows{
      {"codec", "train", "epochs", static_cast<double>(cfg.ae_epochs)},
      {"codec", "train", "final_loss", static_cast<double>(stats.final_loss)},
      {"codec", "train", "holdout_mse",
       static_cast<double>(stats.holdout_mse)},
  };
  emit(cfg, std::move(rows), {}, bundle_meta_json(bundle));
  std::cout << "trained codec (holdout mse " << short_float(stats.holdout_mse)
            << "), bundle at " << path << "\n";
  return 0;
}

int cmd_train_denoiser(const RunConfig& cfg) {
  const std::string out = need_out(cfg);
  ImageSet data = need_imageset(cfg.data_path, "training", "--data");
  ModelBundle bundle = need_bundle(cfg);
  TrainStats stats;
  bundle.denoiser = train_denoiser(bundle.codec, bundle.schedule, data,
                                   cfg.denoiser_steps, cfg.seed, {}, &stats);
  const std::string path = (fs::path(out) / "bundle.udap").string();
  save_bundle(bundle, path);

  std::vector<MetricRow> rows{
      {"denoiser", "train", "steps", static_cast<double>(cfg.denoiser_steps)},
      {"denoiser", "train", "final_loss",
       static_cast<double>(stats.final_loss)},
      {"denoiser", "train", "val_loss",
       static_cast<double>(stats.holdout_mse)},
  };
  emit(cfg, std::move(rows), {}, bundle_meta_json(bundle));
  std::cout << "trained denoiser (val loss " << short_float(stats.holdout_mse)
            << "), bundle at " << path << "\n";
  return 0;
}

ImageLabel adversarial_label(AttackFamily family) {
  switch (family) {
    case AttackFamily::Encoder: return ImageLabel::AdvEncoder;
    case AttackFamily::Denoiser: return ImageLabel::AdvDenoiser;
    case AttackFamily::Hybrid: return ImageLabel::AdvHybrid;
  }
  throw std::logic_error("adversarial_label: bad family");
}

int cmd_attack(const RunConfig& cfg, int workers) {
  const std::string out = need_out(cfg);
  ImageSet data = need_imageset(cfg.data_path, "clean", "--data");
  ModelBundle bundle = need_bundle(cfg);
  const int n = static_cast<int>(data.size());

  std::vector<Tensor> outputs(n);
  std::vector<AttackReport> reports(n);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        AttackSpec spec = cfg.attack;
        spec.seed = cfg.attack.seed + static_cast<uint64_t>(i);
        auto [x_adv, report] = run_attack(data.images[i], bundle, spec);
        outputs[i] = x_adv;
        reports[i] = std::move(report);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const int thread_count = std::min(workers, std::max(n, 1));
  if (thread_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  const ImageLabel label = adversarial_label(cfg.attack.family);
  ImageSet adv;
  adv.source = data.source;
  std::vector<MetricRow> rows;
  for (int i = 0; i < n; ++i) {
    adv.add(outputs[i], label);
    const std::string id = image_id(static_cast<size_t>(i));
    const std::string lab = label_str(label);
    rows.push_back({id, lab, "best_objective",
                    static_cast<double>(reports[i].best_objective)});
    rows.push_back({id, lab, "final_delta_linf",
                    static_cast<double>(reports[i].final_delta_linf)});
    rows.push_back({id, lab, "measured_gap",
                    static_cast<double>(reports[i].measured_gap)});
    if (cfg.attack.family == AttackFamily::Hybrid) {
      rows.push_back({id, lab, "encoder_term",
                      static_cast<double>(reports[i].encoder_term)});
      rows.push_back({id, lab, "denoiser_term",
                      static_cast<double>(reports[i].denoiser_term)});
    }
  }
  save_imageset(adv, out);
  emit(cfg, std::move(rows), {}, bundle_meta_json(bundle));
  std::cout << "attacked " << n << " images (" << family_str(cfg.attack.family)
            << ") into " << out << "\n";
  return 0;
}

int cmd_calibrate(const RunConfig& cfg) {
  ImageSet data = need_imageset(cfg.data_path, "clean", "--data");
  ModelBundle bundle = need_bundle(cfg);
  const float tau = calibrate_tau(data, bundle, cfg.purify.t_hat);

  std::vector<MetricRow> rows;
  for (size_t i = 0; i < data.size(); ++i) {
    rows.push_back({image_id(i), label_str(data.labels[i]), "recon_error",
                    static_cast<double>(recon_error(data.images[i], bundle,
                                                    cfg.purify.t_hat))});
  }
  rows.push_back({"all", "calibration", "tau", static_cast<double>(tau)});
  emit(cfg, std::move(rows), {}, bundle_meta_json(bundle));
  std::cout << "tau = " << short_float(tau) << " (mean L_DDIM over "
            << data.size() << " images)\n";
  return 0;
}

int cmd_purify(const RunConfig& cfg, int workers) {
  const std::string out = need_out(cfg);
  ImageSet data = need_imageset(cfg.data_path, "input", "--data");
  ModelBundle bundle = need_bundle(cfg);
  auto [purified, traces] = purify_batch(data, bundle, cfg.purify, workers);
  save_imageset(purified, out);

  std::vector<MetricRow> rows;
  std::vector<TraceEntry> entries;
  int met = 0, failed = 0;
  for (size_t i = 0; i < traces.size(); ++i) {
    const PurifyTrace& tr = traces[i];
    const std::string id = image_id(i);
    const std::string lab = label_str(data.labels[i]);
    rows.push_back({id, lab, "epochs_run", static_cast<double>(tr.epochs_run)});
    rows.push_back({id, lab, "best_loss", static_cast<double>(tr.best_loss)});
    rows.push_back(
        {id, lab, "change_linf", static_cast<double>(tr.change_linf)});
    if (!tr.loss_curve.empty())
      rows.push_back({id, lab, "final_loss",
                      static_cast<double>(tr.loss_curve.back())});
    met += tr.termination == Termination::ThresholdMet ||
                   tr.termination == Termination::AlreadyClean
               ? 1
               : 0;
    failed += tr.failed ? 1 : 0;
    entries.push_back({id, tr});
  }
  emit(cfg, std::move(rows), std::move(entries), bundle_meta_json(bundle));
  std::cout << "purified " << traces.size() << " images (" << met
            << " under tau, " << failed << " failed) into " << out << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_recon_gap(const RunConfig& cfg) {
  ImageSet clean = need_imageset(cfg.data_path, "clean", "--data");
  ImageSet adv = need_imageset(cfg.adv_path, "attacked", "--adv");
  ModelBundle bundle = need_bundle(cfg);
  GapReport gap = recon_gap(clean, adv, bundle, cfg.purify.t_hat);

  std::vector<MetricRow> rows;
  for (size_t i = 0; i < gap.clean_errors.size(); ++i)
    rows.push_back({image_id(i), label_str(clean.labels[i]),
                    "recon_error_clean",
                    static_cast<double>(gap.clean_errors[i])});
  for (size_t i = 0; i < gap.adv_errors.size(); ++i)
    rows.push_back({image_id(i), label_str(adv.labels[i]), "recon_error_adv",
                    static_cast<double>(gap.adv_errors[i])});
  rows.push_back({"all", "gap", "clean_median", gap.clean_median});
  rows.push_back({"all", "gap", "adv_median", gap.adv_median});
  if (gap.gap_defined)
    rows.push_back({"all", "gap", "gap_ratio", gap.gap_ratio});
  emit(cfg, std::move(rows), {}, bundle_meta_json(bundle));
  std::cout << "reconstruction gap: adv median "
            << short_float(gap.adv_median) << " vs clean median "
            << short_float(gap.clean_median)
            << (gap.gap_defined
                    ? " (ratio " + short_float(gap.gap_ratio) + ")"
                    : " (ratio undefined)")
            << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  ImageSet clean = need_imageset(cfg.data_path, "clean", "--data");
  ImageSet purified = need_imageset(cfg.purified_path, "purified",
                                    "--purified");
  ModelBundle bundle = need_bundle(cfg);
  constexpr int kObjectiveDraws = 16;

  std::vector<MetricRow> rows;
  auto add_pair_metrics = [&](const ImageSet& set, const char* suffix) {
    std::vector<PairMetrics> pm = image_metrics(clean, set);
    for (size_t i = 0; i < pm.size(); ++i) {
      const std::string id = image_id(i);
      const std::string lab = label_str(set.labels[i]);
      rows.push_back({id, lab, std::string("mse_") + suffix,
                      static_cast<double>(pm[i].mse)});
      rows.push_back({id, lab, std::string("psnr_") + suffix,
                      static_cast<double>(pm[i].psnr)});
    }
  };
  auto add_recon_rows = [&](const ImageSet& set, const char* suffix) {
    for (size_t i = 0; i < set.size(); ++i)
      rows.push_back({image_id(i), label_str(set.labels[i]),
                      std::string("recon_error_") + suffix,
                      static_cast<double>(recon_error(set.images[i], bundle,
                                                      cfg.purify.t_hat))});
  };
  auto add_objective_rows = [&](const ImageSet& set, const char* suffix) {
    if (!bundle.denoiser.trained()) return;
    for (size_t i = 0; i < set.size(); ++i)
      rows.push_back(
          {image_id(i), label_str(set.labels[i]),
           std::string("denoiser_objective_") + suffix,
           static_cast<double>(denoiser_objective(set.images[i], bundle,
                                                  kObjectiveDraws,
                                                  cfg.purify.t_hat,
                                                  cfg.seed))});
  };

  add_pair_metrics(purified, "purified");
  add_recon_rows(clean, "clean");
  add_recon_rows(purified, "purified");
  add_objective_rows(clean, "clean");
  add_objective_rows(purified, "purified");
  if (!cfg.adv_path.empty()) {
    ImageSet adv = need_imageset(cfg.adv_path, "attacked", "--adv");
    add_pair_metrics(adv, "adv");
    add_recon_rows(adv, "adv");
    add_objective_rows(adv, "adv");
  }
  emit(cfg, std::move(rows), {}, bundle_meta_json(bundle));
  std::cout << "evaluated " << clean.size() << " images into "
            << need_out(cfg) << "\n";
  return 0;
}

int cmd_sweep_tau(const RunConfig& cfg) {
  ImageSet data = need_imageset(cfg.data_path, "input", "--data");
  ModelBundle bundle = need_bundle(cfg);
  // The paper grid {2,3,4,5}e-3 relative to its 4e-3 default, i.e. the
  // configured tau scaled by {0.5, 0.75, 1.0, 1.25}.
  constexpr std::array<float, 4> kScales = {0.5f, 0.75f, 1.0f, 1.25f};

  std::vector<MetricRow> rows;
  for (float scale : kScales) {
    PurifyConfig pc = cfg.purify;
    pc.tau = cfg.purify.tau * scale;
    pc.gate_enabled = true;
    auto [outset, traces] = purify_batch(data, bundle, pc, 1);
    double epoch_sum = 0.0, loss_sum = 0.0;
    for (const PurifyTrace& tr : traces) {
      epoch_sum += tr.epochs_run;
      loss_sum += tr.loss_curve.empty()
                      ? static_cast<double>(tr.best_loss)
                      : static_cast<double>(tr.loss_curve.back());
    }
    const double mean_epochs = epoch_sum / static_cast<double>(traces.size());
    const double mean_final = loss_sum / static_cast<double>(traces.size());
    const std::string label = "tau=" + short_float(pc.tau);
    rows.push_back({"sweep", label, "tau", static_cast<double>(pc.tau)});
    rows.push_back({"sweep", label, "mean_epochs", mean_epochs});
    rows.push_back({"sweep", label, "mean_final_loss", mean_final});
    std::cout << label << "  mean_epochs=" << short_float(mean_epochs)
              << "  mean_final_loss=" << short_float(mean_final) << "\n";
  }
  emit(cfg, std::move(rows), {}, bundle_meta_json(bundle));
  return 0;
}

void print_error_json(const std::string& kind, const std::string& message,
                      const MissingDependencyError* dep = nullptr) {
  ordered_json err;
  err["kind"] = kind;
  err["message"] = message;
  if (dep != nullptr) {
    err["dependency"] = dep->dependency;
    err["path"] = dep->path;
  }
  std::cerr << ordered_json{{"error", err}}.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"udap: latent-diffusion adversarial purification toolkit"};
  app.require_subcommand(1);
  FlagBag bag;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a procedural"
                                                 " image corpus");
  add_common(gen, bag);
  gen->add_option("--corpus-n", bag.corpus_n, "number of images");
  gen->add_option("--corpus-kind", bag.corpus_kind,
                  "shapes|gradients|mixed");

  CLI::App* tae = app.add_subcommand("train-ae", "train the autoencoder and"
                                                 " write a bundle");
  add_common(tae, bag);
  add_data(tae, bag);
  tae->add_option("--t", bag.T, "schedule length");
  tae->add_option("--beta-start", bag.beta_start, "first beta");
  tae->add_option("--beta-end", bag.beta_end, "last beta");
  tae->add_option("--ae-epochs", bag.ae_epochs, "training epochs");

  CLI::App* tdn = app.add_subcommand("train-denoiser",
                                     "train the noise predictor into an"
                                     " existing bundle");
  add_common(tdn, bag);
  add_data(tdn, bag);
  add_bundle(tdn, bag);
  tdn->add_option("--denoiser-steps", bag.denoiser_steps, "training steps");

  CLI::App* atk = app.add_subcommand("attack", "craft adversarial"
                                               " perturbations (image i uses"
                                               " seed+i)");
  add_common(atk, bag);
  add_data(atk, bag);
  add_bundle(atk, bag);
  add_attack_flags(atk, bag);
  add_workers(atk, bag);

  CLI::App* cal = app.add_subcommand("calibrate", "estimate tau as the mean"
                                                  " clean L_DDIM");
  add_common(cal, bag);
  add_data(cal, bag);
  add_bundle(cal, bag);
  cal->add_option("--t-hat", bag.t_hat, "inversion depth");

  CLI::App* pur = app.add_subcommand("purify", "gradient-purify an image"
                                               " set");
  add_common(pur, bag);
  add_data(pur, bag);
  add_bundle(pur, bag);
  add_purify_flags(pur, bag);
  add_workers(pur, bag);

  CLI::App* gap = app.add_subcommand("recon-gap", "clean-vs-attacked"
                                                  " reconstruction error"
                                                  " gap");
  add_common(gap, bag);
  add_data(gap, bag);
  add_bundle(gap, bag);
  gap->add_option("--adv", bag.adv, "attacked image set directory");
  gap->add_option("--t-hat", bag.t_hat, "inversion depth");

  CLI::App* ev = app.add_subcommand("eval", "pixel and objective metrics"
                                            " against the clean set");
  add_common(ev, bag);
  add_data(ev, bag);
  add_bundle(ev, bag);
  ev->add_option("--purified", bag.purified, "purified image set directory");
  ev->add_option("--adv", bag.adv, "attacked image set directory");
  ev->add_option("--t-hat", bag.t_hat, "inversion depth");

  CLI::App* swp = app.add_subcommand("sweep-tau", "purify at scaled taus and"
                                                  " tabulate epoch counts");
  add_common(swp, bag);
  add_data(swp, bag);
  add_bundle(swp, bag);
  add_purify_flags(swp, bag);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    print_error_json("usage", e.what());
    return 2;
  }

  try {
    const CLI::App* sub = app.get_subcommands().at(0);
    const RunConfig cfg = resolve(sub, bag);
    const std::string name = sub->get_name();
    if (name == "gen-data") return cmd_gen_data(cfg);
    if (name == "train-ae") return cmd_train_ae(cfg);
    if (name == "train-denoiser") return cmd_train_denoiser(cfg);
    if (name == "attack") return cmd_attack(cfg, bag.workers);
    if (name == "calibrate") return cmd_calibrate(cfg);
    if (name == "purify") return cmd_purify(cfg, bag.workers);
    if (name == "recon-gap") return cmd_recon_gap(cfg);
    if (name == "eval") return cmd_eval(cfg);
    if (name == "sweep-tau") return cmd_sweep_tau(cfg);
    throw std::logic_error("unhandled subcommand " + name);
  } catch (const MissingDependencyError& e) {
    print_error_json("missing_dependency", e.what(), &e);
    return 3;
  } catch (const std::invalid_argument& e) {
    print_error_json("config", e.what());
    return 2;
  } catch (const StorageError& e) {
    print_error_json("storage", e.what());
    return 4;
  } catch (const std::exception& e) {
    print_error_json("internal", e.what());
    return 1;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("udap");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace udap
