#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "udap/cli.hpp"
#include "udap/evalreport.hpp"
#include "udap/storage.hpp"
#include "udap/train.hpp"

using namespace udap;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(static_cast<bool>(out));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && (a.values() == b.values()).all();
}

double row_value(const std::vector<MetricRow>& rows, const std::string& id,
                 const std::string& metric) {
  for (const MetricRow& r : rows)
    if (r.image_id == id && r.metric == metric) return r.value;
  FAIL("no row ", id, "/", metric);
  return 0.0;
}

/// Shared on-disk fixtures: a trained bundle, a passthrough bundle, a small
/// clean set, and an encoder-attacked set produced through the CLI itself.
struct CliEnv {
  fs::path root;
  std::string bundle;    // conv codec + trained denoiser
  std::string id_bundle; // identity codec + null denoiser
  std::string data;      // 4 clean images
  std::string adv;       // the same images, encoder-attacked
};

const CliEnv& env() {
  static const CliEnv e = [] {
    CliEnv v;
    v.root = fs::temp_directory_path() / "udap_cli_env";
    fs::remove_all(v.root);
    fs::create_directories(v.root);

    ImageSet corpus = gen_procedural_corpus(24, 5, CorpusKind::Mixed);
    ModelBundle bundle;
    bundle.schedule = make_linear_schedule(20, 1e-4f, 0.02f);
    bundle.codec = train_autoencoder(corpus, 10, 17);
    bundle.denoiser = train_denoiser(bundle.codec, bundle.schedule, corpus,
                                     400, 21);
    bundle.meta.dataset_id = "procedural-mixed-24@5";
    bundle.meta.train_seed = 17;
    v.bundle = (v.root / "bundle.udap").string();
    save_bundle(bundle, v.bundle);

    ModelBundle passthrough;
    passthrough.schedule = make_linear_schedule(20, 1e-4f, 0.02f);
    passthrough.codec = AutoEncoder::make_identity({1, 32, 32});
    passthrough.denoiser = Denoiser::make_null();
    v.id_bundle = (v.root / "idnull.udap").string();
    save_bundle(passthrough, v.id_bundle);

    ImageSet clean = gen_procedural_corpus(4, 5, CorpusKind::Mixed);
    v.data = (v.root / "data").string();
    save_imageset(clean, v.data);

    v.adv = (v.root / "adv").string();
    REQUIRE(run_cli({"attack", "--data", v.data, "--bundle", v.bundle,
                     "--out", v.adv, "--family", "encoder", "--steps", "8",
                     "--seed", "3"}) == 0);
    return v;
  }();
  return e;
}

std::string out_dir(const std::string& name) {
  const fs::path dir = env().root / name;
  fs::remove_all(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("gen-data writes a corpus plus a self-describing summary") {
  unsetenv("UDAP_SEED");
  const std::string out = out_dir("gen");
  REQUIRE(run_cli({"gen-data", "--out", out, "--corpus-n", "6",
                   "--corpus-kind", "gradients", "--seed", "11"}) == 0);

  ImageSet loaded = load_imageset(out);
  CHECK(loaded.size() == 6);
  ImageSet expect = gen_procedural_corpus(6, 11, CorpusKind::Gradients);
  for (size_t i = 0; i < 6; ++i) {
    CHECK((loaded.images[i].values() - expect.images[i].values())
              .abs()
              .maxCoeff() <= 0.5f / 255.0f);
    CHECK(loaded.labels[i] == ImageLabel::Clean);
  }

  const nlohmann::ordered_json summary =
      load_summary((fs::path(out) / "summary.json").string());
  const RunConfig echoed = parse_run_config(summary.at("config"));
  CHECK(echoed.seed == 11);
  CHECK(echoed.corpus_n == 6);
  CHECK(echoed.corpus_kind == CorpusKind::Gradients);
  CHECK(echoed.out_path == out);
}

TEST_CASE("flags override the config file which overrides defaults") {
  unsetenv("UDAP_SEED");
  const std::string out = out_dir("precedence");
  const fs::path cfg_file = env().root / "precedence.json";
  spit(cfg_file, R"({"seed": 9, "purify": {"tau": 0.5, "K": 3},
                     "paths": {"bundle": ")" +
                     env().id_bundle + R"(", "data": ")" + env().data +
                     R"("}})");
  REQUIRE(run_cli({"purify", "--config", cfg_file.string(), "--out", out,
                   "--tau", "0.25"}) == 0);

  const nlohmann::ordered_json summary =
      load_summary((fs::path(out) / "summary.json").string());
  const auto& purify = summary.at("config").at("purify");
  CHECK(purify.at("tau").get<double>() == 0.25);    // flag wins
  CHECK(purify.at("K").get<int>() == 3);            // file wins over default
  CHECK(purify.at("lr").get<float>() == 1e-2f);     // default
  CHECK(summary.at("config").at("seed").get<int>() == 9);
}

TEST_CASE("UDAP_SEED fills in below flags and config files") {
  const std::string out = out_dir("envseed");
  setenv("UDAP_SEED", "42", 1);

  SUBCASE("used when nothing else sets the seed") {
    REQUIRE(run_cli({"gen-data", "--out", out, "--corpus-n", "2"}) == 0);
    const auto summary = load_summary((fs::path(out) / "summary.json").string());
    CHECK(summary.at("config").at("seed").get<uint64_t>() == 42);
  }
  SUBCASE("beaten by a config-file seed") {
    const fs::path cfg_file = env().root / "envseed.json";
    spit(cfg_file, R"({"seed": 7})");
    REQUIRE(run_cli({"gen-data", "--config", cfg_file.string(), "--out", out,
                     "--corpus-n", "2"}) == 0);
    const auto summary = load_summary((fs::path(out) / "summary.json").string());
    CHECK(summary.at("config").at("seed").get<uint64_t>() == 7);
  }
  SUBCASE("beaten by the flag") {
    REQUIRE(run_cli({"gen-data", "--out", out, "--corpus-n", "2", "--seed",
                     "13"}) == 0);
    const auto summary = load_summary((fs::path(out) / "summary.json").string());
    CHECK(summary.at("config").at("seed").get<uint64_t>() == 13);
  }
  SUBCASE("rejected when unparseable") {
    setenv("UDAP_SEED", "not-a-seed", 1);
    CHECK(run_cli({"gen-data", "--out", out, "--corpus-n", "2"}) == 2);
  }
  unsetenv("UDAP_SEED");
}

TEST_CASE("purify --k 0 is a byte-level passthrough on an identity codec") {
  const std::string out = out_dir("k0");
  REQUIRE(run_cli({"purify", "--data", env().data, "--bundle",
                   env().id_bundle, "--out", out, "--k", "0"}) == 0);
  ImageSet in = load_imageset(env().data);
  ImageSet outset = load_imageset(out);
  REQUIRE(outset.size() == in.size());
  for (size_t i = 0; i < in.size(); ++i) {
    CHECK(bitwise_equal(outset.images[i], in.images[i]));
    CHECK(outset.labels[i] == ImageLabel::Purified);
    CHECK(slurp(fs::path(out) / ("img_0000" + std::to_string(i) + ".pgm")) ==
          slurp(fs::path(env().data) /
                ("img_0000" + std::to_string(i) + ".pgm")));
  }
}

TEST_CASE("calibrate on one image prints that image's own loss as tau") {
  const std::string one = out_dir("one_img");
  ImageSet single;
  single.source = "single";
  single.add(load_imageset(env().data).images[0], ImageLabel::Clean);
  save_imageset(single, one);

  const std::string out = out_dir("cal1");
  REQUIRE(run_cli({"calibrate", "--data", one, "--bundle", env().bundle,
                   "--out", out}) == 0);
  const auto rows =
      load_metrics_csv((fs::path(out) / "metrics.csv").string());
  const double tau = row_value(rows, "all", "tau");
  const double err = row_value(rows, "img_00000", "recon_error");
  CHECK(tau == err);

  ModelBundle bundle = load_bundle(env().bundle);
  CHECK(static_cast<float>(err) ==
        recon_error(load_imageset(one).images[0], bundle, 10));
}

TEST_CASE("attack artifacts stay inside the quantized budget") {
  const auto rows =
      load_metrics_csv((fs::path(env().adv) / "metrics.csv").string());
  ImageSet clean = load_imageset(env().data);
  ImageSet adv = load_imageset(env().adv);
  REQUIRE(adv.size() == clean.size());
  for (size_t i = 0; i < adv.size(); ++i) {
    CHECK(adv.labels[i] == ImageLabel::AdvEncoder);
    // xi plus one quantization bucket (both sides round by <= 1/510).
    const float d =
        (adv.images[i].values() - clean.images[i].values()).abs().maxCoeff();
    CHECK(d <= 8.0f / 255.0f + 1.0f / 255.0f + 1e-6f);
    CHECK(row_value(rows, "img_0000" + std::to_string(i), "best_objective") >
          0.0);
    CHECK(row_value(rows, "img_0000" + std::to_string(i),
                    "final_delta_linf") <= 8.0 / 255.0 + 1e-6);
  }
  // Attacks should genuinely move pixels.
  CHECK((adv.images[0].values() - clean.images[0].values()).abs().maxCoeff() >
        1.0f / 255.0f);
}

TEST_CASE("missing inputs are named dependency failures with exit 3") {
  const std::string out = out_dir("missing");
  CHECK(run_cli({"purify", "--data", env().data, "--bundle",
                 (env().root / "nowhere.udap").string(), "--out", out}) == 3);
  CHECK(run_cli({"attack", "--data", (env().root / "nodata").string(),
                 "--bundle", env().bundle, "--out", out}) == 3);
  CHECK(run_cli({"eval", "--data", env().data, "--purified",
                 (env().root / "nopure").string(), "--bundle", env().bundle,
                 "--out", out}) == 3);
}

TEST_CASE("schema and usage violations exit 2") {
  const std::string out = out_dir("usage");
  const fs::path bad_cfg = env().root / "bad.json";
  spit(bad_cfg, R"({"purify": {"gamma": 1}})");
  CHECK(run_cli({"purify", "--config", bad_cfg.string(), "--data", env().data,
                 "--bundle", env().id_bundle, "--out", out}) == 2);
  CHECK(run_cli({"purify", "--data", env().data, "--bundle", env().id_bundle,
                 "--out", out, "--workers", "0"}) == 2);
  CHECK(run_cli({"no-such-command"}) == 2);
  CHECK(run_cli(std::vector<std::string>{}) == 2);
  CHECK(run_cli({"attack", "--data", env().data, "--bundle", env().bundle,
                 "--out", out, "--family", "psychological"}) == 2);
}

TEST_CASE("purify reruns reproduce metrics.csv byte-for-byte") {
  const std::string out1 = out_dir("rerun1");
  const std::string out2 = out_dir("rerun2");
  const std::vector<std::string> base{
      "purify", "--data", env().adv, "--bundle", env().bundle,
      "--tau", "0.02", "--k", "3", "--seed", "3"};
  auto with_out = [&](const std::string& out) {
    std::vector<std::string> args = base;
    args.push_back("--out");
    args.push_back(out);
    return args;
  };
  REQUIRE(run_cli(with_out(out1)) == 0);
  REQUIRE(run_cli(with_out(out2)) == 0);
  CHECK(slurp(fs::path(out1) / "metrics.csv") ==
        slurp(fs::path(out2) / "metrics.csv"));
  // Images and traces agree too.
  for (int i = 0; i < 4; ++i) {
    const std::string name = "img_0000" + std::to_string(i);
    CHECK(slurp(fs::path(out1) / (name + ".pgm")) ==
          slurp(fs::path(out2) / (name + ".pgm")));
    CHECK(slurp(fs::path(out1) / "traces" / (name + ".csv")) ==
          slurp(fs::path(out2) / "traces" / (name + ".csv")));
  }

  SUBCASE("worker count does not change the bytes") {
    const std::string out3 = out_dir("rerun3");
    std::vector<std::string> args = with_out(out3);
    args.push_back("--workers");
    args.push_back("3");
    REQUIRE(run_cli(args) == 0);
    CHECK(slurp(fs::path(out1) / "metrics.csv") ==
          slurp(fs::path(out3) / "metrics.csv"));
  }
}

TEST_CASE("sweep-tau tabulates non-increasing mean epochs over the grid") {
  const std::string out = out_dir("sweep");
  REQUIRE(run_cli({"sweep-tau", "--data", env().adv, "--bundle", env().bundle,
                   "--out", out, "--tau", "0.02", "--k", "4"}) == 0);
  const auto rows =
      load_metrics_csv((fs::path(out) / "metrics.csv").string());
  std::vector<double> taus, epochs;
  for (const MetricRow& r : rows) {
    if (r.metric == "tau") taus.push_back(r.value);
    if (r.metric == "mean_epochs") epochs.push_back(r.value);
  }
  REQUIRE(taus.size() == 4);
  REQUIRE(epochs.size() == 4);
  CHECK(taus[0] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(taus[3] == doctest::Approx(0.025).epsilon(1e-6));
  for (size_t i = 1; i < taus.size(); ++i) {
    CHECK(taus[i] > taus[i - 1]);
    CHECK(epochs[i] <= epochs[i - 1]);
  }
}

TEST_CASE("recon-gap rows match a direct recomputation on the artifacts") {
  const std::string out = out_dir("gap");
  REQUIRE(run_cli({"recon-gap", "--data", env().data, "--adv", env().adv,
                   "--bundle", env().bundle, "--out", out}) == 0);

  ModelBundle bundle = load_bundle(env().bundle);
  GapReport gap = recon_gap(load_imageset(env().data),
                            load_imageset(env().adv), bundle, 10);
  const auto rows =
      load_metrics_csv((fs::path(out) / "metrics.csv").string());
  for (size_t i = 0; i < gap.clean_errors.size(); ++i) {
    const std::string id = "img_0000" + std::to_string(i);
    CHECK(row_value(rows, id, "recon_error_clean") ==
          static_cast<double>(gap.clean_errors[i]));
    CHECK(row_value(rows, id, "recon_error_adv") ==
          static_cast<double>(gap.adv_errors[i]));
  }
  CHECK(row_value(rows, "all", "clean_median") == gap.clean_median);
  CHECK(row_value(rows, "all", "adv_median") == gap.adv_median);
  if (gap.gap_defined)
    CHECK(row_value(rows, "all", "gap_ratio") == gap.gap_ratio);
}

TEST_CASE("eval reports pixel metrics that match the library computation") {
  const std::string pure = out_dir("eval_pure");
  REQUIRE(run_cli({"purify", "--data", env().adv, "--bundle", env().bundle,
                   "--out", pure, "--tau", "0.02", "--k", "3", "--seed",
                   "3"}) == 0);
  const std::string out = out_dir("eval");
  REQUIRE(run_cli({"eval", "--data", env().data, "--purified", pure, "--adv",
                   env().adv, "--bundle", env().bundle, "--out", out,
                   "--seed", "3"}) == 0);

  ImageSet clean = load_imageset(env().data);
  ImageSet purified = load_imageset(pure);
  std::vector<PairMetrics> pm = image_metrics(clean, purified);
  const auto rows =
      load_metrics_csv((fs::path(out) / "metrics.csv").string());
  for (size_t i = 0; i < pm.size(); ++i) {
    const std::string id = "img_0000" + std::to_string(i);
    CHECK(row_value(rows, id, "mse_purified") ==
          static_cast<double>(pm[i].mse));
    CHECK(row_value(rows, id, "psnr_purified") ==
          static_cast<double>(pm[i].psnr));
    // Objective rows exist because the bundle's denoiser is trained.
    CHECK(row_value(rows, id, "denoiser_objective_clean") > 0.0);
    CHECK(row_value(rows, id, "denoiser_objective_adv") > 0.0);
    CHECK(row_value(rows, id, "recon_error_purified") >= 0.0);
  }
}

TEST_CASE("train-ae and train-denoiser chain into a usable bundle") {
  const std::string data = out_dir("train_data");
  REQUIRE(run_cli({"gen-data", "--out", data, "--corpus-n", "6", "--seed",
                   "11"}) == 0);
  const std::string ae = out_dir("train_ae");
  REQUIRE(run_cli({"train-ae", "--data", data, "--out", ae, "--ae-epochs",
                   "1", "--t", "12", "--seed", "17"}) == 0);
  const std::string dn = out_dir("train_dn");
  REQUIRE(run_cli({"train-denoiser", "--data", data, "--bundle",
                   (fs::path(ae) / "bundle.udap").string(), "--out", dn,
                   "--denoiser-steps", "10", "--seed", "21"}) == 0);

  ModelBundle bundle =
      load_bundle((fs::path(dn) / "bundle.udap").string());
  CHECK(bundle.schedule.total_steps == 12);
  CHECK(bundle.codec.mode() == AutoEncoder::Mode::Conv);
  CHECK(bundle.codec.epochs_trained == 1);
  CHECK(bundle.codec.attackable());
  CHECK(bundle.denoiser.trained());
  CHECK(bundle.denoiser.steps_trained == 10);
  CHECK_FALSE(bundle.meta.dataset_id.empty());

  const auto rows =
      load_metrics_csv((fs::path(ae) / "metrics.csv").string());
  CHECK(row_value(rows, "codec", "holdout_mse") > 0.0);

  // The denoiser stage must refuse to run without its bundle input.
  CHECK(run_cli({"train-denoiser", "--data", data, "--bundle",
                 (fs::path(dn) / "missing.udap").string(), "--out", dn}) ==
        3);
}
