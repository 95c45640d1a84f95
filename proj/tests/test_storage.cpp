#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "udap/rng.hpp"
#include "udap/storage.hpp"
#include "udap/train.hpp"

using namespace udap;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

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

Tensor unit_image(Shape shape, SplitMix64& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (Eigen::Index i = 0; i < t.values().size(); ++i)
    t.values()[i] = rng.next_float();
  return t;
}

// A small but seriously trained bundle: conv codec + network denoiser.
const ModelBundle& trained_bundle() {
  static const ModelBundle bundle = [] {
    ImageSet corpus = gen_procedural_corpus(24, 5, CorpusKind::Mixed);
    ModelBundle b;
    b.schedule = make_linear_schedule(20, 1e-4f, 0.02f);
    b.codec = train_autoencoder(corpus, 10, 17);
    b.denoiser = train_denoiser(b.codec, b.schedule, corpus, 400, 21);
    b.meta.dataset_id = "procedural-mixed-24@5";
    b.meta.train_seed = 17;
    return b;
  }();
  return bundle;
}

// Byte image of the checkpoint holding one entry: "w", shape [2,2],
// values {1, -2, 0.5, 3.25}. Frozen from the format definition: magic,
// version 1, then [name_len][name][ndim][dims as u64][f32 payload], all
// little-endian, closed by CRC-32 of everything before it.
const std::string& one_entry_bytes() {
  static const std::string bytes = [] {
    const unsigned char raw[] = {
        0x55, 0x44, 0x41, 0x50, 0x43, 0x4B, 0x50, 0x54,  // "UDAPCKPT"
        0x01, 0x00, 0x00, 0x00,                          // version 1
        0x01, 0x00, 0x00, 0x00, 0x77,                    // name "w"
        0x02, 0x00, 0x00, 0x00,                          // ndim 2
        0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,  // dim 2
        0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,  // dim 2
        0x00, 0x00, 0x80, 0x3F,                          // 1.0f
        0x00, 0x00, 0x00, 0xC0,                          // -2.0f
        0x00, 0x00, 0x00, 0x3F,                          // 0.5f
        0x00, 0x00, 0x50, 0x40,                          // 3.25f
        0x4C, 0xB8, 0xE8, 0x7A,                          // CRC-32
    };
    return std::string(reinterpret_cast<const char*>(raw), sizeof(raw));
  }();
  return bytes;
}

}  // namespace

TEST_CASE("crc32 matches the standard check value") {
  // The canonical CRC-32 check vector and the empty-input identity.
  CHECK(crc32("123456789", 9) == 0xCBF43926u);
  CHECK(crc32("", 0) == 0x00000000u);
  // Any corruption must move the checksum.
  const std::string a = "attack at dawn";
  std::string b = a;
  b[3] ^= 0x01;
  CHECK(crc32(a.data(), a.size()) != crc32(b.data(), b.size()));
}

TEST_CASE("checkpoint with no entries is the bare 16-byte header") {
  const fs::path dir = fresh_dir("udap_ckpt_empty");
  const std::string path = (dir / "empty.ckpt").string();
  save_checkpoint({}, path);
  const std::string bytes = slurp(path);
  const unsigned char expect[] = {0x55, 0x44, 0x41, 0x50, 0x43, 0x4B,
                                  0x50, 0x54, 0x01, 0x00, 0x00, 0x00,
                                  0xE2, 0x4E, 0x09, 0x22};
  CHECK(bytes ==
        std::string(reinterpret_cast<const char*>(expect), sizeof(expect)));
  CHECK(load_checkpoint(path).empty());
}

TEST_CASE("one-entry checkpoint bytes are stable and load back exactly") {
  const fs::path dir = fresh_dir("udap_ckpt_one");
  const std::string path = (dir / "one.ckpt").string();

  NamedParams entries;
  entries.emplace_back(
      "w", Tensor::from_array({2, 2}, (ArrayXf(4) << 1.0f, -2.0f, 0.5f,
                                       3.25f)
                                          .finished()));
  save_checkpoint(entries, path);
  CHECK(slurp(path) == one_entry_bytes());

  // And the loader agrees with the bytes regardless of who wrote them.
  spit(dir / "again.ckpt", one_entry_bytes());
  NamedParams loaded = load_checkpoint((dir / "again.ckpt").string());
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].first == "w");
  CHECK(bitwise_equal(loaded[0].second, entries[0].second));
}

TEST_CASE("checkpoint roundtrip is bit-exact for arbitrary tensors") {
  const fs::path dir = fresh_dir("udap_ckpt_rt");
  const std::string path = (dir / "params.ckpt").string();

  SplitMix64 rng(77);
  NamedParams entries;
  entries.emplace_back("conv.w", Tensor::randn({4, 3, 3, 3}, rng));
  entries.emplace_back("conv.b", Tensor::randn({4}, rng));
  entries.emplace_back("head/dense", Tensor::randn({7, 11}, rng));
  // Values that stress the f32 carrier: denormal, huge, negative zero.
  Tensor edge = Tensor::zeros({3});
  edge.values() << 1e-41f, 3.0e38f, -0.0f;
  entries.emplace_back("edge", edge);

  save_checkpoint(entries, path);
  NamedParams loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == entries.size());
  for (size_t i = 0; i < entries.size(); ++i) {
    CHECK(loaded[i].first == entries[i].first);
    CHECK(bitwise_equal(loaded[i].second, entries[i].second));
  }
  CHECK(std::signbit(loaded[3].second.values()[2]));
}

TEST_CASE("checkpoint reader distinguishes its failure kinds") {
  const fs::path dir = fresh_dir("udap_ckpt_err");
  const std::string good = one_entry_bytes();

  SUBCASE("shorter than header and trailer") {
    spit(dir / "f.ckpt", good.substr(0, 10));
    CHECK_THROWS_AS(load_checkpoint((dir / "f.ckpt").string()),
                    TruncatedError);
  }
  SUBCASE("wrong magic") {
    std::string bad = good;
    bad[0] = 'X';
    spit(dir / "f.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint((dir / "f.ckpt").string()),
                    BadMagicError);
  }
  SUBCASE("future version") {
    std::string bad = good;
    bad[8] = 0x07;
    spit(dir / "f.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint((dir / "f.ckpt").string()),
                    BadVersionError);
  }
  SUBCASE("entry cut off mid-payload") {
    // Drop 8 payload bytes; the CRC trailer is still present, so the
    // remaining payload read crosses into it.
    std::string bad = good.substr(0, good.size() - 12) +
                      good.substr(good.size() - 4);
    // Recompute the CRC so only truncation can be blamed.
    const uint32_t crc = crc32(bad.data(), bad.size() - 4);
    for (int i = 0; i < 4; ++i)
      bad[bad.size() - 4 + i] = static_cast<char>((crc >> (8 * i)) & 0xFF);
    spit(dir / "f.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint((dir / "f.ckpt").string()),
                    TruncatedError);
  }
  SUBCASE("payload corruption fails the CRC") {
    std::string bad = good;
    bad[40] = static_cast<char>(bad[40] ^ 0x40);  // inside the f32 payload
    spit(dir / "f.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint((dir / "f.ckpt").string()),
                    CrcMismatchError);
  }
  SUBCASE("zero-length entry name") {
    std::string bad = good;
    bad[12] = 0x00;  // name_len 1 -> 0
    spit(dir / "f.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint((dir / "f.ckpt").string()),
                    MalformedError);
  }
  SUBCASE("absurd ndim") {
    std::string bad = good;
    bad[19] = static_cast<char>(0xFF);  // high byte of ndim
    spit(dir / "f.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint((dir / "f.ckpt").string()),
                    MalformedError);
  }
  SUBCASE("zero dimension") {
    std::string bad = good;
    bad[21] = 0x00;  // first dim 2 -> 0
    spit(dir / "f.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint((dir / "f.ckpt").string()),
                    MalformedError);
  }
  SUBCASE("duplicate entry names") {
    // Two copies of the same entry body under one header.
    const std::string entry = good.substr(12, good.size() - 16);
    std::string bad = good.substr(0, 12) + entry + entry;
    const uint32_t crc = crc32(bad.data(), bad.size());
    for (int i = 0; i < 4; ++i)
      bad.push_back(static_cast<char>((crc >> (8 * i)) & 0xFF));
    spit(dir / "f.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint((dir / "f.ckpt").string()),
                    MalformedError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint((dir / "nowhere.ckpt").string()),
                    StorageError);
  }
}

TEST_CASE("save_checkpoint rejects unsaveable inputs") {
  const fs::path dir = fresh_dir("udap_ckpt_bad_in");
  const std::string path = (dir / "x.ckpt").string();
  Tensor t = Tensor::zeros({2});

  NamedParams unnamed;
  unnamed.emplace_back("", t);
  CHECK_THROWS_AS(save_checkpoint(unnamed, path), std::invalid_argument);

  NamedParams dupes;
  dupes.emplace_back("p", t);
  dupes.emplace_back("p", t);
  CHECK_THROWS_AS(save_checkpoint(dupes, path), std::invalid_argument);

  NamedParams undefined;
  undefined.emplace_back("p", Tensor());
  CHECK_THROWS_AS(save_checkpoint(undefined, path), std::invalid_argument);
}

TEST_CASE("bundle roundtrip preserves every tensor, flag, and meta field") {
  const fs::path dir = fresh_dir("udap_bundle_rt");
  const std::string path = (dir / "model.udap").string();
  const ModelBundle& bundle = trained_bundle();
  save_bundle(bundle, path);
  CHECK(fs::exists(path));
  CHECK(fs::exists(path + ".meta.json"));

  ModelBundle loaded = load_bundle(path);
  CHECK(loaded.meta.version_tag == bundle.meta.version_tag);
  CHECK(loaded.meta.dataset_id == bundle.meta.dataset_id);
  CHECK(loaded.meta.train_seed == bundle.meta.train_seed);

  // Schedule: betas stored, alpha_bar re-derived bit-identically.
  REQUIRE(loaded.schedule.total_steps == bundle.schedule.total_steps);
  CHECK(loaded.schedule.beta == bundle.schedule.beta);
  CHECK(loaded.schedule.alpha_bar == bundle.schedule.alpha_bar);

  CHECK(loaded.codec.mode() == AutoEncoder::Mode::Conv);
  CHECK(loaded.codec.image_shape() == bundle.codec.image_shape());
  CHECK(loaded.codec.epochs_trained == bundle.codec.epochs_trained);
  CHECK(loaded.codec.attackable());
  AutoEncoder lc = loaded.codec;
  AutoEncoder bc = bundle.codec;
  NamedParams lp = lc.named_params();
  NamedParams bp = bc.named_params();
  REQUIRE(lp.size() == bp.size());
  for (size_t i = 0; i < lp.size(); ++i) {
    CHECK(lp[i].first == bp[i].first);
    CHECK(bitwise_equal(lp[i].second, bp[i].second));
  }

  CHECK(loaded.denoiser.mode() == Denoiser::Mode::Network);
  CHECK(loaded.denoiser.in_channels() == bundle.denoiser.in_channels());
  CHECK(loaded.denoiser.steps_trained == bundle.denoiser.steps_trained);
  CHECK(loaded.denoiser.trained_total_steps ==
        bundle.denoiser.trained_total_steps);
  CHECK(loaded.denoiser.trained());
  Denoiser ld = loaded.denoiser;
  Denoiser bd = bundle.denoiser;
  NamedParams ldp = ld.named_params();
  NamedParams bdp = bd.named_params();
  REQUIRE(ldp.size() == bdp.size());
  for (size_t i = 0; i < ldp.size(); ++i) {
    CHECK(ldp[i].first == bdp[i].first);
    CHECK(bitwise_equal(ldp[i].second, bdp[i].second));
  }

  // The loaded bundle behaves identically, not just structurally: same
  // denoiser output on a fixed latent.
  SplitMix64 rng(4242);
  Tensor z = Tensor::randn(
      {1, AutoEncoder::kLatentChannels, bundle.codec.latent_shape()[1],
       bundle.codec.latent_shape()[2]},
      rng);
  CHECK(bitwise_equal(loaded.denoiser(z, 7), bundle.denoiser(z, 7)));
  const Tensor probe = batch_of_one(unit_image(bundle.codec.image_shape(),
                                               rng));
  CHECK(bitwise_equal(loaded.codec.encode(probe),
                      bundle.codec.encode(probe)));
}

TEST_CASE("degenerate bundles survive persistence") {
  const fs::path dir = fresh_dir("udap_bundle_deg");

  SUBCASE("identity codec + null denoiser") {
    ModelBundle b;
    b.schedule = make_linear_schedule(5, 1e-3f, 2e-2f);
    b.codec = AutoEncoder::make_identity({1, 8, 8});
    b.denoiser = Denoiser::make_null();
    const std::string path = (dir / "idnull.udap").string();
    save_bundle(b, path);
    ModelBundle loaded = load_bundle(path);
    CHECK(loaded.codec.mode() == AutoEncoder::Mode::Identity);
    CHECK(loaded.codec.image_shape() == Shape{1, 8, 8});
    CHECK(loaded.denoiser.mode() == Denoiser::Mode::Null);
    CHECK(loaded.schedule.beta == b.schedule.beta);
  }
  SUBCASE("constant denoiser keeps its value") {
    ModelBundle b;
    b.schedule = make_linear_schedule(3, 1e-3f, 2e-2f);
    b.codec = AutoEncoder::make_identity({1, 4, 4});
    b.denoiser = Denoiser::make_constant(0.125f);
    const std::string path = (dir / "const.udap").string();
    save_bundle(b, path);
    ModelBundle loaded = load_bundle(path);
    CHECK(loaded.denoiser.mode() == Denoiser::Mode::Constant);
    CHECK(loaded.denoiser.constant_value() == 0.125f);
  }
}

TEST_CASE("bundle loading demands a coherent pair of files") {
  const fs::path dir = fresh_dir("udap_bundle_err");
  ModelBundle b;
  b.schedule = make_linear_schedule(4, 1e-3f, 2e-2f);
  b.codec = AutoEncoder::make_identity({1, 4, 4});
  b.denoiser = Denoiser::make_null();
  const std::string path = (dir / "m.udap").string();
  save_bundle(b, path);

  SUBCASE("missing sidecar") {
    fs::remove(path + ".meta.json");
    CHECK_THROWS_AS(load_bundle(path), StorageError);
  }
  SUBCASE("meta T contradicting the stored betas") {
    std::string meta = slurp(path + ".meta.json");
    const auto at = meta.find("\"T\": 4");
    REQUIRE(at != std::string::npos);
    meta[at + 5] = '9';
    spit(path + ".meta.json", meta);
    CHECK_THROWS_AS(load_bundle(path), MalformedError);
  }
  SUBCASE("unaccounted tensor entries") {
    NamedParams entries = load_checkpoint(path);
    entries.emplace_back("stray", Tensor::zeros({1}));
    save_checkpoint(entries, path);
    CHECK_THROWS_AS(load_bundle(path), MalformedError);
  }
}

TEST_CASE("pgm writes quantize to at most half a bucket") {
  const fs::path dir = fresh_dir("udap_pnm_quant");
  SplitMix64 rng(31);
  Tensor img = unit_image({1, 9, 7}, rng);
  const std::string path = (dir / "u.pgm").string();
  write_image(img, path);
  Tensor back = read_image(path);
  REQUIRE(back.shape() == img.shape());
  CHECK((back.values() - img.values()).abs().maxCoeff() <= 0.5f / 255.0f);

  // Re-encoding the quantized image is lossless: bytes stabilize after
  // one write.
  write_image(back, (dir / "u2.pgm").string());
  CHECK(slurp(dir / "u2.pgm") == slurp(path));
  CHECK(bitwise_equal(read_image((dir / "u2.pgm").string()), back));
}

TEST_CASE("pgm zero image and exact multiples survive untouched") {
  const fs::path dir = fresh_dir("udap_pnm_exact");
  const std::string path = (dir / "z.pgm").string();
  write_image(Tensor::zeros({1, 2, 2}), path);
  Tensor z = read_image(path);
  CHECK(z.shape() == Shape{1, 2, 2});
  CHECK((z.values() == 0.0f).all());

  // k/255 grid points are fixed points of the quantizer.
  Tensor grid = Tensor::zeros({1, 2, 3});
  grid.values() << 0.0f, 1.0f / 255.0f, 17.0f / 255.0f, 128.0f / 255.0f,
      254.0f / 255.0f, 1.0f;
  write_image(grid, (dir / "g.pgm").string());
  CHECK(bitwise_equal(read_image((dir / "g.pgm").string()), grid));
}

TEST_CASE("ppm stores three channels interleaved and reads them back") {
  const fs::path dir = fresh_dir("udap_pnm_rgb");
  Tensor rgb = Tensor::zeros({3, 2, 2});
  // Planar layout in the tensor; distinct per channel and position.
  rgb.values() << 10.0f / 255.0f, 20.0f / 255.0f, 30.0f / 255.0f,
      40.0f / 255.0f,  // R
      50.0f / 255.0f, 60.0f / 255.0f, 70.0f / 255.0f, 80.0f / 255.0f,  // G
      90.0f / 255.0f, 100.0f / 255.0f, 110.0f / 255.0f,
      120.0f / 255.0f;  // B
  const std::string path = (dir / "c.ppm").string();
  write_image(rgb, path);

  const std::string bytes = slurp(path);
  const std::string header = "P6\n2 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 12);
  CHECK(bytes.substr(0, header.size()) == header);
  // First pixel is (R,G,B) = (10,50,90): interleaved raster order.
  CHECK(static_cast<uint8_t>(bytes[header.size() + 0]) == 10);
  CHECK(static_cast<uint8_t>(bytes[header.size() + 1]) == 50);
  CHECK(static_cast<uint8_t>(bytes[header.size() + 2]) == 90);

  CHECK(bitwise_equal(read_image(path), rgb));
}

TEST_CASE("pnm reader handles comments and rejects the malformed") {
  const fs::path dir = fresh_dir("udap_pnm_err");
  const std::string raster4 = std::string("\x00\x40\x80\xFF", 4);

  SUBCASE("comments anywhere in the header") {
    spit(dir / "c.pgm",
         "P5 # a binary gray map\n# width next\n2\t2\n# maxval\n255\n" +
             raster4);
    Tensor t = read_image((dir / "c.pgm").string());
    CHECK(t.shape() == Shape{1, 2, 2});
    CHECK(t.values()[3] == 1.0f);
  }
  SUBCASE("wrong magic") {
    spit(dir / "f.pgm", "P2\n2 2\n255\n" + raster4);
    CHECK_THROWS_AS(read_image((dir / "f.pgm").string()), BadMagicError);
  }
  SUBCASE("unsupported maxval") {
    spit(dir / "f.pgm", "P5\n2 2\n65535\n" + raster4 + raster4);
    CHECK_THROWS_AS(read_image((dir / "f.pgm").string()), MalformedError);
  }
  SUBCASE("short raster") {
    spit(dir / "f.pgm", "P5\n2 2\n255\n" + raster4.substr(0, 3));
    CHECK_THROWS_AS(read_image((dir / "f.pgm").string()), TruncatedError);
  }
  SUBCASE("trailing bytes") {
    spit(dir / "f.pgm", "P5\n2 2\n255\n" + raster4 + "x");
    CHECK_THROWS_AS(read_image((dir / "f.pgm").string()), MalformedError);
  }
  SUBCASE("non-numeric header") {
    spit(dir / "f.pgm", "P5\nwide 2\n255\n" + raster4);
    CHECK_THROWS_AS(read_image((dir / "f.pgm").string()), MalformedError);
  }
}

TEST_CASE("write_image enforces its shape and range contract") {
  const fs::path dir = fresh_dir("udap_pnm_contract");
  const std::string path = (dir / "x.pgm").string();
  CHECK_THROWS_AS(write_image(Tensor::zeros({2, 4, 4}), path),
                  std::invalid_argument);
  CHECK_THROWS_AS(write_image(Tensor::zeros({4, 4}), path),
                  std::invalid_argument);
  Tensor hot = Tensor::zeros({1, 2, 2});
  hot.values()[1] = 1.0001f;
  CHECK_THROWS_AS(write_image(hot, path), std::invalid_argument);
  hot.values()[1] = -0.01f;
  CHECK_THROWS_AS(write_image(hot, path), std::invalid_argument);
}

TEST_CASE("imageset directory roundtrip keeps labels, source, and pixels") {
  const fs::path dir = fresh_dir("udap_imageset_rt");
  SplitMix64 rng(8);
  ImageSet set;
  set.source = "procedural@8";
  set.add(unit_image({1, 6, 5}, rng), ImageLabel::Clean);
  set.add(unit_image({1, 6, 5}, rng), ImageLabel::AdvEncoder);
  set.add(unit_image({1, 6, 5}, rng), ImageLabel::Purified);
  save_imageset(set, dir.string());

  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "img_00000.pgm"));
  CHECK(fs::exists(dir / "img_00002.pgm"));

  ImageSet loaded = load_imageset(dir.string());
  REQUIRE(loaded.size() == 3);
  CHECK(loaded.source == set.source);
  CHECK(loaded.labels ==
        std::vector<ImageLabel>{ImageLabel::Clean, ImageLabel::AdvEncoder,
                                ImageLabel::Purified});
  for (size_t i = 0; i < 3; ++i) {
    CHECK((loaded.images[i].values() - set.images[i].values())
              .abs()
              .maxCoeff() <= 0.5f / 255.0f);
  }

  // Quantization happened exactly once: a second trip is bitwise stable.
  const fs::path dir2 = fresh_dir("udap_imageset_rt2");
  save_imageset(loaded, dir2.string());
  ImageSet loaded2 = load_imageset(dir2.string());
  REQUIRE(loaded2.size() == 3);
  for (size_t i = 0; i < 3; ++i)
    CHECK(bitwise_equal(loaded2.images[i], loaded.images[i]));

  SUBCASE("color images use the ppm extension") {
    const fs::path dir3 = fresh_dir("udap_imageset_rgb");
    ImageSet color;
    color.source = "rgb";
    color.add(unit_image({3, 4, 4}, rng), ImageLabel::Clean);
    save_imageset(color, dir3.string());
    CHECK(fs::exists(dir3 / "img_00000.ppm"));
    CHECK(load_imageset(dir3.string()).images[0].shape() == Shape{3, 4, 4});
  }
  SUBCASE("manifest with an unknown label is rejected") {
    std::string manifest = slurp(dir / "manifest.json");
    const auto at = manifest.find("adversarial:encoder");
    REQUIRE(at != std::string::npos);
    manifest.replace(at, 19, "adversarial:unknown");
    spit(dir / "manifest.json", manifest);
    CHECK_THROWS_AS(load_imageset(dir.string()), std::invalid_argument);
  }
}

TEST_CASE("run config defaults materialize from an empty document") {
  const RunConfig cfg = parse_run_config(nlohmann::ordered_json::object());
  CHECK(cfg.schedule_T == 20);
  CHECK(cfg.beta_start == 1e-4f);
  CHECK(cfg.beta_end == 0.02f);
  CHECK(cfg.purify.tau == 4e-3f);
  CHECK(cfg.purify.max_epochs == 100);
  CHECK(cfg.purify.t_hat == 10);
  CHECK(cfg.purify.lr == 1e-2f);
  CHECK(cfg.purify.gate_enabled);
  CHECK(cfg.attack.family == AttackFamily::Encoder);
  CHECK(cfg.attack.xi == 8.0f / 255.0f);
  CHECK(cfg.attack.steps == 40);
  CHECK(cfg.seed == 0);
  CHECK(cfg.corpus_n == 120);
  CHECK(cfg.ae_epochs == 40);
  CHECK(cfg.denoiser_steps == 2500);
  // Resolution wiring: shared seed and shared timestep depth.
  CHECK(cfg.attack.seed == cfg.seed);
  CHECK(cfg.purify.seed == cfg.seed);
  CHECK(cfg.attack.t_hat == cfg.purify.t_hat);
  // And the derived schedule matches the factory.
  const NoiseSchedule s = cfg.make_schedule();
  const NoiseSchedule ref = make_linear_schedule(20, 1e-4f, 0.02f);
  CHECK(s.beta == ref.beta);
  CHECK(s.alpha_bar == ref.alpha_bar);
}

TEST_CASE("run config parses a full document with key remapping") {
  const nlohmann::ordered_json j = nlohmann::ordered_json::parse(R"({
    "schedule": {"T": 12, "beta_start": 0.001, "beta_end": 0.08},
    "purify":  {"tau": 0.02, "K": 35, "t_hat": 6, "lr": 0.005, "gate": false},
    "attack":  {"family": "hybrid", "xi": 0.05, "steps": 25,
                "step_size": 0.004, "lambda": 0.25},
    "train":   {"corpus_n": 48, "corpus_kind": "gradients",
                "ae_epochs": 12, "denoiser_steps": 600},
    "seed": 99,
    "paths": {"data": "d/", "bundle": "b.udap", "out": "o/"}
  })");
  const RunConfig cfg = parse_run_config(j);
  CHECK(cfg.schedule_T == 12);
  CHECK(cfg.beta_start == 0.001f);
  CHECK(cfg.beta_end == 0.08f);
  CHECK(cfg.purify.tau == 0.02f);
  CHECK(cfg.purify.max_epochs == 35);  // K maps onto max_epochs
  CHECK(cfg.purify.t_hat == 6);
  CHECK(cfg.purify.lr == 0.005f);
  CHECK_FALSE(cfg.purify.gate_enabled);
  CHECK(cfg.attack.family == AttackFamily::Hybrid);
  CHECK(cfg.attack.xi == 0.05f);
  CHECK(cfg.attack.steps == 25);
  CHECK(cfg.attack.step_size == 0.004f);
  CHECK(cfg.attack.hybrid_weight == 0.25f);  // lambda maps onto hybrid_weight
  CHECK(cfg.corpus_n == 48);
  CHECK(cfg.corpus_kind == CorpusKind::Gradients);
  CHECK(cfg.ae_epochs == 12);
  CHECK(cfg.denoiser_steps == 600);
  CHECK(cfg.seed == 99);
  CHECK(cfg.data_path == "d/");
  CHECK(cfg.bundle_path == "b.udap");
  CHECK(cfg.out_path == "o/");
  CHECK(cfg.attack.seed == 99);
  CHECK(cfg.purify.seed == 99);
  CHECK(cfg.attack.t_hat == 6);
}

TEST_CASE("run config rejections name the offending dotted path") {
  auto message_of = [](const nlohmann::ordered_json& j) {
    try {
      parse_run_config(j);
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };

  CHECK(message_of({{"speed", 3}}).find("'speed'") != std::string::npos);
  CHECK(message_of({{"purify", {{"gamma", 1}}}}).find("'purify.gamma'") !=
        std::string::npos);
  CHECK(message_of({{"schedule", {{"t", 5}}}}).find("'schedule.t'") !=
        std::string::npos);
  CHECK(message_of({{"attack", {{"family", "psych"}}}}).find("psych") !=
        std::string::npos);
  CHECK(message_of({{"purify", {{"tau", "small"}}}}).find("purify.tau") !=
        std::string::npos);
  CHECK(message_of({{"schedule", {{"T", 2.5}}}}).find("schedule.T") !=
        std::string::npos);
  CHECK(message_of({{"purify", {{"gate", 1}}}}).find("purify.gate") !=
        std::string::npos);
  CHECK(message_of({{"seed", -4}}).find("seed") != std::string::npos);
  CHECK_THROWS_AS(parse_run_config(nlohmann::ordered_json::array()),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"purify", 7}}), std::invalid_argument);
}

TEST_CASE("run config echo reparses to the same configuration") {
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(R"({
    "schedule": {"T": 9},
    "purify": {"tau": 0.015, "K": 50},
    "attack": {"family": "denoiser"},
    "seed": 7
  })");
  const RunConfig cfg = parse_run_config(j);
  const nlohmann::ordered_json echo = run_config_echo(cfg);
  // Echo is complete: every group present even though the input was sparse.
  CHECK(echo.contains("schedule"));
  CHECK(echo.contains("purify"));
  CHECK(echo.contains("attack"));
  CHECK(echo.contains("train"));
  CHECK(echo.contains("paths"));
  const RunConfig again = parse_run_config(echo);
  CHECK(run_config_echo(again) == echo);
  CHECK(again.schedule_T == 9);
  CHECK(again.purify.tau == 0.015f);
  CHECK(again.purify.max_epochs == 50);
  CHECK(again.attack.family == AttackFamily::Denoiser);
  CHECK(again.seed == 7);
}

TEST_CASE("run config loads from disk and reports unusable files") {
  const fs::path dir = fresh_dir("udap_runcfg");
  spit(dir / "run.json", R"({"seed": 3, "purify": {"K": 5}})");
  const RunConfig cfg = load_run_config((dir / "run.json").string());
  CHECK(cfg.seed == 3);
  CHECK(cfg.purify.max_epochs == 5);

  CHECK_THROWS_AS(load_run_config((dir / "absent.json").string()),
                  StorageError);
  spit(dir / "broken.json", "{\"seed\": ");
  CHECK_THROWS_AS(load_run_config((dir / "broken.json").string()),
                  std::invalid_argument);
}
