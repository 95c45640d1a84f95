#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "udap/attacks.hpp"
#include "udap/bundle.hpp"
#include "udap/evalreport.hpp"
#include "udap/imageset.hpp"
#include "udap/nets.hpp"
#include "udap/purify.hpp"

namespace udap {

// Distinct failure kinds so callers (and tests) can tell a wrong file from a
// damaged one.
struct StorageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagicError : StorageError {
  using StorageError::StorageError;
};
struct BadVersionError : StorageError {
  using StorageError::StorageError;
};
struct TruncatedError : StorageError {
  using StorageError::StorageError;
};
struct CrcMismatchError : StorageError {
  using StorageError::StorageError;
};
struct MalformedError : StorageError {
  using StorageError::StorageError;
};

inline constexpr uint32_t kCheckpointVersion = 1;

/// Reflected CRC-32 (polynomial 0xEDB88320, init/final-xor 0xFFFFFFFF);
/// crc32("123456789") == 0xCBF43926.
uint32_t crc32(const void* data, size_t n);

/// Checkpoint layout (all integers little-endian):
///   8 bytes  magic "UDAPCKPT"
///   u32      version
///   entries  u32 name length, name bytes, u32 ndim, u64[ndim] dims,
///            f32[product(dims)] payload
///   u32      CRC-32 of every preceding byte
/// Entries run until exactly four bytes (the CRC) remain. Names must be
/// unique and dims positive. Written via temp file + rename.
void save_checkpoint(const NamedParams& entries, const std::string& path);
NamedParams load_checkpoint(const std::string& path);

/// Bundle persistence: tensors (schedule betas, codec and denoiser params)
/// go into <path>, structure and provenance into <path>.meta.json.
/// load(save(b)) reproduces every tensor and flag bit-identically.
void save_bundle(const ModelBundle& bundle, const std::string& path);
ModelBundle load_bundle(const std::string& path);

/// The sidecar's structural description of a bundle, also embedded in run
/// summaries so every artifact names the model it came from.
nlohmann::ordered_json bundle_meta_json(const ModelBundle& bundle);

/// 8-bit binary PGM (P5, [1,H,W]) or PPM (P6, [3,H,W]), maxval 255. Reads
/// map pixels linearly to [0,1]; writes round to nearest, so
/// write(read(f)) == f byte-for-byte and the roundtrip error is ≤ 1/510.
Tensor read_image(const std::string& path);
void write_image(const Tensor& image, const std::string& path);

/// A directory of numbered PGM/PPM files plus manifest.json carrying the
/// source string and per-image labels. Saving 8-bit-quantizes the pixels.
void save_imageset(const ImageSet& set, const std::string& dir);
ImageSet load_imageset(const std::string& dir);

/// One experiment configuration: schedule + purify + attack knobs, the run
/// seed, stage paths, and corpus/training sizes. Parsed strictly — unknown
/// or mistyped keys are rejected with their dotted field path.
struct RunConfig {
  int schedule_T = 20;
  float beta_start = 1e-4f;
  float beta_end = 0.02f;
  PurifyConfig purify;
  AttackSpec attack;
  uint64_t seed = 0;
  std::string data_path;
  std::string bundle_path;
  std::string out_path;
  std::string adv_path;       // attacked set for recon-gap / eval
  std::string purified_path;  // purified set for eval
  int corpus_n = 120;
  CorpusKind corpus_kind = CorpusKind::Mixed;
  int ae_epochs = 40;
  int denoiser_steps = 2500;

  NoiseSchedule make_schedule() const {
    return make_linear_schedule(schedule_T, beta_start, beta_end);
  }
};

/// The run seed feeds attack.seed and purify.seed; attack.t_hat mirrors
/// purify.t_hat (one inversion depth per run).
RunConfig parse_run_config(const nlohmann::ordered_json& j);
RunConfig load_run_config(const std::string& path);

/// Fully resolved config echo (defaults materialized) for summary.json.
nlohmann::ordered_json run_config_echo(const RunConfig& cfg);

}  // namespace udap
