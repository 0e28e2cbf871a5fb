#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "morphlab/biometrics.hpp"
#include "morphlab/embedding.hpp"
#include "morphlab/generator.hpp"
#include "morphlab/morphops.hpp"
#include "morphlab/tensor.hpp"

namespace morphlab {

// ---------------------------------------------------------------------------
// checkpoint archive
//
// Layout: magic "MGFCKPT1", u64 entry count, then the manifest (per entry:
// u32 name length, name bytes, u8 dtype code 0=f32/1=f64, u32 rank, rank u64
// extents), then the payloads in manifest order as little-endian IEEE-754.
// The whole manifest is validated -- magic, dtype codes, extent overflow,
// duplicate names, payload bounds -- before any payload byte is read.

void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// latent file: u32 k_local, u32 d, then (k_local+1)*d little-endian binary64

void save_latent(const LatentCode& z, const std::string& path);
LatentCode load_latent(const std::string& path);

// ---------------------------------------------------------------------------
// images: binary PPM (P6), maxval 255. Pixels map linearly [0,255] -> [-1,1]
// on read; writes invert the map, rounding half away from zero and clamping.

Tensor read_image(const std::string& path);
void write_image(const Tensor& image, const std::string& path);

// ---------------------------------------------------------------------------
// CSV tables. Loaders skip blank lines and tolerate one leading header line
// matching the documented column names; writers always emit the header.
// Doubles are written with enough digits to round-trip exactly.

// columns: step,total,wing,biometric,perceptual,mse (step is 1-based)
void save_trace(const std::vector<TraceRow>& trace, const std::string& path);

// columns: id,score
std::vector<double> load_scores(const std::string& path);

// columns: morph_id,sim_subject1,sim_subject2
std::vector<MorphTrial> load_morph_trials(const std::string& path);

// columns: id,sim_b2,sim_b1
std::vector<DemorphTrial> load_demorph_trials(const std::string& path);

// ---------------------------------------------------------------------------
// run configuration: plain-text `key = value` lines, `#` comments, namespaced
// keys (generator.*, loss.*, optim.*, morph.*, features.*, paths.*, seed).
// Unknown and duplicate keys are rejected with the line number.

struct RunConfig {
    GeneratorConfig generator;
    LossWeights loss;
    OptimizationConfig optim;
    MorphSpec morph;
    std::uint64_t seed = 1;            // run seed: latent sampling + inversion init
    std::uint64_t features_seed = 1;   // feature-extractor parameter seed
    std::size_t landmark_count = 68;
    std::string checkpoint_path;       // empty = fresh generator parameters

    void validate() const; // throws ConfigError
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

// ---------------------------------------------------------------------------
// dataset manifest: CSV lines `subject_id,role,image_path[,pair_id]` with
// role in {bonafide, live_capture, morph}. Loading checks that every image
// path exists and that each distinct pair id is carried by exactly two
// bonafide records (morph rows may reference the same pair).

enum class SubjectRole { bonafide, live_capture, morph };

const char* subject_role_name(SubjectRole role);
SubjectRole parse_subject_role(const std::string& name);

struct ManifestRecord {
    std::string subject_id;
    SubjectRole role = SubjectRole::bonafide;
    std::string image_path;
    std::string pair_id; // empty = none
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
};

DatasetManifest load_manifest(const std::string& path);

} // namespace morphlab
