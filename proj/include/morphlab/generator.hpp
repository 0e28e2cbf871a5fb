#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "morphlab/autodiff.hpp"
#include "morphlab/tensor.hpp"

namespace morphlab {

// ---------------------------------------------------------------------------
// configuration

enum class AttentionMode { simplex, duplex, none };

const char* attention_mode_name(AttentionMode mode);
AttentionMode parse_attention_mode(const std::string& name);

// Synthesis runs one block per octave from base_resolution up to
// target_resolution; block b operates at base*2^b. channels and attention
// carry one entry per block; the final block never uses attention (it trades
// it for the RGB head).
struct GeneratorConfig {
    std::size_t k_local = 16;
    std::size_t d = 32;
    std::size_t base_resolution = 4;
    std::size_t target_resolution = 32;
    std::vector<std::size_t> channels{64, 64, 32, 16};
    std::vector<AttentionMode> attention{AttentionMode::duplex, AttentionMode::duplex,
                                         AttentionMode::duplex, AttentionMode::none};
    std::size_t mapping_depth = 2;
    std::size_t attention_heads = 1;
    // Initialization gain on the attention query/key weights. 1 starts the
    // softmax sharp; values below 1 start it closer to uniform, which makes
    // the latent-to-image map easier to invert with first-order optimization.
    double attention_logit_gain = 1.0;
    std::uint64_t seed = 1;

    std::size_t blocks() const;
    std::size_t block_resolution(std::size_t b) const;
    void validate() const; // throws ConfigError

    // Small 16x16 profile used by the fast test suites.
    static GeneratorConfig tiny(std::uint64_t seed = 1);
};

// (k_local + 1) x d; rows 0..k_local-1 are local-style components, the last
// row is the global style.
struct LatentCode {
    Tensor components;

    std::size_t k_local() const { return components.extent(0) - 1; }
    std::size_t d() const { return components.extent(1); }

    static LatentCode zeros(const GeneratorConfig& cfg);
    static LatentCode sample(const GeneratorConfig& cfg, Rng& rng);
    void validate(const GeneratorConfig& cfg) const; // shape + finiteness
};

// One (r_b, r_b) Gaussian map per synthesis block, regenerable from a seed.
struct NoiseBank {
    std::vector<Tensor> maps;

    static NoiseBank from_seed(const GeneratorConfig& cfg, std::uint64_t seed);
    static NoiseBank zeros(const GeneratorConfig& cfg);
    void validate(const GeneratorConfig& cfg) const;
};

// ---------------------------------------------------------------------------
// parameters

ParamStore init_generator_params(const GeneratorConfig& cfg);
ParamStore init_discriminator_params(const GeneratorConfig& cfg);

// Attention parameter bundle under `prefix` for an m-position grid with c
// channels. Duplex mode adds the latent-refinement projections.
ParamStore init_attention_params(std::size_t m, std::size_t c, std::size_t d,
                                 std::size_t heads, AttentionMode mode, Rng& rng,
                                 const std::string& prefix, double logit_gain = 1.0);

// Tape-lifted parameters: inputs when trainable (gradients flow), constants
// otherwise.
using VarMap = std::map<std::string, ad::Var>;
VarMap lift_params(ad::Tape& t, const ParamStore& params, bool trainable);

// ---------------------------------------------------------------------------
// attention bookkeeping

// Thread-local record of attention-matrix allocations, for the cost model
// checks: bytes counts only softmax matrices, which must scale as m*(k+1).
struct AttentionStats {
    std::size_t calls = 0;
    std::size_t matrix_bytes = 0;
    std::size_t last_m = 0;
    std::size_t last_bytes = 0;
};

AttentionStats& attention_stats();
void reset_attention_stats();

// ---------------------------------------------------------------------------
// forward graphs (shared by evaluation and training)

ad::Var mapping_graph(ad::Tape& t, ad::Var z, const VarMap& p, const GeneratorConfig& cfg);

struct AttentionGraphResult {
    ad::Var x; // (m, c)
    ad::Var z; // (k_local+1, d); refined in duplex mode, passed through otherwise
};

// X: (m, c) grid features; Z': (k_local+1, d). Every call checks the
// attention matrices structurally (shape m x (k+1), rows summing to 1) and
// records their allocation in attention_stats().
AttentionGraphResult bipartite_attention_graph(ad::Tape& t, ad::Var x, ad::Var z,
                                               AttentionMode mode, std::size_t heads,
                                               const VarMap& p, const std::string& prefix);

ad::Var synthesis_graph(ad::Tape& t, ad::Var z_prime, const std::vector<ad::Var>& noise,
                        const VarMap& p, const GeneratorConfig& cfg);

ad::Var generator_graph(ad::Tape& t, ad::Var z, const std::vector<ad::Var>& noise,
                        const VarMap& p, const GeneratorConfig& cfg);

ad::Var discriminator_graph(ad::Tape& t, ad::Var image, const VarMap& p,
                            const GeneratorConfig& cfg);

// ---------------------------------------------------------------------------
// plain forward evaluation

Tensor mapping_forward(const LatentCode& z, const ParamStore& params,
                       const GeneratorConfig& cfg);

// Returns (updated X, updated Z'); Z' comes back unchanged in simplex mode.
std::pair<Tensor, Tensor> bipartite_attention(const Tensor& x, const Tensor& z,
                                              AttentionMode mode, std::size_t heads,
                                              const ParamStore& params,
                                              const std::string& prefix);

Tensor synthesis_forward(const Tensor& z_prime, const NoiseBank& noise,
                         const ParamStore& params, const GeneratorConfig& cfg);

Tensor generator_forward(const LatentCode& z, const NoiseBank& noise,
                         const ParamStore& params, const GeneratorConfig& cfg);

double discriminator_forward(const Tensor& image, const ParamStore& params,
                             const GeneratorConfig& cfg);

// ---------------------------------------------------------------------------
// smoke-scale adversarial training

// Bounded procedural images (soft blobs over a low-frequency background),
// deterministic in the seed. Values lie strictly inside [-1, 1].
std::vector<Tensor> procedural_dataset(std::size_t count, std::size_t resolution,
                                       std::uint64_t seed);

struct SmokeTrainResult {
    std::vector<double> g_loss; // one entry per step
    std::vector<double> d_loss;
    ParamStore generator;
    ParamStore discriminator;
    double mean_real_score = 0.0;
    double mean_fake_score = 0.0;
};

// Alternating non-saturating GAN updates (D then G each step) with Adam.
// steps = 0 returns freshly initialized parameters and an empty trace.
// A non-finite loss aborts with NumericError carrying the step index.
SmokeTrainResult gan_smoke_train(const GeneratorConfig& cfg,
                                 const std::vector<Tensor>& dataset, std::size_t steps);

} // namespace morphlab
