#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "morphlab/autodiff.hpp"
#include "morphlab/features.hpp"
#include "morphlab/generator.hpp"
#include "morphlab/tensor.hpp"

namespace morphlab {

// ---------------------------------------------------------------------------
// loss configuration

// alpha1..alpha4 weight the wing / biometric / perceptual / mse terms.
struct LossWeights {
    double alpha1 = 0.02;
    double alpha2 = 1.0;
    double alpha3 = 1.0;
    double alpha4 = 1.0;
    double wing_beta = 10.0;
    double wing_epsilon = 2.0;
    std::array<double, 4> lambda{1.0, 1.0, 1.0, 1.0};

    void validate() const; // throws ConfigError
};

// Which space gradient descent runs in: the raw latent (mapping included in
// the graph) or the post-mapping intermediate latent.
enum class LatentSpace { input, intermediate };

struct OptimizationConfig {
    double lr = 0.01;
    std::size_t steps = 1500;
    std::size_t init_samples = 10000;
    double init_lo = -1.0;
    double init_hi = 1.0;
    std::uint64_t seed = 1;
    bool noise_stage = false;
    std::size_t noise_steps = 0;
    LatentSpace latent_space = LatentSpace::input;

    void validate() const; // throws ConfigError
};

// Fixed, seeded feature-extractor parameters shared by every loss evaluation
// (perceptual pyramid + landmark head over RGB input).
struct FeatureBundle {
    PerceptualConfig perceptual_cfg;
    ParamStore perceptual;
    LandmarkHeadConfig landmark_cfg;
    ParamStore landmarks;

    static FeatureBundle make(std::uint64_t seed, std::size_t landmark_count = 68);
};

// ---------------------------------------------------------------------------
// loss terms (plain + graph forms)

// Mean over all 2k coordinate residuals x of
//   beta * ln(1 + |x|/epsilon)      for |x| < beta
//   |x| - C                         otherwise, C = beta - beta*ln(1+beta/epsilon).
double wing_loss(const Tensor& pred, const Tensor& target, double beta, double epsilon);
ad::Var wing_loss_graph(ad::Tape& t, ad::Var pred, const Tensor& target, double beta,
                        double epsilon);

// Cosine distance between soft-HOG descriptors; in [0, 1].
double biometric_loss(const Tensor& generated, const Tensor& target);
ad::Var biometric_loss_graph(ad::Tape& t, ad::Var generated, const Tensor& target);

// sum_j (lambda_j / N_j) * |F_j(generated) - F_j(target)|^2 over the pyramid.
double perceptual_loss(const Tensor& generated, const Tensor& target,
                       const std::array<double, 4>& lambda, const FeatureBundle& features);
ad::Var perceptual_loss_graph(ad::Tape& t, ad::Var generated, const Tensor& target,
                              const std::array<double, 4>& lambda,
                              const FeatureBundle& features);

// (1/N) * |generated - target|^2.
double mse_loss(const Tensor& generated, const Tensor& target);
ad::Var mse_loss_graph(ad::Tape& t, ad::Var generated, const Tensor& target);

struct LossBreakdown {
    double total = 0.0;
    double wing = 0.0;
    double biometric = 0.0;
    double perceptual = 0.0;
    double mse = 0.0;
};

LossBreakdown total_loss(const Tensor& generated, const Tensor& target, const LossWeights& w,
                         const FeatureBundle& features);
// Graph form; the forward component values land in `breakdown` if given.
ad::Var total_loss_graph(ad::Tape& t, ad::Var generated, const Tensor& target,
                         const LossWeights& w, const FeatureBundle& features,
                         LossBreakdown* breakdown = nullptr);

// ---------------------------------------------------------------------------
// latent inversion

// Element-wise mean of init_samples draws from Uniform[init_lo, init_hi]
// over the latent grid.
LatentCode init_latent(const OptimizationConfig& ocfg, const GeneratorConfig& gcfg);

struct TraceRow {
    double total = 0.0;
    double wing = 0.0;
    double biometric = 0.0;
    double perceptual = 0.0;
    double mse = 0.0;
};

struct EmbeddingResult {
    LatentCode best;       // latent with the lowest traced total loss
    double best_loss = 0.0;
    std::vector<TraceRow> trace; // one row per step, loss before that step's update
    std::optional<NoiseBank> refined_noise;
};

// Adam on the latent code against total_loss(G(Z), X); the noise bank stays
// fixed. A non-finite loss aborts with NumericError carrying the step index;
// when `last_finite` is given it receives the most recent latent whose loss
// evaluated finite. With ocfg.noise_stage set, a noise refinement pass runs
// afterwards and lands in refined_noise.
EmbeddingResult embed_image(const Tensor& target, const GeneratorConfig& gcfg,
                            const ParamStore& gparams, const NoiseBank& noise,
                            const OptimizationConfig& ocfg, const LossWeights& weights,
                            const FeatureBundle& features, LatentCode* last_finite = nullptr);

// Adam on the noise maps only, latent fixed; returns the best-so-far bank
// (the input bank when steps = 0 or when no step improves on it).
NoiseBank optimize_noise(const Tensor& target, const LatentCode& best,
                         const NoiseBank& noise, std::size_t steps,
                         const GeneratorConfig& gcfg, const ParamStore& gparams,
                         const OptimizationConfig& ocfg, const LossWeights& weights,
                         const FeatureBundle& features);

} // namespace morphlab
