#pragma once

#include <cstdint>

#include "morphlab/embedding.hpp"
#include "morphlab/generator.hpp"

namespace morphlab {

// Settings for latent-space morphing. `lambda` blends the first identity into
// the second; the noise bank used when rendering the blend is freshly seeded
// unless `inherit_refined_noise` asks to reuse the first embedding's refined
// bank (when one exists).
struct MorphSpec {
    double lambda = 0.5;
    std::uint64_t noise_seed = 1;
    bool inherit_refined_noise = false;

    void validate() const;
};

// Z = lambda * Z1 + (1 - lambda) * Z2, element-wise across all components.
LatentCode morph_latents(const LatentCode& z1, const LatentCode& z2, double lambda);

// Recovers the second identity from a blend and the first: (Z - lambda*Z1) / (1 - lambda).
LatentCode demorph_latents(const LatentCode& z, const LatentCode& z1, double lambda);

struct MorphResult {
    Tensor image;            // rendered blend, values in [-1, 1]
    LatentCode morphed;      // interpolated latent the image was rendered from
    NoiseBank noise;         // bank used for the render
    EmbeddingResult embed1;  // inversion of the first input
    EmbeddingResult embed2;  // inversion of the second input
};

// Inverts both images, interpolates their latents, and renders the blend.
MorphResult morph_images(const Tensor& x1, const Tensor& x2, const MorphSpec& spec,
                         const GeneratorConfig& gcfg, const ParamStore& gparams,
                         const OptimizationConfig& ocfg, const LossWeights& weights,
                         const FeatureBundle& features);

struct DemorphResult {
    Tensor image;                    // rendered estimate of the hidden identity
    LatentCode restored;             // latent the image was rendered from
    NoiseBank noise;                 // bank used for the render
    EmbeddingResult embed_morph;     // inversion of the blended image
    EmbeddingResult embed_reference; // inversion of the live reference
};

// Inverts the blend and the live reference, peels the reference identity out
// of the blend in latent space, and renders the remainder.
DemorphResult demorph_image(const Tensor& morphed, const Tensor& reference_live,
                            const MorphSpec& spec, const GeneratorConfig& gcfg,
                            const ParamStore& gparams, const OptimizationConfig& ocfg,
                            const LossWeights& weights, const FeatureBundle& features);

} // namespace morphlab
