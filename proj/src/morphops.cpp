#include "morphlab/morphops.hpp"

#include "morphlab/errors.hpp"

namespace morphlab {

namespace {

void check_lambda(double lambda) {
    if (!(lambda > 0.0) || !(lambda < 1.0))
        throw ConfigError("morph lambda must lie strictly inside (0, 1)");
}

void check_same_shape(const LatentCode& a, const LatentCode& b, const char* what) {
    if (a.components.shape() != b.components.shape())
        throw ShapeError(std::string(what) + ": latent shapes differ");
}

NoiseBank render_bank(const MorphSpec& spec, const GeneratorConfig& gcfg,
                      const EmbeddingResult& first) {
    if (spec.inherit_refined_noise && first.refined_noise.has_value())
        return *first.refined_noise;
    return NoiseBank::from_seed(gcfg, spec.noise_seed);
}

} // namespace

void MorphSpec::validate() const { check_lambda(lambda); }

LatentCode morph_latents(const LatentCode& z1, const LatentCode& z2, double lambda) {
    check_lambda(lambda);
    check_same_shape(z1, z2, "morph_latents");
    LatentCode out{Tensor(z1.components.shape(), 0.0)};
    for (std::size_t i = 0; i < out.components.numel(); ++i)
        out.components[i] = lambda * z1.components[i] + (1.0 - lambda) * z2.components[i];
    return out;
}

LatentCode demorph_latents(const LatentCode& z, const LatentCode& z1, double lambda) {
    check_lambda(lambda);
    check_same_shape(z, z1, "demorph_latents");
    LatentCode out{Tensor(z.components.shape(), 0.0)};
    for (std::size_t i = 0; i < out.components.numel(); ++i)
        out.components[i] = (z.components[i] - lambda * z1.components[i]) / (1.0 - lambda);
    return out;
}

MorphResult morph_images(const Tensor& x1, const Tensor& x2, const MorphSpec& spec,
                         const GeneratorConfig& gcfg, const ParamStore& gparams,
                         const OptimizationConfig& ocfg, const LossWeights& weights,
                         const FeatureBundle& features) {
    spec.validate();
    const NoiseBank embed_bank = NoiseBank::from_seed(gcfg, spec.noise_seed);

    MorphResult r;
    r.embed1 = embed_image(x1, gcfg, gparams, embed_bank, ocfg, weights, features);
    r.embed2 = embed_image(x2, gcfg, gparams, embed_bank, ocfg, weights, features);
    r.morphed = morph_latents(r.embed1.best, r.embed2.best, spec.lambda);
    r.noise = render_bank(spec, gcfg, r.embed1);
    r.image = generator_forward(r.morphed, r.noise, gparams, gcfg);
    return r;
}

DemorphResult demorph_image(const Tensor& morphed, const Tensor& reference_live,
                            const MorphSpec& spec, const GeneratorConfig& gcfg,
                            const ParamStore& gparams, const OptimizationConfig& ocfg,
                            const LossWeights& weights, const FeatureBundle& features) {
    spec.validate();
    const NoiseBank embed_bank = NoiseBank::from_seed(gcfg, spec.noise_seed);

    DemorphResult r;
    r.embed_morph = embed_image(morphed, gcfg, gparams, embed_bank, ocfg, weights, features);
    r.embed_reference =
        embed_image(reference_live, gcfg, gparams, embed_bank, ocfg, weights, features);
    r.restored = demorph_latents(r.embed_morph.best, r.embed_reference.best, spec.lambda);
    r.noise = render_bank(spec, gcfg, r.embed_morph);
    r.image = generator_forward(r.restored, r.noise, gparams, gcfg);
    return r;
}

} // namespace morphlab
