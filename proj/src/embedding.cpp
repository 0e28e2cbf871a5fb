#include "morphlab/embedding.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "morphlab/errors.hpp"
#include "morphlab/optim.hpp"

namespace morphlab {

// ---------------------------------------------------------------------------
// configuration

void LossWeights::validate() const {
    const double alphas[4] = {alpha1, alpha2, alpha3, alpha4};
    double max_alpha = 0.0;
    for (double a : alphas) {
        if (a < 0.0) throw ConfigError("loss weights: alphas must be nonnegative");
        max_alpha = std::max(max_alpha, a);
    }
    if (max_alpha == 0.0) throw ConfigError("loss weights: at least one alpha must be positive");
    if (!(wing_beta > 0.0) || !(wing_epsilon > 0.0))
        throw ConfigError("loss weights: wing beta and epsilon must be positive");
    for (double l : lambda)
        if (l < 0.0) throw ConfigError("loss weights: perceptual factors must be nonnegative");
}

void OptimizationConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("optimization: learning rate must be positive");
    if (steps == 0) throw ConfigError("optimization: steps must be >= 1");
    if (init_samples == 0) throw ConfigError("optimization: init sample count must be >= 1");
    if (!(init_lo < init_hi))
        throw ConfigError("optimization: init bounds must satisfy lo < hi");
}

FeatureBundle FeatureBundle::make(std::uint64_t seed, std::size_t landmark_count) {
    FeatureBundle f;
    f.perceptual = perceptual_params(f.perceptual_cfg, 3, seed);
    f.landmark_cfg.k = landmark_count;
    f.landmarks = landmark_params(f.landmark_cfg, 3, seed);
    return f;
}

// ---------------------------------------------------------------------------
// loss terms

double wing_loss(const Tensor& pred, const Tensor& target, double beta, double epsilon) {
    if (!(beta > 0.0) || !(epsilon > 0.0))
        throw ValueError("wing_loss: beta and epsilon must be positive");
    if (pred.shape() != target.shape())
        throw ShapeError("wing_loss: landmark shapes " + pred.shape_str() + " and " +
                         target.shape_str() + " differ");
    const double c = beta - beta * std::log1p(beta / epsilon);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double a = std::fabs(pred[i] - target[i]);
        sum += a < beta ? beta * std::log1p(a / epsilon) : a - c;
    }
    return sum / static_cast<double>(pred.numel());
}

ad::Var wing_loss_graph(ad::Tape& t, ad::Var pred, const Tensor& target, double beta,
                        double epsilon) {
    if (pred.value().shape() != target.shape())
        throw ShapeError("wing_loss: landmark shapes " + pred.value().shape_str() + " and " +
                         target.shape_str() + " differ");
    return ad::mean_all(ad::wing_ew(ad::sub(pred, t.constant(target)), beta, epsilon));
}

double biometric_loss(const Tensor& generated, const Tensor& target) {
    return cosine_biometric_distance(hog_features(generated).values,
                                     hog_features(target).values);
}

ad::Var biometric_loss_graph(ad::Tape& t, ad::Var generated, const Tensor& target) {
    return cosine_distance_graph(t, hog_graph(t, generated),
                                 t.constant(hog_features(target).values));
}

ad::Var perceptual_loss_graph(ad::Tape& t, ad::Var generated, const Tensor& target,
                              const std::array<double, 4>& lambda,
                              const FeatureBundle& features) {
    bool any = false;
    for (double l : lambda) any = any || l != 0.0;
    if (!any) return t.constant(Tensor::scalar(0.0));

    const auto gen_stages =
        perceptual_graph(t, generated, features.perceptual, features.perceptual_cfg);
    const FeaturePyramid ref =
        perceptual_pyramid(target, features.perceptual, features.perceptual_cfg);

    ad::Var loss = t.constant(Tensor::scalar(0.0));
    for (std::size_t j = 0; j < 4; ++j) {
        if (lambda[j] == 0.0) continue;
        ad::Var diff = ad::sub(gen_stages[j], t.constant(ref.stages[j]));
        const double scale = lambda[j] / static_cast<double>(ref.stages[j].numel());
        loss = ad::add(loss, ad::mul_scalar(ad::sum_all(ad::mul(diff, diff)), scale));
    }
    return loss;
}

double perceptual_loss(const Tensor& generated, const Tensor& target,
                       const std::array<double, 4>& lambda, const FeatureBundle& features) {
    ad::Tape t;
    return perceptual_loss_graph(t, t.constant(generated), target, lambda, features)
        .value()[0];
}

double mse_loss(const Tensor& generated, const Tensor& target) {
    if (generated.shape() != target.shape())
        throw ShapeError("mse_loss: shapes " + generated.shape_str() + " and " +
                         target.shape_str() + " differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < generated.numel(); ++i) {
        const double d = generated[i] - target[i];
        sum += d * d;
    }
    return sum / static_cast<double>(generated.numel());
}

ad::Var mse_loss_graph(ad::Tape& t, ad::Var generated, const Tensor& target) {
    if (generated.value().shape() != target.shape())
        throw ShapeError("mse_loss: shapes " + generated.value().shape_str() + " and " +
                         target.shape_str() + " differ");
    ad::Var diff = ad::sub(generated, t.constant(target));
    return ad::mean_all(ad::mul(diff, diff));
}

ad::Var total_loss_graph(ad::Tape& t, ad::Var generated, const Tensor& target,
                         const LossWeights& w, const FeatureBundle& features,
                         LossBreakdown* breakdown) {
    w.validate();

    const Tensor target_lmk = soft_landmarks(target, features.landmarks, features.landmark_cfg);
    ad::Var gen_lmk = landmark_graph(t, generated, features.landmarks, features.landmark_cfg);
    ad::Var wing = wing_loss_graph(t, gen_lmk, target_lmk, w.wing_beta, w.wing_epsilon);
    ad::Var biom = biometric_loss_graph(t, generated, target);
    ad::Var percept = perceptual_loss_graph(t, generated, target, w.lambda, features);
    ad::Var mse = mse_loss_graph(t, generated, target);

    ad::Var total = ad::add(ad::add(ad::mul_scalar(wing, w.alpha1),
                                    ad::mul_scalar(biom, w.alpha2)),
                            ad::add(ad::mul_scalar(percept, w.alpha3),
                                    ad::mul_scalar(mse, w.alpha4)));
    if (breakdown != nullptr) {
        breakdown->wing = wing.value()[0];
        breakdown->biometric = biom.value()[0];
        breakdown->perceptual = percept.value()[0];
        breakdown->mse = mse.value()[0];
        breakdown->total = total.value()[0];
    }
    return total;
}

LossBreakdown total_loss(const Tensor& generated, const Tensor& target, const LossWeights& w,
                         const FeatureBundle& features) {
    ad::Tape t;
    LossBreakdown breakdown;
    total_loss_graph(t, t.constant(generated), target, w, features, &breakdown);
    return breakdown;
}

// ---------------------------------------------------------------------------
// latent inversion

LatentCode init_latent(const OptimizationConfig& ocfg, const GeneratorConfig& gcfg) {
    ocfg.validate();
    gcfg.validate();
    Rng rng = Rng(ocfg.seed).fork(0x17);
    Tensor mean({gcfg.k_local + 1, gcfg.d}, 0.0);
    for (std::size_t n = 0; n < ocfg.init_samples; ++n) {
        const Tensor sample =
            rng.uniform_tensor({gcfg.k_local + 1, gcfg.d}, ocfg.init_lo, ocfg.init_hi);
        for (std::size_t i = 0; i < mean.numel(); ++i) mean[i] += sample[i];
    }
    for (std::size_t i = 0; i < mean.numel(); ++i)
        mean[i] /= static_cast<double>(ocfg.init_samples);
    return {std::move(mean)};
}

namespace {

ad::Var inversion_image_graph(ad::Tape& t, ad::Var z, const std::vector<ad::Var>& noise,
                              const VarMap& params, const GeneratorConfig& gcfg,
                              LatentSpace space) {
    return space == LatentSpace::input ? generator_graph(t, z, noise, params, gcfg)
                                       : synthesis_graph(t, z, noise, params, gcfg);
}

void check_target(const Tensor& target, const GeneratorConfig& gcfg) {
    const std::size_t r = gcfg.target_resolution;
    if (target.rank() != 3 || target.extent(0) != 3 || target.extent(1) != r ||
        target.extent(2) != r)
        throw ShapeError("embed: target image shape " + target.shape_str() +
                         " does not match the generator output (3, " + std::to_string(r) +
                         ", " + std::to_string(r) + ")");
    if (!target.all_finite()) throw ValueError("embed: target image has non-finite values");
}

TraceRow to_trace_row(const LossBreakdown& b) {
    return {b.total, b.wing, b.biometric, b.perceptual, b.mse};
}

} // namespace

EmbeddingResult embed_image(const Tensor& target, const GeneratorConfig& gcfg,
                            const ParamStore& gparams, const NoiseBank& noise,
                            const OptimizationConfig& ocfg, const LossWeights& weights,
                            const FeatureBundle& features, LatentCode* last_finite) {
    gcfg.validate();
    ocfg.validate();
    weights.validate();
    noise.validate(gcfg);
    check_target(target, gcfg);

    EmbeddingResult result;
    Tensor z = init_latent(ocfg, gcfg).components;
    AdamState opt;
    opt.lr = ocfg.lr;

    result.best = LatentCode{z};
    result.best_loss = 0.0;
    bool have_best = false;

    for (std::size_t step = 0; step < ocfg.steps; ++step) {
        try {
            ad::Tape t;
            ad::Var zvar = t.input(z);
            std::vector<ad::Var> nv;
            nv.reserve(noise.maps.size());
            for (const Tensor& map : noise.maps) nv.push_back(t.constant(map));
            ad::Var img = inversion_image_graph(t, zvar, nv, lift_params(t, gparams, false),
                                                gcfg, ocfg.latent_space);
            LossBreakdown breakdown;
            ad::Var loss = total_loss_graph(t, img, target, weights, features, &breakdown);
            result.trace.push_back(to_trace_row(breakdown));

            if (!have_best || breakdown.total < result.best_loss) {
                result.best = LatentCode{z};
                result.best_loss = breakdown.total;
                have_best = true;
            }
            if (last_finite != nullptr) *last_finite = LatentCode{z};

            const ad::Gradients grads = t.backward(loss);
            adam_step(z, grads.wrt(zvar), opt, "z");
        } catch (const ValueError& e) {
            throw NumericError(std::string("embed: ") + e.what(), step);
        }
    }

    if (ocfg.noise_stage)
        result.refined_noise = optimize_noise(target, result.best, noise, ocfg.noise_steps,
                                              gcfg, gparams, ocfg, weights, features);
    return result;
}

NoiseBank optimize_noise(const Tensor& target, const LatentCode& best, const NoiseBank& noise,
                         std::size_t steps, const GeneratorConfig& gcfg,
                         const ParamStore& gparams, const OptimizationConfig& ocfg,
                         const LossWeights& weights, const FeatureBundle& features) {
    gcfg.validate();
    ocfg.validate();
    weights.validate();
    noise.validate(gcfg);
    check_target(target, gcfg);
    if (steps == 0) return noise;

    ParamStore maps;
    for (std::size_t b = 0; b < noise.maps.size(); ++b)
        maps.emplace("noise" + std::to_string(b), noise.maps[b]);
    AdamState opt = AdamState::init(maps, ocfg.lr);

    auto bank_of = [&]() {
        NoiseBank bank;
        for (std::size_t b = 0; b < noise.maps.size(); ++b)
            bank.maps.push_back(maps.at("noise" + std::to_string(b)));
        return bank;
    };

    NoiseBank best_bank = noise;
    double best_loss = 0.0;
    bool have_best = false;

    for (std::size_t step = 0; step < steps; ++step) {
        try {
            ad::Tape t;
            VarMap nvars;
            std::vector<ad::Var> nv;
            for (std::size_t b = 0; b < noise.maps.size(); ++b) {
                const std::string name = "noise" + std::to_string(b);
                nvars.emplace(name, t.input(maps.at(name)));
                nv.push_back(nvars.at(name));
            }
            ad::Var img =
                inversion_image_graph(t, t.constant(best.components), nv,
                                      lift_params(t, gparams, false), gcfg, ocfg.latent_space);
            LossBreakdown breakdown;
            ad::Var loss = total_loss_graph(t, img, target, weights, features, &breakdown);

            if (!have_best || breakdown.total < best_loss) {
                best_bank = bank_of();
                best_loss = breakdown.total;
                have_best = true;
            }

            const ad::Gradients grads = t.backward(loss);
            ParamStore named;
            for (const auto& [name, var] : nvars)
                if (grads.contains(var)) named.emplace(name, grads.wrt(var));
            adam_step(maps, named, opt);
        } catch (const ValueError& e) {
            throw NumericError(std::string("optimize_noise: ") + e.what(), step);
        }
    }
    return best_bank;
}

} // namespace morphlab
