#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "morphlab/io.hpp"
#include "morphlab/selftest.hpp"

using namespace morphlab;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps;
    std::optional<double> lambda;
    std::string out;
    std::vector<std::string> inputs;
    std::string file1, file2;
    double tau = 0.0;
};

// Flag beats MORPHLAB_SEED (wired through the CLI) beats the config file.
RunConfig resolve_config(const Options& o) {
    RunConfig rc = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
    if (o.seed) rc.seed = *o.seed;
    rc.optim.seed = rc.seed;
    if (o.steps) rc.optim.steps = *o.steps;
    if (o.lambda) rc.morph.lambda = *o.lambda;
    rc.validate();
    return rc;
}

ParamStore generator_params(const RunConfig& rc) {
    return rc.checkpoint_path.empty() ? init_generator_params(rc.generator)
                                      : load_checkpoint(rc.checkpoint_path);
}

enum class PathKind { image, latent };

PathKind path_kind(const std::string& path) {
    if (path.ends_with(".ppm")) return PathKind::image;
    if (path.ends_with(".lat")) return PathKind::latent;
    throw ConfigError("cannot infer the file type of '" + path +
                      "': use a .ppm or .lat extension");
}

void require_kind(const std::string& path, PathKind kind, const char* what) {
    if (path_kind(path) != kind)
        throw ConfigError(std::string(what) + " must be a " +
                          (kind == PathKind::image ? ".ppm image" : ".lat latent file") +
                          ", got '" + path + "'");
}

void check_image_dims(const Tensor& img, const GeneratorConfig& cfg, const std::string& path) {
    if (img.extent(1) != cfg.target_resolution || img.extent(2) != cfg.target_resolution)
        throw ConfigError("image '" + path + "' is " + std::to_string(img.extent(2)) + "x" +
                          std::to_string(img.extent(1)) + " but the generator produces " +
                          std::to_string(cfg.target_resolution) + "x" +
                          std::to_string(cfg.target_resolution));
}

void check_latent_dims(const LatentCode& z, const GeneratorConfig& cfg, const std::string& path) {
    if (z.k_local() != cfg.k_local || z.d() != cfg.d)
        throw ConfigError("latent '" + path + "' has k_local=" + std::to_string(z.k_local()) +
                          ", d=" + std::to_string(z.d()) + " but the generator expects k_local=" +
                          std::to_string(cfg.k_local) + ", d=" + std::to_string(cfg.d));
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string num17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string pct(double rate) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * rate);
    return buf;
}

std::string pct(const RateResult& r) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.2f%% (%zu/%zu)", 100.0 * r.rate(), r.count, r.total);
    return buf;
}

// ---------------------------------------------------------------------------
// commands

int run_gen(const Options& o) {
    const RunConfig rc = resolve_config(o);
    require_kind(o.out, PathKind::image, "gen --out");
    const ParamStore params = generator_params(rc);
    LatentCode z;
    if (o.inputs.empty()) {
        Rng rng(rc.seed);
        z = LatentCode::sample(rc.generator, rng);
    } else {
        z = load_latent(o.inputs[0]);
        check_latent_dims(z, rc.generator, o.inputs[0]);
    }
    const NoiseBank bank = NoiseBank::from_seed(rc.generator, rc.seed);
    write_image(generator_forward(z, bank, params, rc.generator), o.out);
    std::cout << "wrote " << o.out << "\n";
    return 0;
}

int run_embed(const Options& o) {
    const RunConfig rc = resolve_config(o);
    require_kind(o.inputs[0], PathKind::image, "embed input");
    require_kind(o.out, PathKind::latent, "embed --out");
    const Tensor target = read_image(o.inputs[0]);
    check_image_dims(target, rc.generator, o.inputs[0]);
    const ParamStore params = generator_params(rc);
    const FeatureBundle features = FeatureBundle::make(rc.features_seed, rc.landmark_count);
    const NoiseBank bank = NoiseBank::from_seed(rc.generator, rc.seed);
    LatentCode last_finite;
    EmbeddingResult result;
    try {
        result = embed_image(target, rc.generator, params, bank, rc.optim, rc.loss, features,
                             &last_finite);
    } catch (const NumericError& e) {
        save_latent(last_finite, o.out);
        std::cerr << "note: aborted at step " << e.step() << "; last finite latent written to "
                  << o.out << "\n";
        throw;
    }
    save_latent(result.best, o.out);
    save_trace(result.trace, o.out + ".trace.csv");
    std::cout << "best_loss: " << num17(result.best_loss) << "\n";
    std::cout << "wrote " << o.out << "\n";
    std::cout << "wrote " << o.out << ".trace.csv\n";
    return 0;
}

int run_morph(const Options& o) {
    const RunConfig rc = resolve_config(o);
    const PathKind kind = path_kind(o.inputs[0]);
    if (path_kind(o.inputs[1]) != kind)
        throw ConfigError("morph inputs must both be images or both be latent files");
    if (kind == PathKind::latent) {
        require_kind(o.out, PathKind::latent, "morph --out for latent inputs");
        const LatentCode z1 = load_latent(o.inputs[0]);
        const LatentCode z2 = load_latent(o.inputs[1]);
        save_latent(morph_latents(z1, z2, rc.morph.lambda), o.out);
    } else {
        require_kind(o.out, PathKind::image, "morph --out for image inputs");
        const Tensor x1 = read_image(o.inputs[0]);
        const Tensor x2 = read_image(o.inputs[1]);
        check_image_dims(x1, rc.generator, o.inputs[0]);
        check_image_dims(x2, rc.generator, o.inputs[1]);
        const ParamStore params = generator_params(rc);
        const FeatureBundle features = FeatureBundle::make(rc.features_seed, rc.landmark_count);
        const MorphResult r =
            morph_images(x1, x2, rc.morph, rc.generator, params, rc.optim, rc.loss, features);
        write_image(r.image, o.out);
        std::cout << "embed1_loss: " << num17(r.embed1.best_loss) << "\n";
        std::cout << "embed2_loss: " << num17(r.embed2.best_loss) << "\n";
    }
    std::cout << "lambda: " << num(rc.morph.lambda) << "\n";
    std::cout << "wrote " << o.out << "\n";
    return 0;
}

int run_demorph(const Options& o) {
    const RunConfig rc = resolve_config(o);
    const PathKind kind = path_kind(o.inputs[0]);
    if (path_kind(o.inputs[1]) != kind)
        throw ConfigError("demorph inputs must both be images or both be latent files");
    if (kind == PathKind::latent) {
        require_kind(o.out, PathKind::latent, "demorph --out for latent inputs");
        const LatentCode zm = load_latent(o.inputs[0]);
        const LatentCode z1 = load_latent(o.inputs[1]);
        save_latent(demorph_latents(zm, z1, rc.morph.lambda), o.out);
    } else {
        require_kind(o.out, PathKind::image, "demorph --out for image inputs");
        const Tensor morphed = read_image(o.inputs[0]);
        const Tensor reference = read_image(o.inputs[1]);
        check_image_dims(morphed, rc.generator, o.inputs[0]);
        check_image_dims(reference, rc.generator, o.inputs[1]);
        const ParamStore params = generator_params(rc);
        const FeatureBundle features = FeatureBundle::make(rc.features_seed, rc.landmark_count);
        const DemorphResult r = demorph_image(morphed, reference, rc.morph, rc.generator, params,
                                              rc.optim, rc.loss, features);
        write_image(r.image, o.out);
        std::cout << "embed_morph_loss: " << num17(r.embed_morph.best_loss) << "\n";
        std::cout << "embed_reference_loss: " << num17(r.embed_reference.best_loss) << "\n";
    }
    std::cout << "lambda: " << num(rc.morph.lambda) << "\n";
    std::cout << "wrote " << o.out << "\n";
    return 0;
}

int run_eval_mmpmr(const Options& o) {
    const std::vector<MorphTrial> trials = load_morph_trials(o.file1);
    const RateResult r = mmpmr(trials, o.tau);
    std::cout << "trials: " << trials.size() << "\n";
    std::cout << "threshold: " << num(o.tau) << "\n";
    std::cout << "mmpmr: " << pct(r) << "\n";
    return 0;
}

int run_eval_mad(const Options& o) {
    const std::vector<double> attack = load_scores(o.file1);
    const std::vector<double> bona = load_scores(o.file2);
    const RateResult ap = apcer(attack, o.tau);
    const RateResult bp = bpcer(bona, o.tau);
    const DEerResult eer = d_eer(attack, bona);
    std::cout << "attack scores: " << attack.size() << "\n";
    std::cout << "bona fide scores: " << bona.size() << "\n";
    std::cout << "threshold: " << num(o.tau) << "\n";
    std::cout << "apcer: " << pct(ap) << "\n";
    std::cout << "bpcer: " << pct(bp) << "\n";
    std::cout << "acer: " << pct(acer(ap.rate(), bp.rate())) << "\n";
    std::cout << "accuracy: " << pct(accuracy(attack, bona, o.tau)) << "\n";
    std::cout << "d-eer: " << pct(eer.rate) << " at threshold " << num(eer.threshold) << "\n";
    return 0;
}

int run_eval_demorph(const Options& o) {
    const std::vector<DemorphTrial> trials = load_demorph_trials(o.file1);
    const RateResult r = demorph_accuracy(trials, o.tau);
    std::cout << "trials: " << trials.size() << "\n";
    std::cout << "threshold: " << num(o.tau) << "\n";
    std::cout << "demorph accuracy: " << pct(r) << "\n";
    return 0;
}

int run_smoke_train(const Options& o) {
    const RunConfig rc = resolve_config(o);
    const std::size_t steps = o.steps.value_or(50);
    const std::vector<Tensor> dataset =
        procedural_dataset(24, rc.generator.target_resolution, rc.seed);
    const SmokeTrainResult r = gan_smoke_train(rc.generator, dataset, steps);
    std::cout << "steps: " << steps << "\n";
    if (r.g_loss.empty()) {
        std::cout << "g_loss: none\nd_loss: none\n";
    } else {
        std::cout << "g_loss: " << num17(r.g_loss.front()) << " -> " << num17(r.g_loss.back())
                  << "\n";
        std::cout << "d_loss: " << num17(r.d_loss.front()) << " -> " << num17(r.d_loss.back())
                  << "\n";
    }
    std::cout << "mean_d_real: " << num17(r.mean_real_score) << "\n";
    std::cout << "mean_d_fake: " << num17(r.mean_fake_score) << "\n";
    if (!o.out.empty()) {
        save_checkpoint(r.generator, o.out);
        std::cout << "wrote " << o.out << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-space face morphing and demorphing toolkit"};
    app.require_subcommand(1);

    Options o;
    std::function<int()> action;

    const auto add_common = [&](CLI::App* sub, bool with_steps) {
        sub->add_option("--config", o.config_path, "run configuration file");
        sub->add_option("--seed", o.seed, "run seed (latent sampling + inversion init)")
            ->envname("MORPHLAB_SEED");
        if (with_steps) sub->add_option("--steps", o.steps, "optimization step count");
    };

    CLI::App* gen = app.add_subcommand("gen", "render a latent code (or a sampled one)");
    gen->add_option("latent", o.inputs, "input .lat file (sampled from the seed if omitted)")
        ->expected(0, 1);
    add_common(gen, false);
    gen->add_option("--out", o.out, "output .ppm image")->required();
    gen->callback([&] { action = [&] { return run_gen(o); }; });

    CLI::App* embed = app.add_subcommand("embed", "invert an image into a latent code");
    embed->add_option("image", o.inputs, "input .ppm image")->expected(1)->required();
    add_common(embed, true);
    embed->add_option("--out", o.out, "output .lat file (trace lands next to it)")->required();
    embed->callback([&] { action = [&] { return run_embed(o); }; });

    CLI::App* morph = app.add_subcommand("morph", "blend two images or two latent codes");
    morph->add_option("inputs", o.inputs, "two .ppm images or two .lat files")
        ->expected(2)
        ->required();
    add_common(morph, true);
    morph->add_option("--lambda", o.lambda, "blend weight on the first input (default 0.5)");
    morph->add_option("--out", o.out, "output (.ppm for images, .lat for latents)")->required();
    morph->callback([&] { action = [&] { return run_morph(o); }; });

    CLI::App* demorph =
        app.add_subcommand("demorph", "recover the hidden identity from a morph and a reference");
    demorph->add_option("inputs", o.inputs, "morph then reference (.ppm pair or .lat pair)")
        ->expected(2)
        ->required();
    add_common(demorph, true);
    demorph->add_option("--lambda", o.lambda, "blend weight used by the morph (default 0.5)");
    demorph->add_option("--out", o.out, "output (.ppm for images, .lat for latents)")->required();
    demorph->callback([&] { action = [&] { return run_demorph(o); }; });

    CLI::App* mm = app.add_subcommand("eval-mmpmr", "mated-morph match rate over a trial table");
    mm->add_option("trials", o.file1, "morph trial CSV")->required();
    mm->add_option("tau", o.tau, "match threshold")->required();
    mm->callback([&] { action = [&] { return run_eval_mmpmr(o); }; });

    CLI::App* mad = app.add_subcommand("eval-mad", "detection metrics over score tables");
    mad->add_option("attack", o.file1, "attack score CSV")->required();
    mad->add_option("bonafide", o.file2, "bona fide score CSV")->required();
    mad->add_option("tau", o.tau, "classification threshold")->required();
    mad->callback([&] { action = [&] { return run_eval_mad(o); }; });

    CLI::App* dm = app.add_subcommand("eval-demorph", "demorphing accuracy over a trial table");
    dm->add_option("trials", o.file1, "demorph trial CSV")->required();
    dm->add_option("tau", o.tau, "match threshold")->required();
    dm->callback([&] { action = [&] { return run_eval_demorph(o); }; });

    CLI::App* train = app.add_subcommand("smoke-train", "short adversarial training run");
    add_common(train, true);
    train->add_option("--out", o.out, "optional generator checkpoint to write");
    train->callback([&] { action = [&] { return run_smoke_train(o); }; });

    CLI::App* self = app.add_subcommand("selftest", "run the deterministic self-check suites");
    self->callback([&] { action = [] { return run_selftest(std::cout) == 0 ? 0 : 1; }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return action();
    } catch (const Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
}
