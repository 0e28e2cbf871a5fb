#include "morphlab/selftest.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>
#include <vector>

#include "morphlab/gradcheck.hpp"
#include "morphlab/io.hpp"

namespace morphlab {

namespace {

void expect(bool ok, const std::string& what) {
    if (!ok) throw ContractError(what);
}

// Small profile shared by the generator-level checks.
GeneratorConfig micro_config() {
    GeneratorConfig cfg;
    cfg.k_local = 3;
    cfg.d = 4;
    cfg.target_resolution = 8;
    cfg.channels = {6, 4};
    cfg.attention = {AttentionMode::duplex, AttentionMode::none};
    cfg.mapping_depth = 1;
    cfg.seed = 1;
    return cfg;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && a.dtype() == b.dtype() &&
           std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

void suite_gradients() {
    const GeneratorConfig gcfg = micro_config();
    const ParamStore gparams = init_generator_params(gcfg);
    const NoiseBank noise = NoiseBank::from_seed(gcfg, 5);
    const FeatureBundle features = FeatureBundle::make(31, 6);
    const LossWeights w;
    Rng rng(33);
    const Tensor target = generator_forward(LatentCode::sample(gcfg, rng), noise, gparams, gcfg);

    const Tensor z0 = rng.normal_tensor({gcfg.k_local + 1, gcfg.d});
    const ScalarFn chain = [&](ad::Tape& t, ad::Var z) {
        std::vector<ad::Var> nv;
        for (const Tensor& map : noise.maps) nv.push_back(t.constant(map));
        ad::Var img = generator_graph(t, z, nv, lift_params(t, gparams, false), gcfg);
        return total_loss_graph(t, img, target, w, features);
    };
    const double chain_err = grad_check(chain, z0);
    expect(chain_err < 1e-4, "generator-to-loss gradient error " + std::to_string(chain_err));

    const ParamStore dparams = init_discriminator_params(gcfg);
    const Tensor img0 = rng.uniform_tensor({3, 8, 8}, -0.9, 0.9);
    const ScalarFn disc = [&](ad::Tape& t, ad::Var img) {
        return discriminator_graph(t, img, lift_params(t, dparams, false), gcfg);
    };
    const double disc_err = grad_check(disc, img0);
    expect(disc_err < 1e-4, "discriminator gradient error " + std::to_string(disc_err));
}

void suite_wing_closed_forms() {
    const Tensor x = Tensor::from_data({1}, {1.0});
    const Tensor zero({1}, 0.0);
    const double inner = wing_loss(x, zero, 10.0, 2.0);
    expect(std::abs(inner - 10.0 * std::log(1.5)) < 1e-9,
           "wing value at x=1 should be 10*ln(1.5)");

    const Tensor at_beta = Tensor::from_data({1}, {10.0});
    const double inner_side = 10.0 * std::log(1.0 + 10.0 / 2.0);
    expect(std::abs(wing_loss(at_beta, zero, 10.0, 2.0) - inner_side) < 1e-9,
           "wing should be continuous at |x| = beta");
}

void suite_attention_contract() {
    const GeneratorConfig gcfg = micro_config();
    const ParamStore gparams = init_generator_params(gcfg);
    const NoiseBank noise = NoiseBank::from_seed(gcfg, 2);
    Rng rng(7);
    reset_attention_stats();
    // the forward pass itself validates every attention row sum
    (void)generator_forward(LatentCode::sample(gcfg, rng), noise, gparams, gcfg);
    const AttentionStats& stats = attention_stats();
    expect(stats.calls > 0, "forward pass should run attention");
    expect(stats.matrix_bytes > 0, "attention stats should count softmax bytes");
}

void suite_morph_algebra() {
    const GeneratorConfig gcfg = micro_config();
    Rng rng(11);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i)
        for (double lambda : {0.25, 0.5, 0.9}) {
            const LatentCode z1 = LatentCode::sample(gcfg, rng);
            const LatentCode z2 = LatentCode::sample(gcfg, rng);
            const LatentCode back =
                demorph_latents(morph_latents(z1, z2, lambda), z1, lambda);
            for (std::size_t j = 0; j < back.components.numel(); ++j)
                worst = std::max(worst, std::abs(back.components.data()[j] -
                                                 z2.components.data()[j]));
        }
    expect(worst < 1e-9, "morph/demorph roundtrip error " + std::to_string(worst));
}

void suite_metric_examples() {
    std::vector<double> decade;
    for (int i = 1; i <= 9; ++i) decade.push_back(i / 10.0);
    decade.push_back(1.0);
    expect(fmr_threshold(decade, 0.10) == 1.0, "fmr threshold on the decade scores");

    const std::vector<MorphTrial> trials = {
        {"a", 0.7, 0.6}, {"b", 0.8, 0.4}, {"c", 0.55, 0.9}};
    expect(mmpmr(trials, 0.5) == RateResult{2, 3}, "mmpmr hand count");

    const std::vector<double> attack = {0.9, 0.3, 0.6};
    const std::vector<double> bona = {0.2, 0.1, 0.4, 0.45, 0.05};
    expect(apcer(attack, 0.5) == RateResult{1, 3}, "apcer hand count");
    expect(bpcer(bona, 0.5) == RateResult{0, 5}, "bpcer hand count");
    expect(accuracy(attack, bona, 0.5) == RateResult{7, 8}, "accuracy hand count");

    const DEerResult separated = d_eer({0.9, 0.8}, {0.1, 0.2});
    expect(separated.rate.count == 0, "separated distributions should reach d-eer 0");

    const std::vector<DemorphTrial> dt = {
        {"x", 0.9, 0.1}, {"y", 0.9, 0.9}, {"z", 0.2, 0.1}};
    expect(demorph_accuracy(dt, 0.5) == RateResult{1, 3}, "demorph accuracy hand count");
}

void suite_persistence() {
    namespace fs = std::filesystem;
    struct Scratch {
        fs::path dir;
        Scratch() {
            dir = fs::temp_directory_path() /
                  ("morphlab_selftest_" + std::to_string(::getpid()));
            fs::create_directories(dir);
        }
        ~Scratch() {
            std::error_code ec;
            fs::remove_all(dir, ec);
        }
    } scratch;
    const auto at = [&](const char* name) { return (scratch.dir / name).string(); };

    const GeneratorConfig gcfg = micro_config();
    const ParamStore params = init_generator_params(gcfg);
    save_checkpoint(params, at("p.ckpt"));
    const ParamStore loaded = load_checkpoint(at("p.ckpt"));
    expect(loaded.size() == params.size(), "checkpoint entry count");
    for (const auto& [name, tensor] : params)
        expect(bitwise_equal(loaded.at(name), tensor), "checkpoint tensor '" + name + "'");

    Rng rng(3);
    LatentCode z = LatentCode::sample(gcfg, rng);
    save_latent(z, at("z.lat"));
    expect(bitwise_equal(load_latent(at("z.lat")).components, z.components),
           "latent file round-trip");

    const NoiseBank bank = NoiseBank::from_seed(gcfg, 4);
    const Tensor img = generator_forward(z, bank, params, gcfg);
    write_image(img, at("i.ppm"));
    const Tensor back = read_image(at("i.ppm"));
    for (std::size_t i = 0; i < img.numel(); ++i)
        expect(std::abs(back.data()[i] - img.data()[i]) <= 1.0 / 255.0,
               "image quantization bound");
}

void suite_inversion_determinism() {
    const GeneratorConfig gcfg = micro_config();
    const ParamStore gparams = init_generator_params(gcfg);
    const NoiseBank bank = NoiseBank::from_seed(gcfg, 6);
    const FeatureBundle features = FeatureBundle::make(31, 6);
    const LossWeights w;
    Rng rng(21);
    const Tensor target = generator_forward(LatentCode::sample(gcfg, rng), bank, gparams, gcfg);
    OptimizationConfig ocfg;
    ocfg.steps = 5;
    ocfg.init_samples = 8;
    ocfg.seed = 9;
    const EmbeddingResult r1 = embed_image(target, gcfg, gparams, bank, ocfg, w, features);
    const EmbeddingResult r2 = embed_image(target, gcfg, gparams, bank, ocfg, w, features);
    expect(bitwise_equal(r1.best.components, r2.best.components),
           "repeated inversions should agree bitwise");
    expect(r1.trace.size() == 5, "trace should have one row per step");
    for (std::size_t i = 0; i < r1.trace.size(); ++i)
        expect(r1.trace[i].total == r2.trace[i].total, "trace determinism");
}

} // namespace

int run_selftest(std::ostream& out) {
    const std::vector<std::pair<const char*, std::function<void()>>> suites = {
        {"gradients", suite_gradients},
        {"wing closed forms", suite_wing_closed_forms},
        {"attention contract", suite_attention_contract},
        {"morph algebra", suite_morph_algebra},
        {"metric examples", suite_metric_examples},
        {"persistence", suite_persistence},
        {"inversion determinism", suite_inversion_determinism},
    };
    int failures = 0;
    for (const auto& [name, fn] : suites) {
        try {
            fn();
            out << "[ok] " << name << "\n";
        } catch (const std::exception& e) {
            ++failures;
            out << "[fail] " << name << ": " << e.what() << "\n";
        }
    }
    out << "suites: " << suites.size() << ", failures: " << failures << "\n";
    return failures;
}

} // namespace morphlab
