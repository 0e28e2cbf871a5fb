#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "morphlab/errors.hpp"
#include "morphlab/generator.hpp"
#include "morphlab/gradcheck.hpp"

using namespace morphlab;

namespace {

// Two-block 8x8 profile: cheap enough for finite differences over every
// latent entry.
GeneratorConfig micro(std::uint64_t seed = 1) {
    GeneratorConfig cfg;
    cfg.k_local = 3;
    cfg.d = 4;
    cfg.target_resolution = 8;
    cfg.channels = {6, 4};
    cfg.attention = {AttentionMode::duplex, AttentionMode::none};
    cfg.mapping_depth = 1;
    cfg.seed = seed;
    return cfg;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.numel() == b.numel());
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// Independent single-head simplex oracle written with plain loops.
Tensor simplex_oracle(const Tensor& x, const Tensor& z, const ParamStore& p,
                      const std::string& prefix) {
    const std::size_t m = x.extent(0), c = x.extent(1);
    const std::size_t k1 = z.extent(0), d = z.extent(1);

    auto matmul_plain = [](const Tensor& a, const Tensor& b) {
        Tensor out({a.extent(0), b.extent(1)}, 0.0);
        for (std::size_t i = 0; i < a.extent(0); ++i)
            for (std::size_t kk = 0; kk < a.extent(1); ++kk)
                for (std::size_t j = 0; j < b.extent(1); ++j)
                    out.at2(i, j) += a.at2(i, kk) * b.at2(kk, j);
        return out;
    };

    Tensor q = matmul_plain(x, param(p, prefix + "h0.wq"));
    const Tensor& pos = param(p, prefix + "h0.pos_q");
    for (std::size_t i = 0; i < q.numel(); ++i) q[i] += pos[i];
    const Tensor k = matmul_plain(z, param(p, prefix + "h0.wk"));
    const Tensor v = matmul_plain(z, param(p, prefix + "h0.wv"));

    Tensor attn({m, k1}, 0.0);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -1e300;
        for (std::size_t j = 0; j < k1; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < d; ++t) s += q.at2(i, t) * k.at2(j, t);
            attn.at2(i, j) = s * inv_sqrt;
            mx = std::max(mx, attn.at2(i, j));
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < k1; ++j) {
            attn.at2(i, j) = std::exp(attn.at2(i, j) - mx);
            denom += attn.at2(i, j);
        }
        for (std::size_t j = 0; j < k1; ++j) attn.at2(i, j) /= denom;
    }
    const Tensor r = matmul_plain(attn, v);

    Tensor gamma = matmul_plain(r, param(p, prefix + "wg"));
    Tensor beta = matmul_plain(r, param(p, prefix + "wb"));
    const Tensor& bg = param(p, prefix + "bg");
    const Tensor& bb = param(p, prefix + "bb");
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            gamma.at2(i, j) += bg[j];
            beta.at2(i, j) += bb[j];
        }

    // column-wise zero-mean unit-variance (population), eps inside the sqrt
    Tensor xn = x;
    for (std::size_t j = 0; j < c; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < m; ++i) mean += x.at2(i, j);
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double dd = x.at2(i, j) - mean;
            var += dd * dd;
        }
        var /= static_cast<double>(m);
        const double inv = 1.0 / std::sqrt(var + 1e-8);
        for (std::size_t i = 0; i < m; ++i) xn.at2(i, j) = (x.at2(i, j) - mean) * inv;
    }

    Tensor out({m, c});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out.at2(i, j) = gamma.at2(i, j) * xn.at2(i, j) + beta.at2(i, j);
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// configuration

TEST_CASE("config: defaults and the small profile validate") {
    GeneratorConfig def;
    def.validate();
    CHECK(def.blocks() == 4);
    CHECK(def.block_resolution(3) == 32);

    const GeneratorConfig small = GeneratorConfig::tiny();
    small.validate();
    CHECK(small.blocks() == 3);
    CHECK(small.target_resolution == 16);
}

TEST_CASE("config: malformed configurations are rejected") {
    GeneratorConfig cfg = GeneratorConfig::tiny();
    cfg.channels = {16, 16};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = GeneratorConfig::tiny();
    cfg.target_resolution = 24;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = GeneratorConfig::tiny();
    cfg.attention.back() = AttentionMode::simplex;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = GeneratorConfig::tiny();
    cfg.attention_heads = 3; // d = 32 not divisible
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = GeneratorConfig::tiny();
    cfg.k_local = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    CHECK(parse_attention_mode("duplex") == AttentionMode::duplex);
    CHECK_THROWS_AS(parse_attention_mode("bogus"), ConfigError);
}

// ---------------------------------------------------------------------------
// mapping network

TEST_CASE("mapping: depth zero is the identity") {
    GeneratorConfig cfg = micro();
    cfg.mapping_depth = 0;
    const ParamStore params = init_generator_params(cfg);
    Rng rng(3);
    const LatentCode z = LatentCode::sample(cfg, rng);
    CHECK(bitwise_equal(mapping_forward(z, params, cfg), z.components));
}

TEST_CASE("mapping: deterministic and shape-checked") {
    const GeneratorConfig cfg = micro();
    const ParamStore params = init_generator_params(cfg);
    Rng rng(4);
    const LatentCode z = LatentCode::sample(cfg, rng);
    CHECK(bitwise_equal(mapping_forward(z, params, cfg), mapping_forward(z, params, cfg)));

    LatentCode bad{Tensor({2, cfg.d}, 0.0)};
    CHECK_THROWS_AS(mapping_forward(bad, params, cfg), ShapeError);
}

TEST_CASE("mapping: gradient of the output sum matches finite differences") {
    const GeneratorConfig cfg = micro();
    const ParamStore params = init_generator_params(cfg);
    Rng rng(5);
    const Tensor z0 = rng.normal_tensor({cfg.k_local + 1, cfg.d});

    const ScalarFn f = [&](ad::Tape& t, ad::Var z) {
        return ad::sum_all(mapping_graph(t, z, lift_params(t, params, false), cfg));
    };
    CHECK(grad_check(f, z0) < 1e-4);
}

// ---------------------------------------------------------------------------
// bipartite attention

TEST_CASE("attention: matches an independently coded simplex oracle") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        Rng rng(seed);
        const std::size_t m = 12, c = 5, d = 6;
        ParamStore p = init_attention_params(m, c, d, 1, AttentionMode::simplex, rng, "attn.");
        const Tensor x = rng.normal_tensor({m, c});
        const Tensor z = rng.normal_tensor({3, d});

        const auto [xa, za] = bipartite_attention(x, z, AttentionMode::simplex, 1, p, "attn.");
        CHECK(bitwise_equal(za, z));
        CHECK(max_abs_diff(xa, simplex_oracle(x, z, p, "attn.")) < 1e-12);
    }
}

TEST_CASE("attention: a single latent row means every position reads the same style") {
    Rng rng(9);
    const std::size_t m = 8, c = 4, d = 6;
    ParamStore p = init_attention_params(m, c, d, 1, AttentionMode::simplex, rng, "attn.");
    const Tensor x = rng.normal_tensor({m, c});
    const Tensor z = rng.normal_tensor({1, d}); // k_local + 1 = 1

    const auto [xa, za] = bipartite_attention(x, z, AttentionMode::simplex, 1, p, "attn.");
    // softmax over one key is exactly [1.0]; the oracle's attention row
    // reduces to the single latent read-out for every position
    CHECK(max_abs_diff(xa, simplex_oracle(x, z, p, "attn.")) < 1e-12);
    CHECK(bitwise_equal(za, z));
}

TEST_CASE("attention: duplex with a zeroed residual projection reduces to simplex") {
    Rng rng(10);
    const std::size_t m = 16, c = 6, d = 8;
    ParamStore p = init_attention_params(m, c, d, 1, AttentionMode::duplex, rng, "attn.");
    p["attn.wproj"] = Tensor({d, d}, 0.0);

    const Tensor x = rng.normal_tensor({m, c});
    const Tensor z = rng.normal_tensor({4, d});
    const auto [xd, zd] = bipartite_attention(x, z, AttentionMode::duplex, 1, p, "attn.");
    const auto [xs, zs] = bipartite_attention(x, z, AttentionMode::simplex, 1, p, "attn.");
    CHECK(max_abs_diff(xd, xs) < 1e-14);
    CHECK(max_abs_diff(zd, z) < 1e-14);
    CHECK(bitwise_equal(zs, z));
}

TEST_CASE("attention: duplex refines the latents when the projection is live") {
    Rng rng(11);
    const std::size_t m = 16, c = 6, d = 8;
    const ParamStore p = init_attention_params(m, c, d, 1, AttentionMode::duplex, rng, "attn.");
    const Tensor x = rng.normal_tensor({m, c});
    const Tensor z = rng.normal_tensor({4, d});
    const auto [xd, zd] = bipartite_attention(x, z, AttentionMode::duplex, 1, p, "attn.");
    CHECK(max_abs_diff(zd, z) > 1e-8);
}

TEST_CASE("attention: row sums hold for random inputs and stats track allocation") {
    // the forward itself asserts rows sum to 1 within 1e-6 and the exact
    // m x (k+1) shape; twenty seeds exercise it
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        const std::size_t m = 4 + static_cast<std::size_t>(rng.uniform(0.0, 28.0));
        const std::size_t k1 = 1 + static_cast<std::size_t>(rng.uniform(0.0, 6.0));
        const std::size_t c = 3, d = 8;
        const ParamStore p =
            init_attention_params(m, c, d, 1, AttentionMode::duplex, rng, "attn.");
        const Tensor x = rng.normal_tensor({m, c}, 3.0);
        const Tensor z = rng.normal_tensor({k1, d}, 3.0);

        reset_attention_stats();
        CHECK_NOTHROW(bipartite_attention(x, z, AttentionMode::duplex, 1, p, "attn."));
        const AttentionStats& stats = attention_stats();
        CHECK(stats.calls == 1);
        CHECK(stats.last_m == m);
        // duplex allocates one (k+1, m) and one (m, k+1) matrix
        CHECK(stats.last_bytes == 2 * m * k1 * sizeof(double));
    }
}

TEST_CASE("attention: matrix allocation grows linearly in the grid size") {
    Rng rng(21);
    const std::size_t c = 6, d = 8, k1 = 5;
    const Tensor z = rng.normal_tensor({k1, d});

    std::vector<double> ms, bytes;
    for (std::size_t m : {16, 64, 256}) {
        Rng prng(22);
        const ParamStore p =
            init_attention_params(m, c, d, 1, AttentionMode::duplex, prng, "attn.");
        const Tensor x = rng.normal_tensor({m, c});
        reset_attention_stats();
        bipartite_attention(x, z, AttentionMode::duplex, 1, p, "attn.");
        ms.push_back(static_cast<double>(m));
        bytes.push_back(static_cast<double>(attention_stats().last_bytes));
    }

    // least-squares line bytes = a*m + b; relative residual under 5%
    const double n = 3.0;
    double sm = 0, sb = 0, smm = 0, smb = 0;
    for (int i = 0; i < 3; ++i) {
        sm += ms[i];
        sb += bytes[i];
        smm += ms[i] * ms[i];
        smb += ms[i] * bytes[i];
    }
    const double a = (n * smb - sm * sb) / (n * smm - sm * sm);
    const double b = (sb - a * sm) / n;
    for (int i = 0; i < 3; ++i) {
        const double fit = a * ms[i] + b;
        CHECK(std::fabs(fit - bytes[i]) / bytes[i] < 0.05);
    }
}

TEST_CASE("attention: two heads split the model dimension and stay differentiable") {
    Rng rng(23);
    const std::size_t m = 9, c = 4, d = 8;
    const ParamStore p = init_attention_params(m, c, d, 2, AttentionMode::duplex, rng, "attn.");
    const Tensor z = rng.normal_tensor({3, d});
    const Tensor x0 = rng.normal_tensor({m, c});

    const auto [xa, za] = bipartite_attention(x0, z, AttentionMode::duplex, 2, p, "attn.");
    CHECK(xa.shape() == std::vector<std::size_t>{m, c});
    CHECK(za.shape() == std::vector<std::size_t>{3, d});

    Rng wrng(24);
    const Tensor w = wrng.uniform_tensor({m, c}, -1.0, 1.0);
    const ScalarFn f = [&](ad::Tape& t, ad::Var x) {
        const auto res = bipartite_attention_graph(t, x, t.constant(z), AttentionMode::duplex,
                                                   2, lift_params(t, p, false), "attn.");
        return ad::sum_all(ad::mul(res.x, t.constant(w)));
    };
    CHECK(grad_check(f, x0) < 1e-4);
}

TEST_CASE("attention: invalid modes and empty grids are rejected") {
    Rng rng(25);
    const ParamStore p = init_attention_params(4, 3, 4, 1, AttentionMode::duplex, rng, "attn.");
    const Tensor x = rng.normal_tensor({4, 3});
    const Tensor z = rng.normal_tensor({2, 4});
    CHECK_THROWS_AS(bipartite_attention(x, z, AttentionMode::none, 1, p, "attn."), ValueError);
    // an empty grid is unrepresentable: tensor construction already rejects it
    CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
    CHECK_THROWS_AS(bipartite_attention(z, rng.normal_tensor({2, 4}).reshaped({8}),
                                        AttentionMode::simplex, 1, p, "attn."),
                    ShapeError);
}

// ---------------------------------------------------------------------------
// synthesis and full generator

TEST_CASE("synthesis: output shape and [-1, 1] range") {
    for (const GeneratorConfig& cfg : {micro(), GeneratorConfig::tiny()}) {
        const ParamStore params = init_generator_params(cfg);
        Rng rng(31);
        const Tensor zp = rng.normal_tensor({cfg.k_local + 1, cfg.d});
        const NoiseBank noise = NoiseBank::from_seed(cfg, 5);
        const Tensor img = synthesis_forward(zp, noise, params, cfg);
        REQUIRE(img.shape() == std::vector<std::size_t>{3, cfg.target_resolution,
                                                        cfg.target_resolution});
        for (std::size_t i = 0; i < img.numel(); ++i) {
            CHECK(img[i] >= -1.0);
            CHECK(img[i] <= 1.0);
        }
    }
}

TEST_CASE("synthesis: deterministic for a fixed noise seed, sensitive to it") {
    const GeneratorConfig cfg = micro();
    const ParamStore params = init_generator_params(cfg);
    Rng rng(32);
    const Tensor zp = rng.normal_tensor({cfg.k_local + 1, cfg.d});

    const Tensor a = synthesis_forward(zp, NoiseBank::from_seed(cfg, 7), params, cfg);
    const Tensor b = synthesis_forward(zp, NoiseBank::from_seed(cfg, 7), params, cfg);
    const Tensor c = synthesis_forward(zp, NoiseBank::from_seed(cfg, 8), params, cfg);
    CHECK(bitwise_equal(a, b));
    CHECK(max_abs_diff(a, c) > 0.0);
}

TEST_CASE("synthesis: noise bank mismatches are rejected") {
    const GeneratorConfig cfg = micro();
    const ParamStore params = init_generator_params(cfg);
    const Tensor zp({cfg.k_local + 1, cfg.d}, 0.0);

    NoiseBank wrong_count = NoiseBank::from_seed(cfg, 1);
    wrong_count.maps.pop_back();
    CHECK_THROWS_AS(synthesis_forward(zp, wrong_count, params, cfg), ShapeError);

    NoiseBank wrong_shape = NoiseBank::from_seed(cfg, 1);
    wrong_shape.maps[1] = Tensor({4, 4}, 0.0);
    CHECK_THROWS_AS(synthesis_forward(zp, wrong_shape, params, cfg), ShapeError);
}

TEST_CASE("synthesis: gradients wrt the latent match finite differences") {
    const GeneratorConfig cfg = micro();
    const ParamStore params = init_generator_params(cfg);
    const NoiseBank noise = NoiseBank::from_seed(cfg, 3);
    Rng rng(33);
    const Tensor zp = rng.normal_tensor({cfg.k_local + 1, cfg.d});

    Rng wrng(34);
    const Tensor w = wrng.uniform_tensor({3, 8, 8}, -1.0, 1.0);
    const ScalarFn f = [&](ad::Tape& t, ad::Var z) {
        std::vector<ad::Var> nv;
        for (const Tensor& map : noise.maps) nv.push_back(t.constant(map));
        return ad::sum_all(
            ad::mul(synthesis_graph(t, z, nv, lift_params(t, params, false), cfg),
                    t.constant(w)));
    };
    CHECK(grad_check(f, zp) < 1e-4);
}

TEST_CASE("generator: identity mapping reduces to the synthesis network") {
    GeneratorConfig cfg = micro();
    cfg.mapping_depth = 0;
    const ParamStore params = init_generator_params(cfg);
    Rng rng(35);
    const LatentCode z = LatentCode::sample(cfg, rng);
    const NoiseBank noise = NoiseBank::from_seed(cfg, 6);
    CHECK(bitwise_equal(generator_forward(z, noise, params, cfg),
                        synthesis_forward(z.components, noise, params, cfg)));
}

TEST_CASE("generator: distinct latents give distinct images") {
    const GeneratorConfig cfg = micro();
    const ParamStore params = init_generator_params(cfg);
    Rng rng(36);
    const LatentCode z1 = LatentCode::sample(cfg, rng);
    const LatentCode z2 = LatentCode::sample(cfg, rng);
    const NoiseBank noise = NoiseBank::from_seed(cfg, 9);
    CHECK(max_abs_diff(generator_forward(z1, noise, params, cfg),
                       generator_forward(z2, noise, params, cfg)) > 1e-6);
}

TEST_CASE("generator: reconstruction-loss gradients wrt Z match finite differences") {
    const GeneratorConfig cfg = micro();
    const ParamStore params = init_generator_params(cfg);
    const NoiseBank noise = NoiseBank::from_seed(cfg, 12);
    Rng rng(37);
    const Tensor z0 = rng.normal_tensor({cfg.k_local + 1, cfg.d});
    const Tensor target =
        generator_forward(LatentCode{rng.normal_tensor({cfg.k_local + 1, cfg.d})}, noise,
                          params, cfg);

    const ScalarFn f = [&](ad::Tape& t, ad::Var z) {
        std::vector<ad::Var> nv;
        for (const Tensor& map : noise.maps) nv.push_back(t.constant(map));
        ad::Var img = generator_graph(t, z, nv, lift_params(t, params, false), cfg);
        ad::Var diff = ad::sub(img, t.constant(target));
        return ad::mean_all(ad::mul(diff, diff));
    };
    CHECK(grad_check(f, z0) < 1e-4);
}

// ---------------------------------------------------------------------------
// discriminator

TEST_CASE("discriminator: deterministic scalar, shape-checked") {
    const GeneratorConfig cfg = micro();
    const ParamStore params = init_discriminator_params(cfg);
    Rng rng(41);
    const Tensor img = rng.uniform_tensor({3, 8, 8}, -1.0, 1.0);
    const double s1 = discriminator_forward(img, params, cfg);
    const double s2 = discriminator_forward(img, params, cfg);
    CHECK(s1 == s2);
    CHECK(std::isfinite(s1));
    CHECK_THROWS_AS(discriminator_forward(Tensor({3, 4, 4}, 0.0), params, cfg), ShapeError);
    CHECK_THROWS_AS(discriminator_forward(Tensor({1, 8, 8}, 0.0), params, cfg), ShapeError);
}

TEST_CASE("discriminator: gradients match finite differences") {
    const GeneratorConfig cfg = micro();
    const ParamStore params = init_discriminator_params(cfg);
    Rng rng(42);
    const Tensor img = rng.uniform_tensor({3, 8, 8}, -0.9, 0.9);

    const ScalarFn f = [&](ad::Tape& t, ad::Var x) {
        return discriminator_graph(t, x, lift_params(t, params, false), cfg);
    };
    CHECK(grad_check(f, img) < 1e-4);
}

TEST_CASE("discriminator: every probed pixel influences the score") {
    const GeneratorConfig cfg = micro();
    const ParamStore params = init_discriminator_params(cfg);
    Rng rng(43);
    const Tensor img = rng.uniform_tensor({3, 8, 8}, -0.5, 0.5);
    const double base = discriminator_forward(img, params, cfg);

    for (int probe = 0; probe < 16; ++probe) {
        Tensor bumped = img;
        const std::size_t i = static_cast<std::size_t>(rng.uniform(0.0, 192.0));
        bumped[std::min<std::size_t>(i, 191)] += 0.5;
        CHECK(std::fabs(discriminator_forward(bumped, params, cfg) - base) > 0.0);
    }
}

// ---------------------------------------------------------------------------
// smoke training

TEST_CASE("procedural dataset: deterministic, bounded, correctly shaped") {
    const auto a = procedural_dataset(6, 8, 123);
    const auto b = procedural_dataset(6, 8, 123);
    const auto c = procedural_dataset(6, 8, 124);
    REQUIRE(a.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        REQUIRE(a[i].shape() == std::vector<std::size_t>{3, 8, 8});
        CHECK(bitwise_equal(a[i], b[i]));
        for (std::size_t j = 0; j < a[i].numel(); ++j) {
            CHECK(a[i][j] > -1.0);
            CHECK(a[i][j] < 1.0);
        }
    }
    CHECK(max_abs_diff(a[0], c[0]) > 0.0);
}

TEST_CASE("smoke train: zero steps returns untouched parameters and no trace") {
    const GeneratorConfig cfg = micro();
    const auto dataset = procedural_dataset(4, 8, 7);
    const SmokeTrainResult r = gan_smoke_train(cfg, dataset, 0);
    CHECK(r.g_loss.empty());
    CHECK(r.d_loss.empty());

    const ParamStore fresh_g = init_generator_params(cfg);
    const ParamStore fresh_d = init_discriminator_params(cfg);
    REQUIRE(r.generator.size() == fresh_g.size());
    for (const auto& [name, tensor] : fresh_g) CHECK(bitwise_equal(r.generator.at(name), tensor));
    for (const auto& [name, tensor] : fresh_d)
        CHECK(bitwise_equal(r.discriminator.at(name), tensor));
}

TEST_CASE("smoke train: rejects bad datasets") {
    const GeneratorConfig cfg = micro();
    CHECK_THROWS_AS(gan_smoke_train(cfg, {}, 1), NoDataError);
    CHECK_THROWS_AS(gan_smoke_train(cfg, {Tensor({3, 4, 4}, 0.0)}, 1), ShapeError);
    CHECK_THROWS_AS(gan_smoke_train(cfg, {Tensor({3, 8, 8}, 1.5)}, 1), ValueError);
}

TEST_CASE("smoke train: three steps produce finite losses and update parameters") {
    const GeneratorConfig cfg = micro();
    const auto dataset = procedural_dataset(16, 8, 11);
    const SmokeTrainResult r = gan_smoke_train(cfg, dataset, 3);
    REQUIRE(r.g_loss.size() == 3);
    REQUIRE(r.d_loss.size() == 3);
    for (double v : r.g_loss) CHECK(std::isfinite(v));
    for (double v : r.d_loss) CHECK(std::isfinite(v));

    const ParamStore fresh = init_generator_params(cfg);
    double moved = 0.0;
    for (const auto& [name, tensor] : fresh)
        moved += max_abs_diff(r.generator.at(name), tensor);
    CHECK(moved > 1e-9);
}

TEST_CASE("smoke train: fixed seeds give bitwise-identical traces") {
    const GeneratorConfig cfg = micro(77);
    const auto dataset = procedural_dataset(16, 8, 13);
    const SmokeTrainResult a = gan_smoke_train(cfg, dataset, 3);
    const SmokeTrainResult b = gan_smoke_train(cfg, dataset, 3);
    REQUIRE(a.g_loss.size() == b.g_loss.size());
    for (std::size_t i = 0; i < a.g_loss.size(); ++i) {
        CHECK(a.g_loss[i] == b.g_loss[i]);
        CHECK(a.d_loss[i] == b.d_loss[i]);
    }
    CHECK(a.mean_real_score == b.mean_real_score);
    CHECK(a.mean_fake_score == b.mean_fake_score);
}
