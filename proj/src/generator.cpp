#include "morphlab/generator.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "morphlab/errors.hpp"
#include "morphlab/optim.hpp"

namespace morphlab {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t log2_exact(std::size_t n) {
    std::size_t l = 0;
    while ((std::size_t{1} << l) < n) ++l;
    return l;
}

const ad::Var& var_at(const VarMap& p, const std::string& name) {
    const auto it = p.find(name);
    if (it == p.end()) throw ValueError("missing parameter '" + name + "'");
    return it->second;
}

std::string block_key(std::size_t b, const std::string& rest) {
    return "block" + std::to_string(b) + "." + rest;
}

std::string head_key(const std::string& prefix, std::size_t h, const std::string& name) {
    return prefix + "h" + std::to_string(h) + "." + name;
}

ad::Var concat_or_single(std::vector<ad::Var>& parts) {
    return parts.size() == 1 ? parts[0] : ad::concat(1, parts);
}

} // namespace

// ---------------------------------------------------------------------------
// configuration

const char* attention_mode_name(AttentionMode mode) {
    switch (mode) {
        case AttentionMode::simplex: return "simplex";
        case AttentionMode::duplex: return "duplex";
        case AttentionMode::none: return "none";
    }
    return "?";
}

AttentionMode parse_attention_mode(const std::string& name) {
    if (name == "simplex") return AttentionMode::simplex;
    if (name == "duplex") return AttentionMode::duplex;
    if (name == "none") return AttentionMode::none;
    throw ConfigError("unknown attention mode '" + name + "'");
}

std::size_t GeneratorConfig::blocks() const {
    return log2_exact(target_resolution / base_resolution) + 1;
}

std::size_t GeneratorConfig::block_resolution(std::size_t b) const {
    return base_resolution << b;
}

void GeneratorConfig::validate() const {
    if (k_local == 0 || d == 0)
        throw ConfigError("generator: k_local and d must be positive");
    if (!is_power_of_two(base_resolution) || base_resolution < 2)
        throw ConfigError("generator: base resolution must be a power of two >= 2");
    if (!is_power_of_two(target_resolution) || target_resolution < base_resolution)
        throw ConfigError("generator: target resolution must be a power of two >= base (got " +
                          std::to_string(target_resolution) + ")");
    const std::size_t b = blocks();
    if (channels.size() != b)
        throw ConfigError("generator: expected " + std::to_string(b) +
                          " channel entries, got " + std::to_string(channels.size()));
    for (std::size_t c : channels)
        if (c == 0) throw ConfigError("generator: channel widths must be positive");
    if (attention.size() != b)
        throw ConfigError("generator: expected " + std::to_string(b) +
                          " attention modes, got " + std::to_string(attention.size()));
    if (attention.back() != AttentionMode::none)
        throw ConfigError("generator: the final block must use attention mode 'none'");
    if (attention_heads == 0)
        throw ConfigError("generator: attention_heads must be positive");
    if (!(attention_logit_gain > 0.0) || !std::isfinite(attention_logit_gain))
        throw ConfigError("generator: attention_logit_gain must be positive and finite");
    if (d % attention_heads != 0)
        throw ConfigError("generator: d (" + std::to_string(d) +
                          ") must be divisible by attention_heads (" +
                          std::to_string(attention_heads) + ")");
}

GeneratorConfig GeneratorConfig::tiny(std::uint64_t seed) {
    GeneratorConfig cfg;
    cfg.target_resolution = 16;
    cfg.channels = {16, 16, 8};
    cfg.attention = {AttentionMode::duplex, AttentionMode::duplex, AttentionMode::none};
    // one mapping layer: at this scale a deeper mapping leaves latent recovery
    // by first-order optimization badly conditioned
    cfg.mapping_depth = 1;
    cfg.seed = seed;
    return cfg;
}

// ---------------------------------------------------------------------------
// latent code / noise bank

LatentCode LatentCode::zeros(const GeneratorConfig& cfg) {
    return {Tensor({cfg.k_local + 1, cfg.d}, 0.0)};
}

LatentCode LatentCode::sample(const GeneratorConfig& cfg, Rng& rng) {
    return {rng.normal_tensor({cfg.k_local + 1, cfg.d})};
}

void LatentCode::validate(const GeneratorConfig& cfg) const {
    if (components.rank() != 2 || components.extent(0) != cfg.k_local + 1 ||
        components.extent(1) != cfg.d)
        throw ShapeError("latent code shape " + components.shape_str() + " does not match (" +
                         std::to_string(cfg.k_local + 1) + ", " + std::to_string(cfg.d) + ")");
    if (!components.all_finite()) throw ValueError("latent code has non-finite entries");
}

NoiseBank NoiseBank::from_seed(const GeneratorConfig& cfg, std::uint64_t seed) {
    Rng root(seed);
    NoiseBank bank;
    for (std::size_t b = 0; b < cfg.blocks(); ++b) {
        Rng r = root.fork(b);
        const std::size_t res = cfg.block_resolution(b);
        bank.maps.push_back(r.normal_tensor({res, res}));
    }
    return bank;
}

NoiseBank NoiseBank::zeros(const GeneratorConfig& cfg) {
    NoiseBank bank;
    for (std::size_t b = 0; b < cfg.blocks(); ++b) {
        const std::size_t res = cfg.block_resolution(b);
        bank.maps.emplace_back(std::vector<std::size_t>{res, res}, 0.0);
    }
    return bank;
}

void NoiseBank::validate(const GeneratorConfig& cfg) const {
    if (maps.size() != cfg.blocks())
        throw ShapeError("noise bank has " + std::to_string(maps.size()) +
                         " maps, config has " + std::to_string(cfg.blocks()) + " blocks");
    for (std::size_t b = 0; b < maps.size(); ++b) {
        const std::size_t res = cfg.block_resolution(b);
        if (maps[b].rank() != 2 || maps[b].extent(0) != res || maps[b].extent(1) != res)
            throw ShapeError("noise map " + std::to_string(b) + " has shape " +
                             maps[b].shape_str() + ", block expects (" + std::to_string(res) +
                             ", " + std::to_string(res) + ")");
        if (!maps[b].all_finite())
            throw ValueError("noise map " + std::to_string(b) + " has non-finite entries");
    }
}

// ---------------------------------------------------------------------------
// parameter initialization

ParamStore init_attention_params(std::size_t m, std::size_t c, std::size_t d,
                                 std::size_t heads, AttentionMode mode, Rng& rng,
                                 const std::string& prefix, double logit_gain) {
    if (heads == 0 || d % heads != 0)
        throw ConfigError("attention: d must be divisible by a positive head count");
    const std::size_t dh = d / heads;
    const double sc = std::sqrt(1.0 / static_cast<double>(c));
    const double sd = std::sqrt(1.0 / static_cast<double>(d));
    // a gain below 1 starts the queries/keys cooler than the values: the
    // near-uniform softmax keeps the latent-to-image map close to affine,
    // which first-order inversion depends on; training can sharpen it later
    const double logit_scale = logit_gain;

    ParamStore p;
    for (std::size_t h = 0; h < heads; ++h) {
        p.emplace(head_key(prefix, h, "wq"), rng.normal_tensor({c, dh}, logit_scale * sc));
        p.emplace(head_key(prefix, h, "wk"), rng.normal_tensor({d, dh}, logit_scale * sd));
        p.emplace(head_key(prefix, h, "wv"), rng.normal_tensor({d, dh}, sd));
        p.emplace(head_key(prefix, h, "pos_q"), rng.normal_tensor({m, dh}, 0.02));
        if (mode == AttentionMode::duplex) {
            p.emplace(head_key(prefix, h, "wzq"), rng.normal_tensor({d, dh}, logit_scale * sd));
            p.emplace(head_key(prefix, h, "wxk"), rng.normal_tensor({c, dh}, logit_scale * sc));
            p.emplace(head_key(prefix, h, "wxv"), rng.normal_tensor({c, dh}, sc));
            p.emplace(head_key(prefix, h, "pos_k"), rng.normal_tensor({m, dh}, 0.02));
        }
    }
    // modulation centered on identity (gamma around 1, beta around 0) with
    // unit-variance style read-out so latents shape the image from step one
    p.emplace(prefix + "wg", rng.normal_tensor({d, c}, std::sqrt(1.0 / double(d))));
    p.emplace(prefix + "bg", Tensor({c}, 1.0));
    p.emplace(prefix + "wb", rng.normal_tensor({d, c}, std::sqrt(1.0 / double(d))));
    p.emplace(prefix + "bb", Tensor({c}, 0.0));
    if (mode == AttentionMode::duplex)
        p.emplace(prefix + "wproj", rng.normal_tensor({d, d}, 0.1 * sd));
    return p;
}

ParamStore init_generator_params(const GeneratorConfig& cfg) {
    cfg.validate();
    Rng rng = Rng(cfg.seed).fork(0x6e);
    ParamStore p;

    const double sm = std::sqrt(2.0 / static_cast<double>(cfg.d));
    for (std::size_t l = 0; l < cfg.mapping_depth; ++l) {
        const std::string base = "mapping." + std::to_string(l) + ".";
        p.emplace(base + "weight", rng.normal_tensor({cfg.d, cfg.d}, sm));
        p.emplace(base + "bias", Tensor({cfg.d}, 0.0));
    }

    p.emplace("const.input",
              rng.normal_tensor({cfg.channels[0], cfg.base_resolution, cfg.base_resolution}));

    const std::size_t blocks = cfg.blocks();
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t res = cfg.block_resolution(b);
        const std::size_t cb = cfg.channels[b];
        p.emplace(block_key(b, "noise_scale"), Tensor({cb}, 0.1));

        for (std::size_t s = 0; s < 2; ++s) {
            const std::string base = block_key(b, "syn" + std::to_string(s) + ".");
            p.emplace(base + "theta",
                      Tensor::from_data({2, 3}, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0}));
            p.emplace(base + "bias", Tensor({cb}, 0.0));
            if (cfg.attention[b] != AttentionMode::none) {
                ParamStore attn =
                    init_attention_params(res * res, cb, cfg.d, cfg.attention_heads,
                                          cfg.attention[b], rng, base + "attn.",
                                          cfg.attention_logit_gain);
                for (auto& [name, tensor] : attn) p.emplace(name, std::move(tensor));
            }
        }

        const std::size_t co = (b + 1 < blocks) ? cfg.channels[b + 1] : cb;
        const double sconv = std::sqrt(2.0 / static_cast<double>(cb * 9));
        p.emplace(block_key(b, "conv.weight"), rng.normal_tensor({co, cb, 3, 3}, sconv));
        p.emplace(block_key(b, "conv.bias"), Tensor({co}, 0.0));
    }

    const std::size_t clast = cfg.channels.back();
    p.emplace("rgb.weight",
              rng.normal_tensor({3, clast, 1, 1}, std::sqrt(1.0 / static_cast<double>(clast))));
    p.emplace("rgb.bias", Tensor({3}, 0.0));
    return p;
}

namespace {

// Stem convolution at full resolution, then conv+pool stages down to 4x4;
// channel widths 8, 16, ... capped at 64.
std::vector<std::size_t> disc_channel_plan(const GeneratorConfig& cfg) {
    std::vector<std::size_t> widths{8};
    for (std::size_t r = cfg.target_resolution; r > 4; r /= 2)
        widths.push_back(std::min<std::size_t>(widths.back() * 2, 64));
    return widths;
}

} // namespace

ParamStore init_discriminator_params(const GeneratorConfig& cfg) {
    cfg.validate();
    Rng rng = Rng(cfg.seed).fork(0xd1);
    ParamStore p;
    const std::vector<std::size_t> widths = disc_channel_plan(cfg);
    std::size_t ci = 3;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const std::string base = "disc.conv" + std::to_string(i) + ".";
        const double s = std::sqrt(2.0 / static_cast<double>(ci * 9));
        p.emplace(base + "weight", rng.normal_tensor({widths[i], ci, 3, 3}, s));
        p.emplace(base + "bias", Tensor({widths[i]}, 0.0));
        ci = widths[i];
    }
    const std::size_t feat = ci * 4 * 4;
    p.emplace("disc.fc.weight",
              rng.normal_tensor({feat, 1}, std::sqrt(1.0 / static_cast<double>(feat))));
    p.emplace("disc.fc.bias", Tensor({1}, 0.0));
    return p;
}

VarMap lift_params(ad::Tape& t, const ParamStore& params, bool trainable) {
    VarMap vars;
    for (const auto& [name, tensor] : params)
        vars.emplace(name, trainable ? t.input(tensor) : t.constant(tensor));
    return vars;
}

// ---------------------------------------------------------------------------
// attention

AttentionStats& attention_stats() {
    thread_local AttentionStats stats;
    return stats;
}

void reset_attention_stats() { attention_stats() = AttentionStats{}; }

namespace {

// Structural contract on every computed attention matrix: exact expected
// shape (in particular never m x m) and unit row sums.
void check_attention_matrix(const Tensor& a, std::size_t rows, std::size_t cols,
                            const char* what) {
    if (a.rank() != 2 || a.extent(0) != rows || a.extent(1) != cols)
        throw ContractError(std::string("bipartite_attention: ") + what + " has shape " +
                            a.shape_str() + ", expected (" + std::to_string(rows) + ", " +
                            std::to_string(cols) + ")");
    for (std::size_t i = 0; i < rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const double v = a.at2(i, j);
            if (v < 0.0)
                throw ContractError(std::string("bipartite_attention: ") + what +
                                    " has a negative entry");
            sum += v;
        }
        if (std::fabs(sum - 1.0) > 1e-6)
            throw ContractError(std::string("bipartite_attention: ") + what + " row " +
                                std::to_string(i) + " sums to " + std::to_string(sum));
    }
}

} // namespace

AttentionGraphResult bipartite_attention_graph(ad::Tape& t, ad::Var x, ad::Var z,
                                               AttentionMode mode, std::size_t heads,
                                               const VarMap& p, const std::string& prefix) {
    if (mode == AttentionMode::none)
        throw ValueError("bipartite_attention: mode must be simplex or duplex");
    if (heads == 0) throw ValueError("bipartite_attention: head count must be positive");
    if (x.tape != &t || z.tape != &t)
        throw ValueError("bipartite_attention: inputs recorded on a different tape");
    const Tensor& xv = x.value();
    const Tensor& zv = z.value();
    if (xv.rank() != 2)
        throw ShapeError("bipartite_attention: features must be (m, c), got " + xv.shape_str());
    if (zv.rank() != 2)
        throw ShapeError("bipartite_attention: latents must be (k+1, d), got " + zv.shape_str());
    const std::size_t m = xv.extent(0);
    const std::size_t k1 = zv.extent(0), d = zv.extent(1);
    if (m == 0) throw ValueError("bipartite_attention: empty feature grid (m = 0)");
    if (d % heads != 0)
        throw ValueError("bipartite_attention: d not divisible by head count");
    const std::size_t dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    std::size_t bytes = 0;

    ad::Var zr = z;
    if (mode == AttentionMode::duplex) {
        std::vector<ad::Var> readout;
        readout.reserve(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            ad::Var qz = ad::matmul(zr, var_at(p, head_key(prefix, h, "wzq")));
            ad::Var kx = ad::add(ad::matmul(x, var_at(p, head_key(prefix, h, "wxk"))),
                                 var_at(p, head_key(prefix, h, "pos_k")));
            ad::Var az = ad::softmax_lastaxis(
                ad::mul_scalar(ad::matmul(qz, ad::transpose2d(kx)), inv_sqrt));
            check_attention_matrix(az.value(), k1, m, "latent attention matrix");
            bytes += az.value().numel() * sizeof(double);
            ad::Var vx = ad::matmul(x, var_at(p, head_key(prefix, h, "wxv")));
            readout.push_back(ad::matmul(az, vx));
        }
        ad::Var rz = concat_or_single(readout);
        zr = ad::add(zr, ad::matmul(rz, var_at(p, prefix + "wproj")));
    }

    std::vector<ad::Var> readout;
    readout.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        ad::Var q = ad::add(ad::matmul(x, var_at(p, head_key(prefix, h, "wq"))),
                            var_at(p, head_key(prefix, h, "pos_q")));
        ad::Var k = ad::matmul(zr, var_at(p, head_key(prefix, h, "wk")));
        ad::Var a =
            ad::softmax_lastaxis(ad::mul_scalar(ad::matmul(q, ad::transpose2d(k)), inv_sqrt));
        check_attention_matrix(a.value(), m, k1, "attention matrix");
        bytes += a.value().numel() * sizeof(double);
        ad::Var v = ad::matmul(zr, var_at(p, head_key(prefix, h, "wv")));
        readout.push_back(ad::matmul(a, v));
    }
    ad::Var r = concat_or_single(readout);

    ad::Var gamma = ad::add_cols(ad::matmul(r, var_at(p, prefix + "wg")),
                                 var_at(p, prefix + "bg"));
    ad::Var beta = ad::add_cols(ad::matmul(r, var_at(p, prefix + "wb")),
                                var_at(p, prefix + "bb"));
    ad::Var xa = ad::add(ad::mul(gamma, ad::feature_normalize(x, 1)), beta);

    AttentionStats& stats = attention_stats();
    stats.calls += 1;
    stats.last_m = m;
    stats.last_bytes = bytes;
    stats.matrix_bytes += bytes;
    return {xa, zr};
}

// ---------------------------------------------------------------------------
// forward graphs

ad::Var mapping_graph(ad::Tape& t, ad::Var z, const VarMap& p, const GeneratorConfig& cfg) {
    (void)t;
    const Tensor& zv = z.value();
    if (zv.rank() != 2 || zv.extent(0) != cfg.k_local + 1 || zv.extent(1) != cfg.d)
        throw ShapeError("mapping: latent shape " + zv.shape_str() + " does not match (" +
                         std::to_string(cfg.k_local + 1) + ", " + std::to_string(cfg.d) + ")");
    ad::Var out = z;
    for (std::size_t l = 0; l < cfg.mapping_depth; ++l) {
        const std::string base = "mapping." + std::to_string(l) + ".";
        out = ad::leaky_relu(ad::add_cols(ad::matmul(out, var_at(p, base + "weight")),
                                          var_at(p, base + "bias")));
    }
    return out;
}

ad::Var synthesis_graph(ad::Tape& t, ad::Var z_prime, const std::vector<ad::Var>& noise,
                        const VarMap& p, const GeneratorConfig& cfg) {
    cfg.validate();
    const std::size_t blocks = cfg.blocks();
    if (noise.size() != blocks)
        throw ShapeError("synthesis: noise bank has " + std::to_string(noise.size()) +
                         " maps, config has " + std::to_string(blocks) + " blocks");
    const Tensor& zv = z_prime.value();
    if (zv.rank() != 2 || zv.extent(0) != cfg.k_local + 1 || zv.extent(1) != cfg.d)
        throw ShapeError("synthesis: latent shape " + zv.shape_str() + " does not match (" +
                         std::to_string(cfg.k_local + 1) + ", " + std::to_string(cfg.d) + ")");

    ad::Var x = var_at(p, "const.input");
    ad::Var z = z_prime;
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t res = cfg.block_resolution(b);
        const std::size_t cb = cfg.channels[b];
        const Tensor& nv = noise[b].value();
        if (nv.rank() != 2 || nv.extent(0) != res || nv.extent(1) != res)
            throw ShapeError("synthesis: noise map " + std::to_string(b) + " has shape " +
                             nv.shape_str() + ", block expects (" + std::to_string(res) + ", " +
                             std::to_string(res) + ")");

        // per-channel-scaled noise lands on the activations ahead of both
        // synthesis layers, so it precedes every attention read
        x = ad::add_scaled_channel(x, noise[b], var_at(p, block_key(b, "noise_scale")));

        for (std::size_t s = 0; s < 2; ++s) {
            const std::string base = block_key(b, "syn" + std::to_string(s) + ".");
            x = ad::affine_warp(x, var_at(p, base + "theta"));
            x = ad::leaky_relu(ad::add_channel_bias(x, var_at(p, base + "bias")));
            if (cfg.attention[b] != AttentionMode::none) {
                ad::Var grid = ad::transpose2d(ad::reshape(x, {cb, res * res}));
                const AttentionGraphResult att = bipartite_attention_graph(
                    t, grid, z, cfg.attention[b], cfg.attention_heads, p, base + "attn.");
                x = ad::reshape(ad::transpose2d(att.x), {cb, res, res});
                z = att.z;
            }
        }

        x = ad::leaky_relu(ad::add_channel_bias(
            ad::conv2d(x, var_at(p, block_key(b, "conv.weight"))),
            var_at(p, block_key(b, "conv.bias"))));
        if (b + 1 < blocks) x = ad::bilinear_upsample2x(x);
    }

    x = ad::add_channel_bias(ad::conv2d(x, var_at(p, "rgb.weight")), var_at(p, "rgb.bias"));
    return ad::tanh_v(x);
}

ad::Var generator_graph(ad::Tape& t, ad::Var z, const std::vector<ad::Var>& noise,
                        const VarMap& p, const GeneratorConfig& cfg) {
    return synthesis_graph(t, mapping_graph(t, z, p, cfg), noise, p, cfg);
}

ad::Var discriminator_graph(ad::Tape& t, ad::Var image, const VarMap& p,
                            const GeneratorConfig& cfg) {
    cfg.validate();
    if (image.tape != &t)
        throw ValueError("discriminator: image recorded on a different tape");
    const Tensor& iv = image.value();
    const std::size_t r = cfg.target_resolution;
    if (iv.rank() != 3 || iv.extent(0) != 3 || iv.extent(1) != r || iv.extent(2) != r)
        throw ShapeError("discriminator: image shape " + iv.shape_str() + " does not match (3, " +
                         std::to_string(r) + ", " + std::to_string(r) + ")");

    const std::vector<std::size_t> widths = disc_channel_plan(cfg);
    ad::Var x = image;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const std::string base = "disc.conv" + std::to_string(i) + ".";
        x = ad::leaky_relu(ad::add_channel_bias(ad::conv2d(x, var_at(p, base + "weight")),
                                                var_at(p, base + "bias")));
        if (i + 1 < widths.size()) x = ad::avgpool2x(x);
    }
    const std::size_t feat = widths.back() * 4 * 4;
    ad::Var flat = ad::reshape(x, {1, feat});
    ad::Var score = ad::add_cols(ad::matmul(flat, var_at(p, "disc.fc.weight")),
                                 var_at(p, "disc.fc.bias"));
    return ad::sum_all(score);
}

// ---------------------------------------------------------------------------
// plain forwards

Tensor mapping_forward(const LatentCode& z, const ParamStore& params,
                       const GeneratorConfig& cfg) {
    cfg.validate();
    z.validate(cfg);
    ad::Tape t;
    return mapping_graph(t, t.constant(z.components), lift_params(t, params, false), cfg)
        .value();
}

std::pair<Tensor, Tensor> bipartite_attention(const Tensor& x, const Tensor& z,
                                              AttentionMode mode, std::size_t heads,
                                              const ParamStore& params,
                                              const std::string& prefix) {
    ad::Tape t;
    const AttentionGraphResult res = bipartite_attention_graph(
        t, t.constant(x), t.constant(z), mode, heads, lift_params(t, params, false), prefix);
    return {res.x.value(), res.z.value()};
}

Tensor synthesis_forward(const Tensor& z_prime, const NoiseBank& noise,
                         const ParamStore& params, const GeneratorConfig& cfg) {
    cfg.validate();
    noise.validate(cfg);
    ad::Tape t;
    std::vector<ad::Var> nv;
    nv.reserve(noise.maps.size());
    for (const Tensor& map : noise.maps) nv.push_back(t.constant(map));
    return synthesis_graph(t, t.constant(z_prime), nv, lift_params(t, params, false), cfg)
        .value();
}

Tensor generator_forward(const LatentCode& z, const NoiseBank& noise, const ParamStore& params,
                         const GeneratorConfig& cfg) {
    cfg.validate();
    z.validate(cfg);
    noise.validate(cfg);
    ad::Tape t;
    std::vector<ad::Var> nv;
    nv.reserve(noise.maps.size());
    for (const Tensor& map : noise.maps) nv.push_back(t.constant(map));
    return generator_graph(t, t.constant(z.components), nv, lift_params(t, params, false), cfg)
        .value();
}

double discriminator_forward(const Tensor& image, const ParamStore& params,
                             const GeneratorConfig& cfg) {
    ad::Tape t;
    return discriminator_graph(t, t.constant(image), lift_params(t, params, false), cfg)
        .value()[0];
}

// ---------------------------------------------------------------------------
// smoke training

std::vector<Tensor> procedural_dataset(std::size_t count, std::size_t resolution,
                                       std::uint64_t seed) {
    constexpr double kTau = 6.28318530717958647692;
    Rng root(seed);
    std::vector<Tensor> images;
    images.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        Rng rng = root.fork(n);
        Tensor img({3, resolution, resolution});
        const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0);
        const double phase = rng.uniform(0.0, kTau);

        struct Blob {
            double cy, cx, sigma, color[3];
        };
        Blob blobs[2];
        for (Blob& blob : blobs) {
            blob.cy = rng.uniform(0.2, 0.8) * resolution;
            blob.cx = rng.uniform(0.2, 0.8) * resolution;
            blob.sigma = rng.uniform(0.12, 0.3) * resolution;
            for (double& ch : blob.color) ch = rng.uniform(-0.35, 0.35);
        }

        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < resolution; ++i)
                for (std::size_t j = 0; j < resolution; ++j) {
                    double v = 0.2 * std::sin(kTau * (fx * j + fy * i) / resolution + phase);
                    for (const Blob& blob : blobs) {
                        const double dy = (static_cast<double>(i) - blob.cy) / blob.sigma;
                        const double dx = (static_cast<double>(j) - blob.cx) / blob.sigma;
                        v += blob.color[c] * std::exp(-0.5 * (dy * dy + dx * dx));
                    }
                    img.at3(c, i, j) = v;
                }
        images.push_back(std::move(img));
    }
    return images;
}

namespace {

ParamStore named_gradients(const VarMap& vars, const ad::Gradients& grads) {
    ParamStore out;
    for (const auto& [name, var] : vars)
        if (grads.contains(var)) out.emplace(name, grads.wrt(var));
    return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

} // namespace

SmokeTrainResult gan_smoke_train(const GeneratorConfig& cfg, const std::vector<Tensor>& dataset,
                                 std::size_t steps) {
    cfg.validate();
    SmokeTrainResult out;
    out.generator = init_generator_params(cfg);
    out.discriminator = init_discriminator_params(cfg);
    if (steps == 0) return out;

    const std::size_t r = cfg.target_resolution;
    if (dataset.empty()) throw NoDataError("gan_smoke_train: dataset is empty");
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Tensor& img = dataset[i];
        if (img.rank() != 3 || img.extent(0) != 3 || img.extent(1) != r || img.extent(2) != r)
            throw ShapeError("gan_smoke_train: dataset image " + std::to_string(i) +
                             " has shape " + img.shape_str() + ", expected (3, " +
                             std::to_string(r) + ", " + std::to_string(r) + ")");
        for (std::size_t j = 0; j < img.numel(); ++j)
            if (img[j] < -1.0 || img[j] > 1.0)
                throw ValueError("gan_smoke_train: dataset image " + std::to_string(i) +
                                 " has values outside [-1, 1]");
    }

    constexpr std::size_t kBatch = 8;
    AdamState opt_g = AdamState::init(out.generator, 1e-3);
    AdamState opt_d = AdamState::init(out.discriminator, 2e-3);
    Rng rng = Rng(cfg.seed).fork(0x60);

    auto pick = [&](std::size_t n) {
        const auto i = static_cast<std::size_t>(rng.uniform(0.0, static_cast<double>(n)));
        return i < n ? i : n - 1;
    };

    for (std::size_t step = 0; step < steps; ++step) {
        try {
            std::vector<const Tensor*> reals;
            std::vector<LatentCode> latents;
            std::vector<NoiseBank> banks;
            std::vector<Tensor> fakes;
            for (std::size_t i = 0; i < kBatch; ++i) {
                reals.push_back(&dataset[pick(dataset.size())]);
                latents.push_back(LatentCode::sample(cfg, rng));
                banks.push_back(
                    NoiseBank::from_seed(cfg, mix_seed(cfg.seed, step * kBatch + i)));
                fakes.push_back(generator_forward(latents[i], banks[i], out.generator, cfg));
            }

            // discriminator update on held-fixed fakes
            {
                ad::Tape t;
                VarMap dv = lift_params(t, out.discriminator, true);
                ad::Var loss = t.constant(Tensor::scalar(0.0));
                for (std::size_t i = 0; i < kBatch; ++i) {
                    ad::Var sr = discriminator_graph(t, t.constant(*reals[i]), dv, cfg);
                    ad::Var sf = discriminator_graph(t, t.constant(fakes[i]), dv, cfg);
                    loss = ad::add(loss, ad::add(ad::softplus(ad::neg(sr)), ad::softplus(sf)));
                }
                loss = ad::mul_scalar(loss, 1.0 / static_cast<double>(kBatch));
                out.d_loss.push_back(loss.value()[0]);
                const ad::Gradients grads = t.backward(loss);
                adam_step(out.discriminator, named_gradients(dv, grads), opt_d);
            }

            // generator update through the frozen discriminator
            {
                ad::Tape t;
                VarMap gv = lift_params(t, out.generator, true);
                VarMap dv = lift_params(t, out.discriminator, false);
                ad::Var loss = t.constant(Tensor::scalar(0.0));
                for (std::size_t i = 0; i < kBatch; ++i) {
                    std::vector<ad::Var> nv;
                    nv.reserve(banks[i].maps.size());
                    for (const Tensor& map : banks[i].maps) nv.push_back(t.constant(map));
                    ad::Var img =
                        generator_graph(t, t.constant(latents[i].components), nv, gv, cfg);
                    loss = ad::add(loss,
                                   ad::softplus(ad::neg(discriminator_graph(t, img, dv, cfg))));
                }
                loss = ad::mul_scalar(loss, 1.0 / static_cast<double>(kBatch));
                out.g_loss.push_back(loss.value()[0]);
                const ad::Gradients grads = t.backward(loss);
                adam_step(out.generator, named_gradients(gv, grads), opt_g);
            }
        } catch (const ValueError& e) {
            throw NumericError(std::string("gan_smoke_train: ") + e.what(), step);
        }
    }

    const std::size_t probes = std::min<std::size_t>(dataset.size(), 32);
    double real_sum = 0.0;
    for (std::size_t i = 0; i < probes; ++i)
        real_sum += discriminator_forward(dataset[i], out.discriminator, cfg);
    out.mean_real_score = real_sum / static_cast<double>(probes);

    double fake_sum = 0.0;
    constexpr std::size_t kFakeProbes = 32;
    for (std::size_t i = 0; i < kFakeProbes; ++i) {
        const LatentCode z = LatentCode::sample(cfg, rng);
        const NoiseBank bank = NoiseBank::from_seed(cfg, mix_seed(cfg.seed ^ 0xFA4Eull, i));
        fake_sum += discriminator_forward(generator_forward(z, bank, out.generator, cfg),
                                          out.discriminator, cfg);
    }
    out.mean_fake_score = fake_sum / kFakeProbes;
    return out;
}

} // namespace morphlab
