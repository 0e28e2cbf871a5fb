#include "morphlab/features.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "morphlab/errors.hpp"

namespace morphlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_image(const char* op, const Tensor& image) {
    if (image.rank() != 3 || (image.extent(0) != 1 && image.extent(0) != 3))
        throw ShapeError(std::string(op) + ": expected (1,h,w) or (3,h,w) image, got shape " +
                         image.shape_str());
}

std::size_t clampi(std::ptrdiff_t i, std::size_t n) {
    if (i < 0) return 0;
    if (i >= static_cast<std::ptrdiff_t>(n)) return n - 1;
    return static_cast<std::size_t>(i);
}

Tensor to_gray(const Tensor& image) {
    const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
    Tensor g({1, h, w});
    if (c == 1) {
        for (std::size_t i = 0; i < h * w; ++i) g[i] = image[i];
    } else {
        const std::size_t hw = h * w;
        for (std::size_t i = 0; i < hw; ++i)
            g[i] = 0.299 * image[i] + 0.587 * image[hw + i] + 0.114 * image[2 * hw + i];
    }
    return g;
}

double fold_angle(double gy, double gx) {
    if (gy == 0.0 && gx == 0.0) return 0.0;
    double th = std::atan2(gy, gx);
    if (th < 0.0) th += kPi;
    if (th >= kPi) th -= kPi;
    return th;
}

} // namespace

// ---------------------------------------------------------------------------
// HOG

HOGDescriptor hog_features(const Tensor& image, const HOGConfig& cfg, bool soft) {
    require_image("hog_features", image);
    if (cfg.cell == 0 || cfg.bins == 0)
        throw ValueError("hog_features: cell size and bin count must be positive");
    const std::size_t h = image.extent(1), w = image.extent(2);
    if (h % cfg.cell != 0 || w % cfg.cell != 0)
        throw ShapeError("hog_features: image shape " + image.shape_str() +
                         " not divisible by cell size " + std::to_string(cfg.cell));

    const Tensor gray = to_gray(image);
    const std::size_t cy = h / cfg.cell, cx = w / cfg.cell;
    const double bin_width = kPi / static_cast<double>(cfg.bins);
    const double mag_base = std::sqrt(cfg.mag_eps);

    HOGDescriptor d;
    d.config = cfg;
    d.height = h;
    d.width = w;
    d.cells_y = cy;
    d.cells_x = cx;
    d.values = Tensor({cfg.bins * cy * cx}, 0.0);

    auto hist_at = [&](std::size_t bin, std::size_t ci, std::size_t cj) -> double& {
        return d.values[(bin * cy + ci) * cx + cj];
    };

    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double gx = gray.at3(0, i, clampi(static_cast<std::ptrdiff_t>(j) + 1, w)) -
                              gray.at3(0, i, clampi(static_cast<std::ptrdiff_t>(j) - 1, w));
            const double gy = gray.at3(0, clampi(static_cast<std::ptrdiff_t>(i) + 1, h), j) -
                              gray.at3(0, clampi(static_cast<std::ptrdiff_t>(i) - 1, h), j);
            const double mag = std::sqrt(gx * gx + gy * gy + cfg.mag_eps) - mag_base;
            const double pos = fold_angle(gy, gx) / bin_width; // in [0, bins)
            const std::size_t ci = i / cfg.cell, cj = j / cfg.cell;
            if (soft) {
                const std::size_t i0 = static_cast<std::size_t>(pos);
                const double frac = pos - static_cast<double>(i0);
                hist_at(i0 % cfg.bins, ci, cj) += (1.0 - frac) * mag;
                hist_at((i0 + 1) % cfg.bins, ci, cj) += frac * mag;
            } else {
                const std::size_t nearest =
                    static_cast<std::size_t>(std::floor(pos + 0.5)) % cfg.bins;
                hist_at(nearest, ci, cj) += mag;
            }
        }

    // per-cell L2 normalization: v / sqrt(|v|^2 + eps^2); zero cells stay zero
    for (std::size_t ci = 0; ci < cy; ++ci)
        for (std::size_t cj = 0; cj < cx; ++cj) {
            double n2 = 0.0;
            for (std::size_t b = 0; b < cfg.bins; ++b) {
                const double v = hist_at(b, ci, cj);
                n2 += v * v;
            }
            const double denom = std::sqrt(n2 + cfg.norm_eps * cfg.norm_eps);
            for (std::size_t b = 0; b < cfg.bins; ++b) hist_at(b, ci, cj) /= denom;
        }
    return d;
}

ad::Var hog_graph(ad::Tape& t, ad::Var image, const HOGConfig& cfg) {
    require_image("hog_graph", image.value());
    if (cfg.cell == 0 || cfg.bins == 0)
        throw ValueError("hog_graph: cell size and bin count must be positive");
    const std::size_t h = image.value().extent(1), w = image.value().extent(2);
    if (h % cfg.cell != 0 || w % cfg.cell != 0)
        throw ShapeError("hog_graph: image shape " + image.value().shape_str() +
                         " not divisible by cell size " + std::to_string(cfg.cell));

    const std::size_t cy = h / cfg.cell, cx = w / cfg.cell;
    const double bin_width = kPi / static_cast<double>(cfg.bins);
    const double nbins = static_cast<double>(cfg.bins);

    ad::Var gray = ad::luminance(image);
    ad::Var gx = ad::grad_x(gray);
    ad::Var gy = ad::grad_y(gray);
    ad::Var m2 = ad::add(ad::mul(gx, gx), ad::mul(gy, gy));
    ad::Var mag = ad::add_scalar(ad::sqrt_v(ad::add_scalar(m2, cfg.mag_eps)),
                                 -std::sqrt(cfg.mag_eps));
    ad::Var pos = ad::mul_scalar(ad::atan2_mod_pi(gy, gx), 1.0 / bin_width);

    // circular triangular vote: weight_b = relu(1 - min(|pos-b|, bins-|pos-b|))
    std::vector<ad::Var> pooled;
    pooled.reserve(cfg.bins);
    for (std::size_t b = 0; b < cfg.bins; ++b) {
        ad::Var a = ad::abs_v(ad::add_scalar(pos, -static_cast<double>(b)));
        ad::Var dist = ad::min_ew(a, ad::add_scalar(ad::neg(a), nbins));
        ad::Var weight = ad::relu(ad::add_scalar(ad::neg(dist), 1.0));
        pooled.push_back(ad::cell_pool_sum(ad::mul(weight, mag), cfg.cell));
    }

    ad::Var n2 = ad::mul(pooled[0], pooled[0]);
    for (std::size_t b = 1; b < cfg.bins; ++b)
        n2 = ad::add(n2, ad::mul(pooled[b], pooled[b]));
    ad::Var denom = ad::sqrt_v(ad::add_scalar(n2, cfg.norm_eps * cfg.norm_eps));

    std::vector<ad::Var> flat;
    flat.reserve(cfg.bins);
    for (std::size_t b = 0; b < cfg.bins; ++b)
        flat.push_back(ad::reshape(ad::div(pooled[b], denom), {cy * cx}));
    return ad::concat(0, flat);
}

// ---------------------------------------------------------------------------
// cosine distance

double cosine_biometric_distance(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel())
        throw ShapeError("cosine_biometric_distance: lengths " + std::to_string(a.numel()) +
                         " and " + std::to_string(b.numel()) + " differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na == 0.0 && nb == 0.0) return 0.0;
    constexpr double eps = 1e-12;
    return 1.0 - dot / (std::max(na, eps) * std::max(nb, eps));
}

ad::Var cosine_distance_graph(ad::Tape& t, ad::Var a, ad::Var b) {
    if (a.numel() != b.numel())
        throw ShapeError("cosine_distance_graph: lengths " + std::to_string(a.numel()) +
                         " and " + std::to_string(b.numel()) + " differ");
    // degenerate corner decided on forward values: two zero vectors are
    // identical inputs, distance 0 (locally constant, no gradient)
    double na2 = 0.0, nb2 = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        na2 += a.value()[i] * a.value()[i];
        nb2 += b.value()[i] * b.value()[i];
    }
    if (na2 == 0.0 && nb2 == 0.0) return t.constant(Tensor::scalar(0.0));

    constexpr double eps = 1e-12;
    ad::Var dot = ad::sum_all(ad::mul(a, b));
    ad::Var na = ad::max_scalar(ad::sqrt_v(ad::sum_all(ad::mul(a, a))), eps);
    ad::Var nb = ad::max_scalar(ad::sqrt_v(ad::sum_all(ad::mul(b, b))), eps);
    ad::Var cosine = ad::div(dot, ad::mul(na, nb));
    return ad::add_scalar(ad::neg(cosine), 1.0);
}

// ---------------------------------------------------------------------------
// LBP

std::uint64_t LBPHistogram::total() const {
    std::uint64_t n = 0;
    for (std::uint64_t c : counts) n += c;
    return n;
}

std::array<double, 256> LBPHistogram::normalized() const {
    std::array<double, 256> f{};
    const double n = static_cast<double>(total());
    if (n == 0.0) return f;
    for (std::size_t i = 0; i < 256; ++i) f[i] = static_cast<double>(counts[i]) / n;
    return f;
}

LBPHistogram lbp_histogram(const Tensor& image) {
    require_image("lbp_histogram", image);
    const std::size_t h = image.extent(1), w = image.extent(2);
    if (h < 3 || w < 3)
        throw ShapeError("lbp_histogram: image shape " + image.shape_str() +
                         " smaller than 3x3");
    const Tensor gray = to_gray(image);

    // clockwise from top-left, LSB first
    static constexpr int dy[8] = {-1, -1, -1, 0, 1, 1, 1, 0};
    static constexpr int dx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};

    LBPHistogram hist;
    for (std::size_t i = 1; i + 1 < h; ++i)
        for (std::size_t j = 1; j + 1 < w; ++j) {
            const double center = gray.at3(0, i, j);
            unsigned code = 0;
            for (int bit = 0; bit < 8; ++bit) {
                const double neighbor = gray.at3(0, i + dy[bit], j + dx[bit]);
                if (neighbor >= center) code |= 1u << bit;
            }
            hist.counts[code] += 1;
        }
    return hist;
}

// ---------------------------------------------------------------------------
// perceptual pyramid

namespace {

Tensor he_conv_init(Rng& rng, std::size_t co, std::size_t ci, std::size_t k) {
    const double scale = std::sqrt(2.0 / static_cast<double>(ci * k * k));
    return rng.normal_tensor({co, ci, k, k}, scale);
}

} // namespace

ParamStore perceptual_params(const PerceptualConfig& cfg, std::size_t in_channels,
                             std::uint64_t seed) {
    Rng rng = Rng(seed).fork(0x9ec7);
    ParamStore p;
    std::size_t ci = in_channels;
    for (std::size_t j = 0; j < 4; ++j) {
        Rng stage = rng.fork(j);
        const std::string base = "pcpt.stage" + std::to_string(j);
        p.emplace(base + ".weight", he_conv_init(stage, cfg.channels[j], ci, 3));
        p.emplace(base + ".bias", Tensor({cfg.channels[j]}, 0.0));
        ci = cfg.channels[j];
    }
    return p;
}

std::array<ad::Var, 4> perceptual_graph(ad::Tape& t, ad::Var image, const ParamStore& params,
                                        const PerceptualConfig& cfg) {
    (void)cfg;
    const Tensor& iv = image.value();
    require_image("perceptual_graph", iv);
    if (iv.extent(1) % 8 != 0 || iv.extent(2) % 8 != 0)
        throw ShapeError("perceptual_graph: image shape " + iv.shape_str() +
                         " must be divisible by 8");

    auto stage = [&](ad::Var x, int j) {
        const std::string base = "pcpt.stage" + std::to_string(j);
        ad::Var c = ad::conv2d(x, t.constant(param(params, base + ".weight")));
        c = ad::add_channel_bias(c, t.constant(param(params, base + ".bias")));
        return ad::leaky_relu(c);
    };

    std::array<ad::Var, 4> out = {image, image, image, image};
    out[0] = stage(image, 0);
    out[1] = stage(out[0], 1);
    ad::Var down = ad::avgpool2x(ad::avgpool2x(out[1]));
    out[2] = stage(down, 2);
    out[3] = stage(ad::avgpool2x(out[2]), 3);
    return out;
}

FeaturePyramid perceptual_pyramid(const Tensor& image, const ParamStore& params,
                                  const PerceptualConfig& cfg) {
    ad::Tape t;
    const auto stages = perceptual_graph(t, t.constant(image), params, cfg);
    FeaturePyramid p;
    for (std::size_t j = 0; j < 4; ++j) p.stages[j] = stages[j].value();
    return p;
}

// ---------------------------------------------------------------------------
// landmarks

ParamStore landmark_params(const LandmarkHeadConfig& cfg, std::size_t in_channels,
                           std::uint64_t seed) {
    if (cfg.k == 0) throw ValueError("landmark_params: k must be positive");
    Rng rng = Rng(seed).fork(0x1a7d);
    Rng r1 = rng.fork(0), r2 = rng.fork(1);
    ParamStore p;
    p.emplace("lmk.conv0.weight", he_conv_init(r1, cfg.hidden, in_channels, 3));
    p.emplace("lmk.conv0.bias", Tensor({cfg.hidden}, 0.0));
    p.emplace("lmk.conv1.weight", he_conv_init(r2, cfg.k, cfg.hidden, 3));
    p.emplace("lmk.conv1.bias", Tensor({cfg.k}, 0.0));
    return p;
}

ad::Var landmark_graph(ad::Tape& t, ad::Var image, const ParamStore& params,
                       const LandmarkHeadConfig& cfg) {
    if (cfg.k == 0) throw ValueError("landmark_graph: k must be positive");
    const Tensor& iv = image.value();
    require_image("landmark_graph", iv);
    const std::size_t h = iv.extent(1), w = iv.extent(2);

    ad::Var hdn = ad::conv2d(image, t.constant(param(params, "lmk.conv0.weight")));
    hdn = ad::leaky_relu(ad::add_channel_bias(hdn, t.constant(param(params, "lmk.conv0.bias"))));
    ad::Var maps = ad::conv2d(hdn, t.constant(param(params, "lmk.conv1.weight")));
    maps = ad::add_channel_bias(maps, t.constant(param(params, "lmk.conv1.bias")));

    ad::Var flat = ad::reshape(ad::mul_scalar(maps, cfg.temperature), {cfg.k, h * w});
    ad::Var probs = ad::softmax_lastaxis(flat);

    Tensor grid({h * w, 2});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            grid.at2(i * w + j, 0) = static_cast<double>(j); // x
            grid.at2(i * w + j, 1) = static_cast<double>(i); // y
        }
    return ad::matmul(probs, t.constant(grid));
}

Tensor soft_landmarks(const Tensor& image, const ParamStore& params,
                      const LandmarkHeadConfig& cfg) {
    ad::Tape t;
    return landmark_graph(t, t.constant(image), params, cfg).value();
}

std::pair<double, double> soft_argmax(const Tensor& mass) {
    if (mass.rank() != 2)
        throw ShapeError("soft_argmax: expected (h,w) mass map, got shape " + mass.shape_str());
    const std::size_t h = mass.extent(0), w = mass.extent(1);
    double total = 0.0, ex = 0.0, ey = 0.0;
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double m = mass.at2(i, j);
            if (m < 0.0) throw ValueError("soft_argmax: negative mass");
            total += m;
            ex += m * static_cast<double>(j);
            ey += m * static_cast<double>(i);
        }
    if (total <= 0.0) throw ValueError("soft_argmax: mass map sums to zero");
    return {ex / total, ey / total};
}

// ---------------------------------------------------------------------------
// external embeddings / annotations

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s, const std::string& path, std::size_t line_no) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    while (end && *end == ' ') ++end;
    if (end == begin || (end && *end != '\0'))
        throw IoError(path + ":" + std::to_string(line_no) + ": unparseable number '" + s + "'");
    if (!std::isfinite(v))
        throw IoError(path + ":" + std::to_string(line_no) + ": non-finite number '" + s + "'");
    return v;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

} // namespace

EmbeddingTable load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embedding file '" + path + "'");

    EmbeddingTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto fields = split_csv(stripped);
        if (fields.size() < 2)
            throw IoError(path + ":" + std::to_string(line_no) + ": expected id,v1,...");
        const std::string id = trim(fields[0]);
        if (id.empty())
            throw IoError(path + ":" + std::to_string(line_no) + ": empty id");
        std::vector<double> vec;
        vec.reserve(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i)
            vec.push_back(parse_double(trim(fields[i]), path, line_no));
        if (table.dim == 0) {
            table.dim = vec.size();
        } else if (vec.size() != table.dim) {
            throw IoError(path + ":" + std::to_string(line_no) + ": vector length " +
                          std::to_string(vec.size()) + " does not match established length " +
                          std::to_string(table.dim));
        }
        if (!table.vectors.emplace(id, std::move(vec)).second)
            throw IoError(path + ":" + std::to_string(line_no) + ": duplicate id '" + id + "'");
    }
    return table;
}

double embedding_similarity(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size())
        throw ShapeError("embedding_similarity: lengths " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()) + " differ");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    constexpr double eps = 1e-12;
    double sim = dot / (std::max(std::sqrt(nu), eps) * std::max(std::sqrt(nv), eps));
    return std::min(1.0, std::max(-1.0, sim));
}

std::map<std::string, Tensor> load_landmark_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open landmark file '" + path + "'");

    std::map<std::string, Tensor> table;
    std::size_t k = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto fields = split_csv(stripped);
        if (fields.size() < 3 || (fields.size() - 1) % 2 != 0)
            throw IoError(path + ":" + std::to_string(line_no) +
                          ": expected id,x1,y1,...,xk,yk");
        const std::string id = trim(fields[0]);
        const std::size_t row_k = (fields.size() - 1) / 2;
        if (k == 0) {
            k = row_k;
        } else if (row_k != k) {
            throw IoError(path + ":" + std::to_string(line_no) + ": landmark count " +
                          std::to_string(row_k) + " does not match established count " +
                          std::to_string(k));
        }
        Tensor pts({row_k, 2});
        for (std::size_t i = 0; i < row_k; ++i) {
            pts.at2(i, 0) = parse_double(trim(fields[1 + 2 * i]), path, line_no);
            pts.at2(i, 1) = parse_double(trim(fields[2 + 2 * i]), path, line_no);
        }
        if (!table.emplace(id, std::move(pts)).second)
            throw IoError(path + ":" + std::to_string(line_no) + ": duplicate id '" + id + "'");
    }
    return table;
}

} // namespace morphlab
