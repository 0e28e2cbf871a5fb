#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "morphlab/autodiff.hpp"
#include "morphlab/tensor.hpp"

namespace morphlab {

// ---------------------------------------------------------------------------
// histogram of oriented gradients

struct HOGConfig {
    std::size_t cell = 8;
    std::size_t bins = 9;      // unsigned orientations over [0, pi)
    double norm_eps = 1e-6;    // per-cell L2 normalization floor
    double mag_eps = 1e-8;     // softens the magnitude sqrt at zero gradient
};

// Flat descriptor, bin-major layout: values[bin][cell_y][cell_x].
// Length = bins * cells_y * cells_x; entries nonnegative.
struct HOGDescriptor {
    HOGConfig config;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t cells_y = 0;
    std::size_t cells_x = 0;
    Tensor values;
};

// Plain evaluator. Soft mode splits each vote linearly between the two
// adjacent orientation bins (circularly); hard mode votes the nearest bin.
HOGDescriptor hog_features(const Tensor& image, const HOGConfig& cfg = {}, bool soft = true);

// Differentiable soft-voting path; produces the same values as the plain
// soft evaluator.
ad::Var hog_graph(ad::Tape& t, ad::Var image, const HOGConfig& cfg = {});

// 1 - dot/(max(|a|,eps)*max(|b|,eps)) with eps=1e-12. Two all-zero
// descriptors have distance 0: identical degenerate inputs are not penalized.
double cosine_biometric_distance(const Tensor& a, const Tensor& b);
ad::Var cosine_distance_graph(ad::Tape& t, ad::Var a, ad::Var b);

// ---------------------------------------------------------------------------
// local binary patterns

// 8-neighbor codes over interior pixels; bit set when neighbor >= center.
// Bit order, LSB first: top-left, top, top-right, right, bottom-right,
// bottom, bottom-left, left (clockwise from the top-left neighbor).
struct LBPHistogram {
    std::array<std::uint64_t, 256> counts{};

    std::uint64_t total() const;
    std::array<double, 256> normalized() const;
};

LBPHistogram lbp_histogram(const Tensor& image);

// ---------------------------------------------------------------------------
// perceptual feature pyramid

// Four conv+leaky-relu stages at full, full, quarter and eighth resolution
// (average-pool downsampling between them).
struct PerceptualConfig {
    std::array<std::size_t, 4> channels{8, 8, 16, 32};
};

ParamStore perceptual_params(const PerceptualConfig& cfg, std::size_t in_channels,
                             std::uint64_t seed);

struct FeaturePyramid {
    std::array<Tensor, 4> stages;
};

std::array<ad::Var, 4> perceptual_graph(ad::Tape& t, ad::Var image, const ParamStore& params,
                                        const PerceptualConfig& cfg = {});
FeaturePyramid perceptual_pyramid(const Tensor& image, const ParamStore& params,
                                  const PerceptualConfig& cfg = {});

// ---------------------------------------------------------------------------
// soft landmark head

struct LandmarkHeadConfig {
    std::size_t k = 68;
    std::size_t hidden = 8;
    double temperature = 1.0;
};

ParamStore landmark_params(const LandmarkHeadConfig& cfg, std::size_t in_channels,
                           std::uint64_t seed);

// Returns (k, 2) rows of (x, y): seeded conv heatmaps, spatial softmax,
// expectation over the pixel grid. Coordinates are convex combinations of
// grid positions, so they always lie inside the image.
ad::Var landmark_graph(ad::Tape& t, ad::Var image, const ParamStore& params,
                       const LandmarkHeadConfig& cfg = {});
Tensor soft_landmarks(const Tensor& image, const ParamStore& params,
                      const LandmarkHeadConfig& cfg = {});

// Expectation of the pixel grid under a nonnegative mass map (h, w),
// normalized by its total. Returns (x, y).
std::pair<double, double> soft_argmax(const Tensor& mass);

// ---------------------------------------------------------------------------
// external embeddings and annotations

struct EmbeddingTable {
    std::size_t dim = 0;
    std::map<std::string, std::vector<double>> vectors;

    bool empty() const { return vectors.empty(); }
};

// Plain text, one record per line: id,v1,v2,...,vn. Ragged rows, duplicate
// ids and unparseable values are rejected with line numbers.
EmbeddingTable load_embeddings(const std::string& path);

// Cosine similarity in [-1, 1]; norms floored at 1e-12.
double embedding_similarity(const std::vector<double>& u, const std::vector<double>& v);

// Plain text, one record per line: id,x1,y1,...,xk,yk -> (k, 2) tensors.
std::map<std::string, Tensor> load_landmark_annotations(const std::string& path);

} // namespace morphlab
