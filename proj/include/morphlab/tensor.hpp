#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "morphlab/errors.hpp"

namespace morphlab {

// Storage precision tag. Values tagged f32 are kept exactly
// float-representable so archive round-trips are bitwise.
enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

const char* dtype_name(DType dt);

// Dense row-major n-dimensional array of doubles.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0, DType dtype = DType::f64);

    static Tensor scalar(double value);
    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                            DType dtype = DType::f64);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    DType dtype() const noexcept { return dtype_; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Extent of one axis, bounds-checked.
    std::size_t extent(std::size_t axis) const;

    // 2-d / 3-d / 4-d offset helpers for the common layouts
    // (rows, cols), (channels, h, w) and (out_c, in_c, kh, kw).
    double& at2(std::size_t i, std::size_t j);
    double at2(std::size_t i, std::size_t j) const;
    double& at3(std::size_t c, std::size_t h, std::size_t w);
    double at3(std::size_t c, std::size_t h, std::size_t w) const;
    double& at4(std::size_t o, std::size_t i, std::size_t h, std::size_t w);
    double at4(std::size_t o, std::size_t i, std::size_t h, std::size_t w) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    // Returns a copy with a new shape; element count must match.
    Tensor reshaped(std::vector<std::size_t> new_shape) const;

    // Rounds every value through binary32 and tags the tensor f32.
    void quantize_f32();

    // "(a, b, c)" for diagnostics.
    std::string shape_str() const;
    static std::string shape_str(const std::vector<std::size_t>& shape);

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    DType dtype_ = DType::f64;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

// Named parameter set; ordered so iteration, serialization and
// optimizer traversal are deterministic.
using ParamStore = std::map<std::string, Tensor>;

const Tensor& param(const ParamStore& store, const std::string& name);

// Deterministic RNG: std::mt19937_64 (fully specified by the standard)
// with explicit uniform/normal algorithms, since std:: distributions are
// implementation-defined and would break cross-platform reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);  // [lo, hi)
    double normal();                       // standard normal, Box-Muller

    // Independent substream derived from this seed and a stream index.
    Rng fork(std::uint64_t stream) const;

    Tensor uniform_tensor(std::vector<std::size_t> shape, double lo, double hi);
    Tensor normal_tensor(std::vector<std::size_t> shape, double stddev = 1.0);

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace morphlab
