#include "morphlab/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace morphlab {

const char* dtype_name(DType dt) {
    return dt == DType::f32 ? "f32" : "f64";
}

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) throw ShapeError("tensor extent must be positive, got 0 in " + Tensor::shape_str(shape));
        if (n > std::numeric_limits<std::size_t>::max() / e)
            throw ShapeError("tensor extent product overflows in " + Tensor::shape_str(shape));
        n *= e;
    }
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill, DType dtype)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill), dtype_(dtype) {
    if (dtype_ == DType::f32) quantize_f32();
}

Tensor Tensor::scalar(double value) {
    Tensor t({1});
    t.data_[0] = value;
    return t;
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data, DType dtype) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    t.dtype_ = dtype;
    if (dtype == DType::f32) t.quantize_f32();
    return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str());
    return shape_[axis];
}

double& Tensor::at2(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
}
double Tensor::at2(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
}
double& Tensor::at3(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
}
double Tensor::at3(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
}
double& Tensor::at4(std::size_t o, std::size_t i, std::size_t h, std::size_t w) {
    return data_[((o * shape_[1] + i) * shape_[2] + h) * shape_[3] + w];
}
double Tensor::at4(std::size_t o, std::size_t i, std::size_t h, std::size_t w) const {
    return data_[((o * shape_[1] + i) * shape_[2] + h) * shape_[3] + w];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
    if (shape_numel(new_shape) != data_.size())
        throw ShapeError("reshape: cannot view " + shape_str() + " as " + shape_str(new_shape));
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    t.dtype_ = dtype_;
    return t;
}

void Tensor::quantize_f32() {
    for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
    dtype_ = DType::f32;
}

std::string Tensor::shape_str() const {
    return shape_str(shape_);
}

std::string Tensor::shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

const Tensor& param(const ParamStore& store, const std::string& name) {
    auto it = store.find(name);
    if (it == store.end()) throw ValueError("missing parameter '" + name + "'");
    return it->second;
}

Rng::Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

std::uint64_t Rng::next_u64() {
    return engine_();
}

double Rng::uniform() {
    // 53 high-quality bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

Rng Rng::fork(std::uint64_t stream) const {
    // splitmix64 mix of (seed, stream); decorrelates substreams
    std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z = z ^ (z >> 31);
    return Rng(z);
}

Tensor Rng::uniform_tensor(std::vector<std::size_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    return t;
}

Tensor Rng::normal_tensor(std::vector<std::size_t> shape, double stddev) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = stddev * normal();
    return t;
}

} // namespace morphlab
