#include "morphlab/io.hpp"

#include <bit>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace morphlab {

namespace {

// ---------------------------------------------------------------------------
// raw file access

std::string read_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(std::string(what) + ": cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError(std::string(what) + ": read failed on '" + path + "'");
    return buf.str();
}

void write_file(const std::string& path, const std::string& bytes, const char* what) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(std::string(what) + ": cannot open '" + path + "' for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.flush();
    if (!out.good()) throw IoError(std::string(what) + ": write failed on '" + path + "'");
}

// ---------------------------------------------------------------------------
// little-endian packing

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

// Bounds-checked reader; every failure carries the byte offset.
struct Cursor {
    const std::string& bytes;
    const char* what;
    std::size_t pos = 0;

    std::size_t remaining() const { return bytes.size() - pos; }

    void need(std::size_t n, const std::string& ctx) {
        if (remaining() < n)
            throw IoError(std::string(what) + ": truncated at offset " + std::to_string(pos) +
                          " (" + ctx + ")");
    }

    std::uint8_t u8(const std::string& ctx) {
        need(1, ctx);
        return std::uint8_t(bytes[pos++]);
    }

    std::uint32_t u32(const std::string& ctx) {
        need(4, ctx);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }

    std::uint64_t u64(const std::string& ctx) {
        need(8, ctx);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(bytes[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }

    std::string raw(std::size_t n, const std::string& ctx) {
        need(n, ctx);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

double read_f64(Cursor& c, const std::string& ctx) {
    return std::bit_cast<double>(c.u64(ctx));
}

double read_f32(Cursor& c, const std::string& ctx) {
    return double(std::bit_cast<float>(c.u32(ctx)));
}

// ---------------------------------------------------------------------------
// text helpers

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(std::uint8_t(s[a]))) ++a;
    while (b > a && std::isspace(std::uint8_t(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t end = s.find(sep, start);
        parts.push_back(trim(s.substr(start, end - start)));
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return parts;
}

// Splits text into lines, dropping a trailing carriage return from each.
std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        std::string line = text.substr(start, end == std::string::npos ? end : end - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        if (end == std::string::npos) break;
        start = end + 1;
    }
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double_field(const std::string& field, const char* what, std::size_t line) {
    const std::string t = trim(field);
    if (t.empty())
        throw IoError(std::string(what) + ": line " + std::to_string(line) + ": empty number");
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size())
        throw IoError(std::string(what) + ": line " + std::to_string(line) + ": bad number '" +
                      t + "'");
    if (!std::isfinite(v))
        throw IoError(std::string(what) + ": line " + std::to_string(line) +
                      ": non-finite value '" + t + "'");
    return v;
}

struct CsvRow {
    std::vector<std::string> fields;
    std::size_t line = 0;
};

// Blank lines are skipped; one leading line equal to `header` is tolerated.
std::vector<CsvRow> load_csv_rows(const std::string& path, const char* what,
                                  const std::string& header) {
    const std::string text = read_file(path, what);
    std::vector<CsvRow> rows;
    const std::vector<std::string> lines = split_lines(text);
    bool first_data = true;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string line = trim(lines[i]);
        if (line.empty()) continue;
        if (first_data) {
            first_data = false;
            if (line == header) continue;
        }
        rows.push_back({split(line, ','), i + 1});
    }
    return rows;
}

} // namespace

// ---------------------------------------------------------------------------
// checkpoint archive

namespace {

constexpr char kCheckpointMagic[] = "MGFCKPT1";

std::size_t dtype_size(DType dt) { return dt == DType::f32 ? 4 : 8; }

} // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
    std::string out;
    out.append(kCheckpointMagic, 8);
    put_u64(out, params.size());
    for (const auto& [name, tensor] : params) {
        put_u32(out, std::uint32_t(name.size()));
        out.append(name);
        out.push_back(char(std::uint8_t(tensor.dtype())));
        put_u32(out, std::uint32_t(tensor.rank()));
        for (std::size_t e : tensor.shape()) put_u64(out, e);
    }
    for (const auto& [name, tensor] : params) {
        (void)name;
        const double* d = tensor.data();
        if (tensor.dtype() == DType::f32)
            for (std::size_t i = 0; i < tensor.numel(); ++i)
                put_u32(out, std::bit_cast<std::uint32_t>(float(d[i])));
        else
            for (std::size_t i = 0; i < tensor.numel(); ++i)
                put_u64(out, std::bit_cast<std::uint64_t>(d[i]));
    }
    write_file(path, out, "checkpoint");
}

ParamStore load_checkpoint(const std::string& path) {
    const std::string bytes = read_file(path, "checkpoint");
    Cursor c{bytes, "checkpoint"};
    if (c.raw(8, "magic") != kCheckpointMagic)
        throw IoError("checkpoint: bad magic in '" + path + "'");
    const std::uint64_t count = c.u64("entry count");
    if (count > (std::uint64_t(1) << 20))
        throw IoError("checkpoint: implausible entry count " + std::to_string(count));

    struct Entry {
        std::string name;
        DType dtype = DType::f64;
        std::vector<std::size_t> shape;
        std::size_t payload_bytes = 0;
    };
    std::vector<Entry> manifest;
    manifest.reserve(std::size_t(count));
    std::set<std::string> seen;

    for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t entry_off = c.pos;
        Entry e;
        const std::uint32_t name_len = c.u32("name length");
        if (name_len == 0 || name_len > 4096)
            throw IoError("checkpoint: bad name length " + std::to_string(name_len) +
                          " at offset " + std::to_string(entry_off));
        e.name = c.raw(name_len, "entry name");
        if (!seen.insert(e.name).second)
            throw IoError("checkpoint: duplicate entry '" + e.name + "' at offset " +
                          std::to_string(entry_off));
        const std::uint8_t dt = c.u8("dtype of '" + e.name + "'");
        if (dt > 1)
            throw IoError("checkpoint: unknown dtype code " + std::to_string(dt) +
                          " for entry '" + e.name + "' at offset " + std::to_string(c.pos - 1));
        e.dtype = DType(dt);
        const std::uint32_t rank = c.u32("rank of '" + e.name + "'");
        if (rank > 8)
            throw IoError("checkpoint: rank " + std::to_string(rank) + " too large for entry '" +
                          e.name + "' at offset " + std::to_string(c.pos - 4));
        std::size_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const std::size_t ext_off = c.pos;
            const std::uint64_t ext = c.u64("extent of '" + e.name + "'");
            if (ext == 0 || ext > std::numeric_limits<std::size_t>::max() ||
                numel > std::numeric_limits<std::size_t>::max() / std::size_t(ext))
                throw IoError("checkpoint: extent overflow for entry '" + e.name +
                              "' at offset " + std::to_string(ext_off));
            numel *= std::size_t(ext);
            e.shape.push_back(std::size_t(ext));
        }
        const std::size_t elem = dtype_size(e.dtype);
        if (numel > std::numeric_limits<std::size_t>::max() / elem)
            throw IoError("checkpoint: extent overflow for entry '" + e.name + "' at offset " +
                          std::to_string(entry_off));
        e.payload_bytes = numel * elem;
        manifest.push_back(std::move(e));
    }

    // Validate every payload bound before touching any payload byte.
    std::size_t off = c.pos;
    for (const Entry& e : manifest) {
        if (e.payload_bytes > bytes.size() || off > bytes.size() - e.payload_bytes)
            throw IoError("checkpoint: payload truncated: entry '" + e.name + "' needs " +
                          std::to_string(e.payload_bytes) + " bytes at offset " +
                          std::to_string(off));
        off += e.payload_bytes;
    }
    if (off != bytes.size())
        throw IoError("checkpoint: " + std::to_string(bytes.size() - off) +
                      " trailing bytes after payloads");

    ParamStore params;
    for (const Entry& e : manifest) {
        std::vector<double> data(e.payload_bytes / dtype_size(e.dtype));
        for (std::size_t i = 0; i < data.size(); ++i)
            data[i] = e.dtype == DType::f32 ? read_f32(c, e.name) : read_f64(c, e.name);
        params.emplace(e.name, Tensor::from_data(e.shape, std::move(data), e.dtype));
    }
    return params;
}

// ---------------------------------------------------------------------------
// latent file

void save_latent(const LatentCode& z, const std::string& path) {
    std::string out;
    put_u32(out, std::uint32_t(z.k_local()));
    put_u32(out, std::uint32_t(z.d()));
    const double* d = z.components.data();
    for (std::size_t i = 0; i < z.components.numel(); ++i)
        put_u64(out, std::bit_cast<std::uint64_t>(d[i]));
    write_file(path, out, "latent file");
}

LatentCode load_latent(const std::string& path) {
    const std::string bytes = read_file(path, "latent file");
    Cursor c{bytes, "latent file"};
    const std::uint32_t k = c.u32("k_local");
    const std::uint32_t d = c.u32("d");
    if (k == 0 || d == 0 || k > 65535 || d > 65535)
        throw IoError("latent file: implausible header (k_local=" + std::to_string(k) +
                      ", d=" + std::to_string(d) + ") in '" + path + "'");
    const std::size_t n = (std::size_t(k) + 1) * d;
    if (bytes.size() != 8 + 8 * n)
        throw IoError("latent file: length " + std::to_string(bytes.size()) +
                      " does not match header (expected " + std::to_string(8 + 8 * n) +
                      " bytes) in '" + path + "'");
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        data[i] = read_f64(c, "latent values");
        if (!std::isfinite(data[i]))
            throw ValueError("latent file: non-finite value at index " + std::to_string(i) +
                             " in '" + path + "'");
    }
    LatentCode z;
    z.components = Tensor::from_data({std::size_t(k) + 1, d}, std::move(data));
    return z;
}

// ---------------------------------------------------------------------------
// PPM images

namespace {

// Skips whitespace and '#' comment lines between header tokens.
void skip_ppm_separators(const std::string& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (std::isspace(std::uint8_t(bytes[pos]))) {
            ++pos;
        } else if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
}

std::size_t read_ppm_uint(const std::string& bytes, std::size_t& pos, const char* field) {
    skip_ppm_separators(bytes, pos);
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(std::uint8_t(bytes[pos]))) ++pos;
    if (pos == start)
        throw IoError(std::string("image: malformed PPM header (bad ") + field + ")");
    std::size_t v = 0;
    for (std::size_t i = start; i < pos; ++i) {
        v = v * 10 + std::size_t(bytes[i] - '0');
        if (v > 1u << 20)
            throw IoError(std::string("image: implausible ") + field + " in PPM header");
    }
    return v;
}

} // namespace

Tensor read_image(const std::string& path) {
    const std::string bytes = read_file(path, "image");
    std::size_t pos = 0;
    skip_ppm_separators(bytes, pos);
    if (bytes.size() - pos < 2 || bytes[pos] != 'P' || bytes[pos + 1] != '6')
        throw IoError("image: '" + path + "' is not a binary PPM (P6) file");
    pos += 2;
    const std::size_t w = read_ppm_uint(bytes, pos, "width");
    const std::size_t h = read_ppm_uint(bytes, pos, "height");
    const std::size_t maxval = read_ppm_uint(bytes, pos, "maxval");
    if (w == 0 || h == 0) throw IoError("image: zero dimension in PPM header");
    if (maxval != 255)
        throw IoError("image: only maxval 255 is supported, got " + std::to_string(maxval));
    if (pos >= bytes.size() || !std::isspace(std::uint8_t(bytes[pos])))
        throw IoError("image: malformed PPM header (missing separator after maxval)");
    ++pos;
    const std::size_t need = w * h * 3;
    if (bytes.size() - pos < need)
        throw IoError("image: PPM pixel data truncated in '" + path + "' (expected " +
                      std::to_string(need) + " bytes, found " +
                      std::to_string(bytes.size() - pos) + ")");
    if (bytes.size() - pos > need)
        throw IoError("image: trailing bytes after PPM pixel data in '" + path + "'");
    Tensor img({3, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double v = double(std::uint8_t(bytes[pos++]));
                img.at3(ch, y, x) = 2.0 * v / 255.0 - 1.0;
            }
    return img;
}

void write_image(const Tensor& image, const std::string& path) {
    if (image.rank() != 3 || image.extent(0) != 3)
        throw ShapeError("image: expected shape (3, h, w), got " +
                         Tensor::shape_str(image.shape()));
    const std::size_t h = image.extent(1), w = image.extent(2);
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double v = image.at3(ch, y, x);
                if (!std::isfinite(v))
                    throw ValueError("image: non-finite pixel value at (" + std::to_string(ch) +
                                     ", " + std::to_string(y) + ", " + std::to_string(x) + ")");
                double q = std::round((v + 1.0) * 127.5); // half away from zero
                if (q < 0.0) q = 0.0;
                if (q > 255.0) q = 255.0;
                out.push_back(char(std::uint8_t(q)));
            }
    write_file(path, out, "image");
}

// ---------------------------------------------------------------------------
// CSV tables

void save_trace(const std::vector<TraceRow>& trace, const std::string& path) {
    std::string out = "step,total,wing,biometric,perceptual,mse\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out += std::to_string(i + 1);
        out += ',' + fmt_double(trace[i].total);
        out += ',' + fmt_double(trace[i].wing);
        out += ',' + fmt_double(trace[i].biometric);
        out += ',' + fmt_double(trace[i].perceptual);
        out += ',' + fmt_double(trace[i].mse);
        out += '\n';
    }
    write_file(path, out, "trace");
}

std::vector<double> load_scores(const std::string& path) {
    std::vector<double> scores;
    for (const CsvRow& row : load_csv_rows(path, "scores", "id,score")) {
        if (row.fields.size() != 2)
            throw IoError("scores: line " + std::to_string(row.line) +
                          ": expected 'id,score', got " + std::to_string(row.fields.size()) +
                          " fields");
        scores.push_back(parse_double_field(row.fields[1], "scores", row.line));
    }
    return scores;
}

std::vector<MorphTrial> load_morph_trials(const std::string& path) {
    std::vector<MorphTrial> trials;
    for (const CsvRow& row :
         load_csv_rows(path, "morph trials", "morph_id,sim_subject1,sim_subject2")) {
        if (row.fields.size() != 3)
            throw IoError("morph trials: line " + std::to_string(row.line) +
                          ": expected 'morph_id,sim_subject1,sim_subject2'");
        MorphTrial t;
        t.id = row.fields[0];
        t.sim1 = parse_double_field(row.fields[1], "morph trials", row.line);
        t.sim2 = parse_double_field(row.fields[2], "morph trials", row.line);
        trials.push_back(std::move(t));
    }
    return trials;
}

std::vector<DemorphTrial> load_demorph_trials(const std::string& path) {
    std::vector<DemorphTrial> trials;
    for (const CsvRow& row : load_csv_rows(path, "demorph trials", "id,sim_b2,sim_b1")) {
        if (row.fields.size() != 3)
            throw IoError("demorph trials: line " + std::to_string(row.line) +
                          ": expected 'id,sim_b2,sim_b1'");
        DemorphTrial t;
        t.id = row.fields[0];
        t.sim_b2 = parse_double_field(row.fields[1], "demorph trials", row.line);
        t.sim_b1 = parse_double_field(row.fields[2], "demorph trials", row.line);
        trials.push_back(std::move(t));
    }
    return trials;
}

// ---------------------------------------------------------------------------
// run configuration

namespace {

std::uint64_t cfg_u64(const std::string& value, const std::string& key, std::size_t line) {
    const std::string t = trim(value);
    if (t.empty() || t[0] == '-' || t[0] == '+')
        throw ConfigError("config: line " + std::to_string(line) + ": key '" + key +
                          "' needs a non-negative integer, got '" + t + "'");
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size() || errno == ERANGE)
        throw ConfigError("config: line " + std::to_string(line) + ": key '" + key +
                          "' needs a non-negative integer, got '" + t + "'");
    return v;
}

std::size_t cfg_size(const std::string& value, const std::string& key, std::size_t line) {
    return std::size_t(cfg_u64(value, key, line));
}

double cfg_double(const std::string& value, const std::string& key, std::size_t line) {
    const std::string t = trim(value);
    char* end = nullptr;
    const double v = t.empty() ? 0.0 : std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size())
        throw ConfigError("config: line " + std::to_string(line) + ": key '" + key +
                          "' needs a number, got '" + t + "'");
    return v;
}

bool cfg_bool(const std::string& value, const std::string& key, std::size_t line) {
    const std::string t = trim(value);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw ConfigError("config: line " + std::to_string(line) + ": key '" + key +
                      "' needs true/false, got '" + t + "'");
}

std::vector<std::size_t> cfg_size_list(const std::string& value, const std::string& key,
                                       std::size_t line) {
    std::vector<std::size_t> out;
    for (const std::string& part : split(value, ',')) out.push_back(cfg_size(part, key, line));
    return out;
}

std::vector<AttentionMode> cfg_attention_list(const std::string& value, const std::string& key,
                                              std::size_t line) {
    std::vector<AttentionMode> out;
    for (const std::string& part : split(value, ',')) {
        try {
            out.push_back(parse_attention_mode(part));
        } catch (const Error& e) {
            throw ConfigError("config: line " + std::to_string(line) + ": key '" + key + "': " +
                              e.what());
        }
    }
    return out;
}

void apply_config_key(RunConfig& rc, const std::string& key, const std::string& value,
                      std::size_t line) {
    if (key == "seed") {
        rc.seed = cfg_u64(value, key, line);
    } else if (key == "generator.k_local") {
        rc.generator.k_local = cfg_size(value, key, line);
    } else if (key == "generator.d") {
        rc.generator.d = cfg_size(value, key, line);
    } else if (key == "generator.base_resolution") {
        rc.generator.base_resolution = cfg_size(value, key, line);
    } else if (key == "generator.target_resolution") {
        rc.generator.target_resolution = cfg_size(value, key, line);
    } else if (key == "generator.channels") {
        rc.generator.channels = cfg_size_list(value, key, line);
    } else if (key == "generator.attention") {
        rc.generator.attention = cfg_attention_list(value, key, line);
    } else if (key == "generator.mapping_depth") {
        rc.generator.mapping_depth = cfg_size(value, key, line);
    } else if (key == "generator.attention_heads") {
        rc.generator.attention_heads = cfg_size(value, key, line);
    } else if (key == "generator.attention_logit_gain") {
        rc.generator.attention_logit_gain = cfg_double(value, key, line);
    } else if (key == "generator.seed") {
        rc.generator.seed = cfg_u64(value, key, line);
    } else if (key == "loss.alpha1") {
        rc.loss.alpha1 = cfg_double(value, key, line);
    } else if (key == "loss.alpha2") {
        rc.loss.alpha2 = cfg_double(value, key, line);
    } else if (key == "loss.alpha3") {
        rc.loss.alpha3 = cfg_double(value, key, line);
    } else if (key == "loss.alpha4") {
        rc.loss.alpha4 = cfg_double(value, key, line);
    } else if (key == "loss.wing_beta") {
        rc.loss.wing_beta = cfg_double(value, key, line);
    } else if (key == "loss.wing_epsilon") {
        rc.loss.wing_epsilon = cfg_double(value, key, line);
    } else if (key == "loss.lambda") {
        const std::vector<std::string> parts = split(value, ',');
        if (parts.size() != 4)
            throw ConfigError("config: line " + std::to_string(line) +
                              ": loss.lambda needs exactly 4 values");
        for (std::size_t i = 0; i < 4; ++i)
            rc.loss.lambda[i] = cfg_double(parts[i], key, line);
    } else if (key == "optim.lr") {
        rc.optim.lr = cfg_double(value, key, line);
    } else if (key == "optim.steps") {
        rc.optim.steps = cfg_size(value, key, line);
    } else if (key == "optim.init_samples") {
        rc.optim.init_samples = cfg_size(value, key, line);
    } else if (key == "optim.init_lo") {
        rc.optim.init_lo = cfg_double(value, key, line);
    } else if (key == "optim.init_hi") {
        rc.optim.init_hi = cfg_double(value, key, line);
    } else if (key == "optim.noise_stage") {
        rc.optim.noise_stage = cfg_bool(value, key, line);
    } else if (key == "optim.noise_steps") {
        rc.optim.noise_steps = cfg_size(value, key, line);
    } else if (key == "optim.latent_space") {
        const std::string t = trim(value);
        if (t == "input")
            rc.optim.latent_space = LatentSpace::input;
        else if (t == "intermediate")
            rc.optim.latent_space = LatentSpace::intermediate;
        else
            throw ConfigError("config: line " + std::to_string(line) +
                              ": optim.latent_space must be input or intermediate, got '" + t +
                              "'");
    } else if (key == "morph.lambda") {
        rc.morph.lambda = cfg_double(value, key, line);
    } else if (key == "morph.noise_seed") {
        rc.morph.noise_seed = cfg_u64(value, key, line);
    } else if (key == "morph.inherit_refined_noise") {
        rc.morph.inherit_refined_noise = cfg_bool(value, key, line);
    } else if (key == "features.seed") {
        rc.features_seed = cfg_u64(value, key, line);
    } else if (key == "features.landmarks") {
        rc.landmark_count = cfg_size(value, key, line);
    } else if (key == "paths.checkpoint") {
        rc.checkpoint_path = trim(value);
    } else {
        throw ConfigError("config: line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
}

} // namespace

void RunConfig::validate() const {
    generator.validate();
    loss.validate();
    optim.validate();
    morph.validate();
    if (landmark_count == 0) throw ConfigError("config: features.landmarks must be positive");
}

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig rc;
    std::set<std::string> seen;
    const std::vector<std::string> lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string line = lines[i];
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(i + 1) +
                              ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config: line " + std::to_string(i + 1) + ": empty key");
        if (!seen.insert(key).second)
            throw ConfigError("config: line " + std::to_string(i + 1) + ": duplicate key '" +
                              key + "'");
        apply_config_key(rc, key, value, i + 1);
    }
    rc.validate();
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    return parse_run_config_text(read_file(path, "config"));
}

// ---------------------------------------------------------------------------
// dataset manifest

const char* subject_role_name(SubjectRole role) {
    switch (role) {
    case SubjectRole::bonafide: return "bonafide";
    case SubjectRole::live_capture: return "live_capture";
    case SubjectRole::morph: return "morph";
    }
    return "?";
}

SubjectRole parse_subject_role(const std::string& name) {
    if (name == "bonafide") return SubjectRole::bonafide;
    if (name == "live_capture") return SubjectRole::live_capture;
    if (name == "morph") return SubjectRole::morph;
    throw ConfigError("unknown subject role '" + name + "'");
}

DatasetManifest load_manifest(const std::string& path) {
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    DatasetManifest m;
    std::map<std::string, std::size_t> bonafide_pairs;
    std::set<std::string> all_pairs;
    for (const CsvRow& row :
         load_csv_rows(path, "manifest", "subject_id,role,image_path,pair_id")) {
        if (row.fields.size() != 3 && row.fields.size() != 4)
            throw IoError("manifest: line " + std::to_string(row.line) +
                          ": expected 'subject_id,role,image_path[,pair_id]'");
        ManifestRecord r;
        r.subject_id = row.fields[0];
        if (r.subject_id.empty())
            throw IoError("manifest: line " + std::to_string(row.line) + ": empty subject id");
        try {
            r.role = parse_subject_role(row.fields[1]);
        } catch (const Error& e) {
            throw IoError("manifest: line " + std::to_string(row.line) + ": " + e.what());
        }
        std::filesystem::path img(row.fields[2]);
        if (img.is_relative()) img = base / img;
        if (!std::filesystem::exists(img))
            throw IoError("manifest: line " + std::to_string(row.line) + ": image path '" +
                          img.generic_string() + "' not found");
        r.image_path = img.generic_string();
        if (row.fields.size() == 4 && !row.fields[3].empty()) {
            r.pair_id = row.fields[3];
            all_pairs.insert(r.pair_id);
            if (r.role == SubjectRole::bonafide) ++bonafide_pairs[r.pair_id];
        }
        m.records.push_back(std::move(r));
    }
    for (const std::string& pair : all_pairs) {
        const std::size_t n = bonafide_pairs.count(pair) ? bonafide_pairs[pair] : 0;
        if (n != 2)
            throw IoError("manifest: pair id '" + pair +
                          "' must reference exactly two bonafide records, found " +
                          std::to_string(n));
    }
    return m;
}

} // namespace morphlab
