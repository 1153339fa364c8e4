#include "qtrk/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace qtrk {

namespace {

constexpr char kMagic[8] = {'T', '3', 'B', 'I', 'N', 'v', '0', '1'};

std::uint64_t byteswap64(std::uint64_t v) {
    std::uint64_t out = 0;
    for (int b = 0; b < 8; ++b) out = (out << 8) | ((v >> (8 * b)) & 0xffu);
    return out;
}

std::uint64_t to_le(std::uint64_t v) {
    return std::endian::native == std::endian::little ? v : byteswap64(v);
}

std::uint64_t from_le(std::uint64_t v) { return to_le(v); }

void put_u64(std::ofstream& os, std::uint64_t v) {
    const std::uint64_t le = to_le(v);
    os.write(reinterpret_cast<const char*>(&le), 8);
}

std::uint64_t get_u64(std::ifstream& is) {
    std::uint64_t le = 0;
    is.read(reinterpret_cast<char*>(&le), 8);
    return from_le(le);
}

} // namespace

void DenseTensor3::validate_shape(index_t rows, index_t cols, index_t depth) {
    if (rows < 1 || cols < 1 || depth < 1) {
        throw shape_error("tensor dimensions must be positive, got " + std::to_string(rows) +
                          "x" + std::to_string(cols) + "x" + std::to_string(depth));
    }
}

DenseTensor3 DenseTensor3::from_data(index_t rows, index_t cols, index_t depth,
                                     std::vector<double> data) {
    validate_shape(rows, cols, depth);
    if (data.size() != static_cast<std::size_t>(rows * cols * depth)) {
        throw shape_error("data length " + std::to_string(data.size()) +
                          " does not match shape " + std::to_string(rows) + "x" +
                          std::to_string(cols) + "x" + std::to_string(depth));
    }
    for (double v : data) {
        if (!std::isfinite(v)) throw numerical_error("tensor data contains a non-finite entry");
    }
    DenseTensor3 t;
    t.rows_ = rows;
    t.cols_ = cols;
    t.depth_ = depth;
    t.data_ = std::move(data);
    return t;
}

double DenseTensor3::at(index_t i, index_t j, index_t h) const {
    if (i < 0 || i >= rows_ || j < 0 || j >= cols_ || h < 0 || h >= depth_) {
        throw shape_error("tensor index (" + std::to_string(i) + "," + std::to_string(j) + "," +
                          std::to_string(h) + ") out of range for " + std::to_string(rows_) + "x" +
                          std::to_string(cols_) + "x" + std::to_string(depth_));
    }
    return data_[flat(i, j, h)];
}

double& DenseTensor3::at(index_t i, index_t j, index_t h) {
    (void)static_cast<const DenseTensor3&>(*this).at(i, j, h);
    return data_[flat(i, j, h)];
}

SliceView::SliceView(const DenseTensor3& t, SliceAxis axis, index_t index)
    : t_(&t), axis_(axis), index_(index) {
    index_t bound = 0;
    switch (axis) {
        case SliceAxis::row:
            bound = t.rows();
            extent0_ = t.cols();
            extent1_ = t.depth();
            break;
        case SliceAxis::col:
            bound = t.cols();
            extent0_ = t.rows();
            extent1_ = t.depth();
            break;
        case SliceAxis::frontal:
            bound = t.depth();
            extent0_ = t.rows();
            extent1_ = t.cols();
            break;
    }
    if (index < 0 || index >= bound) {
        throw shape_error("slice index " + std::to_string(index) + " out of range [0," +
                          std::to_string(bound) + ")");
    }
}

double SliceView::operator()(index_t a, index_t b) const {
    switch (axis_) {
        case SliceAxis::row: return t_->at(index_, a, b);
        case SliceAxis::col: return t_->at(a, index_, b);
        case SliceAxis::frontal: return t_->at(a, b, index_);
    }
    return 0.0;
}

double frobenius_norm(const DenseTensor3& t) {
    double sum = 0.0;
    const double* p = t.data();
    const index_t count = t.size();
    for (index_t k = 0; k < count; ++k) sum += p[k] * p[k];
    return std::sqrt(sum);
}

double max_abs_diff(const DenseTensor3& a, const DenseTensor3& b) {
    if (!a.same_shape(b)) throw shape_error("max_abs_diff shape mismatch");
    double worst = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    const index_t count = a.size();
    for (index_t k = 0; k < count; ++k) worst = std::max(worst, std::abs(pa[k] - pb[k]));
    return worst;
}

double relative_error(const DenseTensor3& x, const DenseTensor3& ref) {
    if (!x.same_shape(ref)) throw shape_error("relative_error shape mismatch");
    double num = 0.0, den = 0.0;
    const double* px = x.data();
    const double* pr = ref.data();
    const index_t count = x.size();
    for (index_t k = 0; k < count; ++k) {
        const double d = px[k] - pr[k];
        num += d * d;
        den += pr[k] * pr[k];
    }
    if (den == 0.0) throw domain_error("relative_error reference tensor is zero");
    return std::sqrt(num) / std::sqrt(den);
}

DenseTensor3 add(const DenseTensor3& a, const DenseTensor3& b) {
    if (!a.same_shape(b)) throw shape_error("add shape mismatch");
    DenseTensor3 out(a.rows(), a.cols(), a.depth());
    const index_t count = a.size();
    for (index_t k = 0; k < count; ++k) out.data()[k] = a.data()[k] + b.data()[k];
    return out;
}

DenseTensor3 subtract(const DenseTensor3& a, const DenseTensor3& b) {
    if (!a.same_shape(b)) throw shape_error("subtract shape mismatch");
    DenseTensor3 out(a.rows(), a.cols(), a.depth());
    const index_t count = a.size();
    for (index_t k = 0; k < count; ++k) out.data()[k] = a.data()[k] - b.data()[k];
    return out;
}

DenseTensor3 gaussian_tensor(index_t rows, index_t cols, index_t depth, Rng& rng) {
    DenseTensor3 t(rows, cols, depth);
    const index_t count = t.size();
    for (index_t k = 0; k < count; ++k) t.data()[k] = rng.normal();
    return t;
}

void write_t3b(const std::filesystem::path& path, const DenseTensor3& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw config_error("cannot open for writing: " + path.string());
    os.write(kMagic, 8);
    put_u64(os, static_cast<std::uint64_t>(t.rows()));
    put_u64(os, static_cast<std::uint64_t>(t.cols()));
    put_u64(os, static_cast<std::uint64_t>(t.depth()));
    const index_t count = t.size();
    for (index_t k = 0; k < count; ++k) {
        const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(t.data()[k]));
        os.write(reinterpret_cast<const char*>(&bits), 8);
    }
    if (!os) throw config_error("write failed: " + path.string());
}

DenseTensor3 read_t3b(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw config_error("cannot open for reading: " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) {
        throw config_error("bad magic in tensor file: " + path.string());
    }
    const std::uint64_t rows = get_u64(is);
    const std::uint64_t cols = get_u64(is);
    const std::uint64_t depth = get_u64(is);
    constexpr std::uint64_t dim_cap = 1ull << 24;
    if (!is || rows == 0 || cols == 0 || depth == 0 || rows > dim_cap || cols > dim_cap ||
        depth > dim_cap) {
        throw config_error("bad dimensions in tensor file: " + path.string());
    }
    const std::uint64_t count = rows * cols * depth;
    std::vector<double> data(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        std::uint64_t bits = 0;
        is.read(reinterpret_cast<char*>(&bits), 8);
        data[k] = std::bit_cast<double>(from_le(bits));
    }
    if (!is) throw config_error("truncated tensor file: " + path.string());
    is.peek();
    if (!is.eof()) throw config_error("trailing bytes in tensor file: " + path.string());
    try {
        return DenseTensor3::from_data(static_cast<index_t>(rows), static_cast<index_t>(cols),
                                       static_cast<index_t>(depth), std::move(data));
    } catch (const numerical_error&) {
        throw config_error("non-finite payload in tensor file: " + path.string());
    }
}

} // namespace qtrk
