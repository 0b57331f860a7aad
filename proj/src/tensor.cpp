#include "tkz/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace tkz {

namespace {

void check_dims_positive(Index n1, Index n2, Index n3) {
    if (n1 < 0 || n2 < 0 || n3 < 0)
        throw ShapeError("tensor dimensions must be nonnegative");
}

void check_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) throw InternalError("tensor entries must be finite");
}

} // namespace

Tensor3::Tensor3(Index rows, Index cols, Index depth)
    : n1_(rows), n2_(cols), n3_(depth),
      values_(static_cast<std::size_t>(rows * cols * depth), 0.0) {
    check_dims_positive(rows, cols, depth);
}

Tensor3::Tensor3(Index rows, Index cols, Index depth, std::vector<double> values)
    : n1_(rows), n2_(cols), n3_(depth), values_(std::move(values)) {
    check_dims_positive(rows, cols, depth);
    if (static_cast<Index>(values_.size()) != rows * cols * depth)
        throw ShapeError("value count " + std::to_string(values_.size()) +
                         " does not match dims " + std::to_string(rows) + "x" +
                         std::to_string(cols) + "x" + std::to_string(depth));
    check_finite(values_);
}

Tensor3 Tensor3::from_frontal_slices(const std::vector<Eigen::MatrixXd>& slices) {
    if (slices.empty()) throw ShapeError("need at least one frontal slice");
    const Index n1 = slices[0].rows(), n2 = slices[0].cols();
    const Index p = static_cast<Index>(slices.size());
    for (const auto& s : slices)
        if (s.rows() != n1 || s.cols() != n2)
            throw ShapeError("frontal slices must share one shape");
    return from_generator(n1, n2, p, [&](Index i, Index j, Index k) {
        return slices[static_cast<std::size_t>(k)](i, j);
    });
}

double Tensor3::at(Index i, Index j, Index k) const {
    if (i < 0 || i >= n1_ || j < 0 || j >= n2_ || k < 0 || k >= n3_)
        throw IndexError("index (" + std::to_string(i) + "," + std::to_string(j) + "," +
                         std::to_string(k) + ") out of range for " + std::to_string(n1_) +
                         "x" + std::to_string(n2_) + "x" + std::to_string(n3_));
    return (*this)(i, j, k);
}

Eigen::MatrixXd Tensor3::frontal_slice(Index k) const {
    if (k < 0 || k >= n3_) throw IndexError("frontal slice " + std::to_string(k) + " out of range");
    Eigen::MatrixXd m(n1_, n2_);
    for (Index i = 0; i < n1_; ++i)
        for (Index j = 0; j < n2_; ++j) m(i, j) = (*this)(i, j, k);
    return m;
}

UnfoldedTensor unfold(const Tensor3& b) {
    UnfoldedTensor m(b.rows() * b.depth(), b.cols());
    for (Index k = 0; k < b.depth(); ++k)
        for (Index i = 0; i < b.rows(); ++i)
            for (Index j = 0; j < b.cols(); ++j) m(k * b.rows() + i, j) = b(i, j, k);
    return m;
}

Tensor3 fold(const UnfoldedTensor& m, Index depth) {
    if (depth < 1) throw ShapeError("fold depth must be at least 1");
    if (m.rows() % depth != 0)
        throw ShapeError("fold: " + std::to_string(m.rows()) + " rows not divisible by depth " +
                         std::to_string(depth));
    const Index n1 = m.rows() / depth;
    return Tensor3::from_generator(n1, m.cols(), depth, [&](Index i, Index j, Index k) {
        return m(k * n1 + i, j);
    });
}

Eigen::MatrixXd bcirc(const Tensor3& a, Index element_budget) {
    const Index p = a.depth();
    const Index rows = a.rows() * p, cols = a.cols() * p;
    if (rows * cols > element_budget)
        throw ConfigError("bcirc of " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                          "x" + std::to_string(p) + " exceeds element budget " +
                          std::to_string(element_budget));
    Eigen::MatrixXd m(rows, cols);
    std::vector<Eigen::MatrixXd> slices;
    slices.reserve(static_cast<std::size_t>(p));
    for (Index k = 0; k < p; ++k) slices.push_back(a.frontal_slice(k));
    for (Index r = 0; r < p; ++r)
        for (Index c = 0; c < p; ++c) {
            const Index k = ((r - c) % p + p) % p;
            m.block(r * a.rows(), c * a.cols(), a.rows(), a.cols()) =
                slices[static_cast<std::size_t>(k)];
        }
    return m;
}

Tensor3 tprod_reference(const Tensor3& a, const Tensor3& b, Index element_budget) {
    if (a.cols() != b.rows() || a.depth() != b.depth())
        throw ShapeError("t-product dims mismatch: " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + " (depths " + std::to_string(a.depth()) +
                         ", " + std::to_string(b.depth()) + ")");
    return fold(bcirc(a, element_budget) * unfold(b), a.depth());
}

Tensor3 ttranspose(const Tensor3& a) {
    const Index p = a.depth();
    return Tensor3::from_generator(a.cols(), a.rows(), p, [&](Index i, Index j, Index k) {
        const Index src = (p - k) % p;
        return a(j, i, src);
    });
}

Tensor3 identity_tensor(Index m, Index depth) {
    if (m < 1 || depth < 1) throw ShapeError("identity tensor needs positive dims");
    return Tensor3::from_generator(m, m, depth, [](Index i, Index j, Index k) {
        return (i == j && k == 0) ? 1.0 : 0.0;
    });
}

double fro_norm(const Tensor3& a) {
    double s = 0.0;
    for (double x : a.data()) s += x * x;
    return std::sqrt(s);
}

double inner(const Tensor3& a, const Tensor3& b) {
    if (!a.same_dims(b)) throw ShapeError("inner product requires equal dims");
    double s = 0.0;
    const auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) s += da[i] * db[i];
    return s;
}

Tensor3 row_slice(const Tensor3& a, std::span<const Index> rows) {
    std::unordered_set<Index> seen;
    for (Index r : rows) {
        if (r < 0 || r >= a.rows())
            throw IndexError("row index " + std::to_string(r) + " out of range [0, " +
                             std::to_string(a.rows()) + ")");
        if (!seen.insert(r).second)
            throw IndexError("repeated row index " + std::to_string(r) + " in slice set");
    }
    return Tensor3::from_generator(static_cast<Index>(rows.size()), a.cols(), a.depth(),
                                   [&](Index i, Index j, Index k) {
                                       return a(rows[static_cast<std::size_t>(i)], j, k);
                                   });
}

Tensor3 row_slice(const Tensor3& a, std::initializer_list<Index> rows) {
    std::vector<Index> v(rows);
    return row_slice(a, std::span<const Index>(v));
}

Tensor3 col_slice(const Tensor3& a, Index j) {
    if (j < 0 || j >= a.cols())
        throw IndexError("column index " + std::to_string(j) + " out of range");
    return Tensor3::from_generator(a.rows(), 1, a.depth(),
                                   [&](Index i, Index, Index k) { return a(i, j, k); });
}

namespace {

constexpr char kMagic[4] = {'T', '3', 'D', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

void write_t3d(const Tensor3& a, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write(kMagic, 4);
    put_u64(os, static_cast<std::uint64_t>(a.rows()));
    put_u64(os, static_cast<std::uint64_t>(a.cols()));
    put_u64(os, static_cast<std::uint64_t>(a.depth()));
    static_assert(sizeof(double) == 8);
    // host doubles are little-endian on every supported target
    os.write(reinterpret_cast<const char*>(a.data().data()),
             static_cast<std::streamsize>(a.size() * 8));
    if (!os) throw IoError("short write to " + path);
}

Tensor3 read_t3d(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError(path + ": not a T3D1 file");
    const auto n1 = static_cast<Index>(get_u64(is));
    const auto n2 = static_cast<Index>(get_u64(is));
    const auto n3 = static_cast<Index>(get_u64(is));
    if (!is || n1 < 0 || n2 < 0 || n3 < 0 || n1 * n2 * n3 > (Index{1} << 32))
        throw IoError(path + ": implausible dimensions");
    std::vector<double> v(static_cast<std::size_t>(n1 * n2 * n3));
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
    if (!is) throw IoError(path + ": truncated data");
    return Tensor3(n1, n2, n3, std::move(v));
}

void write_slice_csv(const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    char buf[40];
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            os << buf << (j + 1 < m.cols() ? "," : "");
        }
        os << '\n';
    }
}

Eigen::MatrixXd read_slice_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw IoError(path + ": ragged csv");
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(static_cast<Index>(rows.size()),
                      rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

} // namespace tkz
