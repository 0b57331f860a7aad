#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tkz/errors.hpp"

namespace tkz {

using Index = std::int64_t;

/// Dense real third-order tensor with entries stored row-major over
/// (row i, column j, depth k), k fastest. Values are immutable after
/// construction and constructors reject non-finite entries, so a Tensor3
/// can be shared read-only across threads.
///
/// Slicing vocabulary (0-based): frontal slice k is the rows x cols matrix
/// at depth k; row slice i is the 1 x cols x depth subtensor at row i;
/// column slice j is the rows x 1 x depth subtensor at column j.
class Tensor3 {
public:
    Tensor3() = default;

    /// Zero tensor of the given dimensions.
    Tensor3(Index rows, Index cols, Index depth);

    /// Takes ownership of `values` (row-major over (i, j, k), k fastest).
    /// Throws ShapeError on size mismatch, InternalError on NaN/Inf entries.
    Tensor3(Index rows, Index cols, Index depth, std::vector<double> values);

    /// Builds entries from fn(i, j, k). Same finiteness validation.
    template <class Fn>
    static Tensor3 from_generator(Index rows, Index cols, Index depth, Fn&& fn) {
        std::vector<double> v(static_cast<std::size_t>(rows * cols * depth));
        std::size_t idx = 0;
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j)
                for (Index k = 0; k < depth; ++k) v[idx++] = fn(i, j, k);
        return Tensor3(rows, cols, depth, std::move(v));
    }

    /// Stacks p frontal slices of identical shape.
    static Tensor3 from_frontal_slices(const std::vector<Eigen::MatrixXd>& slices);

    Index rows() const { return n1_; }
    Index cols() const { return n2_; }
    Index depth() const { return n3_; }
    Index size() const { return n1_ * n2_ * n3_; }

    double operator()(Index i, Index j, Index k) const {
        return values_[static_cast<std::size_t>((i * n2_ + j) * n3_ + k)];
    }

    /// Bounds-checked access (0-based indices in error messages).
    double at(Index i, Index j, Index k) const;

    std::span<const double> data() const { return values_; }

    Eigen::MatrixXd frontal_slice(Index k) const;

    bool same_dims(const Tensor3& other) const {
        return n1_ == other.n1_ && n2_ == other.n2_ && n3_ == other.n3_;
    }

private:
    Index n1_ = 0, n2_ = 0, n3_ = 0;
    std::vector<double> values_;
};

/// Matrix of shape (rows*depth) x cols holding the frontal slices stacked
/// vertically, slice 0 on top.
using UnfoldedTensor = Eigen::MatrixXd;

UnfoldedTensor unfold(const Tensor3& b);

/// Inverse of unfold; row count of `m` must be divisible by `depth`.
Tensor3 fold(const UnfoldedTensor& m, Index depth);

/// Element budget guarding dense block-circulant materialization.
inline constexpr Index kDefaultBcircBudget = 10'000'000;

/// Block-circulant matrix of a: block (r, c) is frontal slice (r - c) mod p,
/// so the first block column reads slice 0, 1, ..., p-1 top to bottom.
/// Throws ConfigError when the result would exceed `element_budget`.
Eigen::MatrixXd bcirc(const Tensor3& a, Index element_budget = kDefaultBcircBudget);

/// Ground-truth t-product: fold(bcirc(a) * unfold(b)). Kept permanently as
/// the oracle for the frequency-domain fast path.
Tensor3 tprod_reference(const Tensor3& a, const Tensor3& b,
                        Index element_budget = kDefaultBcircBudget);

/// Tensor transpose: slice 0 transposed, then slices p-1..1 transposed in
/// reversed order. Satisfies bcirc(ttranspose(a)) == bcirc(a)^T.
Tensor3 ttranspose(const Tensor3& a);

/// Identity for the t-product: first frontal slice is I_m, the rest zero.
Tensor3 identity_tensor(Index m, Index depth);

double fro_norm(const Tensor3& a);

/// Elementwise inner product; induces fro_norm.
double inner(const Tensor3& a, const Tensor3& b);

/// Subtensor of the selected row slices in the given order. Indices must be
/// in range and distinct.
Tensor3 row_slice(const Tensor3& a, std::span<const Index> rows);
Tensor3 row_slice(const Tensor3& a, std::initializer_list<Index> rows);

/// Single column slice j as a rows x 1 x depth tensor.
Tensor3 col_slice(const Tensor3& a, Index j);

// --- T3D1 binary format ------------------------------------------------
// magic "T3D1", three little-endian u64 dims (rows, cols, depth), then
// rows*cols*depth little-endian f64 values in row-major (i, j, k) order.

void write_t3d(const Tensor3& a, const std::string& path);
Tensor3 read_t3d(const std::string& path);

// CSV import/export of a single 2-D slice, debugging only.
void write_slice_csv(const Eigen::MatrixXd& m, const std::string& path);
Eigen::MatrixXd read_slice_csv(const std::string& path);

} // namespace tkz
