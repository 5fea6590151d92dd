#pragma once

// Orthonormal Daubechies (two vanishing moments, D4 filter) transform with
// periodic boundaries, the union thresholding rule, and reconstruction.
//
// Flat coefficient layout for a curve of 2^J samples:
//   index 0                     scaling coefficient (level 0)
//   [2^(j-1), 2^j)              detail coefficients of level j = 1..J
// Level J is the finest. Position p within level j is labelled "j.p".

#include "wavecal/curve.hpp"

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace wavecal::wavelet {

inline const std::array<double, 4>& d4_lowpass() {
    static const std::array<double, 4> h = [] {
        const double s3 = std::sqrt(3.0);
        const double n = 4.0 * std::sqrt(2.0);
        return std::array<double, 4>{(1.0 + s3) / n, (3.0 + s3) / n, (3.0 - s3) / n, (1.0 - s3) / n};
    }();
    return h;
}

struct CoeffSet {
    int levels = 0;
    std::vector<double> coeffs;
    std::string source_label;

    double scaling() const { return coeffs.front(); }
    std::span<const double> detail(int level) const;
};

int level_of(std::size_t flat_index) noexcept;
std::size_t level_offset(int level) noexcept;
std::string index_label(std::size_t flat_index);
std::size_t parse_index_label(const std::string& label);

/// Sorted set of flat indices kept for every curve of an analysis.
class RetainedIndexSet {
public:
    RetainedIndexSet() = default;
    RetainedIndexSet(int levels, std::vector<std::size_t> indices);

    static RetainedIndexSet all(int levels);

    int levels() const noexcept { return levels_; }
    std::size_t size() const noexcept { return indices_.size(); }
    const std::vector<std::size_t>& indices() const noexcept { return indices_; }
    std::size_t operator[](std::size_t pos) const { return indices_[pos]; }
    int level(std::size_t pos) const noexcept { return level_of(indices_[pos]); }
    bool contains(std::size_t flat_index) const;
    std::vector<std::string> labels() const;

    bool operator==(const RetainedIndexSet&) const = default;

private:
    int levels_ = 0;
    std::vector<std::size_t> indices_;
};

/// In-place forward / inverse transforms of a length-2^J buffer.
void forward_transform(std::span<double> data);
void inverse_transform(std::span<double> data);

CoeffSet dwt(const GridCurve& g);
CoeffSet dwt(std::span<const double> y, const std::string& label = {});

GridCurve idwt(const CoeffSet& c, const GridSpec& grid);
GridCurve idwt(const CoeffSet& c, const RetainedIndexSet& keep, const GridSpec& grid);

/// Per curve: keep every index at level <= keep_levels plus those whose
/// magnitude ranks within the top `pct` fraction of all that curve's
/// coefficients (levels pooled; floor(pct * 2^J) slots, ties by index, exact
/// zeros never selected). Returns the union over curves.
RetainedIndexSet threshold_union(std::span<const CoeffSet> curves, int keep_levels, double pct);

/// Projection onto the retained indices, in index order.
std::vector<double> restrict(const CoeffSet& c, const RetainedIndexSet& keep);
/// Inverse of restrict: full flat vector with zeros outside the set.
std::vector<double> expand(std::span<const double> restricted, const RetainedIndexSet& keep);
/// Curve values of the function with the given retained coefficients.
std::vector<double> reconstruct(std::span<const double> restricted, const RetainedIndexSet& keep);

/// Values of basis function `flat_index` on the 2^J grid.
std::vector<double> basis_function(int levels, std::size_t flat_index);

} // namespace wavecal::wavelet
