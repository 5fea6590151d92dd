#include "wavecal/wavelet.hpp"

#include "wavecal/errors.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

namespace wavecal::wavelet {

namespace {

int dyadic_levels(std::size_t n) {
    if (n < 2 || !std::has_single_bit(n))
        throw ArgumentError("wavelet transform needs a power-of-two length >= 2, got " + std::to_string(n));
    return std::countr_zero(n);
}

// One analysis step on the first n entries: approximation into [0, n/2),
// detail into [n/2, n).
void analysis_step(std::span<double> data, std::size_t n, std::vector<double>& work) {
    const auto& h = d4_lowpass();
    const std::size_t half = n / 2;
    work.assign(n, 0.0);
    for (std::size_t k = 0; k < half; ++k) {
        double a = 0.0;
        double d = 0.0;
        for (std::size_t m = 0; m < 4; ++m) {
            const double x = data[(2 * k + m) % n];
            a += h[m] * x;
            // g[m] = (-1)^m h[3 - m]
            d += ((m & 1) ? -h[3 - m] : h[3 - m]) * x;
        }
        work[k] = a;
        work[half + k] = d;
    }
    std::copy(work.begin(), work.end(), data.begin());
}

void synthesis_step(std::span<double> data, std::size_t n, std::vector<double>& work) {
    const auto& h = d4_lowpass();
    const std::size_t half = n / 2;
    work.assign(n, 0.0);
    for (std::size_t k = 0; k < half; ++k) {
        const double a = data[k];
        const double d = data[half + k];
        for (std::size_t m = 0; m < 4; ++m) {
            const double g = (m & 1) ? -h[3 - m] : h[3 - m];
            work[(2 * k + m) % n] += h[m] * a + g * d;
        }
    }
    std::copy(work.begin(), work.end(), data.begin());
}

} // namespace

std::span<const double> CoeffSet::detail(int level) const {
    if (level < 1 || level > levels) throw ArgumentError("detail level out of range");
    const std::size_t off = level_offset(level);
    return {coeffs.data() + off, off};
}

int level_of(std::size_t flat_index) noexcept {
    return flat_index == 0 ? 0 : static_cast<int>(std::bit_width(flat_index));
}

std::size_t level_offset(int level) noexcept {
    return level == 0 ? 0 : std::size_t{1} << (level - 1);
}

std::string index_label(std::size_t flat_index) {
    const int j = level_of(flat_index);
    return std::to_string(j) + "." + std::to_string(flat_index - level_offset(j));
}

std::size_t parse_index_label(const std::string& label) {
    const auto dot = label.find('.');
    if (dot == std::string::npos) throw ParseError("bad coefficient label '" + label + "'");
    try {
        const int j = std::stoi(label.substr(0, dot));
        const std::size_t p = std::stoull(label.substr(dot + 1));
        const std::size_t width = j == 0 ? 1 : level_offset(j);
        if (j < 0 || p >= width) throw ParseError("coefficient label out of range '" + label + "'");
        return level_offset(j) + p;
    } catch (const std::logic_error&) {
        throw ParseError("bad coefficient label '" + label + "'");
    }
}

RetainedIndexSet::RetainedIndexSet(int levels, std::vector<std::size_t> indices)
    : levels_(levels), indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
    const std::size_t n = std::size_t{1} << levels_;
    if (!indices_.empty() && indices_.back() >= n)
        throw ArgumentError("retained index " + std::to_string(indices_.back()) + " outside a layout of " +
                            std::to_string(n) + " coefficients");
}

RetainedIndexSet RetainedIndexSet::all(int levels) {
    std::vector<std::size_t> idx(std::size_t{1} << levels);
    std::iota(idx.begin(), idx.end(), 0);
    return {levels, std::move(idx)};
}

bool RetainedIndexSet::contains(std::size_t flat_index) const {
    return std::binary_search(indices_.begin(), indices_.end(), flat_index);
}

std::vector<std::string> RetainedIndexSet::labels() const {
    std::vector<std::string> out;
    out.reserve(indices_.size());
    for (auto i : indices_) out.push_back(index_label(i));
    return out;
}

void forward_transform(std::span<double> data) {
    dyadic_levels(data.size());
    std::vector<double> work;
    for (std::size_t n = data.size(); n >= 2; n /= 2) analysis_step(data, n, work);
}

void inverse_transform(std::span<double> data) {
    dyadic_levels(data.size());
    std::vector<double> work;
    for (std::size_t n = 2; n <= data.size(); n *= 2) synthesis_step(data, n, work);
}

CoeffSet dwt(std::span<const double> y, const std::string& label) {
    CoeffSet c;
    c.levels = dyadic_levels(y.size());
    c.coeffs.assign(y.begin(), y.end());
    c.source_label = label;
    forward_transform(c.coeffs);
    return c;
}

CoeffSet dwt(const GridCurve& g) {
    if (g.y.size() != g.grid.size()) throw ArgumentError("grid curve length does not match its grid");
    return dwt(g.y, g.label);
}

GridCurve idwt(const CoeffSet& c, const GridSpec& grid) {
    if (c.coeffs.size() != grid.size() || c.levels != grid.levels)
        throw ArgumentError("coefficient layout does not match the grid");
    GridCurve g;
    g.grid = grid;
    g.label = c.source_label;
    g.y = c.coeffs;
    inverse_transform(g.y);
    return g;
}

GridCurve idwt(const CoeffSet& c, const RetainedIndexSet& keep, const GridSpec& grid) {
    if (keep.levels() != c.levels) throw ArgumentError("retained set layout does not match the coefficients");
    CoeffSet masked = c;
    std::fill(masked.coeffs.begin(), masked.coeffs.end(), 0.0);
    for (auto i : keep.indices()) masked.coeffs[i] = c.coeffs[i];
    return idwt(masked, grid);
}

RetainedIndexSet threshold_union(std::span<const CoeffSet> curves, int keep_levels, double pct) {
    if (curves.empty()) throw ArgumentError("threshold_union: no curves");
    if (!(pct > 0.0 && pct < 1.0)) throw ArgumentError("threshold_union: pct must lie in (0, 1)");
    const int levels = curves.front().levels;
    const std::size_t n = std::size_t{1} << levels;
    const std::size_t always = keep_levels >= levels ? n : std::size_t{1} << std::max(keep_levels, 0);
    const auto slots = static_cast<std::size_t>(std::floor(pct * static_cast<double>(n)));

    std::vector<char> keep(n, 0);
    std::fill(keep.begin(), keep.begin() + static_cast<std::ptrdiff_t>(always), 1);
    std::vector<std::size_t> order(n);
    for (const auto& c : curves) {
        if (c.levels != levels || c.coeffs.size() != n)
            throw ArgumentError("threshold_union: curves have different layouts");
        if (slots == 0) continue;
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(slots), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              const double fa = std::abs(c.coeffs[a]);
                              const double fb = std::abs(c.coeffs[b]);
                              return fa > fb || (fa == fb && a < b);
                          });
        for (std::size_t r = 0; r < slots; ++r) {
            if (c.coeffs[order[r]] != 0.0) keep[order[r]] = 1;
        }
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
        if (keep[i]) idx.push_back(i);
    return {levels, std::move(idx)};
}

std::vector<double> restrict(const CoeffSet& c, const RetainedIndexSet& keep) {
    if (keep.levels() != c.levels) throw ArgumentError("restrict: retained set layout does not match");
    std::vector<double> out;
    out.reserve(keep.size());
    for (auto i : keep.indices()) out.push_back(c.coeffs[i]);
    return out;
}

std::vector<double> expand(std::span<const double> restricted, const RetainedIndexSet& keep) {
    if (restricted.size() != keep.size())
        throw ArgumentError("expand: " + std::to_string(restricted.size()) + " values for " +
                            std::to_string(keep.size()) + " retained indices");
    std::vector<double> full(std::size_t{1} << keep.levels(), 0.0);
    for (std::size_t p = 0; p < keep.size(); ++p) full[keep[p]] = restricted[p];
    return full;
}

std::vector<double> reconstruct(std::span<const double> restricted, const RetainedIndexSet& keep) {
    auto full = expand(restricted, keep);
    inverse_transform(full);
    return full;
}

std::vector<double> basis_function(int levels, std::size_t flat_index) {
    std::vector<double> full(std::size_t{1} << levels, 0.0);
    if (flat_index >= full.size()) throw ArgumentError("basis index outside layout");
    full[flat_index] = 1.0;
    inverse_transform(full);
    return full;
}

} // namespace wavecal::wavelet
