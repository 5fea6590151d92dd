#include "wavecal/curve.hpp"

#include "wavecal/errors.hpp"

namespace wavecal {

void validate(const Curve& c) {
    if (c.t.size() != c.y.size())
        throw ValidationError("curve '" + c.label + "': time and value lengths differ");
    if (c.t.size() < 2) throw ValidationError("curve '" + c.label + "': needs at least two samples");
    for (std::size_t i = 1; i < c.t.size(); ++i) {
        if (!(c.t[i] > c.t[i - 1]))
            throw ValidationError("curve '" + c.label + "': non-monotone time at row " + std::to_string(i + 1));
    }
}

std::vector<double> GridSpec::times() const {
    std::vector<double> out(size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = at(k);
    return out;
}

Curve GridCurve::as_curve() const {
    Curve c;
    c.t = grid.times();
    c.y = y;
    c.label = label;
    return c;
}

} // namespace wavecal
