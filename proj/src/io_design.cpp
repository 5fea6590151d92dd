#include "wavecal/io_design.hpp"

#include "wavecal/csv.hpp"
#include "wavecal/errors.hpp"
#include "wavecal/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

namespace wavecal {

std::size_t IUMap::n_calibration() const { return calibration_indices().size(); }
std::size_t IUMap::n_variation() const { return variation_indices().size(); }

std::vector<std::string> IUMap::names() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.name);
    return out;
}

std::vector<std::size_t> IUMap::calibration_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].role == Role::calibration) out.push_back(i);
    return out;
}

std::vector<std::size_t> IUMap::variation_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].role == Role::variation) out.push_back(i);
    return out;
}

void IUMap::to_unit(std::span<const double> delta, std::span<const double> u, std::span<double> out) const {
    std::size_t di = 0;
    std::size_t ui = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const double coded = e.role == Role::variation ? e.nominal() + delta[di++] : u[ui++];
        out[i] = (coded - e.lo) / e.width();
    }
}

std::vector<double> IUMap::to_unit(std::span<const double> delta, std::span<const double> u) const {
    if (delta.size() != n_variation() || u.size() != n_calibration())
        throw ArgumentError("to_unit: expected " + std::to_string(n_variation()) + " variation and " +
                            std::to_string(n_calibration()) + " calibration values");
    std::vector<double> out(entries.size());
    to_unit(delta, u, out);
    return out;
}

std::vector<double> IUMap::from_unit(std::span<const double> unit) const {
    std::vector<double> out(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) out[i] = entries[i].lo + unit[i] * entries[i].width();
    return out;
}

void validate(const IUMap& map) {
    if (map.entries.empty()) throw ValidationError("I/U map has no parameter entries");
    std::set<std::string> seen;
    for (const auto& e : map.entries) {
        if (!seen.insert(e.name).second) throw ValidationError("duplicate parameter '" + e.name + "'");
        if (!(e.lo < e.hi))
            throw ValidationError("parameter '" + e.name + "': range lower bound must be below upper bound");
        if (e.role == Role::calibration) {
            const auto* p = std::get_if<UniformPrior>(&e.prior);
            if (!p) throw ValidationError("parameter '" + e.name + "': calibration inputs take a uniform prior");
            if (!(p->lo < p->hi) || p->lo < e.lo || p->hi > e.hi)
                throw ValidationError("parameter '" + e.name + "': prior support must lie within the range");
        } else {
            const auto* p = std::get_if<TruncNormalPrior>(&e.prior);
            if (!p) throw ValidationError("parameter '" + e.name + "': variation inputs take a truncated normal prior");
            if (!(p->sd > 0.0)) throw ValidationError("parameter '" + e.name + "': prior sd must be positive");
            const double half = 0.5 * e.width();
            if (std::abs(p->lo + p->hi) > 1e-12 * half || !(p->hi > 0.0))
                throw ValidationError("parameter '" + e.name + "': truncation must be symmetric about 0");
            if (p->hi > half * (1.0 + 1e-12))
                throw ValidationError("parameter '" + e.name + "': truncation exceeds range - nominal");
        }
    }
}

IUMap parse_iu_map(const config::Document& doc) {
    IUMap map;
    for (const auto* sec : doc.with_prefix("param")) {
        ParameterSpec e;
        e.name = sec->name().substr(std::string("param.").size());
        const std::string role = sec->string("role");
        if (role == "calibration") {
            e.role = Role::calibration;
        } else if (role == "variation") {
            e.role = Role::variation;
        } else {
            throw ConfigError("field '" + sec->name() + ".role' must be \"calibration\" or \"variation\"");
        }
        const auto& range = sec->numbers("range");
        if (range.size() != 2) throw ConfigError("field '" + sec->name() + ".range' must have two entries");
        e.lo = range[0];
        e.hi = range[1];
        if (!(e.lo < e.hi))
            throw ValidationError("parameter '" + e.name + "': range lower bound must be below upper bound");

        if (e.role == Role::calibration) {
            e.prior = UniformPrior{e.lo, e.hi};
        } else {
            const double half = 0.5 * e.width();
            TruncNormalPrior p;
            p.mean = 0.0;
            p.sd = sec->number_or("sd", e.width() / 6.0);
            const double c = sec->number_or("truncation", half);
            p.lo = -c;
            p.hi = c;
            e.prior = p;
        }
        map.entries.push_back(std::move(e));
    }
    validate(map);
    return map;
}

IUMap load_iu_map(const std::filesystem::path& path) { return parse_iu_map(config::load(path)); }

namespace {

std::optional<std::size_t> trailing_index(const std::string& label) {
    std::size_t end = label.size();
    std::size_t start = end;
    while (start > 0 && std::isdigit(static_cast<unsigned char>(label[start - 1]))) --start;
    if (start == end) return std::nullopt;
    return static_cast<std::size_t>(std::stoull(label.substr(start)));
}

} // namespace

Curve read_curve(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open curve file " + path.string());
    Curve c;
    c.label = path.stem().string();
    std::string line;
    std::size_t row = 0;
    bool header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        ++row;
        const auto fields = csv::split(line);
        if (fields.size() != 2)
            throw ParseError(path.string() + ": length mismatch at row " + std::to_string(row) +
                             " (expected 2 fields)");
        double t = 0.0;
        double y = 0.0;
        try {
            t = csv::parse_double(fields[0]);
            y = csv::parse_double(fields[1]);
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": row " + std::to_string(row) + ": " + e.what());
        }
        if (!c.t.empty() && !(t > c.t.back()))
            throw ParseError(path.string() + ": non-monotone time at row " + std::to_string(row));
        c.t.push_back(t);
        c.y.push_back(y);
    }
    if (c.t.size() < 2) throw ParseError(path.string() + ": curve needs at least two rows");
    return c;
}

void write_curve(const std::filesystem::path& path, const Curve& curve) {
    csv::Table table;
    table.header = {"t", "y"};
    table.rows.reserve(curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) table.rows.push_back({curve.t[i], curve.y[i]});
    csv::write_table(path, table);
}

std::vector<Curve> load_curves(const std::filesystem::path& dir, CurveKind kind, const CurveLoadOptions& opts) {
    if (!std::filesystem::is_directory(dir)) throw ParseError("curve directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::vector<Curve> curves;
    for (const auto& f : files) {
        Curve c = read_curve(f);
        if (std::find(opts.deleted.begin(), opts.deleted.end(), c.label) != opts.deleted.end()) continue;
        if (kind == CurveKind::model) {
            c.design_row = trailing_index(c.label);
            if (!c.design_row)
                throw ParseError(f.string() + ": model run label must end in its design-row index");
        }
        curves.push_back(std::move(c));
    }
    std::sort(curves.begin(), curves.end(), [](const Curve& a, const Curve& b) { return a.label < b.label; });
    if (curves.empty()) throw ParseError("no curve files in " + dir.string());
    return curves;
}

double DesignMatrix::min_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < rows; ++a) {
        for (std::size_t b = a + 1; b < rows; ++b) {
            double s = 0.0;
            for (std::size_t p = 0; p < cols; ++p) {
                const double d = at(a, p) - at(b, p);
                s += d * d;
            }
            best = std::min(best, s);
        }
    }
    return std::sqrt(best);
}

DesignMatrix read_design(const std::filesystem::path& path) {
    const auto table = csv::read_table(path);
    DesignMatrix d;
    d.column_names = table.header;
    d.cols = table.header.size();
    d.rows = table.rows.size();
    d.points.reserve(d.rows * d.cols);
    for (const auto& r : table.rows) d.points.insert(d.points.end(), r.begin(), r.end());
    return d;
}

void write_design(const std::filesystem::path& path, const DesignMatrix& design) {
    csv::Table table;
    table.header = design.column_names;
    for (std::size_t k = 0; k < design.rows; ++k) {
        auto r = design.row(k);
        table.rows.emplace_back(r.begin(), r.end());
    }
    csv::write_table(path, table);
}

DesignMatrix select_rows(const DesignMatrix& design, std::span<const Curve> runs) {
    DesignMatrix out;
    out.cols = design.cols;
    out.column_names = design.column_names;
    for (const auto& c : runs) {
        if (!c.design_row) throw ArgumentError("model run '" + c.label + "' has no design row");
        const std::size_t k = *c.design_row;
        if (k >= design.rows)
            throw ValidationError("model run '" + c.label + "' refers to design row " + std::to_string(k) +
                                  " but the design has " + std::to_string(design.rows) + " rows");
        auto r = design.row(k);
        out.points.insert(out.points.end(), r.begin(), r.end());
        ++out.rows;
    }
    return out;
}

namespace {

struct Objective {
    double min_sq = 0.0;
    std::size_t ties = 0;

    bool better_than(const Objective& o) const {
        return min_sq > o.min_sq || (min_sq == o.min_sq && ties < o.ties);
    }
};

Objective evaluate(const std::vector<double>& dist, std::size_t K) {
    Objective o{std::numeric_limits<double>::infinity(), 0};
    for (std::size_t a = 0; a < K; ++a) {
        for (std::size_t b = a + 1; b < K; ++b) {
            const double v = dist[a * K + b];
            if (v < o.min_sq) {
                o.min_sq = v;
                o.ties = 1;
            } else if (v == o.min_sq) {
                ++o.ties;
            }
        }
    }
    return o;
}

} // namespace

DesignMatrix generate_lhd(std::size_t K, std::size_t d, std::size_t n_restarts, std::uint64_t seed,
                          std::vector<double>* trace) {
    if (K < 2) throw ArgumentError("generate_lhd: need at least 2 points");
    if (d < 1) throw ArgumentError("generate_lhd: need at least 1 dimension");
    n_restarts = std::max<std::size_t>(n_restarts, 1);
    constexpr std::size_t max_sweeps = 100;

    std::vector<double> best_x;
    Objective best{-1.0, 0};
    if (trace) trace->clear();

    for (std::size_t restart = 0; restart < n_restarts; ++restart) {
        Rng rng = make_stream(seed, "lhd", restart);
        // x[k * d + p] = (stratum + 0.5) / K
        std::vector<double> x(K * d);
        std::vector<std::size_t> perm(K);
        for (std::size_t p = 0; p < d; ++p) {
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            for (std::size_t k = 0; k < K; ++k) x[k * d + p] = (static_cast<double>(perm[k]) + 0.5) / K;
        }
        std::vector<double> dist(K * K, 0.0);
        for (std::size_t a = 0; a < K; ++a) {
            for (std::size_t b = a + 1; b < K; ++b) {
                double s = 0.0;
                for (std::size_t p = 0; p < d; ++p) {
                    const double v = x[a * d + p] - x[b * d + p];
                    s += v * v;
                }
                dist[a * K + b] = dist[b * K + a] = s;
            }
        }
        Objective cur = evaluate(dist, K);
        auto record = [&] {
            if (trace) trace->push_back(std::sqrt(std::max(cur.min_sq, best.min_sq)));
        };
        record();

        std::vector<double> row_a(K);
        std::vector<double> row_b(K);
        std::uniform_int_distribution<std::size_t> pick(0, K - 2);
        for (std::size_t sweep = 0; sweep < max_sweeps && K > 2; ++sweep) {
            bool improved = false;
            for (std::size_t p = 0; p < d; ++p) {
                for (std::size_t a = 0; a < K; ++a) {
                    std::size_t b = pick(rng);
                    if (b >= a) ++b;
                    const double xa = x[a * d + p];
                    const double xb = x[b * d + p];
                    for (std::size_t k = 0; k < K; ++k) {
                        row_a[k] = dist[a * K + k];
                        row_b[k] = dist[b * K + k];
                        if (k == a || k == b) continue;
                        const double xk = x[k * d + p];
                        dist[a * K + k] = dist[k * K + a] = row_a[k] - (xa - xk) * (xa - xk) + (xb - xk) * (xb - xk);
                        dist[b * K + k] = dist[k * K + b] = row_b[k] - (xb - xk) * (xb - xk) + (xa - xk) * (xa - xk);
                    }
                    const Objective cand = evaluate(dist, K);
                    if (cand.better_than(cur)) {
                        std::swap(x[a * d + p], x[b * d + p]);
                        cur = cand;
                        improved = true;
                        record();
                    } else {
                        for (std::size_t k = 0; k < K; ++k) {
                            if (k == a || k == b) continue;
                            dist[a * K + k] = dist[k * K + a] = row_a[k];
                            dist[b * K + k] = dist[k * K + b] = row_b[k];
                        }
                    }
                }
            }
            if (!improved) break;
        }
        if (cur.better_than(best)) {
            best = cur;
            best_x = x;
        }
        record();
    }

    DesignMatrix out;
    out.rows = K;
    out.cols = d;
    out.points = std::move(best_x);
    for (std::size_t p = 0; p < d; ++p) out.column_names.push_back("z" + std::to_string(p + 1));
    return out;
}

} // namespace wavecal
