#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wavecal/config.hpp"
#include "wavecal/csv.hpp"
#include "wavecal/errors.hpp"
#include "wavecal/io_design.hpp"
#include "wavecal/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace wavecal;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("wavecal_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

constexpr const char* kMap = R"(
# two inputs of each role
[param.u1]
role = "calibration"
range = [0.2, 0.8]

[param.x1]
role = "variation"
range = [1.0, 2.0]

[param.u2]
role = "calibration"
range = [0, 1]

[param.x2]
role = "variation"
range = [-3, 3]
sd = 0.5
truncation = 1.0
)";

} // namespace

TEST_CASE("config grammar") {
    const auto doc = config::parse(R"(
seed = 7
name = "run"   # trailing comment
[a.b]
xs = [1, 2.5, -3e-2]
ss = ["p", "q"]
flag = true
)");
    CHECK(doc.root().integer("seed") == 7);
    CHECK(doc.root().string("name") == "run");
    const auto& s = doc.section("a.b");
    CHECK(s.numbers("xs") == std::vector<double>{1, 2.5, -3e-2});
    CHECK(s.strings("ss") == std::vector<std::string>{"p", "q"});
    CHECK(s.boolean("flag"));
    CHECK(s.number_or("missing", 4.0) == 4.0);
    CHECK(doc.with_prefix("a").size() == 1);
    CHECK_THROWS_AS(s.number("flag"), ConfigError);
    CHECK_THROWS_AS(doc.root().integer("name"), ConfigError);
    CHECK_THROWS_AS(s.number("nope"), ConfigError);

    const auto again = config::parse(config::render(doc));
    CHECK(again.root().integer("seed") == 7);
    CHECK(again.section("a.b").numbers("xs") == s.numbers("xs"));
}

TEST_CASE("config errors name the line") {
    CHECK_THROWS_AS(config::parse("[a]\n[a]\n"), ConfigError);
    CHECK_THROWS_AS(config::parse("x = 1\nx = 2\n"), ConfigError);
    CHECK_THROWS_AS(config::parse("x 1\n"), ConfigError);
    CHECK_THROWS_AS(config::parse("x = [1, 2\n"), ConfigError);
    try {
        config::parse("a = 1\nb = @\n", "cfg.toml");
        FAIL("expected a parse failure");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("cfg.toml:2") != std::string::npos);
    }
}

TEST_CASE("double formatting round trips") {
    Rng rng = make_stream(31, "test-io");
    for (int k = 0; k < 1000; ++k) {
        const double v = standard_normal(rng) * std::pow(10.0, uniform(rng, -20, 20));
        CHECK(csv::parse_double(csv::format_double(v)) == v);
    }
    CHECK(csv::format_double(0.1) == "0.1");
    CHECK_THROWS_AS(csv::parse_double("1.5x"), ParseError);
}

TEST_CASE("tables round trip with labels") {
    const auto dir = scratch("table");
    csv::Table t;
    t.header = {"label", "a", "b"};
    t.row_labels = {"r0", "r1"};
    t.rows = {{1.0 / 3.0, -2.0}, {1e-300, 5.5}};
    csv::write_table(dir / "t.csv", t);
    const auto back = csv::read_table(dir / "t.csv", true);
    CHECK(back.header == t.header);
    CHECK(back.row_labels == t.row_labels);
    CHECK(back.rows == t.rows);
}

TEST_CASE("I/U map parsing and defaults") {
    const auto map = parse_iu_map(config::parse(kMap));
    REQUIRE(map.dims() == 4);
    CHECK(map.n_calibration() == 2);
    CHECK(map.n_variation() == 2);
    CHECK(map.calibration_indices() == std::vector<std::size_t>{0, 2});
    CHECK(map.variation_indices() == std::vector<std::size_t>{1, 3});

    const auto& x1 = std::get<TruncNormalPrior>(map.entries[1].prior);
    CHECK(x1.sd == doctest::Approx(1.0 / 6.0));
    CHECK(x1.lo == doctest::Approx(-0.5));
    CHECK(x1.hi == doctest::Approx(0.5));
    const auto& u1 = std::get<UniformPrior>(map.entries[0].prior);
    CHECK(u1.lo == 0.2);
    CHECK(u1.hi == 0.8);

    // Variation at the nominal maps to the centre of the unit interval.
    const std::vector<double> delta{0.0, 1.5};
    const std::vector<double> u{0.5, 0.25};
    const auto z = map.to_unit(delta, u);
    CHECK(z[0] == doctest::Approx(0.5));
    CHECK(z[1] == doctest::Approx(0.5));
    CHECK(z[2] == doctest::Approx(0.25));
    CHECK(z[3] == doctest::Approx(0.75));
    const auto coded = map.from_unit(z);
    CHECK(coded[3] == doctest::Approx(1.5));
}

TEST_CASE("I/U map validation") {
    auto bad = [](const std::string& text) { return parse_iu_map(config::parse(text)); };
    CHECK_THROWS_AS(bad("[param.a]\nrole = \"calibration\"\nrange = [1, 0]\n"), ValidationError);
    CHECK_THROWS_AS(bad("[param.a]\nrole = \"other\"\nrange = [0, 1]\n"), ConfigError);
    CHECK_THROWS_AS(bad("[param.a]\nrole = \"variation\"\nrange = [0, 1]\ntruncation = 0.9\n"), ValidationError);
    CHECK_THROWS_AS(bad("[param.a]\nrole = \"variation\"\nrange = [0, 1]\nsd = 0\n"), ValidationError);
    CHECK_THROWS_AS(bad("# empty\n"), ValidationError);
}

TEST_CASE("curve files and run deletion") {
    const auto dir = scratch("curves");
    for (int k : {0, 1, 2}) {
        Curve c;
        c.t = {0.0, 0.5, 1.0};
        c.y = {static_cast<double>(k), 1.0, 2.0};
        write_curve(dir / ("run_00" + std::to_string(k) + ".csv"), c);
    }
    auto runs = load_curves(dir, CurveKind::model);
    REQUIRE(runs.size() == 3);
    CHECK(runs[2].label == "run_002");
    CHECK(*runs[2].design_row == 2);
    CHECK(runs[1].y.front() == 1.0);

    CurveLoadOptions opts;
    opts.deleted = {"run_001"};
    runs = load_curves(dir, CurveKind::model, opts);
    REQUIRE(runs.size() == 2);
    CHECK(*runs[1].design_row == 2);

    DesignMatrix design;
    design.rows = 3;
    design.cols = 2;
    design.points = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    const auto sub = select_rows(design, runs);
    CHECK(sub.rows == 2);
    CHECK(sub.at(1, 0) == 0.5);

    write_text(dir / "bad.csv", "t,y\n0,1\n0,2\n");
    CHECK_THROWS_AS(read_curve(dir / "bad.csv"), ParseError);
    write_text(dir / "short.csv", "t,y\n0,1,3\n1,2\n");
    CHECK_THROWS_AS(read_curve(dir / "short.csv"), ParseError);
}

TEST_CASE("design files round trip") {
    const auto dir = scratch("design");
    const auto d = generate_lhd(9, 3, 2, 5);
    write_design(dir / "d.csv", d);
    const auto back = read_design(dir / "d.csv");
    CHECK(back.rows == 9);
    CHECK(back.cols == 3);
    CHECK(back.points == d.points);
}

TEST_CASE("Latin hypercube structure") {
    for (std::size_t K : {5u, 12u, 40u}) {
        std::vector<double> trace;
        const auto d = generate_lhd(K, 4, 3, 17 + K, &trace);
        CHECK(d.rows == K);
        CHECK(d.cols == 4);
        for (std::size_t p = 0; p < d.cols; ++p) {
            std::vector<std::size_t> cells;
            for (std::size_t k = 0; k < K; ++k) {
                const double v = d.at(k, p) * static_cast<double>(K) - 0.5;
                CHECK(std::abs(v - std::round(v)) < 1e-9);
                cells.push_back(static_cast<std::size_t>(std::lround(v)));
            }
            std::sort(cells.begin(), cells.end());
            for (std::size_t k = 0; k < K; ++k) CHECK(cells[k] == k);
        }
        CHECK(std::is_sorted(trace.begin(), trace.end()));
        if (!trace.empty()) CHECK(d.min_distance() == doctest::Approx(trace.back()));
    }
}

TEST_CASE("Latin hypercube is deterministic and beats random designs") {
    const auto a = generate_lhd(20, 3, 2, 99);
    const auto b = generate_lhd(20, 3, 2, 99);
    CHECK(a.points == b.points);

    // Median min-distance of plain random LHDs with the same strata.
    Rng rng = make_stream(32, "test-io");
    std::vector<double> dists;
    for (int trial = 0; trial < 51; ++trial) {
        DesignMatrix r;
        r.rows = 20;
        r.cols = 3;
        r.points.resize(60);
        for (std::size_t p = 0; p < 3; ++p) {
            std::vector<std::size_t> perm(20);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            for (std::size_t k = 0; k < 20; ++k) r.points[k * 3 + p] = (static_cast<double>(perm[k]) + 0.5) / 20.0;
        }
        dists.push_back(r.min_distance());
    }
    std::nth_element(dists.begin(), dists.begin() + 25, dists.end());
    CHECK(a.min_distance() > dists[25]);
}
