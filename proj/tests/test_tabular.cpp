#include "peee/error.hpp"
#include "peee/tabular.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace peee;

namespace {

TableSchema tbi_schema() {
    TableSchema s;
    s.id_column = "id";
    s.roles = {{"rehab", ColumnRole::response}, {"year", ColumnRole::auxiliary}};
    s.categorical = {"race"};
    s.incomplete_column = "race";
    return s;
}

}  // namespace

TEST_CASE("blank cell is recorded as missing") {
    std::istringstream in("id,x,race\n1,0.5,a\n2,1.5,\n3,2.5,b\n");
    TableSchema s;
    s.id_column = "id";
    s.categorical = {"race"};
    s.incomplete_column = "race";
    const ObservationTable t = read_csv(in, s);
    const Column& race = t.column("race");
    CHECK(race.missing == std::vector<std::uint8_t>{0, 1, 0});
    CHECK(std::isnan(race.values[1]));
    CHECK(!t.observed(1));
    CHECK(t.incomplete_rows() == std::vector<std::size_t>{1});
}

TEST_CASE("complete file has zero missingness") {
    std::istringstream in("y,x\n1,2\n0,3\n");
    const auto t = read_csv(in, TableSchema{});
    const auto s = missingness_summary(t);
    CHECK(s.m == 0);
    CHECK(s.rate == 0.0);
    CHECK(t.subject_ids() == std::vector<std::int64_t>{1, 2});
}

TEST_CASE("TBI-shaped fixture summary") {
    const auto t = load_csv(PEEE_TEST_DATA "/tbi_small.csv", tbi_schema());
    const auto s = missingness_summary(t);
    CHECK(s.n == 4);
    CHECK(s.m == 1);
    CHECK(s.rate == doctest::Approx(0.25));
    CHECK(t.column("race").levels == std::vector<std::string>{"White", "Black", "Other"});
    CHECK(t.column("year").role == ColumnRole::auxiliary);
    CHECK(t.column("rehab").role == ColumnRole::response);
    CHECK(t.subject_ids().front() == 101);
}

TEST_CASE("missingness counting") {
    std::vector<double> v(10, 1.0);
    std::vector<std::uint8_t> miss(10, 0);
    for (int i : {1, 4, 6, 9}) {
        v[static_cast<std::size_t>(i)] = std::nan("");
        miss[static_cast<std::size_t>(i)] = 1;
    }
    std::vector<std::int64_t> ids(10);
    for (int i = 0; i < 10; ++i)
        ids[static_cast<std::size_t>(i)] = i + 1;
    ObservationTable t(ids, {Column{"x", ColumnRole::covariate, ColumnKind::numeric, v, miss, {}}}, "x");
    const auto s = missingness_summary(t);
    CHECK(s.n == 10);
    CHECK(s.m == 4);
    CHECK(s.rate == doctest::Approx(0.4));

    std::vector<std::int64_t> ids100(100);
    for (int i = 0; i < 100; ++i)
        ids100[static_cast<std::size_t>(i)] = i + 1;
    ObservationTable full(ids100, {Column{"x", ColumnRole::covariate, ColumnKind::numeric,
                                          std::vector<double>(100, 0.0), std::vector<std::uint8_t>(100, 0), {}}});
    const auto s100 = missingness_summary(full);
    CHECK(s100.n == 100);
    CHECK(s100.m == 0);
    CHECK(s100.rate == 0.0);
}

TEST_CASE("wrong arity reports the line number") {
    std::istringstream in("y,x\n1,2\n0\n");
    try {
        read_csv(in, TableSchema{});
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.position() == 3);
    }
}

TEST_CASE("missing value outside the incomplete column is a schema error") {
    std::istringstream in("y,x,z\n1,,a\n0,1,b\n");
    TableSchema s;
    s.incomplete_column = "z";
    CHECK_THROWS_AS(read_csv(in, s), SchemaError);
    std::istringstream in2("y,x\n1,NA\n0,1\n");
    CHECK_THROWS_AS(read_csv(in2, TableSchema{}), SchemaError);
}

TEST_CASE("table invariants") {
    const Column x{"x", ColumnRole::covariate, ColumnKind::numeric, {1, 2}, {0, 0}, {}};
    CHECK_THROWS_AS(ObservationTable({1, 1}, {x}), SchemaError);
    Column masked = x;
    masked.values[0] = std::nan("");
    masked.missing[0] = 1;
    CHECK_THROWS_AS(ObservationTable({1, 2}, {masked}), SchemaError);
    const Column one_level{"g", ColumnRole::covariate, ColumnKind::categorical, {1, 1}, {0, 0}, {"a"}};
    CHECK_THROWS_AS(ObservationTable({1, 2}, {one_level}), SchemaError);
    const Column bad_code{"g", ColumnRole::covariate, ColumnKind::categorical, {1, 3}, {0, 0}, {"a", "b"}};
    CHECK_THROWS_AS(ObservationTable({1, 2}, {bad_code}), SchemaError);
}

TEST_CASE("explicit level order and quoted fields") {
    std::istringstream in("g,note\nb,\"x, y\"\na,\"he said \"\"hi\"\"\"\n");
    TableSchema s;
    s.categorical = {"g", "note"};
    s.levels["g"] = {"a", "b"};
    const auto t = read_csv(in, s);
    CHECK(t.column("g").values == std::vector<double>{2, 1});
    CHECK(t.column("note").levels == std::vector<std::string>{"x, y", "he said \"hi\""});
}

TEST_CASE("write then load round-trips floats bit-exactly") {
    const std::vector<double> vals = {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 123456789.123456789};
    std::vector<double> inc = {1.25, std::nan(""), -0.0, 7.0, 1e-17};
    ObservationTable t({5, 6, 7, 8, 9},
                       {Column{"x", ColumnRole::covariate, ColumnKind::numeric, vals, {0, 0, 0, 0, 0}, {}},
                        Column{"m", ColumnRole::covariate, ColumnKind::numeric, inc, {0, 1, 0, 0, 0}, {}}},
                       "m");
    std::ostringstream out;
    write_csv(t, out);
    std::istringstream in(out.str());
    TableSchema s;
    s.id_column = "id";
    s.incomplete_column = "m";
    const auto back = read_csv(in, s);
    CHECK(back.subject_ids() == t.subject_ids());
    for (std::size_t i = 0; i < vals.size(); ++i)
        CHECK(back.column("x").values[i] == vals[i]);
    CHECK(back.column("m").missing == t.column("m").missing);
    CHECK(back.column("m").values[4] == 1e-17);
}

TEST_CASE("select_rows keeps or renumbers ids") {
    ObservationTable t({10, 20, 30}, {Column{"x", ColumnRole::covariate, ColumnKind::numeric, {1, 2, 3}, {0, 0, 0}, {}}});
    const std::vector<std::size_t> rows = {2, 2, 0};
    const std::vector<std::size_t> distinct = {2, 0};
    const auto kept = t.select_rows(distinct, false);
    CHECK(kept.column("x").values == std::vector<double>{3, 1});
    CHECK(kept.subject_ids() == std::vector<std::int64_t>{30, 10});
    CHECK_THROWS_AS(t.select_rows(rows, false), SchemaError);
    const auto fresh = t.select_rows(rows, true);
    CHECK(fresh.subject_ids() == std::vector<std::int64_t>{1, 2, 3});
}
