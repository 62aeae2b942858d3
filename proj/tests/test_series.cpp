#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <limits>

#include "mcusum/series.hpp"

using namespace mcusum;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
    const auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream(path) << body;
    return path;
}

ErrorCategory category_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.category();
    }
    FAIL("expected an mcusum::Error");
    return ErrorCategory::Internal;
}

}  // namespace

TEST_CASE("series rejects broken input", "[series]") {
    CHECK(category_of([] { MultivariateSeries(Eigen::MatrixXd::Zero(1, 2)); }) == ErrorCategory::TooShort);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(4, 2);
    bad(2, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK(category_of([&] { MultivariateSeries s(bad); }) == ErrorCategory::NonFinite);
    CHECK(category_of([] { MultivariateSeries(Eigen::MatrixXd::Zero(3, 2), {"a"}); }) ==
          ErrorCategory::DimensionMismatch);

    const auto report = validate(bad);
    REQUIRE_FALSE(report.ok());
    CHECK(report.findings.front().row == 2);
    CHECK(report.findings.front().column == 1);
}

TEST_CASE("csv ingestion", "[series]") {
    SECTION("one numeric column") {
        const auto path = write_temp("mcusum_one.csv", "v\n1.0\n2.0\n");
        const auto s = load_csv(path, {{"v"}, std::nullopt, 0});
        CHECK(s.length() == 2);
        CHECK(s.dim() == 1);
        CHECK(s.values()(1, 0) == 2.0);
    }
    SECTION("columns in config order, dates kept, quoted fields, skipped preamble") {
        const auto path = write_temp("mcusum_multi.csv",
                                     "generated by hand\nDate,A,\"B\",C\n2021-01-01,1,2,3\n2021-01-02,4,5,6\n"
                                     "2021-01-03,7,8,9\n");
        const auto s = load_csv(path, {{"C", "A"}, std::string("Date"), 1});
        REQUIRE(s.dim() == 2);
        CHECK(s.values()(0, 0) == 3.0);
        CHECK(s.values()(2, 1) == 7.0);
        CHECK(s.timestamps().at(1) == "2021-01-02");
        CHECK(s.labels() == std::vector<std::string>{"C", "A"});
        CHECK(read_csv_header(path, 1) == std::vector<std::string>{"Date", "A", "B", "C"});
    }
    SECTION("non-numeric cell names row and column") {
        const auto path = write_temp("mcusum_abc.csv", "x,y\n1,2\n3,abc\n");
        try {
            load_csv(path, {{"x", "y"}, std::nullopt, 0});
            FAIL("no error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::NonNumericCell);
            CHECK_THAT(e.what(), ContainsSubstring("abc") && ContainsSubstring("y") && ContainsSubstring("3"));
        }
    }
    SECTION("missing column, too short, non-finite") {
        const auto path = write_temp("mcusum_short.csv", "x\n1\n");
        CHECK(category_of([&] { load_csv(path, {{"nope"}, std::nullopt, 0}); }) == ErrorCategory::MissingColumn);
        CHECK(category_of([&] { load_csv(path, {{"x"}, std::nullopt, 0}); }) == ErrorCategory::TooShort);
        const auto inf = write_temp("mcusum_inf.csv", "x\n1\ninf\n");
        CHECK(category_of([&] { load_csv(inf, {{"x"}, std::nullopt, 0}); }) == ErrorCategory::NonFinite);
    }
    SECTION("write then read round-trips exactly") {
        Eigen::MatrixXd v(3, 2);
        v << 0.1, 1e-300, -3.25, 1.0 / 3.0, 7, 2e10;
        const MultivariateSeries s(v, {"a", "b"}, {"t1", "t2", "t3"});
        const auto path = (std::filesystem::temp_directory_path() / "mcusum_rt.csv").string();
        write_csv(s, path);
        const auto back = load_csv(path, {{"a", "b"}, std::string("date"), 0});
        CHECK(back.values() == v);
        CHECK(back.timestamps() == s.timestamps());
    }
}

TEST_CASE("centering and transforms", "[series]") {
    Catch::Generators::RandomFloatingGenerator<double> gen(-50.0, 50.0, 7);
    Eigen::MatrixXd v(100, 3);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = gen.get();
        gen.next();
    }
    const auto c = center(MultivariateSeries(v));
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(c.values.col(j).sum()) < 1e-7);
    CHECK(c.mean.isApprox(v.colwise().mean().transpose(), 1e-12));

    Eigen::MatrixXd p(3, 1);
    p << 1.0, std::exp(1.0), std::exp(3.0);
    const auto logged = apply_transform(MultivariateSeries(p), Transform::Log);
    CHECK(logged.values()(2, 0) == Catch::Approx(3.0));
    const auto diffed = apply_transform(logged, Transform::Diff);
    CHECK(diffed.length() == 2);
    CHECK(diffed.values()(1, 0) == Catch::Approx(2.0));
    Eigen::MatrixXd neg(2, 1);
    neg << 1.0, -1.0;
    CHECK(category_of([&] { apply_transform(MultivariateSeries(neg), Transform::Log); }) == ErrorCategory::DomainError);
    CHECK(parse_transform("center") == Transform::Center);
    CHECK(category_of([] { parse_transform("square"); }) == ErrorCategory::DomainError);
}
