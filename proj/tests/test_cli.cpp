#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "permeq/cli.hpp"

using nlohmann::json;
using permeq::cli::run;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& s)
{
    std::vector<std::string> v;
    std::istringstream in(s);
    for (std::string line; std::getline(in, line);)
        v.push_back(line);
    return v;
}

}  // namespace

TEST_CASE("partitions of a 4-set")
{
    const auto r = invoke({"partitions", "--order", "4"});
    REQUIRE(r.code == permeq::cli::kExitOk);
    const auto l = lines(r.out);
    REQUIRE(l.size() == 15);
    CHECK(l.front() == "0000 {{1,2,3,4}}");
    CHECK(l.back() == "0123 {{1},{2},{3},{4}}");

    const auto j = json::parse(invoke({"--format", "json", "partitions", "--order", "3"}).out);
    CHECK(j["count"] == 5);
    CHECK(j["schema_version"] == permeq::cli::kSchemaVersion);
}

TEST_CASE("basis csv lists nonzero entries")
{
    const auto r = invoke({"basis", "--k", "1", "--n", "3"});
    REQUIRE(r.code == 0);
    const auto l = lines(r.out);
    CHECK(l.front() == "element,rgs,blocks,row,col");
    // identity (3 entries) plus off-diagonal (6 entries)
    CHECK(l.size() == 1 + 3 + 6);

    const auto inv = json::parse(invoke({"basis", "--k", "2", "--n", "3", "--invariant", "--format", "json"}).out);
    CHECK(inv["l"] == 0);
    CHECK(inv["elements"].size() == 2);
}

TEST_CASE("verify emits one passing verdict per line")
{
    const auto r = invoke({"verify", "--suite", "trace-moment", "--n", "2", "--k", "3"});
    REQUIRE(r.code == 0);
    const auto l = lines(r.out);
    REQUIRE(l.size() == 1);
    const auto j = json::parse(l[0]);
    CHECK(j["value"] == 4);
    CHECK(j["expected"] == 4);
    CHECK(j["pass"] == true);

    const auto all = invoke({"verify"});
    CHECK(all.code == 0);
    for (const auto& line : lines(all.out))
        CHECK(json::parse(line)["pass"] == true);
}

TEST_CASE("fit reports the symmetrizer coefficients")
{
    const auto r = invoke({"fit", "--task", "sym_projection", "--n", "5", "--format", "json"});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["coefficients"][0].get<double>() == doctest::Approx(0.5));
    CHECK(j["coefficients"][1].get<double>() == doctest::Approx(0.5));
    CHECK(j["residual"].get<double>() < 1e-10);
}

TEST_CASE("experiment output is reproducible for a fixed seed")
{
    const std::vector<std::string> args{"--seed", "3", "experiment", "--task", "diag_extraction",
                                        "--n", "4", "--n-train", "16", "--n-test", "8",
                                        "--epochs", "2", "--depths", "1", "--lrs", "0.01"};
    const auto a = invoke(args);
    const auto b = invoke(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    const auto l = lines(a.out);
    REQUIRE(l.size() == 2);
    CHECK(l[1].rfind("diag_extraction,full,1,4,4,16,8,0.01,2,", 0) == 0);
    CHECK(l[1].substr(l[1].size() - 5) == ",3,na");
}

TEST_CASE("json config supplies options and the command line wins")
{
    const std::string path = "permeq_test_config.json";
    {
        std::ofstream f(path);
        f << R"({"format": "json", "partitions": {"order": 3}})";
    }
    const auto r = invoke({"--config", path, "partitions"});
    CHECK(r.code == 0);
    CHECK(json::parse(r.out)["count"] == 5);
    const auto over = invoke({"--config", path, "partitions", "--order", "2"});
    CHECK(json::parse(over.out)["count"] == 2);
    CHECK(over.err.find("resolved config") != std::string::npos);
    {
        std::ofstream f(path);
        f << R"({"partitions": {"order": 3, "unknown": 1}})";
    }
    CHECK(invoke({"--config", path, "partitions"}).code == permeq::cli::kExitUsage);
    std::remove(path.c_str());
}

TEST_CASE("usage errors exit with code 2")
{
    CHECK(invoke({}).code == permeq::cli::kExitUsage);
    CHECK(invoke({"partitions"}).code == permeq::cli::kExitUsage);
    CHECK(invoke({"partitions", "--order", "99"}).code == permeq::cli::kExitUsage);
    CHECK(invoke({"fit", "--task", "nope"}).code == permeq::cli::kExitUsage);
    CHECK(invoke({"bench", "--reps", "0"}).code == permeq::cli::kExitUsage);
    CHECK(invoke({"--format", "text", "verify"}).code == permeq::cli::kExitUsage);
    CHECK(invoke({"--help"}).code == permeq::cli::kExitOk);
}

TEST_CASE("bench compares the two layer paths")
{
    const auto r = invoke({"bench", "--n", "6", "--d", "2", "--reps", "2"});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["identical"] == true);
    CHECK(j["max_abs_diff"].get<double>() < 1e-10);
}
