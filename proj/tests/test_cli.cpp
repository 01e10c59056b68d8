#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "geoprog/cli.hpp"
#include "geoprog/data_io.hpp"
#include "helpers.hpp"

using namespace geoprog;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream o, e;
    const int code = run_cli(std::move(args), o, e);
    return {code, o.str(), e.str()};
}

std::string tmp(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("geoprog_cli_" + name)).string();
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, sep);) out.push_back(item);
    return out;
}

}  // namespace

TEST_CASE("synth is deterministic and respects the seed fallback") {
    const auto a = tmp("a.jsonl"), b = tmp("b.jsonl");
    CHECK(cli({"synth", "--out", a, "--n", "12", "--seed", "5"}).code == 0);
    CHECK(cli({"synth", "--out", b, "--n", "12", "--seed", "5"}).code == 0);
    CHECK(read_file(a) == read_file(b));
    CHECK(read_records(a).size() == 12);
    ::setenv("GEOPROG_SEED", "5", 1);
    CHECK(cli({"synth", "--out", b, "--n", "12"}).code == 0);
    CHECK(read_file(a) == read_file(b));
    ::setenv("GEOPROG_SEED", "five", 1);
    CHECK(cli({"synth", "--out", b, "--n", "12"}).code == 1);
    ::unsetenv("GEOPROG_SEED");
    std::filesystem::remove(a);
    std::filesystem::remove(b);
}

TEST_CASE("exit codes") {
    CHECK(cli({}).code == 1);
    CHECK(cli({"frobnicate"}).code == 1);
    CHECK(cli({"--help"}).code == 0);
    CHECK(cli({"synth", "--n", "3"}).code == 1);

    const auto bad = tmp("bad.jsonl");
    write_file(bad, "{\"id\":\"x\",\"type\":\"cal\",\"text\":\"3 and 4\",\"program\":[{\"op\":\"add\",\"args\":[\"N_7\"]}]}\n");
    const auto r = cli({"train", "--data", bad, "--out", tmp("bad.ckpt"), "--epochs", "1"});
    CHECK(r.code == 2);
    CHECK(r.err.find("UnresolvableSymbol") != std::string::npos);
    std::filesystem::remove(bad);
}

TEST_CASE("train, eval, predict, explain and analyze end to end") {
    const auto data = tmp("e2e.jsonl"), model = tmp("e2e.ckpt"), preds = tmp("e2e.pred.jsonl");
    REQUIRE(cli({"synth", "--out", data, "--n", "6", "--seed", "2"}).code == 0);
    const auto cfg = tmp("cfg.json");
    write_file(cfg, R"({"hidden": 8, "layers": 1, "epochs": 5, "batch_size": 3, "seed": 4})");
    REQUIRE(cli({"train", "--config", cfg, "--data", data, "--out", model, "--epochs", "2"}).code == 0);
    const auto log = read_file(model + ".loss.csv");
    CHECK(split(log, '\n').size() == 3);  // header + one row per epoch: the flag wins over the config

    const auto over = cli({"eval", "--model", model, "--data", data, "--topk", "5", "--beam", "3"});
    CHECK(over.code == 1);
    CHECK(over.err.find("--topk") != std::string::npos);

    const auto ev = cli({"eval", "--model", model, "--data", data, "--topk", "2", "--beam", "3", "--pred-out", preds});
    REQUIRE(ev.code == 0);
    const auto report = nlohmann::json::parse(ev.out);
    CHECK(report["total"] == 6);

    const auto input = tmp("one.json");
    write_file(input, R"({"text": "the sides are 3 and 4 and the angle is 30", "patches": [[0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]]})");
    const auto pr = cli({"predict", "--model", model, "--input", input, "--beam", "3"});
    REQUIRE(pr.code == 0);
    const auto cands = nlohmann::json::parse(pr.out)["candidates"];
    CHECK(cands.size() >= 1);
    CHECK(cands.size() <= 3);

    const auto ex = cli({"explain", "--model", model, "--input", input, "--type", "cal"});
    REQUIRE(ex.code == 0);
    const auto rows = split(ex.out, '\n');
    REQUIRE(rows.size() >= 3);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        double s = 0;
        for (const auto& cell : split(rows[i], ',')) s += std::stod(cell);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }

    const auto an = cli({"analyze", "--pred", preds, "--gold", data});
    REQUIRE(an.code == 0);
    const auto aj = nlohmann::json::parse(an.out);
    CHECK(aj["attribution"]["wrong_operator"].get<int>() + aj["attribution"]["wrong_operand"].get<int>() ==
          aj["wrong"].get<int>());
    CHECK(aj["wrong"].get<int>() + aj["correct"].get<int>() == 6);

    CHECK(cli({"predict", "--model", data, "--input", input}).code == 2);
    for (const auto& f : {data, model, preds, cfg, input, model + ".loss.csv"}) std::filesystem::remove(f);
}
