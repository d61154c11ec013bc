#include "cli_runner.hpp"

#include <lexbeam/io.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

using lexbeam::io::json;
using lexbeam::testing::CliResult;
using lexbeam::testing::run_cli;

namespace {

std::string data(const std::string& name)
{
    return std::string(LEXBEAM_TEST_DATA) + "/" + name;
}

std::vector<json> records(const std::string& text)
{
    std::vector<json> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        out.push_back(json::parse(line));
    }
    return out;
}

void expect_single_line_error(const CliResult& r, const std::string& kind)
{
    ASSERT_FALSE(r.err.empty());
    EXPECT_EQ(r.err.find('\n'), r.err.size() - 1) << r.err;
    auto j = json::parse(r.err);
    EXPECT_EQ(j.at("error"), kind);
    EXPECT_TRUE(j.contains("message"));
    EXPECT_TRUE(r.out.empty());
}

std::filesystem::path scratch(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("lexbeam_cli_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST(Cli, HelpAndVersion)
{
    auto help = run_cli({"decode", "--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("--beam-width"), std::string::npos);
    auto version = run_cli({"--version"});
    EXPECT_EQ(version.code, 0);
    EXPECT_EQ(version.out, "lexbeam 0.1.0\n");
}

TEST(Cli, UsageErrorsExitOne)
{
    auto unknown_flag = run_cli({"filter", "--detections", data("detections.jsonl"), "--hierarchy",
                                 data("hierarchy.json"), "--frobnicate"});
    EXPECT_EQ(unknown_flag.code, 1);
    expect_single_line_error(unknown_flag, "BadFlag");

    auto unknown_sub = run_cli({"frobnicate"});
    EXPECT_EQ(unknown_sub.code, 1);
    expect_single_line_error(unknown_sub, "UnknownSubcommand");

    auto bad_value = run_cli({"filter", "--detections", data("detections.jsonl"), "--hierarchy",
                              data("hierarchy.json"), "--mode", "partial"});
    EXPECT_EQ(bad_value.code, 1);
    expect_single_line_error(bad_value, "BadFlag");

    auto no_seed = run_cli({"sample", "--images", data("images20.jsonl"), "--target", "5"});
    EXPECT_EQ(no_seed.code, 1);
    expect_single_line_error(no_seed, "BadFlag");
}

TEST(Cli, LibraryErrorsExitOne)
{
    auto missing = run_cli({"stats", "--captions", data("does-not-exist.jsonl")});
    EXPECT_EQ(missing.code, 1);
    expect_single_line_error(missing, "IoFailure");

    auto small = run_cli({"sample", "--images", data("images20.jsonl"), "--target", "0", "--seed", "3"});
    EXPECT_EQ(small.code, 1);
    expect_single_line_error(small, "TargetTooSmall");

    auto oov = run_cli({"decode", "--scorer", data("model.json"), "--constraints", data("constraints_oov.jsonl"),
                        "--max-len", "2", "--jobs", "2", "--fallback", "off"});
    EXPECT_EQ(oov.code, 1);
    expect_single_line_error(oov, "UnknownToken");
}

TEST(Cli, FilterReproducesAncestorSuppression)
{
    auto r = run_cli({"filter", "--detections", data("detections.jsonl"), "--hierarchy", data("hierarchy.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    auto recs = records(r.out);
    ASSERT_EQ(recs.size(), 4u);
    const auto& dog = recs[1];
    EXPECT_EQ(dog.at("image_id"), "img-dog");
    ASSERT_EQ(dog.at("groups").size(), 1u);
    EXPECT_EQ(dog.at("groups")[0].at("label"), "Dog");
    EXPECT_EQ(dog.at("groups")[0].at("alternatives"), json::parse(R"([["dog"], ["dogs"]])"));
    EXPECT_EQ(dog.at("min_satisfied"), 1);
    EXPECT_EQ(recs[0].at("min_satisfied"), 2);
    EXPECT_TRUE(recs[2].at("groups").empty());
    for (const auto& rec : recs) {
        EXPECT_LE(rec.at("groups").size(), 3u);
    }
    auto warning = json::parse(r.err.substr(0, r.err.find('\n')));
    EXPECT_EQ(warning.at("image_id"), "img-unknown");
}

TEST(Cli, InspectFsmCounts)
{
    auto three = run_cli({"inspect-fsm", "--constraints", data("constraints_three.jsonl")});
    ASSERT_EQ(three.code, 0) << three.err;
    EXPECT_NE(three.out.find("8 states, 4 accepting\n"), std::string::npos);
    EXPECT_NE(three.out.find("q0 mask=000 satisfied=0\n  dog -> q1\n  cat -> q2\n  chair -> q4\n"), std::string::npos)
        << three.out;

    auto empty = run_cli({"inspect-fsm", "--constraints", data("constraints_empty.jsonl")});
    EXPECT_NE(empty.out.find("1 state, accepting\n"), std::string::npos);

    auto phrase = run_cli({"inspect-fsm", "--constraints", data("constraints_phrase.jsonl")});
    EXPECT_NE(phrase.out.find("3 states, 1 accepting\n"), std::string::npos);

    auto with_vocab = run_cli({"inspect-fsm", "--constraints", data("constraints_three.jsonl"), "--vocab",
                               data("model.json"), "--mode", "faithful"});
    EXPECT_NE(with_vocab.out.find("8 states, 4 accepting\n"), std::string::npos);
}

TEST(Cli, DecodeMeetsQuotaAndKeepsOrder)
{
    auto one = run_cli({"decode", "--scorer", data("model.json"), "--constraints", data("constraints_decode.jsonl"),
                        "--fallback", "off"});
    ASSERT_EQ(one.code, 0) << one.err;
    auto many = run_cli({"decode", "--scorer", data("model.json"), "--constraints", data("constraints_decode.jsonl"),
                         "--fallback", "off", "--jobs", "4"});
    EXPECT_EQ(one.out, many.out);

    auto input = lexbeam::io::read_records(data("constraints_decode.jsonl"));
    auto out = records(one.out);
    ASSERT_EQ(out.size(), input.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_EQ(out[i].at("image_id"), input[i].at("image_id"));
        const auto caption = out[i].at("caption").get<std::vector<std::string>>();
        std::size_t satisfied = 0;
        for (const auto& g : input[i].at("groups")) {
            bool hit = false;
            for (const auto& alt : g.at("alternatives")) {
                const auto words = alt.get<std::vector<std::string>>();
                hit = hit || std::search(caption.begin(), caption.end(), words.begin(), words.end()) != caption.end();
            }
            satisfied += hit ? 1 : 0;
        }
        EXPECT_EQ(out[i].at("satisfied"), satisfied);
        EXPECT_GE(satisfied, input[i].at("min_satisfied").get<std::size_t>());
    }
}

TEST(Cli, FilterOutputFeedsDecode)
{
    const auto groups = scratch("groups.jsonl");
    auto f = run_cli({"--output", groups.string(), "filter", "--detections", data("detections.jsonl"), "--hierarchy",
                      data("hierarchy.json")});
    ASSERT_EQ(f.code, 0) << f.err;
    EXPECT_TRUE(f.out.empty());
    auto d = run_cli({"decode", "--scorer", data("model.json"), "--constraints", groups.string()});
    ASSERT_EQ(d.code, 0) << d.err;
    auto out = records(d.out);
    ASSERT_EQ(out.size(), 4u);
    EXPECT_EQ(out[0].at("satisfied"), 2);
}

TEST(Cli, SampleAndStats)
{
    auto s = run_cli({"sample", "--images", data("images20.jsonl"), "--target", "12", "--candidates", "5", "--seed",
                      "42", "--domain", data("domain.json")});
    ASSERT_EQ(s.code, 0) << s.err;
    auto out = records(s.out);
    ASSERT_EQ(out.size(), 12u);
    EXPECT_EQ(out[0].at("image_id"), "img12");
    EXPECT_EQ(out[0].at("source"), "auto_include");
    EXPECT_EQ(out[2].at("image_id"), "img04");
    EXPECT_TRUE(out[2].contains("domain"));

    auto st = run_cli({"stats", "--captions", data("captions.jsonl")});
    ASSERT_EQ(st.code, 0) << st.err;
    auto counts = records(st.out);
    ASSERT_EQ(counts.size(), 4u);
    const std::vector<int> expected{3, 3, 2, 1};
    for (std::size_t n = 0; n < 4; ++n) {
        EXPECT_EQ(counts[n].at("n"), n + 1);
        EXPECT_EQ(counts[n].at("unique"), expected[n]);
    }
}

TEST(Cli, ManifestReplayIsByteIdentical)
{
    const auto manifest = scratch("sample.manifest.json");
    auto first = run_cli({"--manifest", manifest.string(), "sample", "--images", data("images200.jsonl"), "--target",
                          "60", "--seed", "7"});
    ASSERT_EQ(first.code, 0) << first.err;
    auto m = json::parse(lexbeam::io::read_file(manifest.string()));
    EXPECT_EQ(m.at("subcommand"), "sample");
    EXPECT_EQ(m.at("seed"), 7);
    EXPECT_EQ(m.at("flags").at("candidates"), 5);
    EXPECT_EQ(m.at("version"), "0.1.0");

    auto replay = run_cli({"replay", manifest.string()});
    ASSERT_EQ(replay.code, 0) << replay.err;
    EXPECT_EQ(replay.out, first.out);

    const auto manifest2 = scratch("sample2.manifest.json");
    auto second = run_cli({"--manifest", manifest2.string(), "sample", "--images", data("images200.jsonl"), "--target",
                           "60", "--seed", "7"});
    EXPECT_EQ(second.out, first.out);
    EXPECT_EQ(lexbeam::io::read_file(manifest2.string()), lexbeam::io::read_file(manifest.string()));
}
