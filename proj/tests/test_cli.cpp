#include <doctest.h>

#include <fstream>

#include "cli_runner.hpp"
#include "helpers.hpp"
#include "mmbeam/io/manifest.hpp"

using namespace mmbeam;
using mmbeam::test::run_cli_binary;
using mmbeam::test::temp_dir;

namespace {

const std::string kSmoke = MMBEAM_SOURCE_DIR "/configs/smoke.ini";

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("full pipeline through the executable") {
    const auto dir = temp_dir("cli_pipeline");
    const auto log = dir / "log.txt";
    auto r = run_cli_binary("synth -c " + q(kSmoke) + " -o " + q(dir / "raw"), log);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(std::filesystem::exists(dir / "raw" / "manifest.csv"));
    CHECK(std::filesystem::exists(dir / "raw" / "truth.csv"));
    CHECK(std::filesystem::exists(dir / "raw" / "config.resolved.ini"));

    r = run_cli_binary("prep -m " + q(dir / "raw" / "manifest.csv") + " -c " + q(kSmoke) + " -o " + q(dir / "prep"), log);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const auto prepared = dir / "prep" / "prepared.csv";
    CHECK(io::read_prepared_manifest(prepared).entries.size() == 16u);

    // Preparing prepared data is a data error.
    r = run_cli_binary("prep -m " + q(prepared) + " -c " + q(kSmoke) + " -o " + q(dir / "prep2"), log);
    CHECK(r.code == 3);
    CHECK(r.out.find("already") != std::string::npos);

    r = run_cli_binary("train -m " + q(prepared) + " -c " + q(kSmoke) + " -o " + q(dir / "train"), log);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(std::filesystem::exists(dir / "train" / "checkpoint.mmbc"));
    std::ifstream tl(dir / "train" / "train_log.csv");
    std::string header;
    std::getline(tl, header);
    CHECK(header.rfind("epoch,step,lr,train_loss,val_dba", 0) == 0);

    r = run_cli_binary("eval -m " + q(prepared) + " -k " + q(dir / "train" / "checkpoint.mmbc") + " -o " + q(dir / "eval"),
                       log);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(r.out.find("overall=") != std::string::npos);
    const auto preds = io::read_predictions(dir / "eval" / "predictions.csv");
    CHECK(preds.size() == 16u);

    r = run_cli_binary("score -t " + q(dir / "raw" / "truth.csv") + " -p " + q(dir / "eval" / "predictions.csv"), log);
    CHECK(r.code == 0);
    CHECK(r.out.find("overall=") != std::string::npos);

    // A GPS-only override trains a model the checkpoint config records.
    r = run_cli_binary("train -m " + q(prepared) + " -c " + q(kSmoke) + " --modalities gps -o " + q(dir / "gps"), log);
    CHECK_MESSAGE(r.code == 0, r.out);

    // Missing predictions for some truth ids is a data error.
    io::write_predictions(dir / "short.csv", {preds.front()});
    r = run_cli_binary("score -t " + q(dir / "raw" / "truth.csv") + " -p " + q(dir / "short.csv"), log);
    CHECK(r.code == 3);

    // Checkpoints that fail the hash check are rejected.
    std::ofstream(dir / "junk.mmbc") << "not a checkpoint";
    r = run_cli_binary("eval -m " + q(prepared) + " -k " + q(dir / "junk.mmbc") + " -o " + q(dir / "e2"), log);
    CHECK(r.code == 3);
  }

  TEST_CASE("configuration errors exit with code 2") {
    const auto dir = temp_dir("cli_config");
    const auto log = dir / "log.txt";
    std::ofstream(dir / "bad.ini") << "[train]\nlearning_rate = 1\n";
    CHECK(run_cli_binary("synth -c " + q(dir / "bad.ini") + " -o " + q(dir / "x"), log).code == 2);
    CHECK(run_cli_binary("synth -c " + q(dir / "missing.ini") + " -o " + q(dir / "x"), log).code == 2);
    CHECK(run_cli_binary("", log).code == 2);
    CHECK(run_cli_binary("frobnicate", log).code == 2);
    // synth needs a [world] section.
    std::ofstream(dir / "noworld.ini") << "[train]\nlr = 0.001\n";
    CHECK(run_cli_binary("synth -c " + q(dir / "noworld.ini") + " -o " + q(dir / "x"), log).code == 2);
    CHECK_FALSE(std::filesystem::exists(dir / "x"));
    CHECK(run_cli_binary("--help", log).code == 0);
  }

  TEST_CASE("flops reports blocks and reference values") {
    const auto dir = temp_dir("cli_flops");
    const auto log = dir / "log.txt";
    auto r = run_cli_binary("flops -c " + q(kSmoke), log);
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("block,macs,params\n", 0) == 0);
    CHECK(r.out.find("\ntotal,") != std::string::npos);
    std::ofstream(dir / "r18.ini") << "[model]\nbackbone = resnet18\n";
    r = run_cli_binary("flops -c " + q(dir / "r18.ini"), log);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("resnet18_backbone_reference,,11166912") != std::string::npos);
    CHECK(r.out.find("resnet18_backbone_delta,,9600") != std::string::npos);
    r = run_cli_binary("flops -c " + q(kSmoke) + " --modalities gps", log);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("total,") != std::string::npos);
  }
}
