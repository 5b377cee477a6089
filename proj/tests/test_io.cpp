#include <doctest.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "mmbeam/io/checkpoint.hpp"
#include "mmbeam/io/config.hpp"
#include "mmbeam/io/manifest.hpp"
#include "mmbeam/io/tensor_file.hpp"

using namespace mmbeam;
using namespace mmbeam::io;
using mmbeam::test::temp_dir;

TEST_SUITE("io") {
  TEST_CASE("tensor files round-trip bit-exactly, including NaN payloads") {
    const auto dir = temp_dir("tensor");
    ad::Tensor<float> f({2, 3}, {1.5f, -0.0f, std::numeric_limits<float>::infinity(), 1e-40f,
                                 std::bit_cast<float>(0x7fc01234u), 3.0f});
    write_tensor(dir / "f.mmbt", f);
    const auto g = read_tensor_f32(dir / "f.mmbt");
    REQUIRE(g.shape() == f.shape());
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::bit_cast<std::uint32_t>(g[i]) == std::bit_cast<std::uint32_t>(f[i]));
    ad::Tensor<double> d({1, 1, 2}, {std::nan("7"), -1e300});
    write_tensor(dir / "d.mmbt", d);
    const auto e = read_tensor(dir / "d.mmbt");
    CHECK(e.dtype == DType::F64);
    for (std::size_t i = 0; i < d.size(); ++i)
      CHECK(std::bit_cast<std::uint64_t>(e.f64[i]) == std::bit_cast<std::uint64_t>(d[i]));
    CHECK_THROWS_AS(read_tensor_f32(dir / "d.mmbt"), DataError);
    // Scalars and empty tensors.
    ad::Tensor<float> s({1}, {4.0f});
    write_tensor(dir / "s.mmbt", s);
    CHECK(read_tensor_f32(dir / "s.mmbt") == s);
  }

  TEST_CASE("malformed tensor bytes are rejected") {
    const std::string good = encode_tensor(ad::Tensor<float>({2}, {1.0f, 2.0f}));
    std::size_t off = 0;
    CHECK(decode_tensor(good, off).f32.size() == 2u);
    CHECK(off == good.size());
    for (std::size_t cut : {0ul, 3ul, 6ul, good.size() - 1}) {
      std::size_t o = 0;
      CHECK_THROWS_AS(decode_tensor(std::string_view(good).substr(0, cut), o), DataError);
    }
    std::string bad = good;
    bad[0] = 'X';
    off = 0;
    CHECK_THROWS_AS(decode_tensor(bad, off), DataError);
    CHECK_THROWS_AS(read_tensor("/nonexistent/x.mmbt"), DataError);
  }

  TEST_CASE("little-endian helpers") {
    std::string s;
    put_u16(s, 0x1234);
    put_u32(s, 0xdeadbeef);
    put_u64(s, 0x0102030405060708ull);
    CHECK(static_cast<unsigned char>(s[0]) == 0x34);
    std::size_t o = 0;
    CHECK(get_u16(s, o) == 0x1234);
    CHECK(get_u32(s, o) == 0xdeadbeefu);
    CHECK(get_u64(s, o) == 0x0102030405060708ull);
    CHECK_THROWS_AS(get_u8(s, o), DataError);
  }

  TEST_CASE("checkpoints round-trip and verify the config hash") {
    const auto dir = temp_dir("ckpt");
    Checkpoint ck;
    ck.step = 42;
    ck.epoch = 3;
    ck.config_text = "[train]\nlr = 0.001\n";
    ck.raw["a.w"] = ad::Tensor<float>({2, 2}, {1, 2, 3, 4});
    ck.raw["b"] = ad::Tensor<float>({1}, {std::nanf("")});
    ck.ema["a.w"] = ad::Tensor<float>({2, 2}, {0.5f, 1, 1.5f, 2});
    write_checkpoint(dir / "c.mmbc", ck);
    const auto back = read_checkpoint(dir / "c.mmbc");
    CHECK(back.step == 42);
    CHECK(back.epoch == 3);
    CHECK(back.config_text == ck.config_text);
    CHECK(back.raw.at("a.w") == ck.raw.at("a.w"));
    CHECK(std::isnan(back.raw.at("b")[0]));
    CHECK(back.ema.size() == 1u);
    // Flipping a byte of the config text breaks the hash.
    std::string bytes = read_file(dir / "c.mmbc");
    const auto pos = bytes.find("lr = 0.001");
    REQUIRE(pos != std::string::npos);
    bytes[pos + 5] = '9';
    write_file_atomic(dir / "bad.mmbc", bytes);
    CHECK_THROWS_AS(read_checkpoint(dir / "bad.mmbc"), DataError);
    CHECK_THROWS_AS(read_checkpoint(dir / "missing.mmbc"), DataError);
    CHECK(config_hash("") == "cbf29ce484222325");
  }

  TEST_CASE("double formatting is shortest round-trip") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 44.8}) CHECK(parse_double(format_double(v)) == v);
    CHECK(format_double(0.1) == "0.1");
    CHECK_THROWS_AS(parse_double("1.0x"), DataError);
    CHECK_THROWS_AS(parse_int("3.5"), DataError);
  }

  TEST_CASE("manifests, predictions and truth round-trip") {
    const auto dir = temp_dir("manifest");
    {
      std::ofstream(dir / "x.mmbt") << "x";
    }
    RawManifest raw;
    raw.dir = dir;
    for (int i = 0; i < 3; ++i) {
      RawEntry e;
      e.sample_id = i;
      e.scenario_id = 31 + i;
      for (int k = 0; k < kNumInstances; ++k) e.images[k] = e.lidar[k] = e.radar[k] = "x.mmbt";
      e.gps = {geo::GpsFix{33.4 + i * 1e-5, -111.9}, geo::GpsFix{33.40001, -111.90001}};
      if (i != 1) e.label = 10 + i;
      raw.entries.push_back(e);
    }
    write_raw_manifest(dir / "manifest.csv", raw);
    const auto r = read_raw_manifest(dir / "manifest.csv");
    REQUIRE(r.entries.size() == 3u);
    CHECK(r.entries[2].gps[0].latitude == raw.entries[2].gps[0].latitude);
    CHECK(r.entries[0].label == 10);
    CHECK_FALSE(r.entries[1].label.has_value());

    PreparedManifest pm;
    pm.dir = dir;
    pm.lidar = false;
    pm.radar_angle_bins = 32;
    PreparedEntry pe;
    for (int k = 0; k < kNumInstances; ++k) pe.image[k] = pe.radar[k] = "x.mmbt";
    pe.angle = {-12.25, 3.0 / 7.0};
    pe.distance = 17.5;
    pe.label = 64;
    pm.entries.push_back(pe);
    write_prepared_manifest(dir / "prepared.csv", pm);
    const auto p = read_prepared_manifest(dir / "prepared.csv");
    CHECK_FALSE(p.lidar);
    CHECK(p.radar_angle_bins == 32);
    CHECK(p.entries[0].angle[1] == pe.angle[1]);
    CHECK(p.entries[0].label == 64);
    // A prepared manifest is not accepted where raw data is expected.
    CHECK_THROWS_AS(read_raw_manifest(dir / "prepared.csv"), DataError);

    std::vector<PredictionRow> preds{{0, 31, BeamPrediction{{3, 4, 5}, {0.5, 0.2, 0.1}}}};
    write_predictions(dir / "p.csv", preds);
    const auto pr = read_predictions(dir / "p.csv");
    CHECK(pr[0].prediction.topk == preds[0].prediction.topk);
    write_truth(dir / "t.csv", {{0, 31, BeamLabel(4)}});
    CHECK(read_truth(dir / "t.csv")[0].beam.index() == 4);

    std::vector<ScenarioInfo> sc{{31, 44.8, {33.42, -111.93}, false, true}};
    write_scenarios(dir / "s.csv", sc);
    const auto s = read_scenarios(dir / "s.csv");
    CHECK(s[0].theta_deg == 44.8);
    CHECK(s[0].mirrored);
  }

  TEST_CASE("manifest errors") {
    const auto dir = temp_dir("manifest_err");
    std::ofstream(dir / "m.csv") << kRawHeader << "\nsample_id,scenario_id\n";
    CHECK_THROWS_AS(read_raw_manifest(dir / "m.csv"), DataError);
    std::ofstream(dir / "n.csv") << "garbage\n";
    CHECK_THROWS_AS(read_raw_manifest(dir / "n.csv"), DataError);
    CHECK_THROWS_AS(read_raw_manifest(dir / "none.csv"), DataError);
  }

  TEST_CASE("strict configuration parsing") {
    const auto c = parse_config("[train]\nlr = 0.01 # comment\nbatch_size=8\n[model]\nmodalities = image,gps\n");
    CHECK(c.train.lr0 == 0.01);
    CHECK(c.train.batch_size == 8);
    CHECK(c.model.modalities.size() == 1u);
    CHECK(c.model.use_gps);
    CHECK(c.sections.count("train") == 1);
    CHECK_THROWS_AS(parse_config("[trian]\nlr = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\nlearning_rate = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\nlr = 1\nlr = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\nlr = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\nbatch_size = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("lr = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[model]\nmodalities = sonar\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent.ini"), ConfigError);
  }

  TEST_CASE("resolved configuration reparses identically") {
    const auto c = load_config(MMBEAM_SOURCE_DIR "/configs/smoke.ini");
    const auto text = c.resolved();
    const auto d = parse_config(text);
    CHECK(d.resolved() == text);
    CHECK(d.world.samples == 16);
    CHECK(d.model.backbone.stage_channels == std::vector<int>{8, 16, 32, 64});
    CHECK(d.train.augment.flip);
    const auto w = c.world.worlds();
    CHECK(w.size() == 4u);
    CHECK(w[0].camera.width == 48);
    CHECK(c.world.counts() == std::vector<int>{4, 4, 4, 4});
  }
}
