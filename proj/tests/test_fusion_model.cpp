#include <doctest.h>

#include <random>

#include "mmbeam/fusion_model.hpp"

using namespace mmbeam;
using namespace mmbeam::model;

namespace {

FusionConfig tiny_config() {
  FusionConfig c;
  c.backbone.stage_channels = {4, 8, 8, 16};
  c.backbone.blocks_per_stage = {1, 1, 1, 1};
  c.image = {3, 16, 24};
  c.lidar = {3, 16, 16};
  c.radar = {1, 16, 20};
  c.heads = 2;
  c.mlp_ratio = 2;
  c.feature_dim = 8;
  c.head_hidden = {16};
  return c;
}

Batch random_batch(const FusionConfig& cfg, int B, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Batch b;
  for (Modality m : cfg.modalities) {
    const auto& in = cfg.input(m);
    ad::Tensor<float> t({B, kNumInstances, in.channels, in.height, in.width});
    for (auto& v : t.vec()) v = u(rng);
    b.inputs.emplace(m, std::move(t));
  }
  if (cfg.use_gps) {
    b.gps = ad::Tensor<float>({B, cfg.gps_features});
    for (auto& v : b.gps.vec()) v = u(rng) - 0.5f;
  }
  return b;
}

std::uint64_t tape_macs(const FusionModel& m, const Batch& b) {
  ad::Tape<float> tape;
  tape.set_grad_enabled(false);
  Rng rng(0);
  m.forward(tape, b, false, rng);
  return tape.macs();
}

// Random small configs that satisfy the validation rules.
FusionConfig random_config(Rng& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  FusionConfig c = tiny_config();
  const int n_stages = pick(2, 4);
  c.backbone.stage_channels.clear();
  c.backbone.blocks_per_stage.clear();
  int ch = 4 * pick(1, 2);
  for (int s = 0; s < n_stages; ++s) {
    c.backbone.stage_channels.push_back(ch);
    c.backbone.blocks_per_stage.push_back(pick(1, 2));
    ch *= 2;
  }
  c.backbone.stem_kernel = pick(0, 1) ? 3 : 5;
  c.backbone.stem_pool = pick(0, 1) == 1;
  const std::vector<std::vector<Modality>> sets{
      {Modality::Image}, {Modality::Image, Modality::Radar}, {Modality::Lidar, Modality::Radar},
      {Modality::Image, Modality::Lidar, Modality::Radar}};
  c.modalities = sets[pick(0, 3)];
  c.use_gps = pick(0, 1) == 1;
  c.transformer_layers = pick(1, 2);
  c.heads = pick(1, 2);
  c.final_pool = pick(0, 1) ? FinalPool::Flatten : FinalPool::Average;
  c.feature_dim = 4 * pick(1, 3);
  c.head_hidden = pick(0, 1) ? std::vector<int>{16} : std::vector<int>{12, 8};
  c.image = {3, 16 * pick(2, 3), 16 * pick(2, 3)};
  c.lidar = {3, 32, 32};
  c.radar = {1, 32, 16 * pick(2, 3)};
  return c;
}

}  // namespace

TEST_SUITE("fusion_model") {
  TEST_CASE("forward produces 64 logits per sample") {
    const auto cfg = tiny_config();
    FusionModel m(cfg, 1);
    const auto b = random_batch(cfg, 3, 2);
    const auto logits = m.predict_logits(b);
    CHECK(logits.shape() == ad::Shape{3, kNumBeams});
  }

  TEST_CASE("analytic MACs and parameters equal the instrumented forward") {
    Rng rng(123);
    for (int k = 0; k < 5; ++k) {
      const auto cfg = random_config(rng);
      CAPTURE(k);
      FusionModel m(cfg, 7 + k);
      const auto rep = count_complexity(cfg);
      CHECK(rep.total_params == m.store().parameter_count());
      CHECK(tape_macs(m, random_batch(cfg, 1, k)) == rep.total_macs);
      CHECK(tape_macs(m, random_batch(cfg, 2, k)) == 2 * rep.total_macs);
    }
  }

  TEST_CASE("GPS-only model matches the reference parameter count") {
    FusionConfig c;
    c.modalities.clear();
    c.use_gps = true;
    FusionModel m(c, 0);
    CHECK(m.store().parameter_count() == kReferenceGpsParams);
    CHECK(count_complexity(c).total_params == kReferenceGpsParams);
    const auto logits = m.predict_logits(random_batch(c, 2, 1));
    CHECK(logits.shape() == ad::Shape{2, kNumBeams});
  }

  TEST_CASE("resnet18 backbone parameter count") {
    CHECK(backbone_params(BackboneConfig::preset("resnet18"), 3) == 11176512u);
    CHECK(backbone_params(BackboneConfig::preset("resnet34"), 3) == 21284672u);
    const std::int64_t delta = static_cast<std::int64_t>(11176512u) - static_cast<std::int64_t>(kReferenceResnet18Params);
    CHECK(delta == 9600);
  }

  TEST_CASE("initialisation is seeded") {
    const auto cfg = tiny_config();
    FusionModel a(cfg, 5), b(cfg, 5), c(cfg, 6);
    const auto batch = random_batch(cfg, 2, 3);
    CHECK(a.predict_logits(batch) == b.predict_logits(batch));
    bool differs = false;
    for (const auto& name : a.store().parameter_names())
      differs |= !(a.store().parameter(name).value == c.store().parameter(name).value);
    CHECK(differs);
  }

  TEST_CASE("output layer starts at zero so initial predictions are uniform") {
    const auto cfg = tiny_config();
    FusionModel m(cfg, 5);
    const auto logits = m.predict_logits(random_batch(cfg, 2, 3));
    for (float v : logits.vec()) CHECK(v == 0.0f);
  }

  TEST_CASE("training forward backpropagates to every parameter") {
    auto cfg = tiny_config();
    cfg.dropout = 0.1;
    FusionModel m(cfg, 3);
    // Perturb the zero-initialised output layer so gradient flows upstream.
    Rng rng(1);
    std::normal_distribution<float> nd(0.0f, 0.1f);
    const std::string last = "head.fc" + std::to_string(cfg.head_hidden.size() + 1);
    for (const auto& suffix : {".weight", ".bias"})
      for (float& v : m.store().parameter(last + suffix).value.vec()) v = nd(rng);
    ad::Tape<float> tape;
    const auto logits = m.forward(tape, random_batch(cfg, 2, 4), true, rng);
    m.store().zero_grad();
    ad::Tensor<float> w(logits.value().shape());
    for (float& v : w.vec()) v = nd(rng);
    tape.backward(ad::sum(ad::mul(logits, tape.constant(w))));
    int nonzero = 0;
    for (const auto& name : m.store().parameter_names()) {
      float s = 0.0f;
      for (float g : m.store().parameter(name).grad.vec()) s += std::abs(g);
      nonzero += s > 0.0f;
    }
    CHECK(nonzero >= static_cast<int>(m.store().parameter_names().size()) - 1);
  }

  TEST_CASE("top-3 ordering and ties") {
    std::vector<double> z(kNumBeams, 0.0);
    auto p = predict_top3(z);
    CHECK(p.topk == std::array<int, 3>{1, 2, 3});
    CHECK(p.scores[0] == doctest::Approx(1.0 / 64));
    z[40] = 3.0;
    z[9] = 3.0;
    z[63] = 1.0;
    p = predict_top3(z);
    CHECK(p.topk == std::array<int, 3>{10, 41, 64});
    CHECK(p.scores[0] == p.scores[1]);
    CHECK(p.scores[1] > p.scores[2]);
    p.validate();
    std::vector<float> zf(kNumBeams, 0.0f);
    zf[5] = 2.0f;
    CHECK(predict_top3(zf).topk[0] == 6);
  }

  TEST_CASE("flip label") {
    for (int b = 1; b <= kNumBeams; ++b) {
      CHECK(flip_label(BeamLabel(b)).index() == 65 - b);
      CHECK(flip_label(flip_label(BeamLabel(b))) == BeamLabel(b));
    }
  }

  TEST_CASE("configuration validation") {
    auto c = tiny_config();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.image = {3, 0, 8};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.modalities.clear();
    c.use_gps = false;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(BackboneConfig::preset("vgg"), ConfigError);
    CHECK(parse_modality("lidar") == Modality::Lidar);
    CHECK_THROWS(parse_modality("sonar"));
  }

  TEST_CASE("complexity csv lists every block") {
    const auto rep = count_complexity(tiny_config());
    const auto csv = to_csv(rep);
    CHECK(csv.rfind("block,macs,params\n", 0) == 0);
    CHECK(csv.find("image.stem,") != std::string::npos);
    CHECK(csv.find("fusion4,") != std::string::npos);
    CHECK(csv.find("head,") != std::string::npos);
    CHECK(csv.find("total," + std::to_string(rep.total_macs) + "," + std::to_string(rep.total_params)) != std::string::npos);
  }
}
