#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "covomix/acoustic.hpp"
#include "covomix/errors.hpp"
#include "testutil.hpp"

using namespace covomix;
using namespace covomix::acoustic;

namespace {

AcousticConfig tiny_config(Variant v) {
  AcousticConfig cfg;
  cfg.variant = v;
  cfg.layers = 1;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.ffn_mult = 2;
  cfg.n_mels = 4;
  cfg.semantic_vocab = 5;
  cfg.emb_dim = 3;
  return cfg;
}

CfmSample make_sample(const AcousticModel& model, Rng& rng, int frames) {
  const AcousticConfig& cfg = model.config();
  CfmSample s;
  s.target = nn::Tensor::randn({frames, cfg.out_width()}, rng);
  s.mask.assign(static_cast<std::size_t>(frames), false);
  for (int i = frames / 3; i < frames; ++i) s.mask[static_cast<std::size_t>(i)] = true;
  for (int c = 0; c < cfg.n_streams(); ++c) {
    nn::Tensor ctx = nn::Tensor::randn({frames, cfg.n_mels}, rng);
    for (int i = 0; i < frames; ++i) {
      if (!s.mask[static_cast<std::size_t>(i)]) continue;
      for (int m = 0; m < cfg.n_mels; ++m) ctx.at(i, m) = 0.0;  // ctx zeroed on masked frames
    }
    s.ctx.push_back(ctx);
    std::vector<int> ids(static_cast<std::size_t>(frames));
    for (auto& id : ids) id = rng.uniform_int(cfg.semantic_vocab);
    s.tokens.push_back(ids);
  }
  return s;
}

}  // namespace

TEST_CASE("sample_flow_point endpoints and algebra") {
  Rng rng(3);
  nn::Tensor m = nn::Tensor::randn({5, 4}, rng);
  nn::Tensor noise = nn::Tensor::randn({5, 4}, rng);
  const double sigma = 1e-4;

  SUBCASE("t=0 returns the noise exactly") {
    nn::Tensor w = sample_flow_point(m, noise, 0.0, sigma);
    for (std::size_t i = 0; i < w.numel(); ++i) CHECK(w.data()[i] == noise.data()[i]);
  }

  SUBCASE("t=1 returns sigma_min·noise + target to machine epsilon") {
    nn::Tensor w = sample_flow_point(m, noise, 1.0, sigma);
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const double expect = sigma * noise.data()[i] + m.data()[i];
      const double tol = 4.0 * std::numeric_limits<double>::epsilon() *
                         (std::abs(noise.data()[i]) + std::abs(m.data()[i]) + 1.0);
      CHECK(std::abs(w.data()[i] - expect) <= tol);
    }
  }

  SUBCASE("scalar midpoint example: t=0.5, sigma=0, noise=0, target=2 gives 1") {
    nn::Tensor target = nn::Tensor::full({1, 1}, 2.0);
    nn::Tensor zero = nn::Tensor::zeros({1, 1});
    CHECK(sample_flow_point(target, zero, 0.5, 0.0).value() == 1.0);
  }

  SUBCASE("affine: scaling both inputs by a power of two scales w exactly") {
    nn::Tensor m2 = nn::Tensor::from_data(m.shape(), m.vec());
    nn::Tensor n2 = nn::Tensor::from_data(noise.shape(), noise.vec());
    for (auto& v : m2.vec()) v *= 4.0;
    for (auto& v : n2.vec()) v *= 4.0;
    nn::Tensor w1 = sample_flow_point(m, noise, 0.37, sigma);
    nn::Tensor w4 = sample_flow_point(m2, n2, 0.37, sigma);
    for (std::size_t i = 0; i < w1.numel(); ++i) CHECK(w4.data()[i] == 4.0 * w1.data()[i]);
  }

  SUBCASE("t outside [0,1] is rejected") {
    CHECK_THROWS_AS((void)sample_flow_point(m, noise, -0.1, sigma), DataError);
    CHECK_THROWS_AS((void)sample_flow_point(m, noise, 1.1, sigma), DataError);
  }
}

TEST_CASE("guided_field algebra") {
  Rng rng(5);
  nn::Tensor vc = nn::Tensor::randn({3, 4}, rng);
  nn::Tensor vu = nn::Tensor::randn({3, 4}, rng);

  SUBCASE("alpha = 0 is the conditional field bitwise") {
    nn::Tensor g = guided_field(vc, vu, 0.0);
    for (std::size_t i = 0; i < g.numel(); ++i) CHECK(g.data()[i] == vc.data()[i]);
  }

  SUBCASE("hand value: (2, 1, alpha 0.7) gives 2.7") {
    nn::Tensor two = nn::Tensor::full({1, 1}, 2.0);
    nn::Tensor one = nn::Tensor::full({1, 1}, 1.0);
    CHECK(guided_field(two, one, 0.7).value() == doctest::Approx(2.7).epsilon(1e-15));
  }

  SUBCASE("fixed point: equal fields pass through for any alpha") {
    for (double alpha : {0.0, 0.3, 0.7, 2.5}) {
      nn::Tensor g = guided_field(vc, vc, alpha);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        CHECK(g.data()[i] == doctest::Approx(vc.data()[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("make_training_mask") {
  SUBCASE("fraction forced to 1.0 masks everything") {
    Rng rng(7);
    const auto mask = make_training_mask(10, rng, 1.0, 1.0);
    for (bool b : mask) CHECK(b);
  }

  SUBCASE("seeded draws are reproducible") {
    Rng a(9), b(9);
    CHECK(make_training_mask(10, a) == make_training_mask(10, b));
  }

  SUBCASE("always at least one masked and, when partial, one unmasked frame") {
    Rng rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
      const int frames = 2 + rng.uniform_int(40);
      const auto mask = make_training_mask(frames, rng);
      int masked = 0;
      for (bool b : mask) masked += b ? 1 : 0;
      CHECK(masked >= 1);
      CHECK(masked <= frames);
      // contiguous span
      int transitions = 0;
      for (std::size_t i = 1; i < mask.size(); ++i) transitions += mask[i] != mask[i - 1] ? 1 : 0;
      CHECK(transitions <= 2);
    }
  }

  SUBCASE("mean masked fraction over 10k draws is 0.85 +- 0.02") {
    Rng rng(13);
    double acc = 0.0;
    const int frames = 100;
    for (int i = 0; i < 10000; ++i) {
      const auto mask = make_training_mask(frames, rng);
      int masked = 0;
      for (bool b : mask) masked += b ? 1 : 0;
      acc += static_cast<double>(masked) / frames;
    }
    CHECK(std::abs(acc / 10000.0 - 0.85) < 0.02);
  }
}

TEST_CASE("integrate_flow on stub fields") {
  const std::vector<bool> all(6, true);
  const nn::Tensor prompt = nn::Tensor::zeros({6, 4});
  Rng rng(17);
  nn::Tensor m0 = nn::Tensor::randn({6, 4}, rng);

  SUBCASE("constant field, one Euler step: endpoint = m0 + c") {
    nn::Tensor c = nn::Tensor::full({6, 4}, 0.75);
    auto field = [&](const nn::Tensor&, double) { return c; };
    nn::Tensor out = integrate_flow(field, nn::Tensor::from_data(m0.shape(), m0.vec()), 1,
                                    false, all, prompt);
    for (std::size_t i = 0; i < out.numel(); ++i) {
      CHECK(out.data()[i] == doctest::Approx(m0.data()[i] + 0.75).epsilon(1e-15));
    }
  }

  SUBCASE("linear field v = phi: 256 Euler steps land within 1e-2 of e·m0") {
    auto field = [](const nn::Tensor& s, double) { return s; };
    nn::Tensor out = integrate_flow(field, nn::Tensor::from_data(m0.shape(), m0.vec()), 256,
                                    false, all, prompt);
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double expect = std::exp(1.0) * m0.data()[i];
      CHECK(std::abs(out.data()[i] - expect) <= 1e-2 * std::abs(expect) + 1e-12);
    }
  }

  SUBCASE("halving the step size halves the error (first order)") {
    auto field = [](const nn::Tensor& s, double) { return s; };
    auto endpoint_err = [&](int steps) {
      nn::Tensor out = integrate_flow(field, nn::Tensor::from_data(m0.shape(), m0.vec()),
                                      steps, false, all, prompt);
      double err = 0.0;
      for (std::size_t i = 0; i < out.numel(); ++i) {
        err = std::max(err, std::abs(out.data()[i] - std::exp(1.0) * m0.data()[i]));
      }
      return err;
    };
    const double e128 = endpoint_err(128);
    const double e256 = endpoint_err(256);
    CHECK(e128 / e256 == doctest::Approx(2.0).epsilon(0.2));
  }

  SUBCASE("midpoint integration beats Euler on the linear field") {
    auto field = [](const nn::Tensor& s, double) { return s; };
    auto err_of = [&](bool midpoint) {
      nn::Tensor out = integrate_flow(field, nn::Tensor::from_data(m0.shape(), m0.vec()), 64,
                                      midpoint, all, prompt);
      double err = 0.0;
      for (std::size_t i = 0; i < out.numel(); ++i) {
        err = std::max(err, std::abs(out.data()[i] - std::exp(1.0) * m0.data()[i]));
      }
      return err;
    };
    CHECK(err_of(true) < 0.05 * err_of(false));
  }

  SUBCASE("steps < 1 is rejected") {
    auto field = [](const nn::Tensor& s, double) { return s; };
    CHECK_THROWS_AS(
        (void)integrate_flow(field, nn::Tensor::zeros({6, 4}), 0, false, all, prompt),
        DataError);
  }
}

TEST_CASE("cfm loss") {
  Rng rng(19);

  SUBCASE("zero-initialized head means v = 0, loss = masked |m - (1-sigma)noise|^2 mean") {
    AcousticModel model(tiny_config(Variant::mix), 21);
    CfmSample s = make_sample(model, rng, 9);
    CfmDraw d;
    d.t = 0.4;
    d.noise = nn::Tensor::randn(s.target.shape(), rng);
    d.drop_cond = false;
    const double loss = model.cfm_loss_given(s, d).value();
    double expect = 0.0;
    std::size_t masked = 0;
    const double sg = model.config().sigma_min;
    for (int i = 0; i < 9; ++i) {
      if (!s.mask[static_cast<std::size_t>(i)]) continue;
      ++masked;
      for (int c = 0; c < s.target.cols(); ++c) {
        const double r = s.target.at(i, c) - (1.0 - sg) * d.noise.at(i, c);
        expect += r * r;
      }
    }
    expect /= static_cast<double>(masked * s.target.cols());
    CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
  }

  SUBCASE("target = (1-sigma)·noise makes the residual and loss exactly zero") {
    AcousticModel model(tiny_config(Variant::mix), 23);
    CfmSample s = make_sample(model, rng, 6);
    CfmDraw d;
    d.t = 0.7;
    d.noise = nn::Tensor::randn(s.target.shape(), rng);
    const double sg = model.config().sigma_min;
    for (std::size_t i = 0; i < s.target.numel(); ++i) {
      s.target.vec()[i] = (1.0 - sg) * d.noise.vec()[i];
    }
    CHECK(model.cfm_loss_given(s, d).value() == 0.0);
  }

  SUBCASE("empty mask is an error") {
    AcousticModel model(tiny_config(Variant::mix), 25);
    CfmSample s = make_sample(model, rng, 5);
    s.mask.assign(5, false);
    CfmDraw d;
    d.noise = nn::Tensor::zeros(s.target.shape());
    CHECK_THROWS_AS((void)model.cfm_loss_given(s, d), DataError);
  }

  SUBCASE("loss reads the field only on masked frames") {
    Rng r2(29);
    nn::Tensor v = nn::Tensor::randn({7, 4}, r2, 1.0, true);
    nn::Tensor target = nn::Tensor::randn({7, 4}, r2);
    std::vector<bool> mask = {false, true, true, false, true, false, false};
    nn::Tensor loss = nn::masked_mse(v, target, mask);
    nn::Tensor v2 = nn::Tensor::from_data(v.shape(), v.vec());
    for (int i = 0; i < 7; ++i) {
      if (mask[static_cast<std::size_t>(i)]) continue;
      for (int c = 0; c < 4; ++c) v2.at(i, c) = 0.0;  // zero unmasked output rows
    }
    CHECK(nn::masked_mse(v2, target, mask).value() == loss.value());
    nn::backward(loss);
    for (int i = 0; i < 7; ++i) {
      if (mask[static_cast<std::size_t>(i)]) continue;
      for (int c = 0; c < 4; ++c) {
        CHECK(v.grad()[static_cast<std::size_t>(i) * 4 + c] == 0.0);
      }
    }
  }

  SUBCASE("gradients match finite differences (mix variant)") {
    AcousticModel model(tiny_config(Variant::mix), 31);
    // non-zero head so the whole graph carries signal
    Rng wr(32);
    for (auto& v : model.params().get("head.w").vec()) v = wr.normal() * 0.1;
    CfmSample s = make_sample(model, wr, 5);
    CfmDraw d;
    d.t = 0.6;
    d.noise = nn::Tensor::randn(s.target.shape(), wr);
    auto forward = [&]() { return model.cfm_loss_given(s, d); };
    CHECK(testutil::grad_check(model.params(), forward, 1e-5) <= 1e-5);
  }

  SUBCASE("batch loss is the mean of per-sample losses") {
    AcousticModel model(tiny_config(Variant::mix), 33);
    std::vector<CfmSample> batch = {make_sample(model, rng, 6), make_sample(model, rng, 8)};
    GuidanceConfig g;
    Rng r1(77), r2(77);
    const double batch_loss = model.cfm_loss(batch, g, r1).value();
    double manual = 0.0;
    for (const auto& s : batch) manual += model.cfm_loss_given(s, model.draw(s, g, r2)).value();
    manual /= 2.0;
    CHECK(batch_loss == doctest::Approx(manual).epsilon(1e-12));
  }
}

TEST_CASE("variant structure") {
  SUBCASE("stereo differs from mix only in the output head width") {
    AcousticModel mix(tiny_config(Variant::mix), 41);
    AcousticModel stereo(tiny_config(Variant::stereo), 41);
    const std::size_t diff = stereo.params().total_elements() - mix.params().total_elements();
    const auto& cfg = mix.config();
    CHECK(diff == static_cast<std::size_t>(cfg.dim) * cfg.n_mels + cfg.n_mels);
  }

  SUBCASE("single consumes one stream, mix two; widths follow") {
    const AcousticConfig s = tiny_config(Variant::single);
    const AcousticConfig m = tiny_config(Variant::mix);
    CHECK(s.in_width() == s.n_mels * 2 + s.emb_dim);
    CHECK(m.in_width() == m.n_mels * 3 + 2 * m.emb_dim);
    CHECK(s.out_width() == s.n_mels);
    CHECK(tiny_config(Variant::stereo).out_width() == 2 * s.n_mels);
  }

  SUBCASE("variant names round-trip") {
    for (Variant v : {Variant::single, Variant::mix, Variant::stereo}) {
      CHECK(variant_from_string(variant_to_string(v)) == v);
    }
    CHECK_THROWS_AS((void)variant_from_string("dual"), UsageError);
  }
}

TEST_CASE("ode_sample") {
  Rng rng(51);
  AcousticModel model(tiny_config(Variant::mix), 53);
  // small random head so the field is non-trivial
  Rng wr(54);
  for (auto& v : model.params().get("head.w").vec()) v = wr.normal() * 0.05;

  const int frames = 10;
  std::vector<std::vector<int>> tokens(2, std::vector<int>(frames, 1));
  std::vector<nn::Tensor> ctx = {nn::Tensor::randn({frames, 4}, rng),
                                 nn::Tensor::randn({frames, 4}, rng)};
  nn::Tensor prompt = nn::Tensor::randn({frames, 4}, rng);

  SUBCASE("prompt frames pass through bitwise for random masks") {
    for (int trial = 0; trial < 100; ++trial) {
      const auto mask = make_training_mask(frames, rng);
      nn::Tensor out = model.ode_sample(tokens, ctx, prompt, mask, 4, 0.7, trial);
      for (int i = 0; i < frames; ++i) {
        if (mask[static_cast<std::size_t>(i)]) continue;
        for (int c = 0; c < 4; ++c) CHECK(out.at(i, c) == prompt.at(i, c));
      }
    }
  }

  SUBCASE("deterministic for a fixed seed") {
    const auto mask = make_training_mask(frames, rng);
    nn::Tensor a = model.ode_sample(tokens, ctx, prompt, mask, 8, 0.7, 99);
    nn::Tensor b = model.ode_sample(tokens, ctx, prompt, mask, 8, 0.7, 99);
    CHECK(a.vec() == b.vec());
    nn::Tensor c = model.ode_sample(tokens, ctx, prompt, mask, 8, 0.7, 100);
    CHECK(a.vec() != c.vec());
  }

  SUBCASE("steps < 1 rejected") {
    const auto mask = make_training_mask(frames, rng);
    CHECK_THROWS_AS((void)model.ode_sample(tokens, ctx, prompt, mask, 0, 0.7, 1), DataError);
  }

  SUBCASE("stereo and mix sampling produce their contract shapes") {
    AcousticModel st(tiny_config(Variant::stereo), 57);
    nn::Tensor prompt2 = nn::Tensor::randn({frames, 8}, rng);
    const auto mask = make_training_mask(frames, rng);
    nn::Tensor out = st.ode_sample(tokens, ctx, prompt2, mask, 2, 0.7, 1);
    CHECK(out.shape() == nn::Shape{frames, 8});
    nn::Tensor mixed = model.ode_sample(tokens, ctx, prompt, mask, 2, 0.7, 1);
    CHECK(mixed.shape() == nn::Shape{frames, 4});
  }
}

TEST_CASE("checkpoint round-trip") {
  testutil::ScratchDir dir("acoustic");
  AcousticModel model(tiny_config(Variant::stereo), 61);
  Rng wr(62);
  for (auto& v : model.params().get("head.w").vec()) v = wr.normal() * 0.1;
  model.save(dir.str("a.ckpt"));
  AcousticModel loaded = AcousticModel::load(dir.str("a.ckpt"));
  CHECK(loaded.config().variant == Variant::stereo);
  CHECK(loaded.config().n_mels == 4);
  Rng rng(63);
  nn::Tensor w = nn::Tensor::randn({6, 8}, rng);
  std::vector<nn::Tensor> ctx = {nn::Tensor::randn({6, 4}, rng), nn::Tensor::randn({6, 4}, rng)};
  std::vector<std::vector<int>> tokens(2, std::vector<int>(6, 2));
  nn::NoGradGuard ng;
  nn::Tensor va = model.field(w, &ctx, &tokens, 0.3);
  nn::Tensor vb = loaded.field(w, &ctx, &tokens, 0.3);
  for (std::size_t i = 0; i < va.numel(); ++i) {
    CHECK(vb.data()[i] == doctest::Approx(va.data()[i]).epsilon(1e-5));
  }
}
