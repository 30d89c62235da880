#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sketchfill/error.hpp"
#include "sketchfill/gradcheck.hpp"
#include "sketchfill/training.hpp"

using namespace sketchfill;
using T = ad::Tensor<double>;

namespace {

T random_tensor(ad::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(ad::numel(shape)));
  for (auto& x : v) x = n(rng);
  return T::from(shape, std::move(v));
}

// D(x) = x_flat . w + b
Critic<double> linear_critic(const T& w, double b = 0.25) {
  return [w, b](const T& x) {
    const auto N = x.dim(0);
    const T flat = ad::reshape(x, {N, x.numel() / N});
    return ad::add_scalar(ad::reshape(ad::matmul(flat, w), {N}), b);
  };
}

TrainingSample toy_sample(int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  RasterImage target(side, side, 3), input(side, side, 9);
  for (float& v : target.data()) v = u(rng);
  const auto [spec, mask] = sample_mask(side, side, seed, false);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const bool m = mask.get(x, y);
      for (int c = 0; c < 3; ++c) input.at(x, y, c) = m ? 0.0f : target.at(x, y, c);
      input.at(x, y, channel::kSketch) = m && u(rng) < 0.1f ? 1.0f : 0.0f;
      for (int c = 0; c < 3; ++c) input.at(x, y, channel::kColor + c) = m && x % 5 == 0 ? target.at(x, y, c) : 0.0f;
      input.at(x, y, channel::kMask) = m ? 1.0f : 0.0f;
      input.at(x, y, channel::kNoise) = u(rng) - 0.5f;
    }
  return TrainingSample(std::move(target), std::move(input), spec);
}

std::shared_ptr<std::vector<TrainingSample>> toy_set(int n, int side = 32) {
  auto data = std::make_shared<std::vector<TrainingSample>>();
  for (int i = 0; i < n; ++i) data->push_back(toy_sample(side, 500 + i));
  return data;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.gen.side = 32;
  c.gen.base_channels = 4;
  c.gen.max_channels = 8;
  c.disc.side = 32;
  c.disc.base_channels = 4;
  c.disc.feature_dim = 8;
  c.batch = 2;
  c.seed = 9;
  return c;
}

std::string temp_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  return d.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("rec_loss examples") {
  const T a = random_tensor({2, 3, 4, 4}, 1);
  const T m = T::from({2, 1, 4, 4}, std::vector<double>(32, 1.0));
  CHECK(rec_loss(a, a, m).item() == 0.0);

  // Two pixels, one channel, one masked pixel off by 0.5.
  const T out = T::from({1, 1, 1, 2}, {0.5, 0.9}), target = T::from({1, 1, 1, 2}, {0.0, 0.1});
  const T mask = T::from({1, 1, 1, 2}, {1.0, 0.0});
  CHECK(rec_loss(out, target, mask).item() == 0.25);

  RasterImage o(2, 1, 1, std::vector<float>{0.5f, 0.9f}), t(2, 1, 1, std::vector<float>{0.0f, 0.1f});
  BinaryMask bm(2, 1);
  bm.set(0, 0);
  CHECK(rec_loss(o, t, bm) == 0.25);
  CHECK_THROWS_AS(rec_loss(o, RasterImage(3, 1, 1), bm), InvalidArgument);
}

TEST_CASE("rec_loss ignores the raw output outside the mask") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const T target = random_tensor({1, 3, 5, 5}, rng());
    std::vector<double> mv(25);
    for (auto& v : mv) v = rng() % 2;
    const T mask = T::from({1, 1, 5, 5}, mv);
    const T out = random_tensor({1, 3, 5, 5}, rng());
    std::vector<double> other(out.data().begin(), out.data().end());
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 25; ++p)
        if (mv[p] == 0.0) other[c * 25 + p] += 1000.0 * (rng() % 7);
    CHECK(rec_loss(out, target, mask).item() == rec_loss(T::from(out.shape(), other), target, mask).item());
  }
}

TEST_CASE("generator gradients vanish on out-of-mask output pixels") {
  GeneratorConfig gc;
  gc.side = 16;
  gc.base_channels = 3;
  gc.max_channels = 6;
  const Generator<double> g(gc, 3);
  const T x = random_tensor({1, 9, 16, 16}, 4);
  const T target = random_tensor({1, 3, 16, 16}, 5);
  std::vector<double> mv(256, 0.0);
  for (int y = 4; y < 10; ++y)
    for (int xx = 3; xx < 12; ++xx) mv[y * 16 + xx] = 1.0;
  const T mask = T::from({1, 1, 16, 16}, mv);
  const T out = g.forward(x);
  const T loss = rec_loss(out, target, mask);
  const auto grads = ad::grad(loss, {out});
  int inside_nonzero = 0;
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < 256; ++p) {
      const double gv = grads[0].data()[c * 256 + p];
      if (mv[p] == 0.0) CHECK(gv == 0.0);
      inside_nonzero += mv[p] == 1.0 && gv != 0.0;
    }
  CHECK(inside_nonzero > 0);
}

TEST_CASE("gradient penalty of a linear critic") {
  const T real = random_tensor({3, 2, 2, 2}, 6), fake = random_tensor({3, 2, 2, 2}, 7);
  std::vector<double> unit(8, 0.0);
  unit[3] = 1.0;
  const auto t1 = wgan_gp_loss(linear_critic(T::from({8, 1}, unit)), real, fake, 100.0, 1);
  CHECK(t1.penalty.item() == 0.0);

  std::vector<double> three(8, 0.0);
  three[0] = 1.0;
  three[4] = 2.0;
  three[6] = 2.0;
  const auto t3 = wgan_gp_loss(linear_critic(T::from({8, 1}, three)), real, fake, 100.0, 2);
  CHECK(100.0 * t3.penalty.item() == 400.0);
  CHECK(t3.d_loss.item() == doctest::Approx(t3.core.item() + 400.0).epsilon(1e-15));

  // Normalized random direction: penalty zero up to rounding.
  T w = random_tensor({8, 1}, 8);
  double nrm = 0;
  for (double v : w.data()) nrm += v * v;
  std::vector<double> wn(w.data().begin(), w.data().end());
  for (double& v : wn) v /= std::sqrt(nrm);
  CHECK(wgan_gp_loss(linear_critic(T::from({8, 1}, wn)), real, fake, 100.0, 3).penalty.item() < 1e-24);
  CHECK_THROWS_AS(wgan_gp_loss(linear_critic(w), real, random_tensor({2, 2, 2, 2}, 1), 100.0, 1), InvalidArgument);
}

TEST_CASE("penalty gradient matches the closed form (double backprop)") {
  const double lambda = 100.0;
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const T w = random_tensor({8, 1}, seed).set_requires_grad(true);
    const T real = random_tensor({2, 2, 2, 2}, seed + 100), fake = random_tensor({2, 2, 2, 2}, seed + 200);
    const auto terms = wgan_gp_loss(linear_critic(w), real, fake, lambda, seed);
    const T g = ad::grad(ad::scale(terms.penalty, lambda), {w}).front();
    double nrm = 0;
    for (double v : w.data()) nrm += v * v;
    nrm = std::sqrt(nrm);
    for (int i = 0; i < 8; ++i) CHECK(std::abs(g.data()[i] - 2 * lambda * (nrm - 1) * w.data()[i] / nrm) < 1e-6);
  }
}

TEST_CASE("original GAN loss") {
  const T real = random_tensor({4, 2, 2, 2}, 20), fake = random_tensor({4, 2, 2, 2}, 21);
  const Critic<double> zero = [](const T& x) { return T::zeros({x.dim(0)}); };
  CHECK(original_gan_loss(zero, real, fake).d_loss.item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));

  // Perfect critic: +1000 on real, -1000 on fake, clipped at +-30.
  const Critic<double> perfect = [&](const T& x) {
    return T::full({x.dim(0)}, x.data()[0] == real.data()[0] ? 1000.0 : -1000.0);
  };
  const double d = original_gan_loss(perfect, real, fake).d_loss.item();
  CHECK(d < 1e-12);
  CHECK(d > 0.0);

  // Tiny critic, finite differences in its weights.
  const ad::ScalarFn fn = [&](const std::vector<T>& p) {
    const Critic<double> c = [&](const T& x) {
      const T flat = ad::reshape(x, {x.dim(0), 8});
      return ad::reshape(ad::matmul(ad::leaky_relu(ad::matmul(flat, p[0]), 0.2), p[1]), {x.dim(0)});
    };
    return original_gan_loss(c, real, fake).d_loss;
  };
  CHECK(ad::check_gradient(fn, {random_tensor({8, 5}, 22).set_requires_grad(true),
                               random_tensor({5, 1}, 23).set_requires_grad(true)}) < 1e-4);
}

TEST_CASE("total loss weighting") {
  const LossWeights w;
  CHECK(w.alpha == 1e-3);
  CHECK(w.epsilon_drift == 1e-3);
  CHECK(w.lambda == 100.0);
  CHECK(w.variant == GanVariant::WganGp);

  GanTerms<double> terms;
  terms.d_real = T::from({2}, {1.0, -1.0});
  terms.d_fake = T::from({2}, {0.5, 0.25});
  terms.core = T::scalar(0.375);
  terms.penalty = T::scalar(0.01);
  terms.d_loss = T::scalar(0.375 + 100 * 0.01);
  const T rec = T::scalar(0.2);
  const auto tot = total_loss(rec, terms, terms.d_fake, w);
  CHECK(tot.drift.item() == 1.0);
  CHECK(tot.d_total.item() == doctest::Approx(1.375 + 1e-3));
  CHECK(tot.g_total.item() == doctest::Approx(1e-3 * 0.2 - 0.375));

  LossWeights zero;
  zero.alpha = zero.epsilon_drift = 0.0;
  const auto z = total_loss(rec, terms, terms.d_fake, zero);
  CHECK(z.g_total.item() == -0.375);
  CHECK(z.d_total.item() == terms.d_loss.item());
}

TEST_CASE("loss and train config round trip") {
  Config c;
  c.set("loss.gan", "original_gan");
  c.set("train.n_critic", "2");
  c.set("train.real_mask", "own");
  c.set("size", "32");
  const TrainConfig t = TrainConfig::from_config(c);
  CHECK(t.weights.variant == GanVariant::Original);
  CHECK(t.n_critic == 2);
  CHECK_FALSE(t.fresh_real_mask);
  CHECK(t.lr == 2e-4);
  CHECK(t.batch == 4);
  Config out;
  t.write_to(out);
  const TrainConfig back = TrainConfig::from_config(out);
  CHECK(back.gen == t.gen);
  CHECK(back.weights.variant == GanVariant::Original);
  CHECK(back.seed == t.seed);
  c.set("loss.gan", "began");
  CHECK_THROWS_AS(TrainConfig::from_config(c), InvalidArgument);
  c.set("loss.gan", "wgan_gp");
  c.set("train.real_mask", "sometimes");
  CHECK_THROWS_AS(TrainConfig::from_config(c), InvalidArgument);
}

TEST_CASE("zero steps writes the initial checkpoint only") {
  const auto dir = temp_dir("sketchfill_train0");
  TrainOptions opts;
  opts.out_dir = dir;
  const TrainResult r = train(tiny_config(), toy_set(4), opts);
  CHECK(r.steps == 0);
  CHECK(std::filesystem::exists(dir + "/ckpt_00000000.fsck"));
  CHECK(std::filesystem::exists(dir + "/latest.fsck.json"));
  const LoadedGenerator lg = load_generator(dir + "/latest.fsck");
  const Trainer fresh(tiny_config(), toy_set(4));
  for (std::size_t i = 0; i < lg.gen.parameters().size(); ++i)
    CHECK(std::equal(lg.gen.parameters()[i].data().begin(), lg.gen.parameters()[i].data().end(),
                     fresh.generator().parameters()[i].data().begin()));
  CHECK(slurp(dir + "/metrics.csv") == "step,d_loss,g_loss,rec,gp,drift\n");
  std::filesystem::remove_all(dir);
}

TEST_CASE("resume continues bit-exactly") {
  const auto data = toy_set(6);
  const auto a = temp_dir("sketchfill_resume_a"), b = temp_dir("sketchfill_resume_b");
  TrainOptions full;
  full.out_dir = a;
  full.steps = 6;
  full.checkpoint_every = 3;
  train(tiny_config(), data, full);

  TrainOptions first = full;
  first.out_dir = b;
  first.steps = 3;
  train(tiny_config(), data, first);
  TrainOptions rest = full;
  rest.out_dir = b;
  rest.steps = 3;
  rest.resume_from = b + "/ckpt_00000003.fsck";
  const TrainResult r = train(tiny_config(), data, rest);
  CHECK(r.steps == 6);

  CHECK(slurp(a + "/metrics.csv") == slurp(b + "/metrics.csv"));
  const TensorTable ta = read_checkpoint(a + "/ckpt_00000006.fsck"), tb = read_checkpoint(b + "/ckpt_00000006.fsck");
  CHECK(ta.size() == tb.size());
  CHECK(ta == tb);
  const std::string rows = slurp(a + "/metrics.csv");
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 7);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_CASE("training moves the losses and honors n_critic and the GAN variant") {
  for (GanVariant v : {GanVariant::WganGp, GanVariant::Original})
    for (int n_critic : {1, 2}) {
      TrainConfig cfg = tiny_config();
      cfg.weights.variant = v;
      cfg.n_critic = n_critic;
      Trainer t(cfg, toy_set(4));
      const auto before = std::vector<float>(t.generator().parameters()[0].data().begin(),
                                             t.generator().parameters()[0].data().end());
      const StepMetrics m = t.step();
      CHECK(std::isfinite(m.d_loss));
      CHECK(std::isfinite(m.g_loss));
      CHECK(m.rec > 0);
      if (v == GanVariant::Original) CHECK(m.gp == 0.0);
      CHECK_FALSE(std::equal(before.begin(), before.end(), t.generator().parameters()[0].data().begin()));
      CHECK(t.steps_done() == 1);
    }
}

TEST_CASE("non-finite losses abort with a diagnostic") {
  auto data = toy_set(2);
  RasterImage target = (*data)[0].target();
  target.at(1, 1, 0) = std::nanf("");
  (*data)[0] = TrainingSample(target, (*data)[0].input(), (*data)[0].mask_spec());
  Trainer t(tiny_config(), data);
  try {
    t.step();
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("first non-finite tensor") != std::string::npos);
  }
}

TEST_CASE("masked_l1 matches a direct evaluation") {
  const auto data = toy_set(3);
  const Trainer t(tiny_config(), data);
  double sum = 0, n = 0;
  for (const TrainingSample& s : *data) {
    const Batch b = make_batch(*data, {static_cast<std::size_t>(&s - data->data())});
    ad::NoGradGuard g;
    const auto out = t.generator().forward(b.inputs);
    const BinaryMask m = s.mask();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          if (m.get(x, y)) {
            sum += std::abs(std::clamp(out.data()[(c * 32 + y) * 32 + x], 0.0f, 1.0f) - s.target().at(x, y, c));
            n += 1;
          }
  }
  CHECK(masked_l1(t.generator(), *data, 2) == doctest::Approx(sum / n).epsilon(1e-12));
}

TEST_CASE("checkpoint sidecar mismatch is rejected") {
  const auto dir = temp_dir("sketchfill_sidecar");
  TrainOptions opts;
  opts.out_dir = dir;
  train(tiny_config(), toy_set(4), opts);
  {
    std::ofstream out(dir + "/latest.fsck", std::ios::app | std::ios::binary);
    out << "x";
  }
  Trainer t(tiny_config(), toy_set(4));
  CHECK_THROWS(t.load(dir + "/latest.fsck"));
  CHECK_THROWS_AS(load_generator(dir + "/missing.fsck"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("shipped desk config spells out the built-in defaults") {
  const Config shipped = Config::load(SKETCHFILL_SOURCE_DIR "/configs/desk.conf");
  Config a, b;
  DatasetConfig::from_config(shipped).write_to(a);
  DatasetConfig{}.write_to(b);
  CHECK(a.entries() == b.entries());

  TrainConfig t = TrainConfig::from_config(shipped), d;
  t.extra = Config{};
  Config ta, tb;
  t.write_to(ta);
  d.write_to(tb);
  CHECK(ta.entries() == tb.entries());
}
