// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is the number of
// failures. Optional arguments select criteria by key (lrn, rec, gp, gradcheck, toy, sketch,
// color, masks, integration). `--cli PATH` names the sketchfill binary for the integration run and
// `--report PATH` also writes the result lines to a file.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sys/wait.h>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sketchfill/api.hpp"
#include "sketchfill/checkpoint.hpp"
#include "sketchfill/error.hpp"
#include "sketchfill/gradcheck.hpp"
#include "sketchfill/maskgen.hpp"
#include "sketchfill/server.hpp"
#include "sketchfill/synth.hpp"
#include "sketchfill/training.hpp"

#include "httplib.h"
#include "json.hpp"

using namespace sketchfill;
namespace fs = std::filesystem;
using json = nlohmann::json;
using TD = ad::Tensor<double>;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  const char* key;
  const char* name;
  std::function<Outcome()> run;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

TD random_tensor(ad::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(static_cast<std::size_t>(ad::numel(shape)));
  for (auto& x : v) x = n(rng);
  return TD::from(std::move(shape), std::move(v));
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("sketchfill_acceptance_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// ---------------------------------------------------------------------------------------------

Outcome lrn_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const int C = 1 + static_cast<int>(rng() % 16), H = 1 + static_cast<int>(rng() % 4), W = 1 + static_cast<int>(rng() % 4);
    const double scale = std::pow(10.0, -4.0 + 5.0 * std::uniform_real_distribution<double>(0, 1)(rng));
    const TD a = random_tensor({2, C, H, W}, rng, scale);
    const TD y = lrn(a);
    const int P = H * W;
    for (int n = 0; n < 2; ++n)
      for (int p = 0; p < P; ++p) {
        double s = 0, sy = 0;
        for (int c = 0; c < C; ++c) {
          s += std::pow(a.data()[(n * C + c) * P + p], 2);
          sy += std::pow(y.data()[(n * C + c) * P + p], 2);
        }
        s /= C;
        worst = std::max(worst, std::abs(sy - C * s / (s + 1e-8)));
      }
  }
  const TD z = lrn(TD::zeros({1, 5, 3, 3}));
  const bool zero_ok = std::all_of(z.data().begin(), z.data().end(), [](double v) { return v == 0.0; });
  const double dt = seconds_since(t0);
  return {worst < 1e-6 && zero_ok && dt < 5.0,
          fmt("max |sum y^2 - C s/(s+eps)| = %.2e over 1000 tensors (< 1e-6), zero->zero %s, %.2f s (< 5 s)", worst,
              zero_ok ? "yes" : "NO", dt)};
}

Outcome rec_oracle() {
  std::mt19937_64 rng(2);
  double worst = 0;
  for (int t = 0; t < 25; ++t) {
    const int N = 1 + static_cast<int>(rng() % 3), H = 2 + static_cast<int>(rng() % 6), W = 2 + static_cast<int>(rng() % 6);
    const TD out = random_tensor({N, 3, H, W}, rng), target = random_tensor({N, 3, H, W}, rng);
    std::vector<double> mv(static_cast<std::size_t>(N * H * W));
    for (auto& v : mv) v = static_cast<double>(rng() % 2);
    const TD mask = TD::from({N, 1, H, W}, mv);
    double direct = 0;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < 3; ++c)
        for (int p = 0; p < H * W; ++p) {
          const std::size_t k = static_cast<std::size_t>((n * 3 + c) * H * W + p);
          const double m = mv[static_cast<std::size_t>(n * H * W + p)];
          direct += std::abs(m * (out.data()[k] - target.data()[k]));
        }
    direct /= N * 3.0 * H * W;
    worst = std::max(worst, std::abs(rec_loss(out, target, mask).item() - direct));
  }

  const TD out = random_tensor({2, 3, 16, 16}, rng).set_requires_grad(true), target = random_tensor({2, 3, 16, 16}, rng);
  std::vector<double> mv(2 * 256, 0.0);
  for (int n = 0; n < 2; ++n)
    for (int y = 3 + n; y < 11; ++y)
      for (int xx = 4; xx < 12 - n; ++xx) mv[static_cast<std::size_t>(n * 256 + y * 16 + xx)] = 1.0;
  const TD grad = ad::grad(rec_loss(out, target, TD::from({2, 1, 16, 16}, mv)), {out}).front();
  std::size_t leaks = 0, inside = 0;
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 256; ++p) {
        const double gv = grad.data()[static_cast<std::size_t>((n * 3 + c) * 256 + p)];
        const bool m = mv[static_cast<std::size_t>(n * 256 + p)] != 0.0;
        leaks += !m && gv != 0.0;
        inside += m && gv != 0.0;
      }
  return {worst <= 1e-7 && leaks == 0 && inside > 0,
          fmt("max |rec - direct| = %.2e over 25 cases (<= 1e-7); out-of-mask nonzero grads %zu (== 0)", worst, leaks)};
}

Critic<double> linear_critic(const TD& w) {
  return [w](const TD& x) {
    const auto N = x.dim(0);
    return ad::add_scalar(ad::reshape(ad::matmul(ad::reshape(x, {N, x.numel() / N}), w), {N}), 0.1);
  };
}

Outcome gp_analytic() {
  const auto t0 = std::chrono::steady_clock::now();
  const double lambda = 100.0;
  std::mt19937_64 rng(3);
  double worst_pen = 0, worst_grad = 0;
  for (int t = 0; t < 50; ++t) {
    const int D = 2 + static_cast<int>(rng() % 30);
    const TD w = random_tensor({D, 1}, rng, 0.2 + 0.1 * (t % 10)).set_requires_grad(true);
    const TD real = random_tensor({3, D, 1, 1}, rng), fake = random_tensor({3, D, 1, 1}, rng);
    const auto terms = wgan_gp_loss(linear_critic(w), real, fake, lambda, rng());
    double nrm = 0;
    for (double v : w.data()) nrm += v * v;
    nrm = std::sqrt(nrm);
    const TD weighted = ad::scale(terms.penalty, lambda);
    worst_pen = std::max(worst_pen, std::abs(weighted.item() - lambda * (nrm - 1) * (nrm - 1)));
    const TD g = ad::grad(weighted, {w}).front();
    for (int i = 0; i < D; ++i)
      worst_grad = std::max(worst_grad, std::abs(g.data()[i] - 2 * lambda * (nrm - 1) * w.data()[i] / nrm));
  }
  const double dt = seconds_since(t0);
  return {worst_pen < 1e-6 && worst_grad < 1e-6 && dt < 10.0,
          fmt("penalty err %.2e, d/dw err %.2e over 50 linear critics (< 1e-6), %.2f s (< 10 s)", worst_pen, worst_grad,
              dt)};
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = ad::run_gradcheck_suite(1234);
  double first = 0, second = 0;
  int failed = 0, n_first = 0, n_second = 0;
  for (const auto& r : results) {
    const bool so = r.tolerance > 1e-4;
    const double bound = so ? 1e-3 : 1e-4;
    if (!(r.max_rel_error < bound)) {
      ++failed;
      std::fprintf(stderr, "  gradcheck %s: %.3e\n", r.name.c_str(), r.max_rel_error);
    }
    (so ? second : first) = std::max(so ? second : first, r.max_rel_error);
    ++(so ? n_second : n_first);
  }
  const double dt = seconds_since(t0);
  return {failed == 0 && n_first > 0 && n_second > 0 && dt < 120.0,
          fmt("%d first-order checks max %.2e (< 1e-4), %d second-order max %.2e (< 1e-3), %.1f s (< 120 s)", n_first,
              first, n_second, second, dt)};
}

// ---------------------------------------------------------------------------------------------

std::vector<TrainingSample> forge_faces(int count, std::uint64_t first_face, std::uint64_t first_seed,
                                        const DatasetConfig& cfg) {
  std::vector<std::optional<TrainingSample>> slots(static_cast<std::size_t>(count));
  const unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < jobs; ++j)
    pool.emplace_back([&, j] {
      for (int i = static_cast<int>(j); i < count; i += static_cast<int>(jobs))
        slots[static_cast<std::size_t>(i)] =
            assemble_sample(synth_face(cfg.size, first_face + i, true).image, first_seed + i, cfg);
    });
  for (auto& t : pool) t.join();
  std::vector<TrainingSample> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

Outcome toy_training() {
  const auto t0 = std::chrono::steady_clock::now();
  const DatasetConfig dc;
  const std::vector<TrainingSample> all = forge_faces(220, 1000, 77, dc);
  auto train_set = std::make_shared<const std::vector<TrainingSample>>(all.begin(), all.begin() + 200);
  const std::vector<TrainingSample> heldout(all.begin() + 200, all.end());
  const double forge_s = seconds_since(t0);

  TrainConfig cfg;  // desk defaults: batch 4, lr 2e-4
  const fs::path dir = scratch("toy");
  TrainOptions opts;
  opts.steps = 2000;
  opts.out_dir = dir.string();
  opts.heldout = &heldout;
  opts.eval_every = 100;
  bool nan_abort = false;
  TrainResult r;
  try {
    r = train(cfg, train_set, opts);
  } catch (const NumericError& e) {
    nan_abort = true;
    std::fprintf(stderr, "  toy training aborted: %s\n", e.what());
  }
  const double train_s = seconds_since(t0) - forge_s;
  if (nan_abort || r.heldout_l1.size() < 2) return {false, "training aborted before the final evaluation"};
  for (const auto& [step, l1] : r.heldout_l1) std::fprintf(stderr, "  held-out masked L1 @%5lld: %.5f\n", static_cast<long long>(step), l1);
  const double l0 = r.heldout_l1.front().second, lf = r.heldout_l1.back().second;

  // Resume: 3 steps, save, 3 more, against 6 straight; checkpoints must be byte-identical.
  const fs::path a = scratch("resume_a"), b = scratch("resume_b");
  TrainOptions six;
  six.steps = 6;
  six.out_dir = a.string();
  const std::string straight = train(cfg, train_set, six).latest_checkpoint;
  TrainOptions three;
  three.steps = 3;
  three.out_dir = b.string();
  const std::string half = train(cfg, train_set, three).latest_checkpoint;
  TrainOptions rest = three;
  rest.resume_from = half;
  const std::string resumed = train(cfg, train_set, rest).latest_checkpoint;
  const bool exact = checkpoint_hash(straight) == checkpoint_hash(resumed) &&
                     read_checkpoint(straight) == read_checkpoint(resumed);

  const double total_min = seconds_since(t0) / 60.0;
  const double ratio = lf / l0;
  return {ratio <= 0.6 && exact && total_min < 60.0,
          fmt("held-out masked L1 %.4f -> %.4f at step %lld (%.1f%% of step 0, <= 60%%); no NaN abort; resume "
              "bit-exact %s; forge %.0f s + train %.0f s = %.1f min (< 60)",
              l0, lf, static_cast<long long>(r.heldout_l1.back().first), 100 * ratio, exact ? "yes" : "NO", forge_s,
              train_s, total_min)};
}

// ---------------------------------------------------------------------------------------------

Outcome sketch_pipeline() {
  const SketchConfig cfg;
  double min_iou = 1, worst_ratio = 0;
  std::size_t polylines = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ShapeScene scene = synth_shapes(128, seed);
    const SketchLayer s = make_sketch(scene.image, cfg);
    min_iou = std::min(min_iou, iou(dilate_disk(s, 3), dilate_disk(scene.boundary, 3)));
    for (const Polyline& p : sketch_polylines(scene.image, cfg)) {
      ++polylines;
      worst_ratio = std::max(worst_ratio, max_deviation(fit_splines(p, cfg.max_error), p) / cfg.max_error);
    }
  }
  return {min_iou >= 0.6 && worst_ratio <= 1.0 && polylines > 0,
          fmt("min IoU %.3f over 20 shape images (>= 0.6, both grown by 3 px); max spline deviation %.3f x max_error "
              "over %zu polylines (<= 1)",
              min_iou, worst_ratio, polylines)};
}

RasterImage naive_median(const RasterImage& img, int k) {
  RasterImage out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        std::vector<float> w;
        for (int dy = -k / 2; dy <= k / 2; ++dy)
          for (int dx = -k / 2; dx <= k / 2; ++dx) w.push_back(img.clamped(x + dx, y + dy, c));
        std::sort(w.begin(), w.end());
        out.at(x, y, c) = w[w.size() / 2];
      }
  return out;
}

RasterImage naive_bilateral(const RasterImage& img, double sr, double sd) {
  const int r = static_cast<int>(std::ceil(2.0 * sd));
  RasterImage out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc[3] = {0, 0, 0}, wsum = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          double d2 = 0;
          for (int c = 0; c < 3; ++c) {
            const double diff = 255.0 * (img.clamped(x + dx, y + dy, c) - img.at(x, y, c));
            d2 += diff * diff;
          }
          const double w = std::exp(-(dx * dx + dy * dy) / (2 * sd * sd)) * std::exp(-d2 / (2 * sr * sr));
          wsum += w;
          for (int c = 0; c < 3; ++c) acc[c] += w * img.clamped(x + dx, y + dy, c);
        }
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<float>(acc[c] / wsum);
    }
  return out;
}

Outcome color_domain() {
  ColorMapParams p;
  p.side = 16;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const RasterImage face = synth_face(128, seed, true).image;
    RasterImage crop(16, 16, 3);
    const int ox = 24 + 16 * static_cast<int>(seed), oy = 40;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        for (int c = 0; c < 3; ++c) crop.at(x, y, c) = face.at(ox + x, oy + y, c);
    RasterImage ref = naive_median(crop, p.median_kernel);
    for (int i = 0; i < p.iterations; ++i) ref = naive_bilateral(ref, p.sigma_range, p.sigma_domain);
    const ColorMap map = build_color_map(crop, nullptr, p);
    for (std::size_t i = 0; i < ref.size(); ++i)
      worst = std::max(worst, static_cast<double>(std::abs(map.rgb.data()[i] - ref.data()[i])));
  }

  double worst_eye = 0;
  int eyes = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SynthFace face = synth_face(128, seed, true);
    for (const Point eye : {face.left_eye, face.right_eye}) {
      worst_eye = std::max(worst_eye, distance(locate_pupil(face.image, eye_box(eye, 128, 128)).center, eye));
      ++eyes;
    }
  }

  const ColorLayer layer = draw_iris(ColorLayer::empty(16, 16), {{8, 8}, {1, 0, 0}, 3});
  int dropped = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) dropped += maybe_drop_color(layer, seed).valid.count() == 0;
  const double rate = dropped / 10000.0;
  return {worst <= 1e-6 && worst_eye <= 2.0 && std::abs(rate - 0.5) <= 0.02,
          fmt("color map vs naive median+%d bilateral passes %.2e (<= 1e-6) on 4 16x16 crops; pupil error max %.2f px "
              "on %d eyes (<= 2); drop rate %.4f (0.5 +- 0.02)",
              p.iterations, worst, worst_eye, eyes, rate)};
}

// Asymptotic Kolmogorov distribution tail, P(sqrt(n) D > x).
double ks_pvalue(double d, std::size_t n) {
  const double x = (std::sqrt(static_cast<double>(n)) + 0.12 + 0.11 / std::sqrt(static_cast<double>(n))) * d;
  double p = 0;
  for (int k = 1; k <= 100; ++k) p += 2 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * x * x);
  return std::clamp(p, 0.0, 1.0);
}

Outcome masks() {
  const std::size_t n = 10000;
  std::vector<double> angles;
  MaskParams rotated;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [spec, m] = sample_mask(64, 64, i, rotated);
    angles.push_back(spec.angle);
  }
  std::sort(angles.begin(), angles.end());
  double d = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = angles[i] / rotated.max_angle;
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double p = ks_pvalue(d, n);

  MaskParams flat;
  flat.axis_aligned = true;
  bool all_zero = true;
  for (std::uint64_t s = 0; s < 1000; ++s) all_zero = all_zero && sample_mask(64, 64, s, flat).first.angle == 0.0;

  double worst_area = 0;
  for (std::uint64_t s = 0; s < 500; ++s) {
    const auto [spec, m] = sample_mask(512, 512, s, rotated);
    worst_area = std::max(worst_area, std::abs(m.count() / (spec.width * spec.height) - 1.0));
  }
  return {p > 0.01 && all_zero && worst_area <= 0.02,
          fmt("KS D = %.4f, p = %.3f over %zu angles (> 0.01); axis-aligned angles all 0: %s; area error max %.2f%% on "
              "500 masks at 512 px (<= 2%%)",
              d, p, n, all_zero ? "yes" : "NO", 100 * worst_area)};
}

// ---------------------------------------------------------------------------------------------

int run(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome integration(const std::string& cli) {
  if (cli.empty()) return {false, "no --cli path given"};
  const fs::path dir = scratch("integration");
  const std::string q = "'" + cli + "'";
  const std::string d = dir.string();
  std::vector<std::string> problems;

  {
    std::ofstream conf(dir / "desk.conf");
    conf << "size = 64\ncolor.bilateral_iterations = 4\nforge.samples_per_image = 2\n";
  }
  if (run(q + " synth-faces --out " + d + "/faces --count 8 --size 96 --jitter > /dev/null") != 0)
    problems.push_back("synth-faces failed");
  if (run(q + " forge --input " + d + "/faces --annotations " + d + "/faces/annotations.csv --config " + d +
          "/desk.conf --out " + d + "/a.fsds " + d + "/b.fsds > /dev/null 2>&1") != 0)
    problems.push_back("forge failed");
  if (run(q + " train --shards " + d + "/a.fsds " + d + "/b.fsds --config " + d + "/desk.conf --steps 0 --out " + d +
          "/ck > /dev/null 2>&1") != 0)
    problems.push_back("train --steps 0 failed");

  // Shard round trips: decode(encode(x)) == x and re-encoding reproduces the file bytes.
  std::size_t shard_samples = 0;
  bool lossless = true;
  for (const char* name : {"a.fsds", "b.fsds"}) {
    try {
      std::ifstream in(dir / name, std::ios::binary);
      const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), {}};
      const auto samples = decode_shard(bytes);
      shard_samples += samples.size();
      lossless = lossless && encode_shard(samples) == bytes && decode_shard(encode_shard(samples)) == samples;
    } catch (const std::exception& e) {
      lossless = false;
      problems.push_back(std::string("shard ") + name + ": " + e.what());
    }
  }
  if (!lossless || shard_samples != 16) problems.push_back("shard round trip not lossless");

  // CLI edit with empty stroke files.
  RasterImage image;
  BinaryMask mask(64, 64);
  for (int y = 20; y < 44; ++y)
    for (int x = 18; x < 40; ++x) mask.set(x, y);
  try {
    image = decode_png(encode_png(synth_face(64, 4242).image));
    write_png(image, (dir / "img.png").string());
    write_mask(mask, (dir / "mask.png").string());
    std::ofstream(dir / "empty.json").flush();
  } catch (const std::exception& e) {
    problems.push_back(e.what());
  }
  const std::string ckpt = d + "/ck/latest.fsck";
  if (run(q + " edit --image " + d + "/img.png --mask " + d + "/mask.png --sketch " + d + "/empty.json --color " + d +
          "/empty.json --seed 5 --ckpt " + ckpt + " --out " + d + "/out.png") != 0)
    problems.push_back("edit failed");
  std::size_t cli_mismatch = 0;
  try {
    const RasterImage out = read_png((dir / "out.png").string());
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        for (int c = 0; c < 3; ++c) cli_mismatch += !mask.get(x, y) && out.at(x, y, c) != image.at(x, y, c);
  } catch (const std::exception& e) {
    problems.push_back(std::string("edit output: ") + e.what());
  }
  if (cli_mismatch) problems.push_back(fmt("CLI edit changed %zu out-of-mask values", cli_mismatch));

  // HTTP: determinism and out-of-mask equality.
  std::size_t http_mismatch = 0;
  bool deterministic = false, seed_sensitive = false;
  try {
    EditService service(std::make_shared<const Editor>(Editor::from_checkpoint(ckpt)));
    const int port = service.bind("127.0.0.1", 0);
    std::thread th([&] { service.run(); });
    service.wait_until_ready();
    httplib::Client cli_http("127.0.0.1", port);
    const auto body = [&](std::uint64_t seed) {
      return json{{"image", api::base64_encode(encode_png(image))},
                  {"mask", api::base64_encode(encode_png(mask_to_image(mask)))},
                  {"noise_seed", seed},
                  {"pen", json::array({json{{"points", {{20, 24}, {36, 40}}}}})}}
          .dump();
    };
    const auto r1 = cli_http.Post("/v1/edit", body(9), "application/json");
    const auto r2 = cli_http.Post("/v1/edit", body(9), "application/json");
    const auto r3 = cli_http.Post("/v1/edit", body(10), "application/json");
    service.stop();
    th.join();
    if (!r1 || !r2 || !r3 || r1->status != 200) throw std::runtime_error("HTTP edit request failed");
    deterministic = r1->body == r2->body;
    seed_sensitive = r1->body != r3->body;
    const RasterImage out = decode_png(api::base64_decode(json::parse(r1->body)["image"].get<std::string>()));
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        for (int c = 0; c < 3; ++c) http_mismatch += !mask.get(x, y) && out.at(x, y, c) != image.at(x, y, c);
  } catch (const std::exception& e) {
    problems.push_back(std::string("HTTP: ") + e.what());
  }
  if (!deterministic) problems.push_back("/v1/edit not deterministic");
  if (http_mismatch) problems.push_back(fmt("/v1/edit changed %zu out-of-mask values", http_mismatch));

  std::string detail = fmt("forge -> train --steps 0 -> edit ok; %zu shard samples round-trip losslessly; /v1/edit "
                           "byte-identical per seed: %s (differs across seeds: %s); out-of-mask mismatches CLI %zu, "
                           "HTTP %zu",
                           shard_samples, deterministic ? "yes" : "NO", seed_sensitive ? "yes" : "no", cli_mismatch,
                           http_mismatch);
  if (!problems.empty()) {
    detail = problems.front();
    for (std::size_t i = 1; i < problems.size(); ++i) detail += "; " + problems[i];
  }
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli, report_path;
  std::vector<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc)
      cli = argv[++i];
    else if (a == "--report" && i + 1 < argc)
      report_path = argv[++i];
    else
      only.push_back(a);
  }

  const std::vector<Criterion> criteria = {
      {"lrn", "LRN sum-of-squares identity", lrn_identity},
      {"rec", "masked L1 oracle and out-of-mask gradients", rec_oracle},
      {"gp", "gradient penalty on linear critics", gp_analytic},
      {"gradcheck", "finite-difference gradient suite", gradient_suite},
      {"toy", "toy training run", toy_training},
      {"sketch", "sketch pipeline", sketch_pipeline},
      {"color", "color domain", color_domain},
      {"masks", "mask distribution", masks},
      {"integration", "dataset and gateway integration", [&] { return integration(cli); }},
  };

  std::ofstream report;
  if (!report_path.empty()) report.open(report_path);
  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.key) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + "  " + c.name + ": " + o.detail;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    if (report) report << line << std::endl;
  }
  return failures;
}
