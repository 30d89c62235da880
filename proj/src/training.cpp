#include "sketchfill/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "sketchfill/error.hpp"
#include "sketchfill/rng.hpp"

namespace sketchfill {

using json = nlohmann::json;

GanVariant parse_gan_variant(const std::string& name) {
  if (name == "wgan_gp") return GanVariant::WganGp;
  if (name == "original_gan") return GanVariant::Original;
  throw InvalidArgument("unknown loss.gan '" + name + "' (expected wgan_gp or original_gan)");
}

std::string to_string(GanVariant v) { return v == GanVariant::WganGp ? "wgan_gp" : "original_gan"; }

namespace {
std::string exact(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}
}  // namespace

LossWeights LossWeights::from_config(const Config& cfg) {
  LossWeights w;
  w.alpha = cfg.get_double("loss.alpha", w.alpha);
  w.lambda = cfg.get_double("loss.lambda", w.lambda);
  w.epsilon_drift = cfg.get_double("loss.epsilon", w.epsilon_drift);
  w.variant = parse_gan_variant(cfg.get_string("loss.gan", to_string(w.variant)));
  if (w.alpha < 0 || w.lambda < 0 || w.epsilon_drift < 0) throw InvalidArgument("loss weights must be >= 0");
  return w;
}

void LossWeights::write_to(Config& cfg) const {
  cfg.set("loss.alpha", exact(alpha));
  cfg.set("loss.lambda", exact(lambda));
  cfg.set("loss.epsilon", exact(epsilon_drift));
  cfg.set("loss.gan", to_string(variant));
}

template <class Real>
ad::Tensor<Real> composite_tensor(const ad::Tensor<Real>& output, const ad::Tensor<Real>& target,
                                  const ad::Tensor<Real>& mask) {
  if (output.shape() != target.shape())
    throw InvalidArgument("composite: shape mismatch " + ad::shape_str(output.shape()) + " vs " +
                          ad::shape_str(target.shape()));
  if (mask.rank() != 4 || mask.dim(0) != output.dim(0) || mask.dim(1) != 1 || mask.dim(2) != output.dim(2) ||
      mask.dim(3) != output.dim(3))
    throw InvalidArgument("composite: mask shape " + ad::shape_str(mask.shape()) + " does not fit " +
                          ad::shape_str(output.shape()));
  return ad::add(target, ad::mul(ad::broadcast_to(mask, output.shape()), ad::sub(output, target)));
}

template <class Real>
ad::Tensor<Real> rec_loss(const ad::Tensor<Real>& output, const ad::Tensor<Real>& target,
                          const ad::Tensor<Real>& mask) {
  return ad::mean(ad::abs(ad::sub(composite_tensor(output, target, mask), target)));
}

double rec_loss(const RasterImage& output, const RasterImage& target, const BinaryMask& mask) {
  if (!output.same_shape(target) || mask.width() != output.width() || mask.height() != output.height())
    throw InvalidArgument("rec_loss: shape mismatch");
  const RasterImage comp = composite(target, output, mask);
  double s = 0;
  for (std::size_t i = 0; i < comp.size(); ++i) s += std::abs(double(comp.data()[i]) - target.data()[i]);
  return s / static_cast<double>(comp.size());
}

template <class Real>
GanTerms<Real> wgan_gp_loss(const Critic<Real>& critic, const ad::Tensor<Real>& real, const ad::Tensor<Real>& fake,
                            double lambda, std::uint64_t seed) {
  if (real.shape() != fake.shape())
    throw InvalidArgument("wgan_gp_loss: shape mismatch " + ad::shape_str(real.shape()) + " vs " +
                          ad::shape_str(fake.shape()));
  if (lambda < 0) throw InvalidArgument("wgan_gp_loss: lambda must be >= 0");
  using T = ad::Tensor<Real>;
  GanTerms<Real> t;
  t.d_real = critic(real);
  t.d_fake = critic(fake);
  t.core = ad::sub(ad::mean(t.d_fake), ad::mean(t.d_real));

  const auto N = real.dim(0);
  Rng rng(derive_seed(seed, {0x6770}));
  std::vector<Real> u(static_cast<std::size_t>(N));
  for (auto& v : u) v = static_cast<Real>(uniform(rng, 0.0, 1.0));
  ad::Shape per{N};
  for (int i = 1; i < real.rank(); ++i) per.push_back(1);
  const T tu = ad::broadcast_to(T::from(per, u), real.shape());
  // The interpolate is a fresh leaf: the penalty gradient is taken with respect to it alone.
  const T interp = ad::add(real.detach(), ad::mul(tu, ad::sub(fake.detach(), real.detach())))
                       .detach()
                       .set_requires_grad(true);
  const T g = ad::grad(ad::sum(critic(interp)), {interp}, true).front();
  const T norms = ad::sqrt(ad::sum_to(ad::square(g), per));
  t.penalty = ad::mean(ad::square(ad::add_scalar(norms, -1.0)));
  t.d_loss = ad::add(t.core, ad::scale(t.penalty, lambda));
  return t;
}

template <class Real>
GanTerms<Real> original_gan_loss(const Critic<Real>& critic, const ad::Tensor<Real>& real,
                                 const ad::Tensor<Real>& fake) {
  if (real.shape() != fake.shape())
    throw InvalidArgument("original_gan_loss: shape mismatch " + ad::shape_str(real.shape()) + " vs " +
                          ad::shape_str(fake.shape()));
  GanTerms<Real> t;
  t.d_real = ad::clamp(critic(real), -30.0, 30.0);
  t.d_fake = ad::clamp(critic(fake), -30.0, 30.0);
  // -log s(r) = softplus(-r), -log(1 - s(f)) = softplus(f).
  t.core = ad::add(ad::mean(ad::softplus(ad::scale(t.d_real, -1.0))), ad::mean(ad::softplus(t.d_fake)));
  t.penalty = ad::Tensor<Real>::scalar(Real(0));
  t.d_loss = t.core;
  return t;
}

template <class Real>
ad::Tensor<Real> generator_adversarial(const ad::Tensor<Real>& d_fake, GanVariant variant) {
  if (variant == GanVariant::WganGp) return ad::scale(ad::mean(d_fake), -1.0);
  return ad::mean(ad::softplus(ad::scale(ad::clamp(d_fake, -30.0, 30.0), -1.0)));
}

template <class Real>
TotalLoss<Real> total_loss(const ad::Tensor<Real>& rec, const GanTerms<Real>& terms,
                           const ad::Tensor<Real>& d_fake_for_g, const LossWeights& weights) {
  TotalLoss<Real> out;
  out.drift = ad::mean(ad::square(terms.d_real));
  out.g_total = ad::add(ad::scale(rec, weights.alpha), generator_adversarial(d_fake_for_g, weights.variant));
  out.d_total = ad::add(terms.d_loss, ad::scale(out.drift, weights.epsilon_drift));
  return out;
}

#define SKETCHFILL_LOSSES(Real)                                                                                   \
  template ad::Tensor<Real> composite_tensor(const ad::Tensor<Real>&, const ad::Tensor<Real>&,                   \
                                             const ad::Tensor<Real>&);                                            \
  template ad::Tensor<Real> rec_loss(const ad::Tensor<Real>&, const ad::Tensor<Real>&, const ad::Tensor<Real>&); \
  template GanTerms<Real> wgan_gp_loss(const Critic<Real>&, const ad::Tensor<Real>&, const ad::Tensor<Real>&,   \
                                       double, std::uint64_t);                                                    \
  template GanTerms<Real> original_gan_loss(const Critic<Real>&, const ad::Tensor<Real>&,                       \
                                            const ad::Tensor<Real>&);                                             \
  template ad::Tensor<Real> generator_adversarial(const ad::Tensor<Real>&, GanVariant);                         \
  template TotalLoss<Real> total_loss(const ad::Tensor<Real>&, const GanTerms<Real>&, const ad::Tensor<Real>&,   \
                                      const LossWeights&);
SKETCHFILL_LOSSES(float)
SKETCHFILL_LOSSES(double)
#undef SKETCHFILL_LOSSES

TrainConfig TrainConfig::from_config(const Config& cfg) {
  TrainConfig t;
  t.extra = cfg;
  t.gen = GeneratorConfig::from_config(cfg);
  t.disc = DiscriminatorConfig::from_config(cfg);
  t.weights = LossWeights::from_config(cfg);
  t.real_masks = MaskParams::from_config(cfg);
  t.batch = cfg.get_int("train.batch", t.batch);
  t.n_critic = cfg.get_int("train.n_critic", t.n_critic);
  t.lr = cfg.get_double("train.lr", t.lr);
  t.seed = static_cast<std::uint64_t>(std::stoull(cfg.get_string("train.seed", std::to_string(t.seed))));
  t.fresh_real_mask = cfg.get_string("train.real_mask", "fresh") == "fresh";
  if (cfg.has("train.real_mask") && cfg.get_string("train.real_mask", "") != "fresh" &&
      cfg.get_string("train.real_mask", "") != "own")
    throw InvalidArgument("train.real_mask must be fresh or own");
  t.prefetch = cfg.get_bool("train.prefetch", t.prefetch);
  if (t.batch < 1) throw InvalidArgument("train.batch must be >= 1");
  if (t.n_critic < 1) throw InvalidArgument("train.n_critic must be >= 1");
  if (!(t.lr > 0)) throw InvalidArgument("train.lr must be positive");
  if (t.gen.side != t.disc.side) throw InvalidArgument("generator and discriminator sides differ");
  return t;
}

void TrainConfig::write_to(Config& cfg) const {
  for (const auto& [k, v] : extra.entries()) cfg.set(k, v);
  gen.write_to(cfg);
  disc.write_to(cfg);
  weights.write_to(cfg);
  real_masks.write_to(cfg);
  cfg.set("train.batch", std::to_string(batch));
  cfg.set("train.n_critic", std::to_string(n_critic));
  cfg.set("train.lr", exact(lr));
  cfg.set("train.seed", std::to_string(seed));
  cfg.set("train.real_mask", fresh_real_mask ? "fresh" : "own");
  cfg.set("train.prefetch", prefetch ? "true" : "false");
}

namespace {

using TF = ad::Tensor<float>;

TF mask_tensor(const std::vector<BinaryMask>& masks) {
  const auto N = static_cast<std::int64_t>(masks.size());
  const int S = masks.front().width();
  std::vector<float> v(static_cast<std::size_t>(N) * S * S);
  for (std::int64_t n = 0; n < N; ++n)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) v[(n * S + y) * S + x] = masks[n].get(x, y) ? 1.0f : 0.0f;
  return TF::from({N, 1, S, S}, std::move(v));
}

// Local crop boxes centered on each sample's mask channel (>= 0.5 counts as masked, which also
// covers gradient-penalty interpolates between two masks).
std::vector<ad::CropOrigin> crops_from_mask_channel(const TF& x, int local_side) {
  const auto N = x.dim(0);
  const int S = static_cast<int>(x.dim(2));
  const std::size_t plane = std::size_t(S) * S;
  std::vector<ad::CropOrigin> out;
  for (std::int64_t n = 0; n < N; ++n) {
    BinaryMask m(S, S);
    const float* ch = x.data().data() + (n * x.dim(1) + channel::kMask) * plane;
    for (int y = 0; y < S; ++y)
      for (int xx = 0; xx < S; ++xx) m.set(xx, y, ch[std::size_t(y) * S + xx] >= 0.5f);
    const Rect r = local_crop_box(m, local_side);
    out.push_back({r.y0, r.x0});
  }
  return out;
}

void check_finite(const TF& loss, const char* what, std::int64_t step) {
  const float v = loss.item();
  if (std::isfinite(v)) return;
  const std::string where = ad::first_nonfinite(loss);
  throw NumericError(std::string(what) + " is not finite at step " + std::to_string(step) +
                     (where.empty() ? "" : "; first non-finite tensor: " + where));
}

ad::AdamState<float> make_opt(double lr) {
  ad::AdamState<float> s;
  s.lr = lr;
  return s;
}

}  // namespace

double masked_l1(const Generator<float>& gen, const std::vector<TrainingSample>& samples, int batch) {
  ad::NoGradGuard guard;
  double sum = 0, count = 0;
  for (std::size_t first = 0; first < samples.size(); first += static_cast<std::size_t>(batch)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = first; i < std::min(samples.size(), first + batch); ++i) idx.push_back(i);
    const Batch b = make_batch(samples, idx);
    const TF out = gen.forward(b.inputs);
    const int S = samples.front().side();
    const std::size_t plane = std::size_t(S) * S;
    for (std::size_t n = 0; n < idx.size(); ++n)
      for (int c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < plane; ++p) {
          if (!b.masks[n].bits()[p]) continue;
          const std::size_t k = (n * 3 + c) * plane + p;
          sum += std::abs(std::clamp(out.data()[k], 0.0f, 1.0f) - b.targets.data()[k]);
          count += 1;
        }
  }
  return count > 0 ? sum / count : 0.0;
}

Trainer::Trainer(TrainConfig cfg, std::shared_ptr<const std::vector<TrainingSample>> samples)
    : cfg_(std::move(cfg)),
      samples_(std::move(samples)),
      gen_(cfg_.gen, derive_seed(cfg_.seed, {0x67656e})),
      disc_(cfg_.disc, derive_seed(cfg_.seed, {0x64697363})),
      gen_opt_(make_opt(cfg_.lr)),
      disc_opt_(make_opt(cfg_.lr)),
      loader_(samples_, cfg_.batch, derive_seed(cfg_.seed, {0x6c6f6164}), cfg_.prefetch) {
  if (samples_->front().side() != cfg_.gen.side)
    throw InvalidArgument("samples are " + std::to_string(samples_->front().side()) + " px but the model expects " +
                          std::to_string(cfg_.gen.side));
}

StepMetrics Trainer::step() {
  const int S = cfg_.gen.side;
  const int local = cfg_.disc.local_side();
  const auto& dparams = disc_.parameters();
  const auto& gparams = gen_.parameters();
  StepMetrics m;
  m.step = step_;
  const Critic<float> critic = [&](const TF& x) { return disc_.forward(x, crops_from_mask_channel(x, local)); };

  TF comp, cond, targets;
  for (int k = 0; k < cfg_.n_critic; ++k) {
    const Batch b = loader_.next();
    const TF mask = ad::slice(b.inputs, channel::kMask, channel::kMask + 1);
    const bool last = k + 1 == cfg_.n_critic;
    TF out;
    if (last) {
      out = gen_.forward(b.inputs);
    } else {
      ad::NoGradGuard guard;
      out = gen_.forward(b.inputs);
    }
    comp = composite_tensor(out, b.targets, mask);
    cond = ad::slice(b.inputs, channel::kSketch, channel::kMask + 1);
    targets = b.targets;
    const TF fake = ad::concat<float>({comp.detach(), cond});

    // Real samples: the genuine image with the same sketch and color channels, under a fresh
    // random mask unless configured to keep the sample's own.
    TF real_cond = cond;
    if (cfg_.fresh_real_mask) {
      std::vector<BinaryMask> fresh;
      for (std::size_t n = 0; n < b.masks.size(); ++n)
        fresh.push_back(
            sample_mask(S, S, derive_seed(cfg_.seed, {0x7265616c, std::uint64_t(step_), std::uint64_t(k), n}),
                        cfg_.real_masks)
                .second);
      real_cond = ad::concat<float>({ad::slice(b.inputs, channel::kSketch, channel::kMask), mask_tensor(fresh)});
    }
    const TF real = ad::concat<float>({b.targets, real_cond});

    const GanTerms<float> terms =
        cfg_.weights.variant == GanVariant::WganGp
            ? wgan_gp_loss(critic, real, fake, cfg_.weights.lambda,
                           derive_seed(cfg_.seed, {0x6770, std::uint64_t(step_), std::uint64_t(k)}))
            : original_gan_loss(critic, real, fake);
    const TF drift = ad::mean(ad::square(terms.d_real));
    const TF d_total = ad::add(terms.d_loss, ad::scale(drift, cfg_.weights.epsilon_drift));
    check_finite(d_total, "critic loss", step_);
    ad::adam_step(disc_opt_, dparams, ad::grad(d_total, dparams));
    m.d_loss = d_total.item();
    m.gp = terms.penalty.item();
    m.drift = drift.item();
  }

  // Generator update against the critic as just updated, on the last critic batch.
  const TF rec = ad::mean(ad::abs(ad::sub(comp, targets)));
  const TF d_fake = critic(ad::concat<float>({comp, cond}));
  const TF g_total =
      ad::add(ad::scale(rec, cfg_.weights.alpha), generator_adversarial(d_fake, cfg_.weights.variant));
  check_finite(g_total, "generator loss", step_);
  ad::adam_step(gen_opt_, gparams, ad::grad(g_total, gparams));
  m.g_loss = g_total.item();
  m.rec = rec.item();
  ++step_;
  return m;
}

namespace {

constexpr char kOptPrefix[] = "opt/";

void save_moments(const ad::AdamState<float>& st, const std::vector<TF>& params, const std::string& who,
                  TensorTable& table) {
  for (std::size_t i = 0; i < st.m.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%s/%03zu/", kOptPrefix, who.c_str(), i);
    table[std::string(buf) + "m"] = TensorRecord{params[i].shape(), st.m[i]};
    table[std::string(buf) + "v"] = TensorRecord{params[i].shape(), st.v[i]};
  }
}

void load_moments(ad::AdamState<float>& st, const std::vector<TF>& params, const std::string& who,
                  const TensorTable& table, std::int64_t steps) {
  st.step = steps;
  st.m.clear();
  st.v.clear();
  if (steps == 0) return;
  for (std::size_t i = 0; i < params.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%s/%03zu/", kOptPrefix, who.c_str(), i);
    const auto m = table.find(std::string(buf) + "m"), v = table.find(std::string(buf) + "v");
    if (m == table.end() || v == table.end())
      throw InvalidArgument("checkpoint is missing optimizer state " + std::string(buf));
    if (m->second.dims != params[i].shape() || v->second.dims != params[i].shape())
      throw InvalidArgument("checkpoint optimizer state " + std::string(buf) + " has the wrong shape");
    st.m.push_back(m->second.data);
    st.v.push_back(v->second.data);
  }
}

std::string sidecar_path(const std::string& path) { return path + ".json"; }

json read_sidecar(const std::string& path) {
  std::ifstream in(sidecar_path(path));
  if (!in) throw IoError("missing checkpoint sidecar " + sidecar_path(path));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("unreadable checkpoint sidecar " + sidecar_path(path) + ": " + e.what());
  }
}

Config config_from_json(const json& j) {
  Config cfg;
  for (const auto& [k, v] : j.at("config").items()) cfg.set(k, v.get<std::string>());
  return cfg;
}

}  // namespace

void Trainer::save(const std::string& path) const {
  TensorTable table;
  gen_.save(table);
  disc_.save(table);
  save_moments(gen_opt_, gen_.parameters(), "gen", table);
  save_moments(disc_opt_, disc_.parameters(), "disc", table);
  write_checkpoint(path, table);
  Config cfg;
  cfg_.write_to(cfg);
  json j;
  j["step"] = step_;
  j["gen_opt_step"] = gen_opt_.step;
  j["disc_opt_step"] = disc_opt_.step;
  j["checkpoint_hash"] = checkpoint_hash(path);
  j["config"] = cfg.entries();
  const std::string tmp = sidecar_path(path) + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp);
    out << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, sidecar_path(path));
}

void Trainer::load(const std::string& path) {
  const json j = read_sidecar(path);
  if (j.value("checkpoint_hash", "") != checkpoint_hash(path))
    throw InvalidArgument("checkpoint " + path + " does not match its sidecar");
  const TensorTable table = read_checkpoint(path);
  gen_.load(table);
  disc_.load(table);
  load_moments(gen_opt_, gen_.parameters(), "gen", table, j.at("gen_opt_step").get<std::int64_t>());
  load_moments(disc_opt_, disc_.parameters(), "disc", table, j.at("disc_opt_step").get<std::int64_t>());
  step_ = j.at("step").get<std::int64_t>();
  loader_.seek(static_cast<std::uint64_t>(step_) * cfg_.n_critic);
}

LoadedGenerator load_generator(const std::string& path) {
  const json j = read_sidecar(path);
  Config cfg = config_from_json(j);
  const std::string hash = checkpoint_hash(path);
  if (j.value("checkpoint_hash", "") != hash) throw InvalidArgument("checkpoint " + path + " does not match its sidecar");
  LoadedGenerator out{Generator<float>(GeneratorConfig::from_config(cfg), 0), cfg, hash};
  out.gen.load(read_checkpoint(path));
  return out;
}

TrainResult train(const TrainConfig& cfg, std::shared_ptr<const std::vector<TrainingSample>> samples,
                  const TrainOptions& opts) {
  if (opts.steps < 0) throw InvalidArgument("steps must be >= 0");
  if (opts.out_dir.empty()) throw InvalidArgument("train needs an output directory");
  std::filesystem::create_directories(opts.out_dir);
  Trainer trainer(cfg, std::move(samples));
  const bool resumed = !opts.resume_from.empty();
  if (resumed) trainer.load(opts.resume_from);
  const auto dir = std::filesystem::path(opts.out_dir);
  TrainResult result;

  auto open_csv = [&](const std::string& name, const char* header) {
    const auto p = dir / name;
    const bool fresh = !resumed || !std::filesystem::exists(p);
    std::ofstream out(p, fresh ? std::ios::trunc : std::ios::app);
    if (!out) throw IoError("cannot write " + p.string());
    if (fresh) out << header << "\n";
    out << std::setprecision(9);
    return out;
  };
  std::ofstream metrics = open_csv("metrics.csv", "step,d_loss,g_loss,rec,gp,drift");
  std::ofstream eval = open_csv("eval.csv", "step,masked_l1");

  auto evaluate = [&] {
    if (!opts.heldout || opts.heldout->empty()) return;
    const double l1 = masked_l1(trainer.generator(), *opts.heldout);
    result.heldout_l1.emplace_back(trainer.steps_done(), l1);
    eval << trainer.steps_done() << "," << l1 << "\n" << std::flush;
  };
  auto checkpoint = [&] {
    char name[32];
    std::snprintf(name, sizeof(name), "ckpt_%08lld.fsck", static_cast<long long>(trainer.steps_done()));
    trainer.save((dir / name).string());
    trainer.save((dir / "latest.fsck").string());
    result.latest_checkpoint = (dir / "latest.fsck").string();
  };

  if (!resumed) checkpoint();
  const bool eval_now = opts.eval_every > 0 && trainer.steps_done() % opts.eval_every == 0;
  if (!resumed || eval_now) evaluate();
  const std::int64_t end = trainer.steps_done() + opts.steps;
  while (trainer.steps_done() < end) {
    const StepMetrics m = trainer.step();
    metrics << m.step << "," << m.d_loss << "," << m.g_loss << "," << m.rec << "," << m.gp << "," << m.drift
            << "\n";
    if (opts.on_step) opts.on_step(m);
    const std::int64_t done = trainer.steps_done();
    if (opts.eval_every > 0 && done % opts.eval_every == 0) evaluate();
    if (opts.checkpoint_every > 0 && done % opts.checkpoint_every == 0) checkpoint();
  }
  metrics.flush();
  if (opts.steps > 0 && (opts.checkpoint_every <= 0 || trainer.steps_done() % opts.checkpoint_every != 0))
    checkpoint();
  if (opts.heldout && !opts.heldout->empty() &&
      (result.heldout_l1.empty() || result.heldout_l1.back().first != trainer.steps_done()))
    evaluate();
  result.steps = trainer.steps_done();
  return result;
}

}  // namespace sketchfill
