#include "sketchfill/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sketchfill/binio.hpp"
#include "sketchfill/error.hpp"
#include "sketchfill/rng.hpp"

namespace sketchfill {

std::vector<EyeAnnotation> read_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations " + path);
  std::vector<EyeAnnotation> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && line.rfind("file", 0) == 0) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) cols.push_back(col);
    if (cols.size() != 5) throw InvalidArgument(path + ":" + std::to_string(lineno) + ": expected 5 columns");
    EyeAnnotation a;
    a.file = cols[0];
    try {
      a.left = {std::stod(cols[1]), std::stod(cols[2])};
      a.right = {std::stod(cols[3]), std::stod(cols[4])};
    } catch (const std::exception&) {
      throw InvalidArgument(path + ":" + std::to_string(lineno) + ": bad coordinate");
    }
    out.push_back(a);
  }
  return out;
}

Point canonical_left_eye(int side) { return {0.5 * (side - 1) - 0.5 * kEyeDistanceFrac * side, 0.5 * (side - 1)}; }
Point canonical_right_eye(int side) { return {0.5 * (side - 1) + 0.5 * kEyeDistanceFrac * side, 0.5 * (side - 1)}; }

namespace {

struct Similarity {
  double s, c, sn;  // scale, cos, sin
  Point from_mid, to_mid;

  Point forward(Point p) const {
    const Point d = p - from_mid;
    return to_mid + s * Point{c * d.x - sn * d.y, sn * d.x + c * d.y};
  }
  Point inverse(Point q) const {
    const Point d = q - to_mid;
    return from_mid + (1.0 / s) * Point{c * d.x + sn * d.y, -sn * d.x + c * d.y};
  }
};

Similarity alignment(const EyeAnnotation& ann, int out_size) {
  const Point d = ann.right - ann.left;
  const double len = norm(d);
  if (!(len > 0)) throw InvalidArgument("eye annotation for '" + ann.file + "' has coincident eyes");
  const Point L = canonical_left_eye(out_size), R = canonical_right_eye(out_size);
  Similarity t;
  t.s = norm(R - L) / len;
  // Rotation taking d onto +x.
  t.c = d.x / len;
  t.sn = -d.y / len;
  t.from_mid = 0.5 * (ann.left + ann.right);
  t.to_mid = 0.5 * (L + R);
  return t;
}

}  // namespace

Point align_point(const EyeAnnotation& ann, int out_size, Point p) { return alignment(ann, out_size).forward(p); }

RasterImage align_and_crop(const RasterImage& img, const EyeAnnotation& ann, int out_size) {
  if (out_size <= 0) throw InvalidArgument("align_and_crop: out_size must be positive");
  if (img.empty()) throw InvalidArgument("align_and_crop: empty image");
  for (Point e : {ann.left, ann.right})
    if (e.x < 0 || e.y < 0 || e.x > img.width() - 1 || e.y > img.height() - 1)
      throw InvalidArgument("eye annotation for '" + ann.file + "' lies outside the image");
  const Similarity t = alignment(ann, out_size);
  const int C = img.channels();
  std::vector<double> mean(C, 0.0);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < C; ++c) mean[c] += img.at(x, y, c);
  for (double& m : mean) m /= double(img.width()) * img.height();

  RasterImage out(out_size, out_size, C);
  for (int y = 0; y < out_size; ++y)
    for (int x = 0; x < out_size; ++x) {
      const Point p = t.inverse({double(x), double(y)});
      if (p.x < 0 || p.y < 0 || p.x > img.width() - 1 || p.y > img.height() - 1) {
        for (int c = 0; c < C; ++c) out.at(x, y, c) = static_cast<float>(mean[c]);
        continue;
      }
      const int x0 = static_cast<int>(std::floor(p.x)), y0 = static_cast<int>(std::floor(p.y));
      const int x1 = std::min(x0 + 1, img.width() - 1), y1 = std::min(y0 + 1, img.height() - 1);
      const double fx = p.x - x0, fy = p.y - y0;
      for (int c = 0; c < C; ++c) {
        const double v = (1 - fy) * ((1 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c)) +
                         fy * ((1 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c));
        out.at(x, y, c) = static_cast<float>(v);
      }
    }
  return out;
}

TrainingSample::TrainingSample(RasterImage target, RasterImage input, MaskSpec spec)
    : target_(std::move(target)), input_(std::move(input)), spec_(spec) {
  if (target_.channels() != 3) throw InvalidArgument("training sample target must have 3 channels");
  if (target_.width() != target_.height() || target_.width() <= 0)
    throw InvalidArgument("training sample target must be square");
  if (input_.channels() != channel::kCount)
    throw InvalidArgument("training sample input must have 9 channels, got " + std::to_string(input_.channels()));
  if (input_.width() != target_.width() || input_.height() != target_.height())
    throw InvalidArgument("training sample input and target sizes differ");
  for (int y = 0; y < side(); ++y)
    for (int x = 0; x < side(); ++x) {
      const float m = input_.at(x, y, channel::kMask);
      if (m != 0.0f && m != 1.0f) throw InvalidArgument("training sample mask channel must be 0 or 1");
      if (m == 1.0f)
        for (int c = 0; c < 3; ++c)
          if (input_.at(x, y, channel::kRgb + c) != 0.0f)
            throw InvalidArgument("training sample leaks image content inside the mask");
    }
}

BinaryMask TrainingSample::mask() const {
  BinaryMask m(side(), side());
  for (int y = 0; y < side(); ++y)
    for (int x = 0; x < side(); ++x) m.set(x, y, input_.at(x, y, channel::kMask) == 1.0f);
  return m;
}

bool TrainingSample::conditioning_restricted() const {
  for (int y = 0; y < side(); ++y)
    for (int x = 0; x < side(); ++x) {
      if (input_.at(x, y, channel::kMask) == 1.0f) continue;
      for (int c = channel::kSketch; c < channel::kMask; ++c)
        if (input_.at(x, y, c) != 0.0f) return false;
    }
  return true;
}

NoiseDist parse_noise_dist(const std::string& name) {
  if (name == "normal") return NoiseDist::Normal;
  if (name == "uniform") return NoiseDist::Uniform;
  if (name == "zero") return NoiseDist::Zero;
  throw InvalidArgument("unknown noise.dist '" + name + "' (expected normal, uniform or zero)");
}

std::string to_string(NoiseDist dist) {
  switch (dist) {
    case NoiseDist::Normal: return "normal";
    case NoiseDist::Uniform: return "uniform";
    case NoiseDist::Zero: return "zero";
  }
  return "normal";
}

DatasetConfig DatasetConfig::from_config(const Config& cfg) {
  DatasetConfig d;
  d.size = cfg.get_int("size", d.size);
  if (d.size < 32) throw InvalidArgument("size must be at least 32");
  d.mask = MaskParams::from_config(cfg);
  d.sketch = SketchConfig::from_config(cfg);
  d.strokes = StrokeParams::from_config(cfg);
  d.color_map.side = cfg.get_int("color.map_side", d.color_map.side);
  d.color_map.iterations = cfg.get_int("color.bilateral_iterations", d.color_map.iterations);
  if (d.color_map.side < 8) throw InvalidArgument("color.map_side must be at least 8");
  if (d.color_map.iterations < 1) throw InvalidArgument("color.bilateral_iterations must be at least 1");
  d.iris = cfg.get_bool("color.iris", d.iris);
  d.color_dropout = cfg.get_bool("color.dropout", d.color_dropout);
  d.full_frame = cfg.get_bool("data.full_frame", d.full_frame);
  d.noise = parse_noise_dist(cfg.get_string("noise.dist", to_string(d.noise)));
  return d;
}

void DatasetConfig::write_to(Config& cfg) const {
  cfg.set("size", std::to_string(size));
  mask.write_to(cfg);
  sketch.write_to(cfg);
  strokes.write_to(cfg);
  cfg.set("color.map_side", std::to_string(color_map.side));
  cfg.set("color.bilateral_iterations", std::to_string(color_map.iterations));
  cfg.set("color.iris", iris ? "true" : "false");
  cfg.set("color.dropout", color_dropout ? "true" : "false");
  cfg.set("data.full_frame", full_frame ? "true" : "false");
  cfg.set("noise.dist", to_string(noise));
}

SampleSource prepare_source(const RasterImage& img, const DatasetConfig& cfg, const LabelMap* labels) {
  if (img.width() != cfg.size || img.height() != cfg.size || img.channels() != 3)
    throw InvalidArgument("sample image must be " + std::to_string(cfg.size) + "x" + std::to_string(cfg.size) +
                          " RGB");
  SampleSource src;
  src.image = img;
  src.sketch = make_sketch(img, cfg.sketch);
  src.color_map = build_color_map(img, labels, cfg.color_map);
  if (cfg.iris) {
    for (Point eye : {canonical_left_eye(cfg.size), canonical_right_eye(cfg.size)}) {
      try {
        src.irises.push_back(locate_pupil(img, eye_box(eye, cfg.size, cfg.size)));
      } catch (const NoPupilError&) {
        // A flat eye region gets no iris hint.
      }
    }
  }
  return src;
}

void fill_noise(RasterImage& input, std::uint64_t seed, NoiseDist dist) {
  Rng rng(derive_seed(seed, {0x6e6f697365}));
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::uniform_real_distribution<float> unif(-1.0f, 1.0f);
  for (int y = 0; y < input.height(); ++y)
    for (int x = 0; x < input.width(); ++x) {
      float v = 0.0f;
      if (dist == NoiseDist::Normal) v = normal(rng);
      if (dist == NoiseDist::Uniform) v = unif(rng);
      input.at(x, y, channel::kNoise) = v;
    }
}

TrainingSample assemble_from(const SampleSource& src, std::uint64_t seed, const DatasetConfig& cfg) {
  const int S = cfg.size;
  if (src.image.width() != S) throw InvalidArgument("sample source does not match the configured size");
  const auto [spec, mask] = sample_mask(S, S, derive_seed(seed, {1}), cfg.mask);

  ColorLayer color = synth_strokes(src.color_map, derive_seed(seed, {2}), cfg.strokes, S, S);
  for (const IrisEstimate& iris : src.irises) color = draw_iris(color, iris);
  if (cfg.color_dropout) color = maybe_drop_color(color, derive_seed(seed, {3}));

  RasterImage input(S, S, channel::kCount);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const bool m = mask.get(x, y);
      const bool cond = m || cfg.full_frame;
      for (int c = 0; c < 3; ++c) input.at(x, y, channel::kRgb + c) = m ? 0.0f : src.image.at(x, y, c);
      input.at(x, y, channel::kSketch) = cond && src.sketch.get(x, y) ? 1.0f : 0.0f;
      for (int c = 0; c < 3; ++c) input.at(x, y, channel::kColor + c) = cond ? color.rgb.at(x, y, c) : 0.0f;
      input.at(x, y, channel::kMask) = m ? 1.0f : 0.0f;
    }
  fill_noise(input, derive_seed(seed, {4}), cfg.noise);
  TrainingSample sample(src.image, std::move(input), spec);
  if (!cfg.full_frame && !sample.conditioning_restricted())
    throw InvalidArgument("assembled sample has conditioning outside the mask");
  return sample;
}

TrainingSample assemble_sample(const RasterImage& img, std::uint64_t seed, const DatasetConfig& cfg) {
  return assemble_from(prepare_source(img, cfg), seed, cfg);
}

namespace {
constexpr char kShardMagic[] = "FSDS";
constexpr std::uint32_t kShardVersion = 1;
}  // namespace

std::vector<unsigned char> encode_shard(const std::vector<TrainingSample>& samples) {
  if (samples.empty()) throw InvalidArgument("write_shard needs at least one sample");
  const int S = samples.front().side();
  if (S > 65535) throw InvalidArgument("sample side does not fit the shard header");
  ByteWriter w;
  w.bytes(kShardMagic);
  w.u32(kShardVersion);
  w.u32(static_cast<std::uint32_t>(samples.size()));
  w.u16(static_cast<std::uint16_t>(S));
  for (const TrainingSample& s : samples) {
    if (s.side() != S) throw InvalidArgument("all samples in a shard must share one side");
    for (float v : s.target().data()) w.f32(v);
    for (float v : s.input().data()) w.f32(v);
    const MaskSpec& m = s.mask_spec();
    for (double v : {m.cx, m.cy, m.width, m.height, m.angle}) w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

std::vector<TrainingSample> decode_shard(std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  if (r.bytes(4, "magic") != kShardMagic) throw FormatError("bad shard magic", 0);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kShardVersion)
    throw FormatError("unsupported shard version " + std::to_string(version), version_at);
  const std::uint32_t count = r.u32("sample count");
  const std::size_t side_at = r.offset();
  const int S = r.u16("side");
  if (S == 0) throw FormatError("shard side is zero", side_at);
  const std::size_t per_sample = (std::size_t(S) * S * (3 + channel::kCount) + 5) * 4;
  // Check the whole payload up front so a truncated file yields no samples at all.
  if (r.remaining() < per_sample * count)
    throw FormatError("truncated shard: " + std::to_string(count) + " samples declared",
                      r.offset() + (r.remaining() / per_sample) * per_sample);
  std::vector<TrainingSample> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    RasterImage target(S, S, 3), input(S, S, channel::kCount);
    r.f32s(target.data(), "target");
    r.f32s(input.data(), "input");
    MaskSpec m;
    m.cx = r.f32("mask spec");
    m.cy = r.f32("mask spec");
    m.width = r.f32("mask spec");
    m.height = r.f32("mask spec");
    m.angle = r.f32("mask spec");
    try {
      out.emplace_back(std::move(target), std::move(input), m);
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("invalid sample: ") + e.what(), at);
    }
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after the last sample", r.offset());
  return out;
}

void write_shard(const std::vector<TrainingSample>& samples, const std::string& path) {
  const auto bytes = encode_shard(samples);
  write_binary_file_atomic(path, bytes);
}

std::vector<TrainingSample> read_shard(const std::string& path) { return decode_shard(read_binary_file(path)); }

std::vector<TrainingSample> read_shards(const std::vector<std::string>& paths) {
  std::vector<TrainingSample> all;
  for (const std::string& p : paths) {
    auto part = read_shard(p);
    if (!all.empty() && part.front().side() != all.front().side())
      throw InvalidArgument("shard " + p + " has a different sample side");
    for (auto& s : part) all.push_back(std::move(s));
  }
  return all;
}

Batch make_batch(const std::vector<TrainingSample>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InvalidArgument("empty batch");
  const std::int64_t N = static_cast<std::int64_t>(indices.size());
  const int S = samples.at(indices.front()).side();
  const std::int64_t plane = std::int64_t(S) * S;
  std::vector<float> in(N * channel::kCount * plane), tg(N * 3 * plane);
  Batch b;
  b.indices = indices;
  for (std::int64_t n = 0; n < N; ++n) {
    const TrainingSample& s = samples.at(indices[n]);
    if (s.side() != S) throw InvalidArgument("batch samples differ in size");
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const std::int64_t p = std::int64_t(y) * S + x;
        for (int c = 0; c < channel::kCount; ++c) in[(n * channel::kCount + c) * plane + p] = s.input().at(x, y, c);
        for (int c = 0; c < 3; ++c) tg[(n * 3 + c) * plane + p] = s.target().at(x, y, c);
      }
    b.masks.push_back(s.mask());
  }
  b.inputs = ad::Tensor<float>::from({N, channel::kCount, S, S}, std::move(in));
  b.targets = ad::Tensor<float>::from({N, 3, S, S}, std::move(tg));
  return b;
}

Loader::Loader(std::shared_ptr<const std::vector<TrainingSample>> samples, int batch, std::uint64_t seed,
               bool prefetch)
    : samples_(std::move(samples)), batch_(static_cast<std::size_t>(batch)), seed_(seed), prefetch_(prefetch) {
  if (batch < 1) throw InvalidArgument("batch must be at least 1");
  if (!samples_ || samples_->empty()) throw InvalidArgument("dataset is empty");
  if (samples_->size() < batch_) throw InvalidArgument("dataset is smaller than one batch");
}

Loader::~Loader() {
  if (pending_.valid()) pending_.wait();
}

std::vector<std::size_t> Loader::indices_for(std::uint64_t step) const {
  const std::uint64_t epoch = step / batches_per_epoch(), k = step % batches_per_epoch();
  std::vector<std::size_t> perm(samples_->size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed_, {0x65706f6368, epoch}));
  std::shuffle(perm.begin(), perm.end(), rng);
  return {perm.begin() + k * batch_, perm.begin() + (k + 1) * batch_};
}

void Loader::seek(std::uint64_t step) {
  if (pending_.valid()) pending_.wait();
  pending_ = {};
  step_ = step;
}

Batch Loader::next() {
  Batch b;
  if (pending_.valid()) {
    b = pending_.get();
  } else {
    b = make_batch(*samples_, indices_for(step_));
  }
  ++step_;
  if (prefetch_) {
    auto samples = samples_;
    auto idx = indices_for(step_);
    pending_ = std::async(std::launch::async, [samples, idx] { return make_batch(*samples, idx); });
  }
  return b;
}

}  // namespace sketchfill
