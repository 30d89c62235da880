// Command line front end: forge, train, edit, copy-paste, gradcheck, serve, synth-faces.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "sketchfill/api.hpp"
#include "sketchfill/error.hpp"
#include "sketchfill/gradcheck.hpp"
#include "sketchfill/rng.hpp"
#include "sketchfill/server.hpp"
#include "sketchfill/synth.hpp"
#include "sketchfill/training.hpp"

using namespace sketchfill;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kFail = 1, kIo = 2, kFormat = 3, kShape = 4, kNumeric = 5, kUsage = 64 };

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_png(const std::string& bytes) { return bytes.size() >= 8 && bytes.compare(0, 8, "\x89PNG\r\n\x1a\n") == 0; }

std::span<const unsigned char> as_bytes(const std::string& s) {
  return {reinterpret_cast<const unsigned char*>(s.data()), s.size()};
}

RasterImage to_rgb(RasterImage img) {
  if (img.channels() == 3) return img;
  RasterImage out(img.width(), img.height(), 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y);
  return out;
}

Config load_config(const std::string& path) { return path.empty() ? Config{} : Config::load(path); }

// Sketch file: a PNG (bright pixels are strokes) or a JSON stroke document.
void add_sketch_file(const std::string& path, EditRequest& req) {
  const std::string bytes = slurp(path);
  if (is_png(bytes))
    req.sketch_layer = image_to_mask(to_grayscale(decode_png(as_bytes(bytes))));
  else
    api::add_strokes(bytes, req);
}

// Color file: an RGB PNG where every non-black pixel is painted, or a JSON stroke document.
void add_color_file(const std::string& path, EditRequest& req) {
  const std::string bytes = slurp(path);
  if (!is_png(bytes)) {
    api::add_strokes(bytes, req);
    return;
  }
  const RasterImage rgb = to_rgb(decode_png(as_bytes(bytes)));
  ColorLayer layer = ColorLayer::empty(rgb.width(), rgb.height());
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x) {
      const bool painted = rgb.at(x, y, 0) > 0 || rgb.at(x, y, 1) > 0 || rgb.at(x, y, 2) > 0;
      if (!painted) continue;
      layer.valid.set(x, y);
      for (int c = 0; c < 3; ++c) layer.rgb.at(x, y, c) = rgb.at(x, y, c);
    }
  req.color_layer = std::move(layer);
}

// Runs fn(i) for i in [0, n) on `jobs` threads; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

int run_forge(const std::string& input, const std::string& annotations, const std::string& config_path,
              const std::vector<std::string>& outs) {
  const Config config = load_config(config_path);
  const DatasetConfig cfg = DatasetConfig::from_config(config);
  const auto seed = static_cast<std::uint64_t>(std::stoull(config.get_string("forge.seed", "1")));
  const int per_image = config.get_int("forge.samples_per_image", 1);
  if (per_image < 1) throw InvalidArgument("forge.samples_per_image must be >= 1");
  const auto anns = read_annotations(annotations);
  if (anns.size() < outs.size())
    throw InvalidArgument(std::to_string(anns.size()) + " images cannot fill " + std::to_string(outs.size()) + " shards");

  std::vector<std::vector<TrainingSample>> per(anns.size());
  std::atomic<std::size_t> done{0};
  parallel_for(anns.size(), config.get_int("forge.jobs", 0), [&](std::size_t i) {
    const RasterImage aligned = align_and_crop(to_rgb(read_png((fs::path(input) / anns[i].file).string())), anns[i], cfg.size);
    const SampleSource src = prepare_source(aligned, cfg);
    for (int k = 0; k < per_image; ++k)
      per[i].push_back(assemble_from(src, derive_seed(seed, {i, static_cast<std::uint64_t>(k)}), cfg));
    const std::size_t d = ++done;
    if (d % 25 == 0 || d == anns.size()) std::fprintf(stderr, "forged %zu/%zu images\n", d, anns.size());
  });

  const std::size_t chunk = (anns.size() + outs.size() - 1) / outs.size();
  for (std::size_t s = 0; s < outs.size(); ++s) {
    std::vector<TrainingSample> shard;
    for (std::size_t i = s * chunk; i < std::min(anns.size(), (s + 1) * chunk); ++i)
      for (auto& sample : per[i]) shard.push_back(std::move(sample));
    if (shard.empty()) throw InvalidArgument("shard " + outs[s] + " would be empty");
    write_shard(shard, outs[s]);
    std::printf("%s: %zu samples\n", outs[s].c_str(), shard.size());
  }
  return kOk;
}

int run_train(const std::vector<std::string>& shards, const std::string& config_path, std::int64_t steps,
              const std::string& out, const std::string& resume, const std::vector<std::string>& heldout_shards,
              std::int64_t eval_every, std::int64_t checkpoint_every) {
  const TrainConfig cfg = TrainConfig::from_config(load_config(config_path));
  auto samples = std::make_shared<const std::vector<TrainingSample>>(read_shards(shards));
  std::vector<TrainingSample> heldout;
  if (!heldout_shards.empty()) heldout = read_shards(heldout_shards);
  TrainOptions opts;
  opts.steps = steps;
  opts.out_dir = out;
  opts.resume_from = resume;
  opts.heldout = heldout.empty() ? nullptr : &heldout;
  opts.eval_every = eval_every;
  opts.checkpoint_every = checkpoint_every;
  opts.on_step = [](const StepMetrics& m) {
    if (m.step % 100 == 0)
      std::fprintf(stderr, "step %lld d %.4f g %.4f rec %.4f\n", static_cast<long long>(m.step), m.d_loss, m.g_loss,
                   m.rec);
  };
  const TrainResult r = train(cfg, samples, opts);
  std::printf("step %lld, checkpoint %s\n", static_cast<long long>(r.steps), r.latest_checkpoint.c_str());
  if (!r.heldout_l1.empty())
    std::printf("held-out masked L1 %.6f at step %lld (step-%lld value %.6f)\n", r.heldout_l1.back().second,
                static_cast<long long>(r.heldout_l1.back().first), static_cast<long long>(r.heldout_l1.front().first),
                r.heldout_l1.front().second);
  return kOk;
}

int run_edit(const std::string& image, const std::string& mask, const std::string& sketch, const std::string& color,
             std::uint64_t seed, const std::string& ckpt, const std::string& out) {
  const Editor editor = Editor::from_checkpoint(ckpt);
  EditRequest req;
  req.image = to_rgb(read_png(image));
  req.mask = read_mask(mask);
  req.noise_seed = seed;
  if (!sketch.empty()) add_sketch_file(sketch, req);
  if (!color.empty()) add_color_file(color, req);
  write_png(editor.edit(req), out);
  return kOk;
}

int run_copy_paste(const std::string& source, const std::string& source_mask, const std::string& target,
                   const std::string& offset, const std::string& target_mask, std::uint64_t seed,
                   const std::string& ckpt, const std::string& out) {
  CopyPasteRequest req;
  int dx = 0, dy = 0;
  char comma = 0, extra = 0;
  std::istringstream in(offset);
  if (!(in >> dx >> comma >> dy) || comma != ',' || (in >> extra))
    throw InvalidArgument("--offset must look like X,Y, got '" + offset + "'");
  const Editor editor = Editor::from_checkpoint(ckpt);
  req.source = to_rgb(read_png(source));
  req.source_mask = read_mask(source_mask);
  req.target = to_rgb(read_png(target));
  req.offset_x = dx;
  req.offset_y = dy;
  if (!target_mask.empty()) req.target_mask = read_mask(target_mask);
  req.noise_seed = seed;
  write_png(editor.copy_paste(req), out);
  return kOk;
}

int run_gradcheck(std::uint64_t seed) {
  bool all = true;
  for (const auto& r : ad::run_gradcheck_suite(seed)) {
    std::printf("%-40s %.3e < %.0e  %s\n", r.name.c_str(), r.max_rel_error, r.tolerance, r.passed() ? "PASS" : "FAIL");
    all = all && r.passed();
  }
  std::printf("%s\n", all ? "all gradient checks passed" : "gradient checks FAILED");
  return all ? kOk : kFail;
}

int run_serve(const std::string& ckpt, const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("--addr must look like HOST:PORT");
  const std::string host = addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw InvalidArgument("bad port in --addr " + addr);
  }
  auto editor = std::make_shared<const Editor>(Editor::from_checkpoint(ckpt));
  EditService service(editor);
  const int bound = service.bind(host, port);
  std::printf("serving model %s on %s:%d\n", editor->model_id().c_str(), host.c_str(), bound);
  std::fflush(stdout);
  service.run();
  return kOk;
}

int run_synth_faces(const std::string& out, int count, int size, std::uint64_t seed, bool jitter) {
  if (count < 1) throw InvalidArgument("--count must be >= 1");
  fs::create_directories(out);
  std::ofstream csv(fs::path(out) / "annotations.csv");
  if (!csv) throw IoError("cannot write annotations in " + out);
  csv << "file,lx,ly,rx,ry\n" << std::setprecision(9);
  for (int i = 0; i < count; ++i) {
    const SynthFace face = synth_face(size, derive_seed(seed, {static_cast<std::uint64_t>(i)}), jitter);
    char name[32];
    std::snprintf(name, sizeof(name), "face_%05d.png", i);
    write_png(face.image, (fs::path(out) / name).string());
    csv << name << "," << face.left_eye.x << "," << face.left_eye.y << "," << face.right_eye.x << ","
        << face.right_eye.y << "\n";
  }
  std::printf("wrote %d faces to %s\n", count, out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketch and color conditioned image completion"};
  app.require_subcommand(1);

  std::string input, annotations, config_path, out, resume, image, mask, sketch, color, ckpt, source, source_mask,
      target, offset, target_mask, addr = "127.0.0.1:8080";
  std::vector<std::string> outs, shards, heldout;
  std::int64_t steps = 0, eval_every = 100, checkpoint_every = 0;
  std::uint64_t seed = 0, gradcheck_seed = 1234, synth_seed = 1;
  int count = 200, size = 128;
  bool jitter = false;

  auto* forge = app.add_subcommand("forge", "Align, crop and forge training samples into shards");
  forge->add_option("--input", input, "Image directory")->required();
  forge->add_option("--annotations", annotations, "CSV file,lx,ly,rx,ry")->required();
  forge->add_option("--config", config_path, "Config file");
  forge->add_option("--out", outs, "Output shard(s)")->required();

  auto* train_cmd = app.add_subcommand("train", "Train the completion network");
  train_cmd->add_option("--shards", shards, "Training shards")->required();
  train_cmd->add_option("--config", config_path, "Config file");
  train_cmd->add_option("--steps", steps, "Steps to run")->required()->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--out", out, "Checkpoint directory")->required();
  train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
  train_cmd->add_option("--heldout", heldout, "Held-out shards for masked L1");
  train_cmd->add_option("--eval-every", eval_every, "Held-out evaluation interval");
  train_cmd->add_option("--checkpoint-every", checkpoint_every, "Checkpoint interval (0: start and end only)");

  auto* edit = app.add_subcommand("edit", "Complete a masked region from strokes");
  edit->add_option("--image", image, "RGB image")->required();
  edit->add_option("--mask", mask, "Mask PNG")->required();
  edit->add_option("--sketch", sketch, "Sketch PNG or JSON strokes");
  edit->add_option("--color", color, "Color PNG or JSON strokes");
  edit->add_option("--seed", seed, "Noise seed");
  edit->add_option("--ckpt", ckpt, "Checkpoint")->required();
  edit->add_option("--out", out, "Output PNG")->required();

  auto* paste = app.add_subcommand("copy-paste", "Paste the sketch of a source region into a target");
  paste->add_option("--source", source, "Source image")->required();
  paste->add_option("--source-mask", source_mask, "Source region mask")->required();
  paste->add_option("--target", target, "Target image")->required();
  paste->add_option("--offset", offset, "X,Y placement offset")->required();
  paste->add_option("--target-mask", target_mask, "Extra target area to complete");
  paste->add_option("--seed", seed, "Noise seed");
  paste->add_option("--ckpt", ckpt, "Checkpoint")->required();
  paste->add_option("--out", out, "Output PNG")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of every autodiff primitive");
  gradcheck->add_option("--seed", gradcheck_seed, "Seed for the random test inputs");

  auto* serve = app.add_subcommand("serve", "Serve the /v1 edit API");
  serve->add_option("--ckpt", ckpt, "Checkpoint")->required();
  serve->add_option("--addr", addr, "HOST:PORT");

  auto* synth = app.add_subcommand("synth-faces", "Write synthetic face images with eye annotations");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--count", count, "Number of faces");
  synth->add_option("--size", size, "Image side")->check(CLI::Range(32, 4096));
  synth->add_option("--seed", synth_seed, "Seed");
  synth->add_flag("--jitter", jitter, "Random pose per face");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  const auto fail = [&](const char* kind, const std::string& what, int code) {
    std::fprintf(stderr, "sketchfill %s: %s error: %s\n", cmd.c_str(), kind, what.c_str());
    return code;
  };
  try {
    if (*forge) return run_forge(input, annotations, config_path, outs);
    if (*train_cmd)
      return run_train(shards, config_path, steps, out, resume, heldout, eval_every, checkpoint_every);
    if (*edit) return run_edit(image, mask, sketch, color, seed, ckpt, out);
    if (*paste) return run_copy_paste(source, source_mask, target, offset, target_mask, seed, ckpt, out);
    if (*gradcheck) return run_gradcheck(gradcheck_seed);
    if (*serve) return run_serve(ckpt, addr);
    if (*synth) return run_synth_faces(out, count, size, synth_seed, jitter);
  } catch (const IoError& e) {
    return fail("io", e.what(), kIo);
  } catch (const FormatError& e) {
    return fail("format", e.what(), kFormat);
  } catch (const PayloadError& e) {
    return fail("format", e.field() + ": " + e.what(), kFormat);
  } catch (const RequestError& e) {
    return fail("shape", e.field() + ": " + e.what(), kShape);
  } catch (const InvalidArgument& e) {
    return fail("shape", e.what(), kShape);
  } catch (const NumericError& e) {
    return fail("numeric", e.what(), kNumeric);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kFail);
  }
  return kUsage;
}
