// deblur-forge: warp/PSF estimation, blur synthesis, tiled deblurring and
// OCR scoring from the command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid usage.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "deblur_forge/demo.hpp"
#include "deblur_forge/eval.hpp"
#include "deblur_forge/image_io.hpp"
#include "deblur_forge/pipeline.hpp"
#include "deblur_forge/psf.hpp"
#include "deblur_forge/warp.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dforge;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

template <typename T, typename F>
T read_text_file(const fs::path& path, F&& parse) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

template <typename F>
void write_text_file(const fs::path& path, F&& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  body(out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

bool is_image_path(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_path(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

json report_json(const OptimReport& r) {
  return {{"iterations", r.iterations},
          {"evaluations", r.evaluations},
          {"final_loss", r.final_loss},
          {"grad_norm", r.grad_norm},
          {"converged", r.converged},
          {"stop_reason", to_string(r.reason)}};
}

void emit(bool as_json, const json& payload, const std::string& human) {
  if (as_json) {
    std::cout << payload.dump(2) << '\n';
  } else {
    std::cout << human << '\n';
  }
}

BitDepth parse_depth(int bits) {
  require(bits == 8 || bits == 16, "--bit-depth must be 8 or 16");
  return bits == 16 ? BitDepth::k16 : BitDepth::k8;
}

// ---- subcommands --------------------------------------------------------------

struct WarpArgs {
  std::string sharp, blurry, out;
  std::size_t degree = 3;
  std::size_t max_iters = 500;
};

int cmd_estimate_warp(const WarpArgs& a, bool as_json) {
  require(a.degree >= 1 && a.degree <= 8, "--degree must be in 1..8");
  const Image sharp = load_image(a.sharp);
  const Image blurry = load_image(a.blurry);
  require(sharp.same_shape(blurry), "sharp and blurry images must have the same size");
  require(sharp.height() >= 4 && sharp.width() >= 4, "images must be at least 4x4");
  LbfgsConfig cfg;
  cfg.max_iters = a.max_iters;
  const WarpFit fit = fit_warp(blurry, sharp, a.degree, std::nullopt, cfg);
  write_text_file(a.out, [&](std::ostream& o) { write_warp(o, fit.warp); });
  const double initial = fit.report.loss_history.front();
  emit(as_json,
       {{"command", "estimate-warp"}, {"out", a.out}, {"degree", a.degree},
        {"initial_loss", initial}, {"optimizer", report_json(fit.report)}},
       "estimate-warp: degree " + std::to_string(a.degree) + ", loss " + std::to_string(initial) +
           " -> " + std::to_string(fit.report.final_loss) + " in " +
           std::to_string(fit.report.iterations) + " iterations; wrote " + a.out);
  return 0;
}

struct PsfArgs {
  std::string sharp, blurry, warp, out;
  std::size_t size = 31;
  double lambda = 1e-3;
  bool refine_warp = false;
  std::size_t max_iters = 500;
  std::string warp_out;
};

int cmd_estimate_psf(const PsfArgs& a, bool as_json) {
  require(a.size % 2 == 1, "--size must be odd");
  require(a.lambda >= 0.0, "--lambda must be >= 0");
  const Image sharp = load_image(a.sharp);
  const Image blurry = load_image(a.blurry);
  require(sharp.same_shape(blurry), "sharp and blurry images must have the same size");
  require(a.size <= std::min(sharp.height(), sharp.width()), "--size exceeds the image size");
  const WarpMatrix warp = a.warp.empty() ? WarpMatrix::identity(3)
                                         : read_text_file<WarpMatrix>(a.warp, read_warp);
  PsfFitOptions opts;
  opts.size = a.size;
  opts.lambda = a.lambda;
  opts.refine_warp = a.refine_warp;
  opts.psf_config.max_iters = a.max_iters;
  const PsfFit fit = fit_psf(sharp, blurry, warp, opts);
  write_text_file(a.out, [&](std::ostream& o) { write_psf(o, fit.model); });
  if (!a.warp_out.empty()) write_text_file(a.warp_out, [&](std::ostream& o) { write_warp(o, fit.warp); });
  const PsfShapeReport shape = psf_shape_report(fit.model.kernel);
  emit(as_json,
       {{"command", "estimate-psf"}, {"out", a.out}, {"size", a.size}, {"lambda", a.lambda},
        {"tau", fit.model.tau}, {"kernel_sum", fit.model.kernel.sum()},
        {"stage1_loss", fit.stage1_loss}, {"final_loss", fit.final_loss},
        {"shape",
         {{"support_radius", shape.support_radius},
          {"mass_center", {shape.mass_center_y, shape.mass_center_x}},
          {"negativity_fraction", shape.negativity_fraction}}},
        {"optimizer", report_json(fit.report)}},
       "estimate-psf: " + std::to_string(a.size) + "x" + std::to_string(a.size) + " kernel, tau " +
           std::to_string(fit.model.tau) + ", loss " + std::to_string(fit.final_loss) + "; wrote " +
           a.out);
  return 0;
}

struct SynthArgs {
  std::string sharp_dir, psf, out_dir;
};

int cmd_synth(const SynthArgs& a, bool as_json) {
  const PsfModel model = read_text_file<PsfModel>(a.psf, read_psf);
  const auto inputs = list_images(a.sharp_dir);
  const fs::path out(a.out_dir);
  json items = json::array();
  for (const auto& path : inputs) {
    const Image sharp = load_image(path);
    if (sharp.height() < model.kernel.size() || sharp.width() < model.kernel.size()) {
      throw std::runtime_error(path.string() + " is smaller than the PSF");
    }
    const fs::path name = path.filename().replace_extension(".png");
    save_image(crop_to_valid(sharp, model.kernel.size()), (fs::create_directories(out / "sharp"), out / "sharp" / name));
    save_image(synth_blur(sharp, model), (fs::create_directories(out / "blurry"), out / "blurry" / name));
    items.push_back(name.string());
  }
  emit(as_json, {{"command", "synth"}, {"out_dir", a.out_dir}, {"images", items}},
       "synth: wrote " + std::to_string(inputs.size()) + " pairs to " + a.out_dir);
  return 0;
}

struct DatasetArgs {
  std::string pairs, naturals_dir, psf, out_dir;
  long long train_count = -1;
  std::size_t patches = 0;
  std::size_t patch_size = 320;
  double noise_sigma = 3e-2;
  std::uint64_t seed = 0;
};

int cmd_dataset(const DatasetArgs& a, bool as_json) {
  require(a.noise_sigma >= 0.0, "--noise-sigma must be >= 0");
  const PsfModel model = read_text_file<PsfModel>(a.psf, read_psf);
  const fs::path manifest_path(a.pairs);
  const json manifest = read_text_file<json>(manifest_path, [](std::istream& in) { return json::parse(in); });
  if (!manifest.is_array()) throw std::runtime_error("manifest must be a JSON list");
  const fs::path base = manifest_path.parent_path();
  auto resolve = [&](const json& entry, const char* key) {
    if (!entry.contains(key) || !entry[key].is_string()) {
      throw std::runtime_error(std::string("manifest entry lacks string field '") + key + "'");
    }
    const fs::path p(entry[key].get<std::string>());
    return p.is_absolute() ? p : base / p;
  };
  std::vector<MeasuredPair> pairs;
  for (const auto& entry : manifest) {
    pairs.push_back({load_image(resolve(entry, "sharp")), load_image(resolve(entry, "blurry")),
                     read_text_file<WarpMatrix>(resolve(entry, "warp"), read_warp)});
  }
  std::vector<Image> naturals;
  if (!a.naturals_dir.empty()) {
    for (const auto& p : list_images(a.naturals_dir)) naturals.push_back(load_image(p));
  }
  require(!pairs.empty(), "manifest lists no pairs");
  const std::size_t train_count =
      a.train_count < 0 ? default_train_count(pairs.size()) : static_cast<std::size_t>(a.train_count);
  require(train_count <= pairs.size(), "--train-count exceeds the number of pairs");
  const Dataset ds = make_dataset(pairs, naturals, model, train_count);

  const fs::path out(a.out_dir);
  json index = {{"train", json::array()}, {"test", json::array()}, {"patches", json::array()}};
  auto write_split = [&](const std::vector<AlignedPair>& split, const std::string& name) {
    fs::create_directories(out / name);
    for (std::size_t k = 0; k < split.size(); ++k) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "%04zu", k);
      const fs::path s = fs::path(name) / (std::string(stem) + "_sharp.png");
      const fs::path b = fs::path(name) / (std::string(stem) + "_blurry.png");
      save_image(split[k].sharp, out / s);
      save_image(split[k].blurry, out / b);
      index[name].push_back({{"sharp", s.string()}, {"blurry", b.string()},
                             {"source", split[k].source == PairSource::measured ? "measured" : "synthetic"}});
    }
  };
  write_split(ds.train, "train");
  write_split(ds.test, "test");
  if (a.patches > 0) {
    fs::create_directories(out / "patches");
    for (std::size_t k = 0; k < ds.train.size(); ++k) {
      PatchSampling ps;
      ps.count = a.patches;
      ps.patch = a.patch_size;
      ps.noise_sigma = a.noise_sigma;
      ps.seed = a.seed + k;
      const auto patches = sample_patches(ds.train[k], ps);
      for (std::size_t j = 0; j < patches.size(); ++j) {
        char stem[48];
        std::snprintf(stem, sizeof stem, "%04zu_%04zu", k, j);
        const fs::path s = fs::path("patches") / (std::string(stem) + "_sharp.png");
        const fs::path b = fs::path("patches") / (std::string(stem) + "_blurry.png");
        save_image(patches[j].sharp_patch, out / s);
        save_image(patches[j].blurry_patch, out / b);
        index["patches"].push_back({{"sharp", s.string()}, {"blurry", b.string()}});
      }
    }
  }
  write_text_file(out / "index.json", [&](std::ostream& o) { o << index.dump(2) << '\n'; });
  emit(as_json,
       {{"command", "dataset"}, {"out_dir", a.out_dir}, {"train", ds.train.size()},
        {"test", ds.test.size()}, {"patches", index["patches"].size()}},
       "dataset: " + std::to_string(ds.train.size()) + " train, " + std::to_string(ds.test.size()) +
           " test pairs in " + a.out_dir);
  return 0;
}

struct DeblurArgs {
  std::string input, psf, out;
  std::string backend = "wiener";
  double epsilon = 1e-4;
  std::size_t iterations = 30;
  std::size_t core = 640;
  std::size_t overlap = 160;
  std::string reassembly = "blend";
  int bit_depth = 8;
};

int cmd_deblur(const DeblurArgs& a, std::size_t threads, bool as_json) {
  DeblurBackend backend;
  TilingOptions tiling;
  try {
    backend.kind = parse_backend(a.backend);
    tiling.reassembly = parse_reassembly(a.reassembly);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  backend.epsilon = a.epsilon;
  backend.iterations = a.iterations;
  require(a.core >= 1, "--core must be >= 1");
  require(a.overlap < a.core, "--overlap must be smaller than --core");
  const BitDepth depth = parse_depth(a.bit_depth);
  try {
    backend.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (backend.kind != BackendKind::identity) {
    require(!a.psf.empty(), "--psf is required for the " + a.backend + " backend");
    backend.psf = read_text_file<PsfModel>(a.psf, read_psf);
  }
  tiling.core = a.core;
  tiling.overlap = a.overlap;
  tiling.threads = threads;
  const Image input = load_image(a.input);
  const Image out = deblur_tiled(input, backend, tiling);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  save_image(out, a.out, depth);
  const TileLayout layout = plan_tiles(input.height(), input.width(), a.core, a.overlap);
  emit(as_json,
       {{"command", "deblur"}, {"out", a.out}, {"backend", to_string(backend.kind)},
        {"reassembly", to_string(tiling.reassembly)}, {"tiles", layout.origins.size()},
        {"height", input.height()}, {"width", input.width()}},
       "deblur: " + std::to_string(layout.origins.size()) + " tiles, " + a.backend + "/" +
           a.reassembly + "; wrote " + a.out);
  return 0;
}

struct ScoreArgs {
  std::string image, truth, batch, ocr_cmd;
  double timeout_s = 60.0;
};

json score_one(const fs::path& image, const fs::path& truth_path, const std::optional<std::string>& cmd,
               double timeout_s) {
  const std::string truth = read_text_file<std::string>(truth_path, [](std::istream& in) {
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  });
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
  const OcrResult ocr = run_external_ocr(image, cmd, timeout);
  if (!ocr.available) return {{"image", image.string()}, {"status", "OCR unavailable"}};
  const OcrScore s = ocr_score(truth, ocr.text);
  return {{"image", image.string()}, {"status", "ok"}, {"recognized", ocr.text},
          {"distance", s.distance}, {"gt_len", s.gt_len}, {"ocr_len", s.ocr_len},
          {"score", s.score}};
}

int cmd_score(const ScoreArgs& a, bool as_json) {
  require(a.timeout_s > 0.0, "--timeout must be > 0");
  const std::optional<std::string> cmd =
      a.ocr_cmd.empty() ? std::nullopt : std::optional<std::string>(a.ocr_cmd);
  if (a.batch.empty()) {
    require(!a.image.empty() && !a.truth.empty(), "--image and --truth are required (or --batch)");
    const json r = score_one(a.image, a.truth, cmd, a.timeout_s);
    std::string human = "score: " + r["status"].get<std::string>();
    if (r["status"] == "ok") human += ", " + std::to_string(r["score"].get<double>());
    emit(as_json, r, human);
    return 0;
  }
  const fs::path manifest_path(a.batch);
  const json manifest = read_text_file<json>(manifest_path, [](std::istream& in) { return json::parse(in); });
  if (!manifest.is_array()) throw std::runtime_error("batch manifest must be a JSON list");
  const fs::path base = manifest_path.parent_path();
  auto resolve = [&](const json& e, const char* key) {
    const fs::path p(e.at(key).get<std::string>());
    return p.is_absolute() ? p : base / p;
  };
  json per_image = json::array();
  double total = 0.0;
  std::size_t scored = 0;
  for (const auto& e : manifest) {
    json r = score_one(resolve(e, "image"), resolve(e, "truth"), cmd, a.timeout_s);
    if (r["status"] == "ok") {
      total += r["score"].get<double>();
      ++scored;
    }
    per_image.push_back(std::move(r));
  }
  json report = {{"per_image", per_image}, {"mean_score", scored ? json(total / static_cast<double>(scored)) : json(nullptr)}};
  if (scored == 0) report["status"] = "OCR unavailable";
  std::cout << report.dump(2) << '\n';
  return 0;
}

struct DemoArgs {
  std::uint64_t seed = 42;
  std::string out_dir;
  std::size_t size = 240;
};

int cmd_demo(const DemoArgs& a, std::size_t threads, bool as_json) {
  require(a.size >= 64, "--size must be >= 64");
  DemoOptions opts;
  opts.seed = a.seed;
  opts.size = a.size;
  opts.threads = threads;
  const DemoMetrics m = run_demo(opts, fs::path(a.out_dir));
  if (as_json) {
    std::cout << demo_metrics_json(m, a.seed) << '\n';
  } else {
    std::printf(
        "demo: warp grid error %.4f px, kernel relative error %.4f, PSNR %.2f -> %.2f dB: %s\n",
        m.warp_grid_error, m.kernel_rel_error, m.psnr_blurry, m.psnr_deblurred,
        m.passed ? "PASS" : "FAIL");
  }
  return m.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deblur-forge: forward-model estimation and tiled deblurring"};
  app.require_subcommand(1);
  app.fallthrough();
  bool as_json = false;
  std::size_t threads = 1;
  app.add_flag("--json", as_json, "Machine-readable JSON on stdout");
  app.add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);

  WarpArgs warp;
  auto* w = app.add_subcommand("estimate-warp", "Fit the polynomial warp aligning blurry to sharp");
  w->add_option("--sharp", warp.sharp, "Sharp image")->required()->check(CLI::ExistingFile);
  w->add_option("--blurry", warp.blurry, "Blurry image")->required()->check(CLI::ExistingFile);
  w->add_option("--degree", warp.degree, "Polynomial degree")->capture_default_str();
  w->add_option("--max-iters", warp.max_iters, "L-BFGS iteration cap")->capture_default_str();
  w->add_option("--out", warp.out, "Warp matrix output file")->required();

  PsfArgs psf;
  auto* p = app.add_subcommand("estimate-psf", "Fit PSF and brightness offset");
  p->add_option("--sharp", psf.sharp, "Sharp image")->required()->check(CLI::ExistingFile);
  p->add_option("--blurry", psf.blurry, "Blurry image")->required()->check(CLI::ExistingFile);
  p->add_option("--warp", psf.warp, "Warp matrix file (identity if omitted)")->check(CLI::ExistingFile);
  p->add_option("--size", psf.size, "PSF side length (odd)")->capture_default_str();
  p->add_option("--lambda", psf.lambda, "L1 weight")->capture_default_str();
  p->add_flag("--refine-warp", psf.refine_warp, "Alternate warp and PSF refits");
  p->add_option("--max-iters", psf.max_iters, "L-BFGS iteration cap")->capture_default_str();
  p->add_option("--warp-out", psf.warp_out, "Write the refined warp here");
  p->add_option("--out", psf.out, "PSF output file")->required();

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Blur a directory of sharp images with a PSF");
  s->add_option("--sharp-dir", synth.sharp_dir, "Directory of sharp images")->required()->check(CLI::ExistingDirectory);
  s->add_option("--psf", synth.psf, "PSF file")->required()->check(CLI::ExistingFile);
  s->add_option("--out-dir", synth.out_dir, "Output directory")->required();

  DatasetArgs ds;
  auto* d = app.add_subcommand("dataset", "Build aligned train/test pairs and optional patches");
  d->add_option("--pairs", ds.pairs, "JSON manifest of {sharp, blurry, warp}")->required()->check(CLI::ExistingFile);
  d->add_option("--naturals-dir", ds.naturals_dir, "Sharp natural images to synthesise")->check(CLI::ExistingDirectory);
  d->add_option("--psf", ds.psf, "PSF file")->required()->check(CLI::ExistingFile);
  d->add_option("--out-dir", ds.out_dir, "Output directory")->required();
  d->add_option("--train-count", ds.train_count, "Measured pairs in train (default 90%)");
  d->add_option("--patches", ds.patches, "Random patches per train pair")->capture_default_str();
  d->add_option("--patch-size", ds.patch_size, "Patch side")->capture_default_str();
  d->add_option("--noise-sigma", ds.noise_sigma, "Noise added to blurry patches")->capture_default_str();
  d->add_option("--seed", ds.seed, "Patch sampling seed")->capture_default_str();

  DeblurArgs db;
  auto* b = app.add_subcommand("deblur", "Tiled non-blind deblurring");
  b->add_option("--input", db.input, "Blurry image")->required()->check(CLI::ExistingFile);
  b->add_option("--psf", db.psf, "PSF file")->check(CLI::ExistingFile);
  b->add_option("--backend", db.backend, "identity | wiener | rl")->capture_default_str();
  b->add_option("--epsilon", db.epsilon, "Wiener spectral floor")->capture_default_str();
  b->add_option("--iterations", db.iterations, "Richardson-Lucy iterations")->capture_default_str();
  b->add_option("--core", db.core, "Tile core size")->capture_default_str();
  b->add_option("--overlap", db.overlap, "Tile overlap per side")->capture_default_str();
  b->add_option("--reassembly", db.reassembly, "none | crop | blend")->capture_default_str();
  b->add_option("--bit-depth", db.bit_depth, "Output PNG/PGM bit depth (8 or 16)")->capture_default_str();
  b->add_option("--out", db.out, "Output image")->required();

  ScoreArgs sc;
  auto* o = app.add_subcommand("score", "OCR score against ground-truth text");
  o->add_option("--image", sc.image, "Image to recognise")->check(CLI::ExistingFile);
  o->add_option("--truth", sc.truth, "Ground-truth text file")->check(CLI::ExistingFile);
  o->add_option("--batch", sc.batch, "JSON list of {image, truth}")->check(CLI::ExistingFile);
  o->add_option("--ocr-cmd", sc.ocr_cmd, std::string("OCR command with {input}; default $") + kOcrCommandEnv);
  o->add_option("--timeout", sc.timeout_s, "OCR timeout in seconds")->capture_default_str();

  DemoArgs demo;
  auto* m = app.add_subcommand("demo", "Self-contained synthetic end-to-end run");
  m->add_option("--seed", demo.seed, "Random seed")->capture_default_str();
  m->add_option("--out-dir", demo.out_dir, "Output directory")->required();
  m->add_option("--size", demo.size, "Image side length")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*w) return cmd_estimate_warp(warp, as_json);
    if (*p) return cmd_estimate_psf(psf, as_json);
    if (*s) return cmd_synth(synth, as_json);
    if (*d) return cmd_dataset(ds, as_json);
    if (*b) return cmd_deblur(db, threads, as_json);
    if (*o) return cmd_score(sc, as_json);
    if (*m) return cmd_demo(demo, threads, as_json);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
