#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "uvforge/cli.hpp"

#include "helpers.hpp"

using namespace uvforge;
using namespace uvforge::cli;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path scratch_root() {
  static const fs::path root = [] {
    const fs::path dir = fs::temp_directory_path() / ("uvforge_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
  }();
  return root;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

nlohmann::json tiny_synth_config() {
  return nlohmann::json{{"seed", 9},        {"n_subdiv", 2},     {"k_i", 4},       {"k_e", 2},
                        {"k_t", 3},         {"n_samples", 6},    {"image_width", 16},
                        {"image_height", 16}, {"uv_width", 8},   {"uv_height", 8},
                        {"coefficient_scale", 0.5}};
}

/// Lazily built synth output shared by the command tests.
struct Workspace {
  fs::path config;
  fs::path model_dir;
  fs::path dataset_dir;
};

const Workspace& workspace() {
  static const Workspace ws = [] {
    Workspace w;
    w.config = scratch_root() / "synth.json";
    w.model_dir = scratch_root() / "model";
    w.dataset_dir = scratch_root() / "dataset";
    json_io::save_file(w.config.string(), tiny_synth_config());
    cmd_synth({w.config.string(), w.model_dir.string(), w.dataset_dir.string()});
    return w;
  }();
  return ws;
}

nlohmann::json tiny_train_config(uint64_t seed, const std::string& strategy, int steps) {
  return nlohmann::json{{"latent_dim", 6},   {"gen_channels", 4}, {"disc_channels", 4},
                        {"uv_size", 8},      {"image_size", 16},  {"batch_size", 2},
                        {"lr", 2e-4},        {"gamma_r1", 10.0},  {"mask_strategy", strategy},
                        {"steps", steps},    {"seed", seed},      {"eval_every", 0}};
}

fs::path train_once(const std::string& tag, uint64_t seed, int steps = 2) {
  const Workspace& ws = workspace();
  const fs::path cfg = scratch_root() / (tag + "_gan.json");
  json_io::save_file(cfg.string(), tiny_train_config(seed, "mask_real", steps));
  const fs::path out = scratch_root() / tag;
  cmd_train({ws.dataset_dir.string(), ws.model_dir.string(), cfg.string(), out.string(), false});
  return out;
}

}  // namespace

TEST_CASE("cmd_synth writes the dataset layout and is byte-deterministic") {
  const Workspace& ws = workspace();
  CHECK(fs::exists(ws.dataset_dir / "images/0000.png"));
  CHECK(fs::exists(ws.dataset_dir / "silhouettes/0005.png"));
  CHECK(fs::exists(ws.dataset_dir / "params/0003.json"));
  CHECK(fs::exists(ws.dataset_dir / "landmarks/0003.json"));
  CHECK(fs::exists(ws.dataset_dir / "labels.json"));
  CHECK(fs::exists(ws.dataset_dir / "manifest.json"));
  CHECK(fs::exists(ws.model_dir / "mesh.obj"));

  const fs::path model2 = scratch_root() / "model2";
  const fs::path dataset2 = scratch_root() / "dataset2";
  cmd_synth({ws.config.string(), model2.string(), dataset2.string()});
  for (const std::string rel : {"images/0000.png", "images/0004.png", "silhouettes/0001.png",
                                "params/0002.json", "labels.json"})
    CHECK(read_bytes(ws.dataset_dir / rel) == read_bytes(dataset2 / rel));
  for (const std::string rel : {"mesh.obj", "id_basis.uvtf", "mean_texture.uvtf", "manifest.json"})
    CHECK(read_bytes(ws.model_dir / rel) == read_bytes(model2 / rel));
}

TEST_CASE("cmd_synth rejects unknown keys and zero samples") {
  nlohmann::json bad = tiny_synth_config();
  bad["n_sampels"] = 3;
  const fs::path cfg = scratch_root() / "bad_synth.json";
  json_io::save_file(cfg.string(), bad);
  CHECK_THROWS_WITH(cmd_synth({cfg.string(), (scratch_root() / "x").string(), (scratch_root() / "y").string()}),
                    Catch::Matchers::ContainsSubstring("n_sampels"));

  nlohmann::json zero = tiny_synth_config();
  zero["n_samples"] = 0;
  json_io::save_file(cfg.string(), zero);
  CHECK_THROWS(cmd_synth({cfg.string(), (scratch_root() / "x").string(), (scratch_root() / "y").string()}));
}

TEST_CASE("cmd_render is byte-deterministic and honors ambient-only white maps") {
  const Workspace& ws = workspace();
  const fs::path out1 = scratch_root() / "render1";
  const fs::path out2 = scratch_root() / "render2";
  RenderOptions opt;
  opt.params_path = (ws.dataset_dir / "params/0000.json").string();
  opt.model_dir = ws.model_dir.string();
  opt.width = opt.height = 16;
  opt.out_dir = out1.string();
  cmd_render(opt);
  opt.out_dir = out2.string();
  cmd_render(opt);
  CHECK(read_bytes(out1 / "render.png") == read_bytes(out2 / "render.png"));
  CHECK(read_bytes(out1 / "silhouette.png") == read_bytes(out2 / "silhouette.png"));

  // silhouette has foreground
  const Image1 sil = png_io::read_gray8((out1 / "silhouette.png").string());
  double coverage = 0.0;
  for (double v : sil.pix) coverage += v;
  CHECK(coverage > 0.0);

  // white UV map under ambient-only light renders a white foreground
  const fs::path uv_path = scratch_root() / "white_uv.png";
  png_io::write_rgb8(uv_path.string(), Image3(8, 8, Vector3d(1, 1, 1)));
  morphable::ParamSet p =
      json_io::param_set_from_json(json_io::load_file((ws.dataset_dir / "params/0000.json").string()));
  p.p_l << 0, 0, -1, 1.0, 0.0, 0.0;
  const fs::path params_white = scratch_root() / "params_white.json";
  json_io::save_file(params_white.string(), json_io::param_set_to_json(p));
  RenderOptions wopt;
  wopt.params_path = params_white.string();
  wopt.uv_path = uv_path.string();
  wopt.model_dir = ws.model_dir.string();
  wopt.width = wopt.height = 16;
  wopt.out_dir = (scratch_root() / "render_white").string();
  cmd_render(wopt);
  const Image3 img = png_io::read_rgb8(wopt.out_dir + "/render.png");
  const Image1 mask = png_io::read_gray8(wopt.out_dir + "/silhouette.png");
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      if (mask.at(y, x) < 0.99) continue;  // stay clear of the soft boundary
      for (int c = 0; c < 3; ++c) CHECK(img.at(y, x, c) == 1.0);
    }
}

TEST_CASE("cmd_fit from the ground-truth init stays at the quantization floor") {
  const Workspace& ws = workspace();
  FitOptions opt;
  opt.image_path = (ws.dataset_dir / "images/0001.png").string();
  opt.landmarks_path = (ws.dataset_dir / "landmarks/0001.json").string();
  opt.model_dir = ws.model_dir.string();
  opt.init_path = (ws.dataset_dir / "params/0001.json").string();
  opt.out_dir = (scratch_root() / "fit").string();
  opt.steps = 25;
  cmd_fit(opt);
  CHECK(fs::exists(fs::path(opt.out_dir) / "params.json"));
  CHECK(fs::exists(fs::path(opt.out_dir) / "render.png"));

  // The stored target is 8-bit, so the best loss sits at the quantization
  // floor rather than at the in-memory fixed point of exactly zero.
  std::ifstream csv(fs::path(opt.out_dir) / "loss_trace.csv");
  REQUIRE(csv.good());
  std::string header, line, last;
  std::getline(csv, header);
  CHECK(header == "step,e_pix,e_lm,total");
  double first_total = -1.0;
  double best_total = std::numeric_limits<double>::infinity();
  while (std::getline(csv, line)) {
    const auto pos = line.rfind(',');
    const double total = std::stod(line.substr(pos + 1));
    if (first_total < 0.0) first_total = total;
    best_total = std::min(best_total, total);
  }
  CHECK(first_total < 0.01);
  CHECK(best_total <= first_total);
}

TEST_CASE("cmd_fit reports missing landmark files by path") {
  const Workspace& ws = workspace();
  FitOptions opt;
  opt.image_path = (ws.dataset_dir / "images/0000.png").string();
  opt.landmarks_path = (ws.dataset_dir / "landmarks/nonexistent.json").string();
  opt.model_dir = ws.model_dir.string();
  CHECK_THROWS_WITH(cmd_fit(opt), Catch::Matchers::ContainsSubstring("nonexistent.json"));
}

TEST_CASE("cmd_train writes metrics and a reloadable checkpoint, deterministically") {
  const fs::path out1 = train_once("train1", 33);
  CHECK(fs::exists(out1 / "metrics.csv"));
  std::ifstream csv(out1 / "metrics.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "step,d_loss,g_loss,r1,masked_fid");
  int rows = 0;
  std::string line;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 2);

  const Checkpoint ck = load_checkpoint((out1 / "checkpoint").string());
  CHECK(ck.generator.latent_dim() == 6);

  const fs::path out2 = train_once("train2", 33);
  CHECK(read_bytes(out1 / "metrics.csv") == read_bytes(out2 / "metrics.csv"));
  CHECK(read_bytes(out1 / "checkpoint/generator.uvtf") == read_bytes(out2 / "checkpoint/generator.uvtf"));
  CHECK(read_bytes(out1 / "checkpoint/discriminator.uvtf") ==
        read_bytes(out2 / "checkpoint/discriminator.uvtf"));
}

TEST_CASE("cmd_eval with ground-truth textures keeps masked FID at the floor") {
  const Workspace& ws = workspace();
  EvalOptions opt;
  opt.dataset_dir = ws.dataset_dir.string();
  opt.model_dir = ws.model_dir.string();
  opt.use_gt_textures = true;
  opt.out_path = (scratch_root() / "metrics_gt.json").string();
  cmd_eval(opt);
  const nlohmann::json reports = json_io::load_file(opt.out_path);
  REQUIRE(reports.size() == 4);
  double masked = -1.0, raw = -1.0;
  for (const auto& r : reports) {
    if (r["metric"] == "masked_fid") masked = r["value"].get<double>();
    if (r["metric"] == "fid") raw = r["value"].get<double>();
  }
  // Identical parameter sets on both sides: only 8-bit quantization remains
  // after masking, while the unmasked variant still sees the backgrounds.
  CHECK(masked >= 0.0);
  CHECK(masked < 1e-3);
  CHECK(raw > masked);
}

TEST_CASE("cmd_eval validates the extractor name") {
  const Workspace& ws = workspace();
  EvalOptions opt;
  opt.dataset_dir = ws.dataset_dir.string();
  opt.model_dir = ws.model_dir.string();
  opt.use_gt_textures = true;
  opt.extractor = "mystery";
  CHECK_THROWS_WITH(cmd_eval(opt), Catch::Matchers::ContainsSubstring("mystery"));
}

TEST_CASE("cmd_interp reproduces corner renders at the endpoints") {
  const Workspace& ws = workspace();
  const fs::path train_out = train_once("train_interp", 44);
  const Checkpoint ck = load_checkpoint((train_out / "checkpoint").string());

  Rng rng(140);
  const morphable::ParamSet params =
      json_io::param_set_from_json(json_io::load_file((ws.dataset_dir / "params/0002.json").string()));
  std::vector<fs::path> corner_paths;
  std::vector<VectorXd> zs;
  for (int k = 0; k < 2; ++k) {
    const VectorXd z = rng.gaussian_vector(6, 0.5);
    zs.push_back(z);
    nlohmann::json corner;
    corner["z"] = json_io::to_std(z);
    corner["params"] = json_io::param_set_to_json(params);
    const fs::path path = scratch_root() / ("corner" + std::to_string(k) + ".json");
    json_io::save_file(path.string(), corner);
    corner_paths.push_back(path);
  }

  InterpOptions opt;
  opt.corner_paths = {corner_paths[0].string(), corner_paths[1].string()};
  opt.checkpoint_dir = (train_out / "checkpoint").string();
  opt.model_dir = ws.model_dir.string();
  opt.out_dir = (scratch_root() / "interp").string();
  opt.steps_u = 3;
  cmd_interp(opt);

  const Image3 grid = png_io::read_rgb8(opt.out_dir + "/grid_render.png");
  REQUIRE(grid.width == 3 * 16);
  REQUIRE(grid.height == 16);

  const morphable::MorphableModel model = model_io::load_model(ws.model_dir.string());
  for (int k = 0; k < 2; ++k) {
    const render::RenderOutput direct =
        render::form_image(model, ck.generator.forward(zs[k]), params, 16, 16, render::RenderConfig{});
    const int x0 = k == 0 ? 0 : 2 * 16;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        for (int c = 0; c < 3; ++c) {
          const double quantized = std::lround(clamp01(direct.image.at(y, x, c)) * 255.0) / 255.0;
          CHECK(grid.at(y, x0 + x, c) == Approx(quantized).margin(1e-12));
        }
  }
}

TEST_CASE("cmd_edit with an explicit hyperplane logs affine latent scores") {
  const Workspace& ws = workspace();
  const fs::path train_out = train_once("train_edit", 55);

  Rng rng(141);
  const VectorXd z = rng.gaussian_vector(6, 0.5);
  const morphable::ParamSet params =
      json_io::param_set_from_json(json_io::load_file((ws.dataset_dir / "params/0004.json").string()));
  nlohmann::json latent_json;
  latent_json["z"] = json_io::to_std(z);
  latent_json["params"] = json_io::param_set_to_json(params);
  const fs::path latent_path = scratch_root() / "latent.json";
  json_io::save_file(latent_path.string(), latent_json);

  latent::Hyperplane plane;
  plane.normal = rng.gaussian_vector(6);
  plane.bias = 0.2;
  const fs::path plane_path = scratch_root() / "plane.json";
  json_io::save_file(plane_path.string(), json_io::hyperplane_to_json(plane));

  EditOptions opt;
  opt.checkpoint_dir = (train_out / "checkpoint").string();
  opt.model_dir = ws.model_dir.string();
  opt.latent_path = latent_path.string();
  opt.hyperplane_path = plane_path.string();
  opt.alphas = {-1.0, 0.0, 1.0};
  opt.out_dir = (scratch_root() / "edit").string();
  cmd_edit(opt);

  // alpha = 0 render equals the direct render of the unedited latent
  const Checkpoint ck = load_checkpoint(opt.checkpoint_dir);
  const morphable::MorphableModel model = model_io::load_model(ws.model_dir.string());
  const render::RenderOutput direct =
      render::form_image(model, ck.generator.forward(z), params, 16, 16, render::RenderConfig{});
  const Image3 alpha0 = png_io::read_rgb8(opt.out_dir + "/edit_0001.png");
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) {
        const double quantized = std::lround(clamp01(direct.image.at(y, x, c)) * 255.0) / 255.0;
        CHECK(alpha0.at(y, x, c) == Approx(quantized).margin(1e-12));
      }

  std::ifstream csv(fs::path(opt.out_dir) / "scores.csv");
  REQUIRE(csv.good());
  std::string line;
  std::getline(csv, line);
  std::vector<double> scores;
  while (std::getline(csv, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    scores.push_back(std::stod(line.substr(a + 1, b - a - 1)));
  }
  REQUIRE(scores.size() == 3);
  // affine in alpha with slope |normal|
  CHECK(scores[2] - scores[1] == Approx(scores[1] - scores[0]).margin(1e-9));
  CHECK(scores[2] - scores[1] == Approx(plane.normal.norm()).margin(1e-9));
}
