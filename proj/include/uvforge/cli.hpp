#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "uvforge/gan.hpp"
#include "uvforge/json_io.hpp"
#include "uvforge/latent.hpp"
#include "uvforge/metrics.hpp"
#include "uvforge/model_io.hpp"
#include "uvforge/plot.hpp"
#include "uvforge/png_io.hpp"
#include "uvforge/synth.hpp"

// Command implementations behind the uvforge tool. Everything here is
// reproducible byte-for-byte given the same config and seed: fixed float
// formatting, sorted JSON keys, deterministic PNG settings.
namespace uvforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace detail {

inline std::string idx4(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", i);
  return buf;
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& origin) {
  for (const auto& item : j.items())
    require(allowed.count(item.key()) > 0, origin + ": unknown config key '" + item.key() + "'");
}

inline std::string strategy_name(gan::MaskStrategy s) {
  return s == gan::MaskStrategy::MaskRealForeground ? "mask_real" : "composite_bg";
}

inline gan::MaskStrategy strategy_from_name(const std::string& name) {
  if (name == "mask_real") return gan::MaskStrategy::MaskRealForeground;
  if (name == "composite_bg") return gan::MaskStrategy::CompositeRealBackground;
  throw std::runtime_error("mask_strategy must be 'mask_real' or 'composite_bg', got '" + name + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset directory.
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<gan::TrainSample> samples;
  std::vector<int> labels;
  json manifest;
};

inline void save_dataset(const std::string& dir, const synth::SynthDataset& ds,
                         const morphable::MorphableModel& model, const synth::SynthConfig& cfg) {
  fs::create_directories(dir + "/images");
  fs::create_directories(dir + "/silhouettes");
  fs::create_directories(dir + "/params");
  fs::create_directories(dir + "/landmarks");
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const std::string id = detail::idx4(static_cast<int>(i));
    png_io::write_rgb8(dir + "/images/" + id + ".png", ds.samples[i].image);
    png_io::write_gray8(dir + "/silhouettes/" + id + ".png", ds.samples[i].silhouette);
    json_io::save_file(dir + "/params/" + id + ".json", json_io::param_set_to_json(ds.samples[i].params));
    json_io::save_file(dir + "/landmarks/" + id + ".json",
                       json_io::landmarks_to_json(synth::landmarks_for(model, ds.samples[i].params)));
  }
  json_io::save_file(dir + "/labels.json", json(ds.labels));
  json manifest;
  manifest["format_version"] = 1;
  manifest["n_samples"] = static_cast<int>(ds.samples.size());
  manifest["image_width"] = cfg.image_width;
  manifest["image_height"] = cfg.image_height;
  manifest["uv_width"] = cfg.uv_width;
  manifest["uv_height"] = cfg.uv_height;
  manifest["seed"] = cfg.seed;
  manifest["attribute_rule"] = cfg.attribute_rule;
  json_io::save_file(dir + "/manifest.json", manifest);
}

inline Dataset load_dataset(const std::string& dir, const morphable::MorphableModel& model) {
  Dataset ds;
  ds.manifest = json_io::load_file(dir + "/manifest.json");
  for (const char* key : {"n_samples", "image_width", "image_height"})
    require(ds.manifest.contains(key), "dataset manifest: missing field '" + std::string(key) + "'");
  const int n = ds.manifest["n_samples"].get<int>();
  require(n >= 1, "dataset manifest: field 'n_samples' must be >= 1");
  ds.samples.resize(n);
  for (int i = 0; i < n; ++i) {
    const std::string id = detail::idx4(i);
    ds.samples[i].image = png_io::read_rgb8(dir + "/images/" + id + ".png");
    Image1 sil = png_io::read_gray8(dir + "/silhouettes/" + id + ".png");
    for (double& v : sil.pix) v = v >= 0.5 ? 1.0 : 0.0;
    ds.samples[i].silhouette = std::move(sil);
    ds.samples[i].params = json_io::param_set_from_json(json_io::load_file(dir + "/params/" + id + ".json"));
    json_io::validate_param_dims(ds.samples[i].params, model, dir + "/params/" + id + ".json");
    require(ds.samples[i].image.width == ds.manifest["image_width"].get<int>() &&
                ds.samples[i].image.height == ds.manifest["image_height"].get<int>(),
            "dataset: image " + id + " disagrees with manifest resolution");
  }
  const json labels = json_io::load_file(dir + "/labels.json");
  require(static_cast<int>(labels.size()) == n, "dataset: labels.json length disagrees with manifest n_samples");
  ds.labels = labels.get<std::vector<int>>();
  return ds;
}

// ---------------------------------------------------------------------------
// Checkpoint directory.
// ---------------------------------------------------------------------------

struct Checkpoint {
  gan::Generator generator;
  gan::Discriminator discriminator;
  json manifest;
};

inline void save_checkpoint(const std::string& dir, const gan::Generator& g, const gan::Discriminator& d,
                            const gan::GanConfig& cfg, int step) {
  fs::create_directories(dir);
  tensor_file::write_vector(dir + "/generator.uvtf", g.params_flat());
  tensor_file::write_vector(dir + "/discriminator.uvtf", d.params_flat());
  json manifest;
  manifest["format_version"] = 1;
  manifest["latent_dim"] = cfg.latent_dim;
  manifest["gen_channels"] = cfg.gen_channels;
  manifest["disc_channels"] = cfg.disc_channels;
  manifest["uv_size"] = cfg.uv_size;
  manifest["image_size"] = cfg.image_size;
  manifest["seed"] = cfg.seed;
  manifest["step"] = step;
  json_io::save_file(dir + "/manifest.json", manifest);
}

inline Checkpoint load_checkpoint(const std::string& dir) {
  Checkpoint ck;
  ck.manifest = json_io::load_file(dir + "/manifest.json");
  for (const char* key : {"latent_dim", "gen_channels", "disc_channels", "uv_size", "image_size", "seed"})
    require(ck.manifest.contains(key), "checkpoint manifest: missing field '" + std::string(key) + "'");
  const uint64_t seed = ck.manifest["seed"].get<uint64_t>();
  ck.generator = gan::Generator(ck.manifest["latent_dim"].get<int>(), ck.manifest["gen_channels"].get<int>(),
                                ck.manifest["uv_size"].get<int>(), seed);
  ck.discriminator =
      gan::Discriminator(ck.manifest["image_size"].get<int>(), ck.manifest["disc_channels"].get<int>(), seed);
  const VectorXd gp = tensor_file::read_vector(dir + "/generator.uvtf");
  require(gp.size() == ck.generator.param_size(), "checkpoint: generator.uvtf size disagrees with manifest");
  ck.generator.set_params_flat(gp);
  const VectorXd dp = tensor_file::read_vector(dir + "/discriminator.uvtf");
  require(dp.size() == ck.discriminator.param_size(),
          "checkpoint: discriminator.uvtf size disagrees with manifest");
  ck.discriminator.set_params_flat(dp);
  return ck;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

inline synth::SynthConfig synth_config_from_json(const json& j) {
  detail::check_keys(j,
                     {"seed", "n_subdiv", "k_i", "k_e", "k_t", "n_samples", "image_width", "image_height",
                      "uv_width", "uv_height", "coefficient_scale", "attribute_rule"},
                     "synth config");
  synth::SynthConfig cfg;
  if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
  if (j.contains("n_subdiv")) cfg.n_subdiv = j["n_subdiv"].get<int>();
  if (j.contains("k_i")) cfg.k_i = j["k_i"].get<int>();
  if (j.contains("k_e")) cfg.k_e = j["k_e"].get<int>();
  if (j.contains("k_t")) cfg.k_t = j["k_t"].get<int>();
  if (j.contains("n_samples")) cfg.n_samples = j["n_samples"].get<int>();
  if (j.contains("image_width")) cfg.image_width = j["image_width"].get<int>();
  if (j.contains("image_height")) cfg.image_height = j["image_height"].get<int>();
  if (j.contains("uv_width")) cfg.uv_width = j["uv_width"].get<int>();
  if (j.contains("uv_height")) cfg.uv_height = j["uv_height"].get<int>();
  if (j.contains("coefficient_scale")) cfg.coefficient_scale = j["coefficient_scale"].get<double>();
  if (j.contains("attribute_rule")) cfg.attribute_rule = j["attribute_rule"].get<std::string>();
  cfg.validate();
  return cfg;
}

struct SynthOptions {
  std::string config_path;
  std::string model_dir;
  std::string dataset_dir;
};

inline void cmd_synth(const SynthOptions& opt) {
  const synth::SynthConfig cfg = synth_config_from_json(json_io::load_file(opt.config_path));
  const morphable::MorphableModel model = synth::make_model(cfg);
  model_io::save_model(opt.model_dir, model);
  const synth::SynthDataset ds = synth::make_dataset(model, cfg);
  save_dataset(opt.dataset_dir, ds, model, cfg);
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitOptions {
  std::string image_path;
  std::string landmarks_path;
  std::string model_dir;
  std::string init_path;  // optional
  std::string out_dir = ".";
  int steps = 200;
  double lr = 0.01;
  double lambda_pix = 1.0;
  double lambda_lm = 1.0;
  bool plot = false;
};

inline void cmd_fit(const FitOptions& opt) {
  const morphable::MorphableModel model = model_io::load_model(opt.model_dir);
  const Image3 target = png_io::read_rgb8(opt.image_path);
  const fit::Landmarks landmarks = json_io::landmarks_from_json(json_io::load_file(opt.landmarks_path));
  require(landmarks.count() == static_cast<int>(model.landmark_indices.size()),
          "cmd_fit: landmark count disagrees with the model");

  morphable::ParamSet init;
  if (!opt.init_path.empty()) {
    init = json_io::param_set_from_json(json_io::load_file(opt.init_path));
    json_io::validate_param_dims(init, model, opt.init_path);
  } else {
    init.p_i = VectorXd::Zero(model.k_i());
    init.p_e = VectorXd::Zero(model.k_e());
    init.p_t = VectorXd::Zero(model.k_t());
    init.p_l << 0.0, 0.0, -1.0, 0.7, 0.3, 0.1;
  }
  if (init.p_t.size() == 0) init.p_t = VectorXd::Zero(model.k_t());

  fit::FitConfig cfg;
  cfg.steps = opt.steps;
  cfg.lr = opt.lr;
  cfg.lambda_pix = opt.lambda_pix;
  cfg.lambda_lm = opt.lambda_lm;
  const fit::FitResult result = fit::fit_shape(target, landmarks, model, init, cfg);

  fs::create_directories(opt.out_dir);
  json_io::save_file(opt.out_dir + "/params.json", json_io::param_set_to_json(result.params));
  png_io::write_rgb8(opt.out_dir + "/render.png", result.best_render.image);
  std::ofstream csv(opt.out_dir + "/loss_trace.csv");
  require(csv.good(), "cmd_fit: cannot open loss_trace.csv");
  csv << "step,e_pix,e_lm,total\n";
  for (const auto& row : result.trace)
    csv << row.step << "," << detail::fmt(row.e_pix) << "," << detail::fmt(row.e_lm) << ","
        << detail::fmt(row.total) << "\n";
  csv.close();
  if (opt.plot) {
    std::vector<plot::Series> series(3);
    series[0].label = "e_pix";
    series[0].color = {0.85, 0.3, 0.2};
    series[1].label = "e_lm";
    series[1].color = {0.2, 0.55, 0.25};
    series[2].label = "total";
    series[2].color = {0.2, 0.35, 0.8};
    for (const auto& row : result.trace) {
      series[0].values.push_back(row.e_pix);
      series[1].values.push_back(row.e_lm);
      series[2].values.push_back(row.total);
    }
    plot::save_chart(opt.out_dir + "/loss_trace.png", series);
  }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainSettings {
  gan::GanConfig gan;
  int steps = 2000;
  int eval_every = 200;
  int n_eval = 128;
};

inline TrainSettings train_settings_from_json(const json& j) {
  detail::check_keys(j,
                     {"latent_dim", "gen_channels", "disc_channels", "uv_size", "image_size", "batch_size",
                      "lr", "beta1", "beta2", "gamma_r1", "mask_strategy", "steps", "seed", "eval_every",
                      "n_eval"},
                     "gan config");
  TrainSettings s;
  if (j.contains("latent_dim")) s.gan.latent_dim = j["latent_dim"].get<int>();
  if (j.contains("gen_channels")) s.gan.gen_channels = j["gen_channels"].get<int>();
  if (j.contains("disc_channels")) s.gan.disc_channels = j["disc_channels"].get<int>();
  if (j.contains("uv_size")) s.gan.uv_size = j["uv_size"].get<int>();
  if (j.contains("image_size")) s.gan.image_size = j["image_size"].get<int>();
  if (j.contains("batch_size")) s.gan.batch_size = j["batch_size"].get<int>();
  if (j.contains("lr")) s.gan.lr = j["lr"].get<double>();
  if (j.contains("beta1")) s.gan.beta1 = j["beta1"].get<double>();
  if (j.contains("beta2")) s.gan.beta2 = j["beta2"].get<double>();
  if (j.contains("gamma_r1")) s.gan.gamma_r1 = j["gamma_r1"].get<double>();
  if (j.contains("mask_strategy")) s.gan.strategy = detail::strategy_from_name(j["mask_strategy"].get<std::string>());
  if (j.contains("seed")) s.gan.seed = j["seed"].get<uint64_t>();
  if (j.contains("steps")) s.steps = j["steps"].get<int>();
  if (j.contains("eval_every")) s.eval_every = j["eval_every"].get<int>();
  if (j.contains("n_eval")) s.n_eval = j["n_eval"].get<int>();
  require(s.steps >= 1, "gan config: steps must be >= 1");
  return s;
}

struct TrainOptions {
  std::string dataset_dir;
  std::string model_dir;
  std::string config_path;
  std::string out_dir;
  bool plot = false;
};

inline void cmd_train(const TrainOptions& opt) {
  const morphable::MorphableModel model = model_io::load_model(opt.model_dir);
  const TrainSettings settings = train_settings_from_json(json_io::load_file(opt.config_path));
  const Dataset ds = load_dataset(opt.dataset_dir, model);
  require(ds.manifest["image_width"].get<int>() == settings.gan.image_size &&
              ds.manifest["image_height"].get<int>() == settings.gan.image_size,
          "cmd_train: gan config image_size disagrees with the dataset manifest");

  gan::Generator g(settings.gan.latent_dim, settings.gan.gen_channels, settings.gan.uv_size, settings.gan.seed);
  gan::Discriminator d(settings.gan.image_size, settings.gan.disc_channels, settings.gan.seed);
  const auto log =
      gan::run_training(g, d, model, ds.samples, settings.gan, settings.steps, settings.eval_every, settings.n_eval);

  fs::create_directories(opt.out_dir);
  save_checkpoint(opt.out_dir + "/checkpoint", g, d, settings.gan, settings.steps);
  std::ofstream csv(opt.out_dir + "/metrics.csv");
  require(csv.good(), "cmd_train: cannot open metrics.csv");
  csv << "step,d_loss,g_loss,r1,masked_fid\n";
  for (const auto& row : log) {
    csv << row.step << "," << detail::fmt(row.d_loss) << "," << detail::fmt(row.g_loss) << ","
        << detail::fmt(row.r1_term) << ",";
    if (std::isfinite(row.masked_fid)) csv << detail::fmt(row.masked_fid);
    csv << "\n";
  }
  csv.close();
  if (opt.plot) {
    std::vector<plot::Series> series(2);
    series[0].label = "d_loss";
    series[0].color = {0.85, 0.3, 0.2};
    series[1].label = "g_loss";
    series[1].color = {0.2, 0.35, 0.8};
    for (const auto& row : log) {
      series[0].values.push_back(row.d_loss);
      series[1].values.push_back(row.g_loss);
    }
    plot::save_chart(opt.out_dir + "/metrics.png", series);
  }
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string dataset_dir;
  std::string checkpoint_dir;  // may be empty with use_gt_textures
  std::string model_dir;
  std::string out_path = "metrics.json";
  std::string extractor = "downsample8";
  int n_fake = 0;  // 0 = dataset size
  uint64_t seed = 99;
  bool use_gt_textures = false;
};

inline metrics::FeatureExtractor extractor_by_name(const std::string& name, int width, int height) {
  if (name == "downsample8") return metrics::make_downsample_extractor(8);
  if (name == "randproj128") return metrics::make_random_projection_extractor(width, height, 128);
  throw std::runtime_error("unknown extractor '" + name + "' (expected downsample8 or randproj128)");
}

inline void cmd_eval(const EvalOptions& opt) {
  const morphable::MorphableModel model = model_io::load_model(opt.model_dir);
  const Dataset ds = load_dataset(opt.dataset_dir, model);
  const int width = ds.manifest["image_width"].get<int>();
  const int height = ds.manifest["image_height"].get<int>();
  require(width == height, "cmd_eval: non-square dataset images are not supported");
  const metrics::FeatureExtractor fx = extractor_by_name(opt.extractor, width, height);
  const render::RenderConfig rcfg;
  const int n_real = static_cast<int>(ds.samples.size());
  const int n_fake = opt.n_fake > 0 ? opt.n_fake : n_real;
  require(n_real >= 2 && n_fake >= 2, "cmd_eval: need at least 2 samples on both sides");

  MatrixXd real_raw(n_real, fx.dim), real_masked(n_real, fx.dim);
  for (int i = 0; i < n_real; ++i) {
    real_raw.row(i) = fx.extract(ds.samples[i].image).transpose();
    real_masked.row(i) =
        metrics::masked_features(fx, ds.samples[i].image, ds.samples[i].silhouette, rcfg.background).transpose();
  }

  Checkpoint ck;
  if (!opt.use_gt_textures) ck = load_checkpoint(opt.checkpoint_dir);
  Rng rng(opt.seed);
  MatrixXd fake_raw(n_fake, fx.dim), fake_masked(n_fake, fx.dim);
  for (int i = 0; i < n_fake; ++i) {
    const gan::TrainSample& s = ds.samples[i % n_real];
    render::RenderOutput out;
    if (opt.use_gt_textures) {
      const MatrixXd vcolors = morphable::sample_texture(model, s.params.p_t);
      out = render::render_colored(model, vcolors, s.params, width, height, rcfg);
    } else {
      const VectorXd z = rng.gaussian_vector(ck.generator.latent_dim());
      out = render::form_image(model, ck.generator.forward(z), s.params, width, height, rcfg);
    }
    fake_raw.row(i) = fx.extract(out.image).transpose();
    // Masked with the hard coverage, matching the stored real silhouettes.
    fake_masked.row(i) =
        metrics::masked_features(fx, out.image, render::hard_coverage(out.raster), rcfg.background)
            .transpose();
  }

  const auto stats = [](const MatrixXd& m) { return metrics::gaussian_stats(m); };
  json reports = json::array();
  reports.push_back(json_io::metric_report("fid", metrics::fid(stats(real_raw), stats(fake_raw)), n_fake,
                                           fx.name, opt.seed));
  reports.push_back(json_io::metric_report("masked_fid", metrics::fid(stats(real_masked), stats(fake_masked)),
                                           n_fake, fx.name, opt.seed));
  reports.push_back(json_io::metric_report("fid_fake_vs_masked_real",
                                           metrics::fid(stats(real_masked), stats(fake_raw)), n_fake, fx.name,
                                           opt.seed));
  reports.push_back(json_io::metric_report("fid_masked_fake_vs_real",
                                           metrics::fid(stats(real_raw), stats(fake_masked)), n_fake, fx.name,
                                           opt.seed));
  json_io::save_file(opt.out_path, reports);
}

// ---------------------------------------------------------------------------
// interp
// ---------------------------------------------------------------------------

struct InterpOptions {
  std::vector<std::string> corner_paths;  // 2, 3 (tl,tr,bl) or 4 (tl,tr,bl,br)
  std::string checkpoint_dir;
  std::string model_dir;
  std::string out_dir = ".";
  int steps_u = 4;
  int steps_v = 4;
};

struct LatentPoint {
  VectorXd z;
  morphable::ParamSet params;
};

inline LatentPoint latent_point_from_json(const json& j, const std::string& origin) {
  require(j.contains("z"), origin + ": missing field 'z'");
  require(j.contains("params"), origin + ": missing field 'params'");
  LatentPoint p;
  p.z = json_io::from_std(j["z"].get<std::vector<double>>());
  p.params = json_io::param_set_from_json(j["params"]);
  return p;
}

namespace detail {

inline morphable::ParamSet lerp_params(const morphable::ParamSet& a, const morphable::ParamSet& b, double t) {
  morphable::ParamSet out;
  out.p_i = latent::lerp(a.p_i, b.p_i, t);
  out.p_e = latent::lerp(a.p_e, b.p_e, t);
  out.p_c = (1.0 - t) * a.p_c + t * b.p_c;
  out.p_l = (1.0 - t) * a.p_l + t * b.p_l;
  if (a.p_t.size() > 0 && b.p_t.size() > 0) out.p_t = latent::lerp(a.p_t, b.p_t, t);
  return out;
}

inline Image3 tile_grid(const std::vector<Image3>& tiles, int rows, int cols) {
  require(!tiles.empty(), "tile_grid: no tiles");
  const int tw = tiles[0].width, th = tiles[0].height;
  Image3 grid(cols * tw, rows * th, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const Image3& t = tiles[static_cast<size_t>(r) * cols + c];
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x)
          for (int ch = 0; ch < 3; ++ch) grid.at(r * th + y, c * tw + x, ch) = t.at(y, x, ch);
    }
  return grid;
}

}  // namespace detail

inline void cmd_interp(const InterpOptions& opt) {
  require(opt.corner_paths.size() >= 2 && opt.corner_paths.size() <= 4,
          "cmd_interp: need 2, 3, or 4 corners");
  require(opt.steps_u >= 2, "cmd_interp: steps_u must be >= 2");
  const morphable::MorphableModel model = model_io::load_model(opt.model_dir);
  const Checkpoint ck = load_checkpoint(opt.checkpoint_dir);
  std::vector<LatentPoint> corners;
  for (const auto& path : opt.corner_paths) {
    corners.push_back(latent_point_from_json(json_io::load_file(path), path));
    require(corners.back().z.size() == ck.generator.latent_dim(),
            path + ": latent dimension disagrees with the checkpoint");
    json_io::validate_param_dims(corners.back().params, model, path);
  }

  const int width = ck.manifest["image_size"].get<int>();
  const render::RenderConfig rcfg;
  const bool two_corner = corners.size() == 2;
  const int rows = two_corner ? 1 : opt.steps_v;
  require(two_corner || opt.steps_v >= 2, "cmd_interp: steps_v must be >= 2");

  // Three fitted corners complete the fourth by parallelogram: br = tr + bl - tl.
  LatentPoint tl = corners[0];
  LatentPoint tr = corners[two_corner ? 1 : 1];
  LatentPoint bl = two_corner ? corners[0] : corners[2];
  LatentPoint br;
  if (corners.size() == 4) {
    br = corners[3];
  } else if (corners.size() == 3) {
    br.z = tr.z + bl.z - tl.z;
    br.params.p_i = tr.params.p_i + bl.params.p_i - tl.params.p_i;
    br.params.p_e = tr.params.p_e + bl.params.p_e - tl.params.p_e;
    br.params.p_c = tr.params.p_c + bl.params.p_c - tl.params.p_c;
    br.params.p_l = tr.params.p_l + bl.params.p_l - tl.params.p_l;
    if (tl.params.p_t.size() > 0) br.params.p_t = tr.params.p_t + bl.params.p_t - tl.params.p_t;
  } else {
    br = corners[1];
  }

  std::vector<Image3> renders, maps;
  for (int r = 0; r < rows; ++r) {
    const double v = rows == 1 ? 0.0 : static_cast<double>(r) / (rows - 1);
    for (int c = 0; c < opt.steps_u; ++c) {
      const double u = static_cast<double>(c) / (opt.steps_u - 1);
      const VectorXd z = latent::bilerp(tl.z, tr.z, bl.z, br.z, u, v);
      const morphable::ParamSet p_top = detail::lerp_params(tl.params, tr.params, u);
      const morphable::ParamSet p_bot = detail::lerp_params(bl.params, br.params, u);
      const morphable::ParamSet p = detail::lerp_params(p_top, p_bot, v);
      const uvtex::UVMap map = ck.generator.forward(z);
      const render::RenderOutput out = render::form_image(model, map, p, width, width, rcfg);
      renders.push_back(out.image);
      maps.push_back(map);
    }
  }
  fs::create_directories(opt.out_dir);
  png_io::write_rgb8(opt.out_dir + "/grid_render.png", detail::tile_grid(renders, rows, opt.steps_u));
  png_io::write_rgb8(opt.out_dir + "/grid_uv.png", detail::tile_grid(maps, rows, opt.steps_u));
}

// ---------------------------------------------------------------------------
// edit
// ---------------------------------------------------------------------------

struct EditOptions {
  std::string checkpoint_dir;
  std::string model_dir;
  std::string latent_path;       // {"z": [...], "params": {...}}
  std::string hyperplane_path;   // either this ...
  std::string dataset_dir;       // ... or pseudo-labeling from a labeled dataset
  std::vector<double> alphas = {-2.0, -1.0, 0.0, 1.0, 2.0};
  std::string out_dir = ".";
  double svm_lambda = 1e-2;
  int svm_steps = 10000;
  int n_pseudo = 200;
  uint64_t seed = 5;
};

inline void cmd_edit(const EditOptions& opt) {
  const morphable::MorphableModel model = model_io::load_model(opt.model_dir);
  const Checkpoint ck = load_checkpoint(opt.checkpoint_dir);
  const LatentPoint point = latent_point_from_json(json_io::load_file(opt.latent_path), opt.latent_path);
  require(point.z.size() == ck.generator.latent_dim(), "cmd_edit: latent dimension disagrees with checkpoint");
  const int width = ck.manifest["image_size"].get<int>();
  const render::RenderConfig rcfg;
  const metrics::FeatureExtractor fx = metrics::make_downsample_extractor(8);

  latent::Hyperplane plane;
  latent::Hyperplane probe;  // image-feature probe, for reporting
  bool have_probe = false;
  if (!opt.hyperplane_path.empty()) {
    plane = json_io::hyperplane_from_json(json_io::load_file(opt.hyperplane_path));
  } else {
    require(!opt.dataset_dir.empty(), "cmd_edit: need either a hyperplane or a labeled dataset");
    const Dataset ds = load_dataset(opt.dataset_dir, model);
    // Linear probe on extractor features of the labeled real images.
    latent::LabeledLatents probe_data;
    probe_data.latents.resize(static_cast<int>(ds.samples.size()), fx.dim);
    probe_data.labels = ds.labels;
    for (size_t i = 0; i < ds.samples.size(); ++i)
      probe_data.latents.row(static_cast<int>(i)) = fx.extract(ds.samples[i].image).transpose();
    probe = latent::fit_svm(probe_data, opt.svm_lambda, opt.svm_steps, opt.seed);
    have_probe = true;

    // Pseudo-label sampled latents through render + probe, then separate them
    // in latent space.
    Rng rng(opt.seed);
    latent::LabeledLatents pseudo;
    pseudo.latents.resize(opt.n_pseudo, ck.generator.latent_dim());
    pseudo.labels.resize(opt.n_pseudo);
    for (int i = 0; i < opt.n_pseudo; ++i) {
      const VectorXd z = rng.gaussian_vector(ck.generator.latent_dim());
      const gan::TrainSample& s = ds.samples[i % ds.samples.size()];
      const render::RenderOutput out = render::form_image(model, ck.generator.forward(z), s.params, width, width, rcfg);
      pseudo.latents.row(i) = z.transpose();
      pseudo.labels[i] = probe.score(fx.extract(out.image)) >= 0.0 ? 1 : -1;
    }
    plane = latent::fit_svm(pseudo, opt.svm_lambda, opt.svm_steps, opt.seed);
    fs::create_directories(opt.out_dir);
    json_io::save_file(opt.out_dir + "/hyperplane.json", json_io::hyperplane_to_json(plane));
  }

  fs::create_directories(opt.out_dir);
  std::ofstream csv(opt.out_dir + "/scores.csv");
  require(csv.good(), "cmd_edit: cannot open scores.csv");
  csv << "alpha,latent_score,probe_score\n";
  for (size_t i = 0; i < opt.alphas.size(); ++i) {
    const double alpha = opt.alphas[i];
    const VectorXd z = latent::edit(point.z, plane, alpha);
    const render::RenderOutput out =
        render::form_image(model, ck.generator.forward(z), point.params, width, width, rcfg);
    png_io::write_rgb8(opt.out_dir + "/edit_" + detail::idx4(static_cast<int>(i)) + ".png", out.image);
    csv << detail::fmt(alpha) << "," << detail::fmt(plane.score(z)) << ",";
    if (have_probe) csv << detail::fmt(probe.score(fx.extract(out.image)));
    csv << "\n";
  }
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

struct RenderOptions {
  std::string params_path;
  std::string uv_path;  // optional; falls back to the linear texture (p_t)
  std::string model_dir;
  std::string out_dir = ".";
  int width = 64;
  int height = 64;
};

inline void cmd_render(const RenderOptions& opt) {
  const morphable::MorphableModel model = model_io::load_model(opt.model_dir);
  morphable::ParamSet params = json_io::param_set_from_json(json_io::load_file(opt.params_path));
  json_io::validate_param_dims(params, model, opt.params_path);
  const render::RenderConfig rcfg;
  render::RenderOutput out;
  if (!opt.uv_path.empty()) {
    const uvtex::UVMap map = png_io::read_rgb8(opt.uv_path);
    out = render::form_image(model, map, params, opt.width, opt.height, rcfg);
  } else {
    require(params.has_texture_coeffs(), "cmd_render: params lack p_t and no --uv map was given");
    const MatrixXd vcolors = morphable::sample_texture(model, params.p_t);
    out = render::render_colored(model, vcolors, params, opt.width, opt.height, rcfg);
  }
  fs::create_directories(opt.out_dir);
  png_io::write_rgb8(opt.out_dir + "/render.png", out.image);
  png_io::write_gray8(opt.out_dir + "/silhouette.png", out.silhouette);
}

}  // namespace uvforge::cli
