#include <CLI11.hpp>

#include <cstdio>

#include "uvforge/cli.hpp"

// uvforge: synthetic morphable-model experiments from the command line.
// Subcommands: synth, fit, train, eval, interp, edit, render.

int main(int argc, char** argv) {
  CLI::App app{"Differentiable UV-texture toolkit"};
  app.require_subcommand(1);

  using namespace uvforge::cli;

  SynthOptions synth_opt;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic model and dataset");
  synth->add_option("config", synth_opt.config_path, "Synth config JSON")->required();
  synth->add_option("--model-out", synth_opt.model_dir, "Output model directory")->required();
  synth->add_option("--dataset-out", synth_opt.dataset_dir, "Output dataset directory")->required();

  FitOptions fit_opt;
  auto* fitc = app.add_subcommand("fit", "Fit model parameters to an image");
  fitc->add_option("image", fit_opt.image_path, "Target image PNG")->required();
  fitc->add_option("landmarks", fit_opt.landmarks_path, "Landmark JSON")->required();
  fitc->add_option("model", fit_opt.model_dir, "Model directory")->required();
  fitc->add_option("--init", fit_opt.init_path, "Initial params JSON");
  fitc->add_option("--out", fit_opt.out_dir, "Output directory");
  fitc->add_option("--steps", fit_opt.steps, "Adam steps");
  fitc->add_option("--lr", fit_opt.lr, "Learning rate");
  fitc->add_option("--lambda-pix", fit_opt.lambda_pix, "Pixel-energy weight");
  fitc->add_option("--lambda-lm", fit_opt.lambda_lm, "Landmark-energy weight");
  fitc->add_flag("--plot", fit_opt.plot, "Also write loss_trace.png");

  TrainOptions train_opt;
  auto* train = app.add_subcommand("train", "Adversarially train the UV generator");
  train->add_option("dataset", train_opt.dataset_dir, "Dataset directory")->required();
  train->add_option("model", train_opt.model_dir, "Model directory")->required();
  train->add_option("config", train_opt.config_path, "GAN config JSON")->required();
  train->add_option("--out", train_opt.out_dir, "Output directory")->required();
  train->add_flag("--plot", train_opt.plot, "Also write metrics.png");

  EvalOptions eval_opt;
  auto* eval = app.add_subcommand("eval", "Compute FID metrics for a checkpoint");
  eval->add_option("dataset", eval_opt.dataset_dir, "Dataset directory")->required();
  eval->add_option("model", eval_opt.model_dir, "Model directory")->required();
  eval->add_option("--checkpoint", eval_opt.checkpoint_dir, "Checkpoint directory");
  eval->add_option("--out", eval_opt.out_path, "Output metrics JSON");
  eval->add_option("--extractor", eval_opt.extractor, "downsample8 or randproj128");
  eval->add_option("--n", eval_opt.n_fake, "Number of generated samples");
  eval->add_option("--seed", eval_opt.seed, "Latent sampling seed");
  eval->add_flag("--gt-textures", eval_opt.use_gt_textures, "Render from ground-truth textures instead");

  InterpOptions interp_opt;
  auto* interp = app.add_subcommand("interp", "Render an interpolation grid");
  interp->add_option("--corner", interp_opt.corner_paths, "Corner JSON files (2-4: tl tr bl br)")
      ->required()
      ->expected(2, 4);
  interp->add_option("--checkpoint", interp_opt.checkpoint_dir, "Checkpoint directory")->required();
  interp->add_option("--model", interp_opt.model_dir, "Model directory")->required();
  interp->add_option("--out", interp_opt.out_dir, "Output directory");
  interp->add_option("--steps-u", interp_opt.steps_u, "Grid columns");
  interp->add_option("--steps-v", interp_opt.steps_v, "Grid rows");

  EditOptions edit_opt;
  auto* edit = app.add_subcommand("edit", "Hyperplane attribute edit of a latent");
  edit->add_option("--checkpoint", edit_opt.checkpoint_dir, "Checkpoint directory")->required();
  edit->add_option("--model", edit_opt.model_dir, "Model directory")->required();
  edit->add_option("--latent", edit_opt.latent_path, "Latent JSON {z, params}")->required();
  edit->add_option("--hyperplane", edit_opt.hyperplane_path, "Hyperplane JSON");
  edit->add_option("--dataset", edit_opt.dataset_dir, "Labeled dataset for pseudo-labeling");
  edit->add_option("--alpha", edit_opt.alphas, "Edit magnitudes");
  edit->add_option("--out", edit_opt.out_dir, "Output directory");
  edit->add_option("--svm-lambda", edit_opt.svm_lambda, "SVM regularization");
  edit->add_option("--svm-steps", edit_opt.svm_steps, "SVM subgradient steps");
  edit->add_option("--n-pseudo", edit_opt.n_pseudo, "Pseudo-labeled latent count");
  edit->add_option("--seed", edit_opt.seed, "Sampling seed");

  RenderOptions render_opt;
  auto* render = app.add_subcommand("render", "Render a parameter set");
  render->add_option("params", render_opt.params_path, "Params JSON")->required();
  render->add_option("model", render_opt.model_dir, "Model directory")->required();
  render->add_option("--uv", render_opt.uv_path, "UV map PNG (default: linear texture from p_t)");
  render->add_option("--out", render_opt.out_dir, "Output directory");
  render->add_option("--width", render_opt.width, "Image width");
  render->add_option("--height", render_opt.height, "Image height");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) cmd_synth(synth_opt);
    if (*fitc) cmd_fit(fit_opt);
    if (*train) cmd_train(train_opt);
    if (*eval) cmd_eval(eval_opt);
    if (*interp) cmd_interp(interp_opt);
    if (*edit) cmd_edit(edit_opt);
    if (*render) cmd_render(render_opt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "uvforge: %s\n", e.what());
    return 1;
  }
  return 0;
}
