#include "puca/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

#include "CLI11.hpp"
#include "json.hpp"
#include "puca/checkpoint.hpp"
#include "puca/config_json.hpp"
#include "puca/image_io.hpp"
#include "puca/jinv.hpp"
#include "puca/train.hpp"

namespace puca::cli {

using nlohmann::json;

namespace {

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const train::NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

io::CliConfig load_or_default(const std::string& path) {
  return path.empty() ? io::CliConfig{} : io::load_cli_config(path);
}

json model_json(const PucaConfig& c) { return json::parse(io::serialize_model_config(c)); }

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Held-out evaluation set, fixed independently of the training stream.
constexpr std::uint64_t kEvalSeed = 0x9e3779b97f4a7c15ULL;

}  // namespace

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    io::CliConfig cfg = load_or_default(args.config);
    if (args.seed) {
      cfg.model.seed = *args.seed;
      cfg.train.seed = *args.seed;
    }
    if (args.steps) cfg.train.steps = *args.steps;
    cfg.train.validate();
    const std::string ckpt = !args.out.empty() ? args.out : cfg.paths.checkpoint;
    if (ckpt.empty()) throw std::invalid_argument("no checkpoint path: pass --out or set paths.checkpoint");
    std::string csv = !args.loss_csv.empty() ? args.loss_csv : cfg.paths.loss_csv;
    if (csv.empty()) csv = ckpt + ".loss.csv";

    Model model = build_model(cfg.model, args.allow_non_invariant);
    const auto result = train::train_self_supervised(model, cfg.train, [&](int step, double loss) {
      if (!args.quiet && (step + 1) % 100 == 0) err << "step " << step + 1 << " loss " << loss << "\n";
    });

    save_checkpoint(model, ckpt);
    std::ofstream f(csv, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write loss log '" + csv + "'");
    f << "step,loss\n";
    for (std::size_t k = 0; k < result.losses.size(); ++k) f << k << "," << fmt17(result.losses[k]) << "\n";

    Rng eval_rng(kEvalSeed);
    const Tensor clean = train::synth_clean(eval_rng, 4, 64, cfg.model.in_channels);
    const Tensor noisy = train::add_noise(clean, cfg.train, eval_rng);
    const auto ev = train::evaluate(model, clean, noisy, cfg.model.pd_test);
    json report{{"checkpoint", ckpt},
                {"loss_csv", csv},
                {"steps", cfg.train.steps},
                {"final_loss", result.losses.empty() ? json(nullptr) : json(result.losses.back())},
                {"heldout_psnr_noisy", ev.psnr_noisy},
                {"heldout_psnr_denoised", ev.psnr_denoised},
                {"heldout_ssim_noisy", ev.ssim_noisy},
                {"heldout_ssim_denoised", ev.ssim_denoised}};
    out << report.dump(2) << "\n";
    return kOk;
  });
}

int cmd_denoise(const DenoiseArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Model model = load_checkpoint(args.ckpt);
    const Tensor image = io::read_image(args.in);
    if (image.shape().c != model.config.in_channels) {
      throw ShapeError("image has " + std::to_string(image.shape().c) + " channels, model expects " +
                       std::to_string(model.config.in_channels));
    }
    const int s = args.pd_stride.value_or(model.config.pd_test);
    if (s < 1) throw std::invalid_argument("--pd-stride must be >= 1");
    io::write_image(denoise(model, image, s), args.out, args.bit_depth);
    out << json{{"in", args.in}, {"out", args.out}, {"pd_stride", s}}.dump() << "\n";
    return kOk;
  });
}

int cmd_verify(const VerifyArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!args.ckpt.empty() && !args.config.empty()) throw std::invalid_argument("pass --ckpt or --config, not both");
    if (args.pixels < 1) throw std::invalid_argument("--pixels must be >= 1");
    Model model = !args.ckpt.empty() ? load_checkpoint(args.ckpt) : build_model(load_or_default(args.config).model, true);
    const bool negative = !args.negative_control.empty();
    if (negative) {
      PucaConfig c = model.config;
      if (args.negative_control == "pixel-unshuffle") {
        c.downsample = Downsample::kPixel;
        c.patch = 2;
        if (c.levels < 2) {
          c.levels = 2;
          c.dabs_per_level = {2};
        }
      } else if (args.negative_control == "p-not-multiple") {
        c.downsample = Downsample::kPatch;
        c.dilation = 2;
        c.patch = 3;
      } else {
        throw std::invalid_argument("unknown negative control '" + args.negative_control +
                                    "' (expected pixel-unshuffle or p-not-multiple)");
      }
      model = build_model(c, /*allow_non_invariant=*/true);
    }

    const int multiple = args.with_pd ? 1 : model.config.spatial_multiple();
    const int size = round_up(std::max(args.size, 1), multiple);
    const Shape shape{1, model.config.in_channels, size, size};
    jinv::ImageFn f;
    if (args.with_pd) {
      f = [&model](const Tensor& x) {
        std::vector<Tensor> outs;
        for (int n = 0; n < x.shape().n; ++n) outs.push_back(denoise(model, x.batch_slice(n, n + 1), model.config.pd_test));
        return stack_batch(outs);
      };
    } else {
      f = [&model](const Tensor& x) { return forward(model, x); };
    }
    Rng rng(args.seed);
    const auto report = jinv::check_j_invariance(f, shape, args.pixels, rng);

    auto worst = report.violating_pixels;
    std::sort(worst.begin(), worst.end(), [](const auto& a, const auto& b) { return a.magnitude > b.magnitude; });
    if (worst.size() > 5) worst.resize(5);
    json worst_json = json::array();
    for (const auto& v : worst) worst_json.push_back({{"i", v.i}, {"j", v.j}, {"magnitude", v.magnitude}});

    const bool as_expected = negative ? !report.passed : report.passed;
    json j{{"mode", negative ? args.negative_control : "positive"},
           {"expected", negative ? "violation" : "invariant"},
           {"config", model_json(model.config)},
           {"pipeline", args.with_pd ? "pd" : "network"},
           {"image_size", size},
           {"pixels_tested", report.pixels_tested},
           {"tolerance", report.tolerance},
           {"max_self_dependency", report.max_self_dependency},
           {"violating_pixels", report.violating_pixels.size()},
           {"worst", worst_json},
           {"passed", report.passed},
           {"outcome_as_expected", as_expected}};
    out << j.dump(2) << "\n";
    return as_expected ? kOk : kFailed;
  });
}

int cmd_rfmap(const RfmapArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    PucaConfig c = load_or_default(args.config).model;
    if (args.levels && *args.levels != c.levels) {
      c.levels = *args.levels;
      c.dabs_per_level.assign(static_cast<std::size_t>(std::max(c.levels - 1, 0)), 2);
    }
    if (args.seed) c.seed = *args.seed;
    const Model model = build_model(c);
    if (args.size < 1 || args.size % c.spatial_multiple() != 0) {
      throw ShapeError("--size " + std::to_string(args.size) + " must be a positive multiple of " +
                       std::to_string(c.spatial_multiple()) + " for this model");
    }
    jinv::SupportOptions opts;
    opts.hold_attention = !args.full_attention;
    const auto map = jinv::model_rf_map(model, args.size, opts, c.seed);
    if (!args.out.empty()) jinv::render_map(map, args.out);
    json j{{"levels", c.levels},
           {"size", args.size},
           {"attention", args.full_attention ? "full" : "held"},
           {"support", map.support(opts.threshold)},
           {"center", map.self()}};
    if (!args.out.empty()) j["out"] = args.out;
    out << j.dump() << "\n";
    return kOk;
  });
}

int cmd_losscheck(const LosscheckArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.samples < 100) throw std::invalid_argument("--samples must be >= 100");
    if (!(args.sigma >= 0.0)) throw std::invalid_argument("--sigma must be >= 0");
    const PucaConfig c = load_or_default(args.config).model;
    const Model model = build_model(c);
    const int size = round_up(std::max(args.size, 16), c.spatial_multiple());
    Rng rng(args.seed);
    const Tensor clean = train::synth_clean(rng, 1, size, c.in_channels);
    std::function<Tensor(const Tensor&)> g;
    if (args.identity) {
      g = [](const Tensor& x) { return x; };
    } else {
      g = [&model](const Tensor& x) { return forward(model, x); };
    }
    const auto r = train::loss_decomposition_check(g, clean, args.sigma, args.samples, rng, args.batch);
    json j{{"g", args.identity ? "identity" : "puca"},
           {"sigma", args.sigma},
           {"samples", r.samples},
           {"size", size},
           {"lhs", r.lhs},
           {"rhs", r.rhs},
           {"risk", r.risk},
           {"noise", r.noise},
           {"rel_err", r.rel_err}};
    out << j.dump(2) << "\n";
    return kOk;
  });
}

int cmd_metrics(const MetricsArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Tensor a = io::read_image(args.a);
    const Tensor b = io::read_image(args.b);
    const double p = train::psnr(a, b);
    json j{{"psnr", std::isinf(p) ? json("inf") : json(p)}, {"ssim", train::ssim(a, b)}};
    out << j.dump() << "\n";
    return kOk;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"PUCA blind-spot denoiser tools"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Self-supervised training on synthetic noisy images");
  train->add_option("--config", ta.config, "JSON config")->check(CLI::ExistingFile);
  train->add_option("--out", ta.out, "Checkpoint to write");
  train->add_option("--loss-csv", ta.loss_csv, "Loss log (default: <out>.loss.csv)");
  train->add_option("--seed", ta.seed, "Seed for initialization and data");
  train->add_option("--steps", ta.steps, "Override the number of steps");
  train->add_flag("--allow-non-invariant", ta.allow_non_invariant, "Permit builds that leak the blind spot");
  train->add_flag("--quiet", ta.quiet, "No progress output");

  DenoiseArgs da;
  auto* den = app.add_subcommand("denoise", "Denoise an image with a checkpoint");
  den->add_option("--ckpt", da.ckpt, "Checkpoint")->required();
  den->add_option("--in", da.in, "Input image (PGM/PPM/PNG)")->required();
  den->add_option("--out", da.out, "Output image (.png or PNM)")->required();
  den->add_option("--pd-stride", da.pd_stride, "PD stride (default: pd_test of the checkpoint)");
  den->add_option("--bit-depth", da.bit_depth, "Output bit depth")->check(CLI::IsMember({8, 16}));

  VerifyArgs va;
  auto* ver = app.add_subcommand("verify", "Check J-invariance by perturbation");
  ver->add_option("--ckpt", va.ckpt, "Checkpoint");
  ver->add_option("--config", va.config, "JSON config")->check(CLI::ExistingFile);
  ver->add_option("--pixels", va.pixels, "Pixels to test");
  ver->add_option("--size", va.size, "Input size");
  ver->add_option("--seed", va.seed, "Seed for input and pixel choice");
  ver->add_option("--negative-control", va.negative_control, "Expect a violation")
      ->check(CLI::IsMember({"pixel-unshuffle", "p-not-multiple"}));
  ver->add_flag("--with-pd", va.with_pd, "Test the PD pipeline rather than the bare network");

  RfmapArgs ra;
  auto* rf = app.add_subcommand("rfmap", "Receptive-field heatmap of the centre pixel");
  rf->add_option("--config", ra.config, "JSON config")->check(CLI::ExistingFile);
  rf->add_option("--levels", ra.levels, "Override U-Net depth");
  rf->add_option("--size", ra.size, "Input size");
  rf->add_option("--out", ra.out, "Heatmap (.png or PGM)");
  rf->add_option("--seed", ra.seed, "Parameter seed");
  rf->add_flag("--full-attention", ra.full_attention, "Differentiate through attention pooling too");

  LosscheckArgs la;
  auto* lc = app.add_subcommand("losscheck", "Monte Carlo check of the self-supervised loss decomposition");
  lc->add_option("--config", la.config, "JSON config")->check(CLI::ExistingFile);
  lc->add_option("--sigma", la.sigma, "Noise std");
  lc->add_option("--samples", la.samples, "Noise draws");
  lc->add_option("--seed", la.seed, "Seed");
  lc->add_option("--size", la.size, "Clean image size");
  lc->add_option("--batch", la.batch, "Draws per forward pass");
  lc->add_flag("--identity", la.identity, "Use g(x) = x as a control");

  MetricsArgs ma;
  auto* me = app.add_subcommand("metrics", "PSNR and SSIM between two images");
  me->add_option("a", ma.a, "First image")->required();
  me->add_option("b", ma.b, "Second image")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  }
  if (train->parsed()) return cmd_train(ta, out, err);
  if (den->parsed()) return cmd_denoise(da, out, err);
  if (ver->parsed()) return cmd_verify(va, out, err);
  if (rf->parsed()) return cmd_rfmap(ra, out, err);
  if (lc->parsed()) return cmd_losscheck(la, out, err);
  return cmd_metrics(ma, out, err);
}

}  // namespace puca::cli
