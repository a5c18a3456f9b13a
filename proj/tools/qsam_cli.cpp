// qsam: command-line frontend for the quaternion two-stage deraining library.
//
// Exit codes: 0 success, 1 usage error, 2 I/O error, 3 malformed or
// incompatible checkpoint, 4 shape/config violation, 5 runtime failure
// (non-finite training loss, failed gradient check, ...).

#include "qsam/checkpoint.hpp"
#include "qsam/config_json.hpp"
#include "qsam/dataset.hpp"
#include "qsam/gradcheck.hpp"
#include "qsam/metrics.hpp"
#include "qsam/rain.hpp"
#include "qsam/train.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

namespace fs = std::filesystem;
using namespace qsam;

namespace {

std::vector<std::string> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("missing directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

int cmd_synth(const fs::path& clean_dir, const fs::path& out, int pairs,
              const RainParams& params) {
  const int n = make_dataset(clean_dir, params, pairs, out);
  std::cout << "wrote " << n << " rainy/clean pairs to " << out.string() << "\n";
  return 0;
}

int cmd_train(const fs::path& data, const fs::path& out, const NetConfig& nc,
              const TrainConfig& tc, const fs::path& resume, bool iters_given) {
  auto ds = PairedDataset<float>::open(data);
  std::unique_ptr<TrainSession> session;
  if (!resume.empty()) {
    Checkpoint ck = load_checkpoint(resume);
    session = std::make_unique<TrainSession>(ck);
    if (iters_given) session->train_cfg.iters = tc.iters;
    std::cout << "resuming from iteration " << session->start_iter << "\n";
  } else {
    session = std::make_unique<TrainSession>(nc, tc);
  }
  std::cout << "model: " << algebra_name(session->net_cfg.algebra) << ", "
            << session->net.param_count() << " parameters; dataset: " << ds.size()
            << " pairs\n";
  const auto trace = train(*session, ds, out, &std::cout);
  if (!trace.empty())
    std::cout << "done: final loss " << trace.back().loss_total << "\n";
  std::cout << "checkpoint: " << (out / "final.bin").string() << "\n";
  return 0;
}

int cmd_derain(const fs::path& ckpt, const fs::path& in_dir, const fs::path& out_dir,
               bool emit_stage1) {
  const Checkpoint ck = load_checkpoint(ckpt);
  const NetConfig nc = TrainSession::parse_net_cfg(ck);
  QSAMNet<float> net(nc);
  restore_parameters(ck, net);
  const int div = nc.spatial_divisor();

  const auto names = list_pngs(in_dir);
  fs::create_directories(out_dir);
  if (emit_stage1) fs::create_directories(out_dir / "stage1");
  for (const std::string& name : names) {
    const Rgb<float> img = load_image<float>(in_dir / name);
    const int h = img.height(), w = img.width();
    const int ph = (h + div - 1) / div * div;
    const int pw = (w + div - 1) / div * div;
    const Rgb<float> padded = reflect_pad(img, ph, pw);

    Tape<float> t;
    auto outs = net.forward(t, t.constant(encode_image(padded)));
    const Rgb<float> x2 = crop(decode_image(t.value(outs.x2)), 0, 0, h, w);
    save_image(out_dir / name, x2);
    if (emit_stage1) {
      const Rgb<float> x1 = crop(decode_image(t.value(outs.x1)), 0, 0, h, w);
      save_image(out_dir / "stage1" / name, x1);
    }
  }
  std::cout << "restored " << names.size() << " images to " << out_dir.string() << "\n";
  return 0;
}

int cmd_eval(const fs::path& restored, const fs::path& clean, const fs::path& out_csv) {
  const EvalResult res = evaluate_dirs(restored, clean);
  for (const EvalRow& r : res.rows)
    if (!r.ok()) std::cerr << "skipping " << r.name << ": " << r.error << "\n";
  write_eval_csv(out_csv, res);
  std::cout << "scored " << res.scored << " images: mean PSNR "
            << res.mean_psnr << " dB, mean SSIM " << res.mean_ssim << "\n"
            << "csv: " << out_csv.string() << "\n";
  return 0;
}

int cmd_gradcheck(double tol, std::uint64_t seed) {
  const auto reports = run_gradcheck_suite(seed);
  bool all_ok = true;
  for (const GradCheckReport& r : reports) {
    const bool ok = r.pass(tol);
    all_ok = all_ok && ok;
    std::printf("%-22s max_rel_err %.3e  (%lld comparisons)  %s\n", r.name.c_str(),
                r.max_rel_err, (long long)r.checks, ok ? "PASS" : "FAIL");
    if (!ok && !r.worst_coord.empty())
      std::printf("    worst coordinate: %s\n", r.worst_coord.c_str());
  }
  if (!all_ok) {
    std::cerr << "gradient check failed (tolerance " << tol << ")\n";
    return 5;
  }
  std::cout << "all gradient checks passed (tolerance " << tol << ")\n";
  return 0;
}

int cmd_params(const std::string& config) {
  NetConfig nc;
  if (config != "default") {
    std::ifstream f(config);
    if (!f) throw std::runtime_error("cannot open config file: " + config);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("config file is not valid JSON: " + std::string(e.what()));
    }
    nc = net_config_from_json(j.contains("net") ? j.at("net") : j);
  }
  nc.algebra = Algebra::quaternion;
  QSAMNet<float> qnet(nc);
  QSAMNet<float> rnet(twin_config(nc));

  const auto qconvs = qnet.conv_layers();
  const auto rconvs = rnet.conv_layers();
  check(qconvs.size() == rconvs.size(), "params: twin layer lists differ");
  bool ratio4 = true;
  for (std::size_t i = 0; i < qconvs.size(); ++i)
    if (rconvs[i]->weight_count() != 4 * qconvs[i]->weight_count()) ratio4 = false;

  const long long nq = qnet.param_count();
  const long long nr = rnet.param_count();
  std::cout << "quaternion model parameters: " << nq << "\n"
            << "real twin parameters:        " << nr << "\n"
            << "conv weight ratio per layer: " << (ratio4 ? "4 (exact)" : "NOT 4") << "\n";
  std::printf("total parameter ratio:       %.6f\n", double(nr) / double(nq));
  return ratio4 ? 0 : 5;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage quaternion deraining: data synthesis, training, "
               "inference, evaluation"};
  app.require_subcommand(1);
  std::function<int()> action;

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "render synthetic rain over clean images");
  fs::path sy_clean, sy_out;
  int sy_pairs = 0;
  RainParams rain;
  synth->add_option("--clean-dir", sy_clean, "directory of clean PNGs")->required();
  synth->add_option("--out", sy_out, "output dataset root (rainy/ + clean/)")->required();
  synth->add_option("--pairs", sy_pairs, "number of pairs to generate")->required();
  synth->add_option("--seed", rain.seed, "master seed")->default_val(0);
  synth->add_option("--streaks-per-mpx", rain.streaks_per_mpx,
                    "expected streaks per megapixel");
  synth->add_option("--len-min", rain.len_min, "min streak length (px)");
  synth->add_option("--len-max", rain.len_max, "max streak length (px)");
  synth->add_option("--width-min", rain.width_min, "min streak width (px)");
  synth->add_option("--width-max", rain.width_max, "max streak width (px)");
  synth->add_option("--angle-range", rain.angle_range_deg,
                    "max tilt from vertical (degrees)");
  synth->add_option("--intensity-min", rain.intensity_min, "min streak intensity");
  synth->add_option("--intensity-max", rain.intensity_max, "max streak intensity");
  synth->add_option("--blur-sigma", rain.blur_sigma, "Gaussian blur sigma (0 = off)");
  synth->callback([&] { action = [&] { return cmd_synth(sy_clean, sy_out, sy_pairs, rain); }; });

  // --- train ---
  auto* tr = app.add_subcommand("train", "train a model on a rainy/clean dataset");
  fs::path tr_data, tr_out, tr_resume;
  NetConfig net_cfg;
  TrainConfig train_cfg;
  std::string tr_algebra = "quaternion";
  auto* iters_opt =
      tr->add_option("--iters", train_cfg.iters, "total training iterations")->required();
  tr->add_option("--data", tr_data, "dataset root (rainy/ + clean/)")->required();
  tr->add_option("--out", tr_out, "output directory (trace.csv, checkpoints)")->required();
  tr->add_option("--batch", train_cfg.batch, "batch size")->default_val(2);
  tr->add_option("--patch", train_cfg.patch, "square patch size")->default_val(256);
  tr->add_option("--lr-start", train_cfg.lr_start, "initial learning rate")->default_val(2e-4);
  tr->add_option("--lr-end", train_cfg.lr_end, "final learning rate")->default_val(1e-7);
  tr->add_option("--seed", train_cfg.seed, "master seed")->default_val(0);
  tr->add_option("--ckpt-interval", train_cfg.ckpt_interval,
                 "iterations between periodic checkpoints")->default_val(1000);
  tr->add_option("--widths", net_cfg.widths,
                 "quaternion channel widths per scale, comma separated")
      ->delimiter(',');
  tr->add_option("--blocks", net_cfg.blocks_per_scale, "residual blocks per scale");
  tr->add_option("--leaky", net_cfg.leaky_slope, "LeakyReLU negative slope");
  tr->add_option("--algebra", tr_algebra, "convolution algebra: quaternion or real")
      ->check(CLI::IsMember({"quaternion", "real"}));
  tr->add_option("--resume", tr_resume,
                 "checkpoint to resume from (architecture flags are then ignored)");
  tr->callback([&] {
    action = [&] {
      net_cfg.algebra = tr_algebra == "real" ? Algebra::real : Algebra::quaternion;
      return cmd_train(tr_data, tr_out, net_cfg, train_cfg, tr_resume,
                       iters_opt->count() > 0);
    };
  });

  // --- derain ---
  auto* de = app.add_subcommand("derain", "restore a directory of rainy images");
  fs::path de_ckpt, de_in, de_out;
  bool de_stage1 = false;
  de->add_option("--ckpt", de_ckpt, "model checkpoint")->required();
  de->add_option("--in", de_in, "directory of rainy PNGs (read-only)")->required();
  de->add_option("--out", de_out, "output directory for restored PNGs")->required();
  de->add_flag("--emit-stage1", de_stage1,
               "also write stage-1 outputs under <out>/stage1/");
  de->callback([&] { action = [&] { return cmd_derain(de_ckpt, de_in, de_out, de_stage1); }; });

  // --- eval ---
  auto* ev = app.add_subcommand("eval", "PSNR/SSIM of restored images against clean");
  fs::path ev_restored, ev_clean, ev_csv;
  ev->add_option("--restored", ev_restored, "directory of restored PNGs")->required();
  ev->add_option("--clean", ev_clean, "directory of reference PNGs")->required();
  ev->add_option("--out", ev_csv, "output CSV path")->required();
  ev->callback([&] { action = [&] { return cmd_eval(ev_restored, ev_clean, ev_csv); }; });

  // --- gradcheck ---
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  double gc_tol = 1e-4;
  std::uint64_t gc_seed = 42;
  gc->add_option("--tol", gc_tol, "max allowed relative error")->default_val(1e-4);
  gc->add_option("--seed", gc_seed, "probe seed")->default_val(42);
  gc->callback([&] { action = [&] { return cmd_gradcheck(gc_tol, gc_seed); }; });

  // --- params ---
  auto* pa = app.add_subcommand("params", "parameter counts: quaternion vs real twin");
  std::string pa_config = "default";
  pa->add_option("--config", pa_config, "'default' or a JSON config file")
      ->default_val("default");
  pa->callback([&] { action = [&] { return cmd_params(pa_config); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    return action();
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 3;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 5;
  } catch (const NonFiniteGradient& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 5;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
