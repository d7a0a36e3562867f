// lano: data generation, masks, training, evaluation and oracle checks.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lano/checkpoint.hpp"
#include "lano/error.hpp"
#include "lano/evaluate.hpp"
#include "lano/masking.hpp"
#include "lano/model.hpp"
#include "lano/pdegen.hpp"
#include "lano/training.hpp"
#include "lano/verify.hpp"

namespace fs = std::filesystem;
using namespace lano;

namespace {

fs::path manifest_path(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.txt" : p; }

void echo_config(const CLI::App& cmd, const fs::path& output) {
  fs::path echo = output;
  if (fs::is_directory(output)) {
    echo = output / (cmd.get_name() + ".config.txt");
  } else {
    echo += ".config.txt";
  }
  std::ofstream out(echo, std::ios::trunc);
  out << "# lano " << cmd.get_name() << "\n" << cmd.config_to_str(true, false);
}

std::vector<MaskPattern> parse_patterns(const std::vector<std::string>& names) {
  std::vector<MaskPattern> out;
  for (const auto& n : names) out.push_back(parse_mask_pattern(n));
  return out;
}

struct ModelFlags {
  ModelConfig cfg;
  std::string variant = "reuse";
  std::string mixer = "attention";
  bool no_bf = false;

  void add(CLI::App* app) {
    app->add_option("--layers", cfg.layers, "Latent operator layers")->capture_default_str();
    app->add_option("--channels", cfg.channels, "Hidden channels")->capture_default_str();
    app->add_option("--heads", cfg.heads, "Attention heads")->capture_default_str();
    app->add_option("--tokens", cfg.latent_tokens, "Latent tokens per head")->capture_default_str();
    app->add_option("--temperature", cfg.temperature, "Slice softmax temperature")->capture_default_str();
    app->add_option("--kernel", cfg.pconv_kernel, "Partial convolution kernel size")->capture_default_str();
    app->add_option("--history", cfg.history, "Input frames")->capture_default_str();
    app->add_option("--variant", variant, "Decode maps: reuse or recalc")->capture_default_str();
    app->add_option("--mixer", mixer, "Token mixer: attention, mlp or none")->capture_default_str();
    app->add_flag("--no-bf", no_bf, "Disable boundary-first propagation");
  }
  ModelConfig resolve(std::size_t physical_channels) {
    cfg.variant = parse_decode_variant(variant);
    cfg.token_mixer = parse_token_mixer(mixer);
    cfg.boundary_first = !no_bf;
    cfg.physical_channels = physical_channels;
    cfg.validate();
    return cfg;
  }
};

struct TrainFlags {
  TrainConfig cfg;
  std::string pattern = "patch";
  std::string mpt = "on";

  void add(CLI::App* app, bool with_mask) {
    if (with_mask) {
      app->add_option("--pattern", pattern, "Training mask pattern: point or patch")->capture_default_str();
      app->add_option("--rate", cfg.mask.missing_rate, "Training missing rate")->capture_default_str();
      app->add_option("--patch", cfg.mask.patch_size, "Patch size")->capture_default_str();
    }
    app->add_option("--lr", cfg.learning_rate, "Peak learning rate")->capture_default_str();
    app->add_option("--wd", cfg.weight_decay, "Weight decay")->capture_default_str();
    app->add_option("--epochs", cfg.epochs)->capture_default_str();
    app->add_option("--batch", cfg.batch_size)->capture_default_str();
    app->add_option("--mpt", mpt, "Mask-to-predict training: on or off")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    app->add_option("--mpt-max-rate", cfg.mpt_max_rate, "Upper artificial rate (<0: training rate)")
        ->capture_default_str();
    app->add_flag("--mpt-cross-pattern", cfg.mpt_cross_pattern, "Artificial masks from the other pattern");
    app->add_option("--lambda", cfg.consistency_weight, "Consistency weight")->capture_default_str();
    app->add_option("--seed", cfg.seed)->capture_default_str();
    app->add_option("--windows", cfg.windows_per_trajectory, "Training windows per trajectory and epoch (0: all)")
        ->capture_default_str();
    app->add_option("--val-windows", cfg.val_windows, "Validation windows per trajectory (0: all)")
        ->capture_default_str();
    app->add_flag("--interp-fill", cfg.interp_fill, "Cubic-fill inputs and train without masks");
  }
  TrainConfig resolve() {
    cfg.mask.pattern = parse_mask_pattern(pattern);
    cfg.mpt = mpt == "on";
    cfg.validate();
    return cfg;
  }
};

ExperimentData load_experiment(const fs::path& data) {
  const auto m = manifest_path(data);
  return ExperimentData{load_split(m, "train"), load_split(m, "val"), load_split(m, "test")};
}

void print_report(const EvalReport& r) {
  for (const auto& row : r.rows) {
    std::printf("%-16s %-5s train=%.2f test=%.2f mean=%.5f median=%.5f std=%.5f n=%zu\n", row.label.c_str(),
                std::string(to_string(row.pattern)).c_str(), row.train_rate, row.test_rate, row.mean_rel_l2,
                row.median_rel_l2, row.std_rel_l2, row.samples);
  }
  std::printf("fingerprint %s\n", r.fingerprint.c_str());
}

void write_pgm(const fs::path& path, std::size_t h, std::size_t w, const std::vector<double>& v, double lo,
               double hi) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << w << ' ' << h << "\n255\n";
  for (double x : v) {
    const double t = hi > lo ? (x - lo) / (hi - lo) : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::clamp(t, 0.0, 1.0) * 255.0 + 0.5)));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent neural operator for partially observed PDE data"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Simulate a dataset (train/val/test splits and manifest)");
  GenerateOptions gopt;
  std::string pde = "dr";
  fs::path gen_out = "data";
  gen->add_option("--pde", pde, "dr or ns")->capture_default_str();
  gen->add_option("--grid", gopt.grid)->capture_default_str();
  gen->add_option("--traj", gopt.train, "Training trajectories")->capture_default_str();
  gen->add_option("--val", gopt.val, "Validation trajectories (0: traj/10, at least 1)")->capture_default_str();
  gen->add_option("--test", gopt.test, "Test trajectories (0: traj/10, at least 1)")->capture_default_str();
  gen->add_option("--tsteps", gopt.steps, "Frames per trajectory")->capture_default_str();
  gen->add_option("--seed", gopt.seed)->capture_default_str();
  gen->add_option("--ns-solver-grid", gopt.ns_solver_grid)->capture_default_str();
  gen->add_option("--ic-modes", gopt.dr.ic_modes, "Diffusion-reaction initial-condition band limit (0: grid/16)")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();

  // gen-mask
  auto* gmask = app.add_subcommand("gen-mask", "Write an observation mask");
  MaskSpec mspec;
  std::string mpattern = "patch";
  std::size_t mh = 64, mw = 0;
  std::uint64_t mseed = 0;
  fs::path mask_out = "mask.pobm";
  gmask->add_option("--pattern", mpattern)->capture_default_str();
  gmask->add_option("--rate", mspec.missing_rate)->capture_default_str();
  gmask->add_option("--patch", mspec.patch_size)->capture_default_str();
  gmask->add_option("--grid", mh, "Grid height (and width unless --width)")->capture_default_str();
  gmask->add_option("--width", mw, "Grid width (0: same as --grid)")->capture_default_str();
  gmask->add_option("--seed", mseed)->capture_default_str();
  gmask->add_option("--out", mask_out)->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a model and write the best-validation checkpoint");
  ModelFlags tmodel;
  TrainFlags ttrain;
  fs::path tdata = "data", tout = "model.pobw";
  tr->add_option("--data", tdata, "Dataset directory or manifest")->capture_default_str();
  tmodel.add(tr);
  ttrain.add(tr, true);
  tr->add_option("--out", tout, "Checkpoint path; metrics go to <out>.metrics.csv")->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  EvalOptions eopt;
  fs::path eckpt = "model.pobw", edata = "data", eout = "eval.csv";
  std::vector<std::string> epatterns{"patch"};
  ev->add_option("--ckpt", eckpt)->capture_default_str();
  ev->add_option("--data", edata)->capture_default_str();
  ev->add_option("--rates", eopt.test_rates, "Test missing rates")->delimiter(',')->capture_default_str();
  ev->add_option("--pattern", epatterns, "point and/or patch")->delimiter(',')->capture_default_str();
  ev->add_option("--patch", eopt.patch_size)->capture_default_str();
  ev->add_option("--seed", eopt.seed)->capture_default_str();
  ev->add_option("--windows", eopt.windows, "Windows per test trajectory (0: all)")->capture_default_str();
  ev->add_flag("--interp-fill", eopt.interp_fill, "Cubic-fill inputs and run the model unmasked");
  ev->add_option("--out", eout)->capture_default_str();

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and evaluate one model per axis value");
  AblationOptions aopt;
  ModelFlags amodel;
  TrainFlags atrain;
  atrain.pattern = "point";
  fs::path adata = "data", aout = "ablate.csv";
  std::size_t aeval_windows = 0;
  std::uint64_t aeval_seed = 0;
  ab->add_option("--axis", aopt.axis, "tokens, wo, mixer, patch or mpt")->required();
  ab->add_option("--values", aopt.values, "Axis values (default: the axis defaults)")->delimiter(',');
  ab->add_option("--data", adata)->capture_default_str();
  amodel.add(ab);
  atrain.add(ab, true);
  ab->add_option("--eval-seed", aeval_seed)->capture_default_str();
  ab->add_option("--eval-windows", aeval_windows)->capture_default_str();
  ab->add_option("--out", aout)->capture_default_str();

  // verify
  auto* ve = app.add_subcommand("verify", "Run the 64-bit oracle checks");
  VerifyOptions vopt;
  std::vector<std::string> vchecks{"all"};
  fs::path vout = "verify.csv";
  ve->add_option("--seed", vopt.seed)->capture_default_str();
  ve->add_option("--checks", vchecks, "Check names or 'all'")->delimiter(',')->capture_default_str();
  ve->add_option("--instances", vopt.kernel_instances, "Kernel oracle instances")->capture_default_str();
  ve->add_option("--coverage-seeds", vopt.coverage_seeds)->capture_default_str();
  ve->add_flag("--corrupt-decode", vopt.corrupt_decode_normalization,
               "Negative control: skip decode normalization");
  ve->add_option("--out", vout)->capture_default_str();

  // dump
  auto* du = app.add_subcommand("dump", "Render a field or mask to an 8-bit PGM");
  fs::path dfile, dout = "dump.pgm";
  std::size_t dtraj = 0, dframe = 0, dchan = 0;
  du->add_option("--file", dfile, "Dataset (.pobd) or mask (.pobm)")->required();
  du->add_option("--traj", dtraj)->capture_default_str();
  du->add_option("--frame", dframe)->capture_default_str();
  du->add_option("--channel", dchan)->capture_default_str();
  du->add_option("--out", dout)->capture_default_str();

  // bench-matrix
  auto* bm = app.add_subcommand("bench-matrix", "Train/test missing-rate matrix for both patterns");
  BenchMatrixOptions bopt;
  ModelFlags bmodel;
  TrainFlags btrain;
  fs::path bdata = "data", bout = "bench_matrix.csv";
  std::vector<std::string> bpatterns{"point", "patch"};
  bm->add_option("--data", bdata)->capture_default_str();
  bm->add_option("--pattern", bpatterns)->delimiter(',')->capture_default_str();
  bm->add_option("--patch", bopt.patch_size)->capture_default_str();
  bm->add_option("--eval-seed", bopt.eval_seed)->capture_default_str();
  bm->add_option("--eval-windows", bopt.windows)->capture_default_str();
  bmodel.add(bm);
  btrain.add(bm, false);
  bm->add_option("--out", bout)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) {
      gopt.kind = parse_pde_kind(pde);
      const auto m = generate_dataset(gen_out, gopt);
      echo_config(*gen, gen_out);
      for (const auto& s : m.splits) std::printf("%s: %zu trajectories -> %s\n", s.name.c_str(), s.count, s.file.c_str());
    } else if (gmask->parsed()) {
      mspec.pattern = parse_mask_pattern(mpattern);
      const auto mask = generate_mask(mspec, mh, mw == 0 ? mh : mw, mseed);
      write_mask(mask_out, mask);
      echo_config(*gmask, mask_out);
      std::printf("observed fraction %.4f\n", mask.observed_fraction());
    } else if (tr->parsed()) {
      const auto m = manifest_path(tdata);
      TrainData data{load_split(m, "train"), load_split(m, "val")};
      const auto mc = tmodel.resolve(data.train.front().channels);
      const auto tc = ttrain.resolve();
      fs::path metrics = tout;
      metrics += ".metrics.csv";
      const auto result = train(data, mc, tc, TrainOutputs{tout, metrics});
      echo_config(*tr, tout);
      std::printf("best val rel L2 %.6f at epoch %zu\n", result.best_val_rel_l2, result.best_epoch);
    } else if (ev->parsed()) {
      const auto ck = load_checkpoint(eckpt);
      eopt.patterns = parse_patterns(epatterns);
      if (ck.train_config.has("mask_rate")) eopt.train_rate = ck.train_config.get_double("mask_rate");
      const auto report = evaluate(ck.params, ck.config, load_split(manifest_path(edata), "test"), eopt);
      report.write_csv(eout);
      echo_config(*ev, eout);
      print_report(report);
    } else if (ab->parsed()) {
      const auto data = load_experiment(adata);
      aopt.model = amodel.resolve(data.train.front().channels);
      aopt.train = atrain.resolve();
      aopt.eval.patterns = {aopt.train.mask.pattern};
      aopt.eval.test_rates = {aopt.train.mask.missing_rate};
      aopt.eval.patch_size = aopt.train.mask.patch_size;
      aopt.eval.seed = aeval_seed;
      aopt.eval.windows = aeval_windows;
      const auto report = ablate(data, aopt);
      report.write_csv(aout);
      echo_config(*ab, aout);
      print_report(report);
    } else if (ve->parsed()) {
      const auto checks = run_verify(vopt, vchecks);
      write_verify_csv(vout, checks);
      echo_config(*ve, vout);
      bool ok = true;
      for (const auto& c : checks) {
        std::printf("%s %-24s metric=%.3e threshold=%.1e %.2fs  %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                    c.metric, c.threshold, c.seconds, c.detail.c_str());
        ok = ok && c.passed;
      }
      return ok ? 0 : 1;
    } else if (du->parsed()) {
      std::size_t h = 0, w = 0;
      std::vector<double> v;
      double lo = 0.0, hi = 1.0;
      if (dfile.extension() == ".pobm") {
        const auto mask = read_mask(dfile);
        h = mask.height;
        w = mask.width;
        v.assign(mask.bits.begin(), mask.bits.end());
      } else {
        const auto trajs = read_dataset(dfile);
        if (dtraj >= trajs.size()) throw ValueError("dump: trajectory index out of range");
        const auto& t = trajs[dtraj];
        if (dframe >= t.steps || dchan >= t.channels) throw ValueError("dump: frame or channel out of range");
        h = t.height;
        w = t.width;
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) v.push_back(t.at(dframe, y, x, dchan));
        }
        lo = *std::min_element(v.begin(), v.end());
        hi = *std::max_element(v.begin(), v.end());
      }
      write_pgm(dout, h, w, v, lo, hi);
      fs::path side = dout;
      side += ".minmax.txt";
      std::ofstream(side) << "min=" << format_double(lo) << "\nmax=" << format_double(hi) << "\n";
      echo_config(*du, dout);
    } else if (bm->parsed()) {
      const auto data = load_experiment(bdata);
      bopt.model = bmodel.resolve(data.train.front().channels);
      bopt.train = btrain.resolve();
      bopt.patterns = parse_patterns(bpatterns);
      const auto report = bench_matrix(data, bopt);
      report.write_csv(bout);
      echo_config(*bm, bout);
      print_report(report);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
