// udsr command-line tool. Thin shell over the C API in udsr/udsr.h: flag
// parsing and exit-code mapping happen here, everything else in the library.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid config.

#include <udsr/udsr.h>

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace {

int map_status(int status) {
  if (status != UDSR_OK) std::fprintf(stderr, "error: %s\n", udsr_last_error());
  return status;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"udsr — unpaired depth super-resolution pipeline"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "cap worker threads (0 = all cores)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic RGB-D dataset");
  std::string synth_out = "data";
  int synth_scenes = 16, synth_w = 64, synth_h = 48;
  uint64_t synth_seed = 1;
  std::string synth_opts;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--scenes", synth_scenes, "number of scenes");
  synth->add_option("--width", synth_w, "frame width (pixels)");
  synth->add_option("--height", synth_h, "frame height (pixels)");
  synth->add_option("--seed", synth_seed, "master seed");
  synth->add_option("--options", synth_opts, "JSON options (degradation, counts)");

  // split
  auto* split = app.add_subcommand("split", "assign scenes to trainA/trainB/val/test");
  std::string split_dir, split_manifest = "manifest.json";
  double f_train = 0.6, f_val = 0.2, f_test = 0.2;
  uint64_t split_seed = 1;
  split->add_option("--data", split_dir, "dataset directory (with scenes/)")->required();
  split->add_option("--manifest", split_manifest, "manifest output path")->required();
  split->add_option("--train", f_train, "train fraction");
  split->add_option("--val", f_val, "val fraction");
  split->add_option("--test", f_test, "test fraction");
  split->add_option("--seed", split_seed, "split seed");

  // degrade
  auto* degrade = app.add_subcommand("degrade", "apply the sensor degradation model");
  std::string deg_in, deg_out, deg_opts;
  uint64_t deg_seed = 1;
  degrade->add_option("--in", deg_in, "input 16-bit depth PNG")->required();
  degrade->add_option("--out", deg_out, "output PNG")->required();
  degrade->add_option("--seed", deg_seed, "noise seed");
  degrade->add_option("--options", deg_opts, "JSON degradation options");

  // filter
  auto* filter = app.add_subcommand("filter", "SSIM patch filter over manifest pairs");
  std::string filt_in, filt_data, filt_out;
  double filt_thresh = 0.8;
  filter->add_option("--manifest", filt_in, "input manifest")->required();
  filter->add_option("--data", filt_data, "dataset root (default: manifest dir)");
  filter->add_option("--out", filt_out, "filtered manifest output")->required();
  filter->add_option("--threshold", filt_thresh, "SSIM keep threshold");

  // upsample
  auto* upsample = app.add_subcommand("upsample", "bicubic depth upsampling");
  std::string up_in, up_out;
  int up_factor = 2;
  upsample->add_option("--in", up_in, "input depth PNG")->required();
  upsample->add_option("--out", up_out, "output PNG")->required();
  upsample->add_option("--factor", up_factor, "integer upsampling factor");

  // shared training options
  struct TrainArgs {
    std::string manifest, data, config, net_config, out, log;
  };
  auto add_train_opts = [](CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--manifest", a.manifest, "dataset manifest")->required();
    cmd->add_option("--data", a.data, "dataset root (default: manifest dir)");
    cmd->add_option("--config", a.config, "phase config JSON");
    cmd->add_option("--net-config", a.net_config, "network config JSON");
    cmd->add_option("--out", a.out, "checkpoint output")->required();
    cmd->add_option("--log", a.log, "CSV training log");
  };

  TrainArgs g_args, t_args, e_args, s_args;
  auto* tg = app.add_subcommand("train-guidance", "pre-train the RGB guidance network");
  add_train_opts(tg, g_args);
  auto* tt = app.add_subcommand("train-translate", "unpaired translation component");
  add_train_opts(tt, t_args);
  auto* te = app.add_subcommand("train-enhance", "enhancement with pseudo-examples");
  add_train_opts(te, e_args);
  std::string te_translation, te_guidance;
  te->add_option("--translation", te_translation, "translation checkpoint")->required();
  te->add_option("--guidance", te_guidance, "guidance checkpoint")->required();
  auto* fs = app.add_subcommand("finetune-sr", "fine-tune enhancement for x2 SR");
  add_train_opts(fs, s_args);
  std::string fs_translation, fs_guidance, fs_enhancement;
  fs->add_option("--translation", fs_translation, "translation checkpoint")->required();
  fs->add_option("--guidance", fs_guidance, "guidance checkpoint")->required();
  fs->add_option("--enhancement", fs_enhancement, "enhancement checkpoint")->required();

  // infer
  auto* infer = app.add_subcommand("infer", "run the SR/enhancement pipeline");
  std::string inf_rgb, inf_depth, inf_guidance, inf_enh, inf_net, inf_out;
  int inf_factor = 1;
  infer->add_option("--rgb", inf_rgb, "RGB PNG")->required();
  infer->add_option("--depth", inf_depth, "low-quality depth PNG")->required();
  infer->add_option("--guidance", inf_guidance, "guidance checkpoint")->required();
  infer->add_option("--enhancement", inf_enh, "enhancement checkpoint")->required();
  infer->add_option("--net-config", inf_net, "network config JSON");
  infer->add_option("--factor", inf_factor, "upsampling factor (1 or 2)");
  infer->add_option("--out", inf_out, "output depth PNG")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "masked error metrics between depth maps");
  std::string ev_pred, ev_gt, ev_input, ev_csv, ev_json_path;
  bool ev_json = false;
  eval->add_option("--pred", ev_pred, "prediction PNG")->required();
  eval->add_option("--gt", ev_gt, "ground-truth PNG")->required();
  eval->add_option("--input", ev_input, "low-quality input PNG")->required();
  eval->add_option("--csv", ev_csv, "write CSV report here");
  eval->add_option("--json-out", ev_json_path, "write JSON report here");
  eval->add_flag("--json", ev_json, "print the JSON report to stdout");

  // gradcheck
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference verification of every op and loss");
  double gc_tol = 1e-4;
  gradcheck->add_option("--tolerance", gc_tol, "max relative error allowed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  udsr_set_threads(threads);

  if (synth->parsed())
    return map_status(udsr_synth(synth_out.c_str(), synth_scenes, synth_w, synth_h,
                                 synth_seed, opt(synth_opts)));
  if (split->parsed())
    return map_status(udsr_split(split_dir.c_str(), f_train, f_val, f_test,
                                 split_seed, split_manifest.c_str()));
  if (degrade->parsed())
    return map_status(
        udsr_degrade(deg_in.c_str(), deg_out.c_str(), deg_seed, opt(deg_opts)));
  if (filter->parsed()) {
    int kept = 0, total = 0;
    int rc = udsr_filter(filt_in.c_str(), opt(filt_data), filt_out.c_str(),
                         filt_thresh, &kept, &total);
    if (rc == UDSR_OK)
      std::printf("kept %d of %d frames at threshold %g\n", kept, total, filt_thresh);
    return map_status(rc);
  }
  if (upsample->parsed())
    return map_status(udsr_upsample(up_in.c_str(), up_out.c_str(), up_factor));
  if (tg->parsed())
    return map_status(udsr_train_guidance(g_args.manifest.c_str(), opt(g_args.data),
                                          opt(g_args.config), opt(g_args.net_config),
                                          g_args.out.c_str(), opt(g_args.log)));
  if (tt->parsed())
    return map_status(udsr_train_translation(
        t_args.manifest.c_str(), opt(t_args.data), opt(t_args.config),
        opt(t_args.net_config), t_args.out.c_str(), opt(t_args.log)));
  if (te->parsed())
    return map_status(udsr_train_enhancement(
        e_args.manifest.c_str(), opt(e_args.data), te_translation.c_str(),
        te_guidance.c_str(), opt(e_args.config), opt(e_args.net_config),
        e_args.out.c_str(), opt(e_args.log)));
  if (fs->parsed())
    return map_status(udsr_finetune_sr(
        s_args.manifest.c_str(), opt(s_args.data), fs_translation.c_str(),
        fs_guidance.c_str(), fs_enhancement.c_str(), opt(s_args.config),
        opt(s_args.net_config), s_args.out.c_str(), opt(s_args.log)));
  if (infer->parsed())
    return map_status(udsr_infer(inf_rgb.c_str(), inf_depth.c_str(),
                                 inf_guidance.c_str(), inf_enh.c_str(),
                                 opt(inf_net), inf_factor, inf_out.c_str()));
  if (eval->parsed()) {
    udsr_depth* pred = udsr_depth_load(ev_pred.c_str());
    udsr_depth* gt = udsr_depth_load(ev_gt.c_str());
    udsr_depth* input = udsr_depth_load(ev_input.c_str());
    int rc = UDSR_ERR_RUNTIME;
    if (pred && gt && input) {
      udsr_report* rep = udsr_evaluate(pred, gt, input);
      if (rep) {
        char buf[1024];
        if (ev_json) {
          udsr_report_json(rep, buf, sizeof(buf));
          std::printf("%s\n", buf);
        } else {
          udsr_report_csv(rep, 1, buf, sizeof(buf));
          std::fputs(buf, stdout);
        }
        rc = udsr_eval_files(ev_pred.c_str(), ev_gt.c_str(), ev_input.c_str(),
                             opt(ev_csv), opt(ev_json_path));
        udsr_report_free(rep);
      }
    }
    udsr_depth_free(pred);
    udsr_depth_free(gt);
    udsr_depth_free(input);
    return map_status(rc);
  }
  if (gradcheck->parsed()) {
    double max_err = 0.0;
    int rc = udsr_gradcheck(gc_tol, &max_err);
    std::printf("gradcheck max relative error: %.3e (tolerance %.3e)\n", max_err,
                gc_tol);
    return map_status(rc);
  }
  return 2;
}
