// refvos: referring video object segmentation on a synthetic benchmark.
// Subcommands: dataset build, train, eval, infer, selfcheck.
#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "refvos/selfcheck.hpp"
#include "refvos/train.hpp"

namespace fs = std::filesystem;
using namespace refvos;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  int precision = 0;  // 0: leave as configured
  std::uint64_t seed = 0;
  bool seed_set = false;
};

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg.load_file(o.config_path);
  cfg.apply_overrides(o.overrides);
  if (o.precision != 0) cfg.set("precision", std::to_string(o.precision));
  if (o.seed_set) cfg.set("train.seed", std::to_string(o.seed));
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "key=value config file");
  cmd->add_option("--set", o.overrides, "override config entries (key=value)")->take_all();
  cmd->add_option("--precision", o.precision, "compute precision")->check(CLI::IsMember({32, 64}));
  cmd->add_option("--seed", o.seed, "run seed")->each([&o](const std::string&) { o.seed_set = true; });
}

Model load_model(const RunConfig& cfg, const std::string& ckpt) {
  set_precision(cfg.precision == 64 ? Precision::f64 : Precision::f32);
  Model model(cfg);
  load_checkpoint(ckpt, model.params());
  return model;
}

std::string sibling_config(const std::string& ckpt) {
  fs::path p = fs::path(ckpt).parent_path() / "config.txt";
  if (!fs::exists(p)) throw InputError("no --config given and " + p.string() + " not found");
  return p.string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"referring video object segmentation (text/audio) on synthetic clips"};
  app.require_subcommand(1);

  // dataset build
  auto* dataset = app.add_subcommand("dataset", "dataset utilities");
  dataset->require_subcommand(1);
  auto* build = dataset->add_subcommand("build", "generate a synthetic dataset");
  data::DatasetConfig dcfg;
  build->add_option("--out", dcfg.out, "output directory")->required();
  build->add_option("--n-train", dcfg.n_train, "training clips");
  build->add_option("--n-val", dcfg.n_val, "validation clips");
  build->add_option("--seed", dcfg.seed, "base seed");
  build->add_option("--frames", dcfg.frames, "frames per clip");
  build->add_option("--canvas", dcfg.canvas, "canvas size");
  build->add_option("--modality", dcfg.modality, "reference modality tag (text|audio)");
  build->add_flag("--pseudo-video", dcfg.pseudo, "warp a still scene instead of analytic motion");
  build->add_flag("--force", dcfg.force, "write into a non-empty directory");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  CommonOpts train_opts;
  std::string train_data, train_out;
  int train_steps = -1;
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--data", train_data, "dataset root")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--steps", train_steps, "total training steps (overrides epochs)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  CommonOpts eval_opts;
  std::string eval_ckpt, eval_data, eval_split = "val", eval_out;
  bool gt_bypass = false;
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file");
  eval_cmd->add_option("--data", eval_data, "dataset root")->required();
  eval_cmd->add_option("--split", eval_split, "dataset split");
  eval_cmd->add_option("--out", eval_out, "also write the report to this file");
  eval_cmd->add_flag("--gt-bypass", gt_bypass, "score ground truth against itself (harness sanity)");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "predict masks and overlays for one clip");
  CommonOpts infer_opts;
  std::string infer_ckpt, infer_clip_dir, infer_out;
  add_common(infer_cmd, infer_opts);
  infer_cmd->add_option("--checkpoint", infer_ckpt, "checkpoint file")->required();
  infer_cmd->add_option("--clip", infer_clip_dir, "clip directory")->required();
  infer_cmd->add_option("--out", infer_out, "output directory")->required();

  // selfcheck
  auto* selfcheck_cmd = app.add_subcommand("selfcheck", "run gradient and oracle suites");

  try {
    app.parse(argc, argv);

    if (*build) {
      data::dataset_build(dcfg, std::cout);
      return 0;
    }
    if (*train_cmd) {
      RunConfig cfg = resolve_config(train_opts);
      cfg.data_root = train_data;
      if (train_steps >= 0) cfg.steps = train_steps;
      fs::create_directories(train_out);
      std::ofstream log_file(fs::path(train_out) / "train.log");

      struct Tee : std::streambuf {
        std::streambuf *a, *b;
        Tee(std::streambuf* a_, std::streambuf* b_) : a(a_), b(b_) {}
        int overflow(int c) override {
          if (c != EOF) {
            a->sputc(static_cast<char>(c));
            b->sputc(static_cast<char>(c));
          }
          return c;
        }
        int sync() override {
          a->pubsync();
          b->pubsync();
          return 0;
        }
      } tee_buf(std::cout.rdbuf(), log_file.rdbuf());
      std::ostream tee(&tee_buf);

      train::TrainResult res = train::train_run(cfg, train_out, tee);
      tee << "done: steps=" << res.steps_run << " loss=" << res.final_loss
          << " checkpoint=" << res.checkpoint_path << "\n";
      return 0;
    }
    if (*eval_cmd) {
      RunConfig cfg;
      if (!eval_opts.config_path.empty())
        cfg.load_file(eval_opts.config_path);
      else if (!eval_ckpt.empty())
        cfg.load_file(sibling_config(eval_ckpt));
      cfg.apply_overrides(eval_opts.overrides);
      if (eval_opts.precision != 0) cfg.set("precision", std::to_string(eval_opts.precision));
      cfg.eval_split = eval_split;

      std::vector<data::ClipData> clips;
      for (const auto& dir : data::list_clips(eval_data, eval_split)) clips.push_back(data::load_clip(dir));
      const int h = clips[0].frames.dim(1), w = clips[0].frames.dim(2);
      const int tol = train::resolve_boundary_tolerance(cfg, h, w);

      train::EvalReport rep;
      if (gt_bypass) {
        rep = train::evaluate_gt_bypass(clips, tol);
      } else {
        if (eval_ckpt.empty()) throw InputError("eval: --checkpoint required unless --gt-bypass");
        Model model = load_model(cfg, eval_ckpt);
        rep = train::evaluate(model, clips, tol, cfg.workers);
      }
      std::cout << rep.table() << rep.keyvals();
      if (!eval_out.empty()) {
        std::ofstream out(eval_out);
        out << rep.table() << rep.keyvals();
      }
      return 0;
    }
    if (*infer_cmd) {
      RunConfig cfg;
      if (!infer_opts.config_path.empty())
        cfg.load_file(infer_opts.config_path);
      else
        cfg.load_file(sibling_config(infer_ckpt));
      cfg.apply_overrides(infer_opts.overrides);
      if (infer_opts.precision != 0) cfg.set("precision", std::to_string(infer_opts.precision));
      Model model = load_model(cfg, infer_ckpt);
      data::ClipData clip = data::load_clip(infer_clip_dir);
      train::infer_clip(model, clip, infer_out);
      std::cout << "wrote " << clip.frames.dim(0) << " masks and overlays to " << infer_out << "\n";
      return 0;
    }
    if (*selfcheck_cmd) {
      bool ok = selfcheck::run_all(std::cout);
      if (!ok) throw NumericError("selfcheck failed");
      std::cout << "selfcheck passed\n";
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ContractError& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
