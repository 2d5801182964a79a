// joined: synthetic data, target generation, training, inference, evaluation
// and plotting for the two-stage fundus pipeline.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"

#include "joined/config.hpp"
#include "joined/data_io.hpp"
#include "joined/metrics.hpp"
#include "joined/nn/checkpoint.hpp"
#include "joined/pipeline.hpp"
#include "plot.hpp"

namespace fs = std::filesystem;
using namespace joined;

namespace {

struct Globals {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string device;
  std::vector<std::string> overrides;
  bool print_config = false;
};

config::RunConfig resolve(const Globals& g) {
  config::RunConfig cfg;
  if (!g.config_file.empty()) cfg = config::load(g.config_file);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config::set(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (!g.device.empty()) config::set(cfg, "general.device", g.device);
  cfg.validate();
  if (cfg.device == "accelerator") {
    throw ConfigError("general.device: no accelerator backend is built in; use cpu");
  }
  return cfg;
}

std::vector<FundusSample> load(const std::string& dir) {
  return data_io::load_dataset(data_io::scan_dataset(dir));
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + file.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.8g", v);
  return buf;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint optic disc/cup segmentation and fovea localization"};
  app.require_subcommand(0, 1);
  Globals g;
  app.add_option("--config", g.config_file, "Key-value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--device", g.device, "cpu or accelerator");
  app.add_option("--set", g.overrides, "Override a config key: section.key=value");
  app.add_flag("--print-config", g.print_config, "Print the resolved config and exit");

  int synth_n = 8;
  int synth_size = 256;
  auto* synth = app.add_subcommand("synth", "Write a synthetic fundus dataset");
  synth->add_option("--n", synth_n, "Number of images")->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_size, "Image side length")->check(CLI::PositiveNumber);

  std::string data_dir;
  auto* gen = app.add_subcommand("gen-targets", "Write distance/heatmap/one-hot targets (JND1)");
  gen->add_option("--data", data_dir, "Dataset root");

  auto* tcoarse = app.add_subcommand("train-coarse", "Train the joint coarse network");
  tcoarse->add_option("--data", data_dir, "Dataset root");

  std::string coarse_ckpt, seg_ckpt, loc_ckpt;
  auto* tseg = app.add_subcommand("train-fine-seg", "Train the fine segmenter");
  tseg->add_option("--data", data_dir, "Dataset root");
  tseg->add_option("--coarse", coarse_ckpt, "Coarse checkpoint directory")->required();

  auto* tloc = app.add_subcommand("train-fine-loc", "Train the fine fovea localizer");
  tloc->add_option("--data", data_dir, "Dataset root");
  tloc->add_option("--coarse", coarse_ckpt, "Coarse checkpoint directory")->required();

  auto* infer = app.add_subcommand("infer", "Predict masks and landmarks");
  infer->add_option("--data", data_dir, "Dataset root (images/)");
  infer->add_option("--coarse", coarse_ckpt, "Coarse checkpoint directory")->required();
  infer->add_option("--fine-seg", seg_ckpt, "Fine segmenter checkpoint directory");
  infer->add_option("--fine-loc", loc_ckpt, "Fine localizer checkpoint directory");

  std::string pred_dir, gt_dir, method = "JOINED";
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--pred", pred_dir, "Prediction directory")->required();
  eval->add_option("--gt", gt_dir, "Ground-truth dataset root")->required();
  eval->add_option("--method", method, "Row label in the table");

  std::string log_csv;
  auto* plot = app.add_subcommand("plot", "Loss curves and per-image panels");
  plot->add_option("--log", log_csv, "Loss CSV to draw");
  plot->add_option("--data", data_dir, "Dataset root for panels");
  plot->add_option("--coarse", coarse_ckpt, "Coarse checkpoint for panels");
  plot->add_option("--fine-seg", seg_ckpt, "Fine segmenter checkpoint for panels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto cfg = resolve(g);
    if (g.print_config) {
      std::cout << config::render(cfg);
      return 0;
    }
    if (!app.get_subcommands().size()) {
      std::cout << app.help();
      return 0;
    }
    const fs::path out = cfg.out_dir;
    const std::string data = data_dir.empty() ? cfg.data_dir : data_dir;

    if (*synth) {
      data_io::SyntheticSpec spec;
      spec.seed = cfg.seed;
      spec.size = synth_size;
      data_io::generate_synthetic(spec, synth_n, out);
      log_line("wrote " + std::to_string(synth_n) + " synthetic images to " + out.string());
    } else if (*gen) {
      const auto samples = load(data);
      const int size = cfg.coarse.input_size;
      fs::create_directories(out);
      for (const auto& s : samples) {
        const auto item = pipeline::prepare_coarse(s, size, cfg.inference.fov_floor);
        const auto t = pipeline::make_coarse_targets(item, size / cfg.coarse.sigma_divisor);
        data_io::write_jnd(out / (s.image_id + "_distance.jnd"), t.distance.values);
        data_io::write_jnd(out / (s.image_id + "_heatmap.jnd"), t.detection.heatmap.channels);
        data_io::write_jnd(out / (s.image_id + "_heatmap_mask.jnd"), t.detection.mask.channels);
        if (t.onehot) data_io::write_jnd(out / (s.image_id + "_onehot.jnd"), *t.onehot);
      }
      log_line("wrote targets for " + std::to_string(samples.size()) + " images to " +
               out.string());
    } else if (*tcoarse) {
      const auto samples = load(data);
      nn::JsdmNet<float> net(cfg.coarse.spec(), cfg.seed);
      if (!cfg.coarse.pretrained_encoder.empty()) {
        const auto n = nn::load_encoder_weights(cfg.coarse.pretrained_encoder, net.state());
        log_line("loaded " + std::to_string(n) + " encoder tensors");
      }
      fs::create_directories(out);
      std::ofstream csv(out / "coarse_loss.csv");
      csv << "epoch,l_p,l_d,l_s,total\n";
      const auto t0 = std::chrono::steady_clock::now();
      pipeline::train_coarse(net, samples, cfg, [&](const pipeline::EpochLog& e) {
        const auto& r = e.report;
        auto term = [&](losses::Branch b, double v) {
          return r.active.contains(b) ? fmt(v) : std::string();
        };
        csv << e.epoch << ","
            << term(losses::Branch::Predictor, r.l_p) << ","
            << term(losses::Branch::Detector, r.l_d) << ","
            << term(losses::Branch::Segmentor, r.l_s) << "," << fmt(r.total) << "\n";
        csv.flush();
        const double s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log_line("epoch " + std::to_string(e.epoch) + " " + r.active.str() + " total " +
                 fmt(r.total) + " (" + fmt(s) + " s)");
      });
      nn::save(out / "coarse", net);
      write_text(out / "config.toml", config::render(cfg));
    } else if (*tseg || *tloc) {
      const auto samples = load(data);
      auto coarse = nn::load_jsdm(coarse_ckpt);
      const auto ctx = pipeline::fine_context(*coarse, samples, cfg);
      fs::create_directories(out);
      const std::string name = *tseg ? "fine_seg" : "fine_loc";
      std::ofstream csv(out / (name + "_loss.csv"));
      csv << "epoch,loss\n";
      auto cb = [&](const pipeline::FineEpochLog& e) {
        csv << e.epoch << "," << fmt(e.loss) << "\n";
        csv.flush();
        log_line(name + " epoch " + std::to_string(e.epoch) + " loss " + fmt(e.loss));
      };
      if (*tseg) {
        nn::FsmNet<float> fsm(cfg.fine_seg.spec(), cfg.seed + 1);
        pipeline::train_fine_seg(fsm, samples, ctx, cfg, cb);
        nn::save(out / name, fsm);
      } else {
        nn::FlmNet<float> flm(cfg.fine_loc.spec(), cfg.seed + 2);
        pipeline::train_fine_loc(flm, samples, ctx, cfg, cb);
        nn::save(out / name, flm);
      }
      write_text(out / (name + "_config.toml"), config::render(cfg));
    } else if (*infer) {
      const auto samples = load(data);
      auto coarse = nn::load_jsdm(coarse_ckpt);
      std::unique_ptr<nn::FsmNet<float>> fsm;
      std::unique_ptr<nn::FlmNet<float>> flm;
      if (!seg_ckpt.empty()) fsm = nn::load_fsm(seg_ckpt);
      if (!loc_ckpt.empty()) flm = nn::load_flm(loc_ckpt);
      const pipeline::Models models{coarse.get(), fsm.get(), flm.get()};
      const auto preds = pipeline::infer_all(models, samples, cfg);
      data_io::save_predictions(out, preds);
      log_line("wrote " + std::to_string(preds.size()) + " predictions to " + out.string());
    } else if (*eval) {
      const auto preds = data_io::load_predictions(pred_dir);
      const auto gts = data_io::ground_truth(load(gt_dir));
      const auto rec = metrics::evaluate(preds, gts);
      const std::string table = metrics::render_table(rec, method);
      std::cout << table;
      for (const auto& [metric, n] : rec.skipped) {
        if (n) std::cout << "skipped " << metric << ": " << n << "\n";
      }
      for (const auto& id : rec.unmatched_predictions) std::cout << "unmatched prediction: " << id << "\n";
      for (const auto& id : rec.unmatched_ground_truth) std::cout << "unmatched ground truth: " << id << "\n";
      if (!g.out.empty()) {
        write_text(out / "report.csv", metrics::render_csv(rec));
        write_text(out / "table.md", table);
      }
    } else if (*plot) {
      fs::create_directories(out);
      bool did = false;
      if (!log_csv.empty()) {
        const fs::path png = out / (fs::path(log_csv).stem().string() + ".png");
        tools::plot_loss_csv(log_csv, png);
        log_line("wrote " + png.string());
        did = true;
      }
      if (!coarse_ckpt.empty()) {
        const auto samples = load(data);
        auto coarse = nn::load_jsdm(coarse_ckpt);
        std::unique_ptr<nn::FsmNet<float>> fsm;
        if (!seg_ckpt.empty()) fsm = nn::load_fsm(seg_ckpt);
        for (const auto& s : samples) {
          const fs::path png = out / (s.image_id + "_panel.png");
          tools::plot_panel(*coarse, fsm.get(), s, cfg, png);
        }
        log_line("wrote " + std::to_string(samples.size()) + " panels to " + out.string());
        did = true;
      }
      if (!did) throw ConfigError("plot: give --log and/or --coarse with --data");
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "error: input: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
