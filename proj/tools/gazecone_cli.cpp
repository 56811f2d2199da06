// gazecone: data generation, gradient checks, training, evaluation and heatmap export.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gazecone/config.hpp"
#include "gazecone/errors.hpp"
#include "gazecone/eval.hpp"
#include "gazecone/gradcheck.hpp"
#include "gazecone/serialize.hpp"
#include "gazecone/synth.hpp"
#include "gazecone/train.hpp"

namespace fs = std::filesystem;
using namespace gazecone;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kUsage = 2, kIo = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::set<std::string> keys_of(const config::KeyValues& kv) {
  std::set<std::string> out;
  for (const auto& [k, v] : kv) out.insert(k);
  return out;
}

// One config file may hold generation and training keys; each command takes
// the keys it understands. Keys known to neither are rejected.
config::KeyValues select(const config::KeyValues& kv, const std::set<std::string>& wanted) {
  const auto gen = keys_of(config::describe(synth::GenConfig{}));
  const auto trn = keys_of(config::describe(learning::TrainConfig{}));
  config::KeyValues out;
  for (const auto& [k, v] : kv) {
    if (!gen.contains(k) && !trn.contains(k)) throw ConfigError("unknown configuration key '" + k + "'");
    if (wanted.contains(k)) out.emplace_back(k, v);
  }
  return out;
}

config::KeyValues parse_sets(const std::vector<std::string>& sets) {
  config::KeyValues out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

// Built-in default, then config file, then explicit flags.
template <class Cfg>
Cfg resolve(const std::string& config_path, const std::vector<std::string>& sets, config::KeyValues flags) {
  Cfg cfg;
  const auto wanted = keys_of(config::describe(cfg));
  if (!config_path.empty()) config::apply(select(config::read(config_path), wanted), cfg);
  config::apply(select(parse_sets(sets), wanted), cfg);
  config::apply(flags, cfg);
  cfg.validate();
  return cfg;
}

void echo(const std::string& title, const config::KeyValues& kv) {
  std::cout << "# " << title << "\n";
  config::print(kv, std::cout);
}

fs::path test_path_for(const fs::path& train_path) {
  fs::path p = train_path;
  p.replace_extension();
  p += ".test.gzds";
  return p;
}

void check_index(std::size_t index, std::size_t size) {
  if (index >= size)
    throw UsageError("index " + std::to_string(index) + " out of range for " + std::to_string(size) + " samples");
}

void print_prediction(const model::GazePrediction& p, const Sample& s, std::size_t index) {
  std::cout << std::fixed << std::setprecision(4) << "sample " << index << ": predicted (" << p.point.x() << ", "
            << p.point.y() << ")";
  if (s.gaze)
    std::cout << " truth (" << s.gaze->x() << ", " << s.gaze->y() << ") auc " << eval::auc(p.density, *s.gaze)
              << " l2 " << eval::l2(p.point, *s.gaze);
  else
    std::cout << " truth NO_GAZE";
  std::cout << " gamma " << p.gamma << " no_gaze " << p.no_gaze << "\n";
  std::cout.unsetf(std::ios::floatfield);
}

void export_map(const geometry::SpatialMap& map, const fs::path& pgm) {
  fs::path csv = pgm;
  csv.replace_extension(".csv");
  io::write_pgm(map, pgm);
  io::write_map_csv(map, csv);
  std::cout << "wrote " << pgm.string() << " and " << csv.string() << "\n";
}

std::string model_row_name(const model::GazeModel& m) {
  return "model:" + geometry::to_string(m.config().family);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gazecone: gaze following across views"};
  app.require_subcommand(1);

  // gen-data
  std::string gd_config, gd_out, gd_test_out;
  std::uint64_t gd_seed = 0;
  std::vector<std::string> gd_sets;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic train/test split");
  gen->add_option("--config", gd_config, "key=value config file")->check(CLI::ExistingFile);
  gen->add_option("--out", gd_out, "training set path")->required();
  gen->add_option("--test-out", gd_test_out, "test set path (default <out>.test.gzds)");
  gen->add_option("--seed", gd_seed, "stream seed")->required();
  gen->add_option("--set", gd_sets, "override a config key (key=value)");

  // gradcheck
  std::string gc_component;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gc->add_option("--component", gc_component, "component name or 'all'")->required();
  gc->add_option("--seed", gc_seed, "seed");

  // train
  std::string tr_config, tr_data, tr_out;
  std::optional<std::uint64_t> tr_seed;
  std::vector<std::string> tr_sets;
  auto* trn = app.add_subcommand("train", "train a model");
  trn->add_option("--config", tr_config, "key=value config file")->check(CLI::ExistingFile);
  trn->add_option("--data", tr_data, "training set")->required();
  trn->add_option("--out", tr_out, "checkpoint path")->required();
  trn->add_option("--seed", tr_seed, "model and shuffling seed");
  trn->add_option("--set", tr_sets, "override a config key (key=value)");

  // eval
  std::string ev_model, ev_data, ev_out, ev_train, ev_config;
  std::vector<std::string> ev_sets;
  bool ev_baselines = false, ev_ablations = false;
  std::uint64_t ev_seed = 0;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--model", ev_model, "checkpoint")->required();
  ev->add_option("--data", ev_data, "evaluation set")->required();
  ev->add_option("--out", ev_out, "report CSV")->required();
  ev->add_flag("--baselines", ev_baselines, "add center, random and fixed-bias rows");
  ev->add_flag("--ablations", ev_ablations, "train and add one row per other transform family");
  ev->add_option("--train-data", ev_train, "training set for fixed bias and ablations");
  ev->add_option("--config", ev_config, "training config for ablations")->check(CLI::ExistingFile);
  ev->add_option("--set", ev_sets, "override a training config key (key=value)");
  ev->add_option("--seed", ev_seed, "random baseline seed");

  // predict
  std::string pr_model, pr_data, pr_out;
  std::size_t pr_index = 0;
  auto* pr = app.add_subcommand("predict", "predict one sample and write its heatmap");
  pr->add_option("--model", pr_model, "checkpoint")->required();
  pr->add_option("--data", pr_data, "dataset")->required();
  pr->add_option("--index", pr_index, "sample index")->required();
  pr->add_option("--out", pr_out, "PGM path; a CSV of cell values is written beside it")->required();

  // export-heatmap
  std::string ex_model, ex_data, ex_dir;
  std::size_t ex_first = 0, ex_count = 1;
  auto* ex = app.add_subcommand("export-heatmap", "write heatmaps for a range of samples");
  ex->add_option("--model", ex_model, "checkpoint")->required();
  ex->add_option("--data", ex_data, "dataset")->required();
  ex->add_option("--out-dir", ex_dir, "output directory")->required();
  ex->add_option("--first", ex_first, "first sample index");
  ex->add_option("--count", ex_count, "number of samples")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) {
      const auto cfg = resolve<synth::GenConfig>(gd_config, gd_sets, {});
      echo("gen-data", config::describe(cfg));
      std::cout << "seed=" << gd_seed << "\n";
      const auto split = synth::generate_split(gd_seed, cfg);
      const fs::path test_out = gd_test_out.empty() ? test_path_for(gd_out) : fs::path(gd_test_out);
      io::write_dataset(split.train, gd_out);
      io::write_dataset(split.test, test_out);
      std::cout << "wrote " << split.train.size() << " samples to " << gd_out << " and " << split.test.size()
                << " to " << test_out.string() << "\n";
      return kOk;
    }

    if (*gc) {
      std::vector<std::string> comps{gc_component};
      if (gc_component == "all") comps = learning::gradcheck_components();
      std::cout << "# gradcheck\ncomponent=" << gc_component << "\nseed=" << gc_seed << "\n";
      bool ok = true;
      for (const auto& c : comps) {
        const auto report = learning::gradcheck(c, gc_seed);
        report.print(std::cout);
        ok = ok && report.passed();
      }
      std::cout << (ok ? "PASS" : "FAIL") << "\n";
      return ok ? kOk : kCheckFailed;
    }

    if (*trn) {
      config::KeyValues flags;
      if (tr_seed) flags.emplace_back("seed", std::to_string(*tr_seed));
      const auto cfg = resolve<learning::TrainConfig>(tr_config, tr_sets, flags);
      echo("train", config::describe(cfg));
      const auto data = io::read_dataset(tr_data);
      if (data.empty()) throw InputError("training set is empty");
      model::GazeModel m(cfg.model_config(data[0].source.dim(1), data[0].head.dim(1)));
      const auto result = learning::train(m, data, cfg, [](const learning::EpochMetrics& e) {
        std::cout << "epoch " << e.epoch << " " << e.split << " loss " << e.loss << " auc " << e.auc << " l2 "
                  << e.l2 << " ap " << e.ap << "\n";
      });
      io::save_checkpoint(m, tr_out);
      fs::path log = tr_out;
      log.replace_extension(".csv");
      learning::write_metrics_csv(result.log, log);
      std::cout << "epochs " << result.epochs_run << " best " << result.best_epoch << " loss "
                << result.initial_loss << " -> " << result.final_loss << "\nwrote " << tr_out << " and "
                << log.string() << "\n";
      return kOk;
    }

    if (*ev) {
      const auto m = io::load_checkpoint(ev_model);
      const auto data = io::read_dataset(ev_data);
      std::vector<Sample> train_set;
      if (!ev_train.empty()) train_set = io::read_dataset(ev_train);
      if (ev_ablations && train_set.empty()) throw UsageError("--ablations requires a non-empty --train-data");

      const auto& mc = m.config();
      std::cout << "# eval\nmodel=" << ev_model << "\ndata=" << ev_data << "\nfamily="
                << geometry::to_string(mc.family) << "\nextension=" << (mc.extension ? "true" : "false")
                << "\nbaselines=" << ev_baselines << "\nablations=" << ev_ablations << "\n";

      std::vector<eval::PredictionSet> sets;
      sets.push_back({model_row_name(m), eval::predict_all(m, data), mc.extension});

      if (ev_ablations) {
        config::KeyValues flags{{"family", geometry::to_string(mc.family)},
                                {"extension", mc.extension ? "true" : "false"},
                                {"k", std::to_string(mc.k)}};
        auto base = resolve<learning::TrainConfig>(ev_config, ev_sets, flags);
        echo("ablation training", config::describe(base));
        for (auto fam : {geometry::TransformFamily::identity, geometry::TransformFamily::translation,
                         geometry::TransformFamily::rotation_x, geometry::TransformFamily::vertical_rot_trans,
                         geometry::TransformFamily::rot3_trans, geometry::TransformFamily::full_affine}) {
          if (fam == mc.family) continue;
          auto cfg = base;
          cfg.family = fam;
          model::GazeModel am(cfg.model_config(train_set[0].source.dim(1), train_set[0].head.dim(1)));
          std::cout << "training ablation " << geometry::to_string(fam) << "\n";
          learning::train(am, train_set, cfg);
          sets.push_back({"ablation:" + geometry::to_string(fam), eval::predict_all(am, data), mc.extension});
        }
      }

      if (ev_baselines) {
        sets.push_back({"center", eval::predict_all(eval::Baseline::center(), data)});
        sets.push_back({"random", eval::predict_all(eval::Baseline::random(ev_seed), data)});
        if (train_set.empty()) {
          std::cerr << "note: fixed_bias skipped (no --train-data)\n";
        } else {
          auto fb = eval::Baseline::fixed_bias();
          fb.fit(train_set);
          sets.push_back({"fixed_bias", eval::predict_all(fb, data)});
        }
      }

      const auto report = eval::run_eval(sets, data);
      report.write_table(std::cout);
      std::ofstream out(ev_out);
      if (!out) throw IoError("cannot write " + ev_out);
      report.write_csv(out);
      if (!out) throw IoError("write failed: " + ev_out);
      std::cout << "wrote " << ev_out << "\n";
      return kOk;
    }

    if (*pr) {
      const auto m = io::load_checkpoint(pr_model);
      const auto data = io::read_dataset(pr_data);
      std::cout << "# predict\nmodel=" << pr_model << "\ndata=" << pr_data << "\nindex=" << pr_index << "\n";
      check_index(pr_index, data.size());
      const auto p = m.predict(data[pr_index]);
      print_prediction(p, data[pr_index], pr_index);
      export_map(p.density, pr_out);
      return kOk;
    }

    if (*ex) {
      const auto m = io::load_checkpoint(ex_model);
      const auto data = io::read_dataset(ex_data);
      std::cout << "# export-heatmap\nmodel=" << ex_model << "\ndata=" << ex_data << "\nfirst=" << ex_first
                << "\ncount=" << ex_count << "\nout-dir=" << ex_dir << "\n";
      check_index(ex_first, data.size());
      check_index(ex_first + ex_count - 1, data.size());
      fs::create_directories(ex_dir);
      for (std::size_t i = ex_first; i < ex_first + ex_count; ++i) {
        const auto p = m.predict(data[i]);
        print_prediction(p, data[i], i);
        export_map(p.density, fs::path(ex_dir) / ("heatmap_" + std::to_string(i) + ".pgm"));
      }
      return kOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsage;
}
