#include "saf/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "saf/config.hpp"
#include "saf/csv.hpp"
#include "saf/error.hpp"
#include "saf/metrics.hpp"
#include "saf/model.hpp"
#include "saf/ndf_io.hpp"
#include "saf/synth.hpp"
#include "saf/train.hpp"

namespace saf::cli {
namespace {

namespace fs = std::filesystem;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void close_out(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw IoError("write failed: " + path.string());
}

EpochSet split_of(const EpochSet& set, Split split, const std::string& what) {
  EpochSet out = set.filter(split);
  if (out.empty()) throw ValidationError("manifest has no " + std::string(to_string(split)) + " epochs (" + what + ")");
  return out;
}

AsrModel fit_asr_for(const Recording& calib_raw, const CliConfig& cfg) {
  Recording calib = calib_raw;
  if (calib.sample_rate_hz != cfg.pipeline.target_rate_hz) calib = resample(calib, cfg.pipeline.target_rate_hz);
  return asr_fit(select_calibration(filter_stages(calib, cfg.pipeline), cfg.asr), cfg.asr);
}

struct SynthArgs {
  std::string config, out;
  bool raw = false;
};

void run_synth(const SynthArgs& a) {
  const CliConfig cfg = load_config(a.config);
  synth::DatasetOptions opts;
  opts.pipeline = cfg.pipeline;
  opts.asr = cfg.asr;
  opts.apply_asr = cfg.asr_enabled;
  opts.holdout_subject = cfg.holdout_subject;
  ensure_dir(a.out);
  synth::generate_dataset(cfg.synth, opts, a.out);
  if (a.raw) {
    ensure_dir(fs::path(a.out) / "raw");
    for (std::size_t j = 0; j < cfg.synth.subjects; ++j) {
      for (int y = 0; y < 2; ++y) {
        const auto name = synth::subject_id(j) + "_c" + std::to_string(y) + ".safr";
        write_recording(synth::generate_subject_recording(cfg.synth, j, y), fs::path(a.out) / "raw" / name);
      }
    }
  }
}

struct PreprocessArgs {
  std::string config, in, subject, out, asr_calib;
  int y = 0;
};

void run_preprocess(const PreprocessArgs& a) {
  const CliConfig cfg = load_config(a.config);
  if (a.y != 0 && a.y != 1) throw ValidationError("--class must be 0 or 1");
  if (a.subject.empty() || a.subject.find(',') != std::string::npos) {
    throw ValidationError("--subject must be non-empty and free of commas");
  }
  const Recording rec = read_recording(a.in);
  PipelineOptions popts;
  AsrModel asr;
  if (cfg.asr_enabled) {
    asr = fit_asr_for(a.asr_calib.empty() ? rec : read_recording(a.asr_calib), cfg);
    popts.asr = &asr;
    popts.asr_config = cfg.asr;
  }
  const auto epochs = preprocess_pipeline(rec, cfg.pipeline, a.y, a.subject, popts);
  ensure_dir(a.out);
  Manifest manifest;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "_c%d_%04zu.ndf", a.y, i);
    const std::string file = a.subject + name;
    write_ndf(epochs[i], fs::path(a.out) / file);
    manifest.rows.push_back({file, a.subject, a.y, Split::kNone});
  }
  write_manifest(manifest, fs::path(a.out) / "manifest.csv");
}

struct TrainArgs {
  std::string config, manifest, out, log;
  double lambda_mi = 0.0, lambda_grl = 0.0;
  bool baseline = false;
};

void run_train(const TrainArgs& a) {
  const CliConfig cfg = load_config(a.config);
  const auto set = load_manifest(a.manifest).second;
  train::TrainConfig tc = cfg.train;
  tc.swap = cfg.swap;
  train::LossWeights w{a.lambda_mi, a.lambda_grl};
  if (a.baseline) {
    tc.swap.p = 0.0;
    w = {0.0, 0.0};
  }
  auto result = train::train_model(split_of(set, Split::kTrain, "train"), split_of(set, Split::kVal, "train"), tc, w);
  nn::save_checkpoint(result.model, a.out);
  result.log.write_csv(a.log);
  std::cerr << "best epoch " << result.log.best_epoch << " val macro-accuracy " << fmt6(result.log.best_val())
            << '\n';
}

struct GridArgs {
  std::string config, manifest, out;
  std::size_t jobs = 1;
};

void run_grid(const GridArgs& a) {
  const CliConfig cfg = load_config(a.config);
  const auto set = load_manifest(a.manifest).second;
  train::TrainConfig tc = cfg.train;
  tc.swap = cfg.swap;
  train::GridConfig grid = cfg.grid;
  grid.jobs = a.jobs;
  const auto result =
      train::grid_search(split_of(set, Split::kTrain, "grid"), split_of(set, Split::kVal, "grid"), tc, grid);
  result.write_csv(a.out);
  std::cerr << "best lambda_mi " << fmt6(result.best.lambda_mi) << " lambda_grl " << fmt6(result.best.lambda_grl)
            << " val macro-accuracy " << fmt6(result.best_val) << '\n';
}

struct EvalArgs {
  std::string model, manifest, split = "test", out;
};

void run_eval(const EvalArgs& a) {
  auto model = nn::load_checkpoint(a.model);
  const auto set = load_manifest(a.manifest).second;
  const auto part = split_of(set, parse_split(a.split), "eval");
  const auto pred = train::predict(model, part.epochs);
  std::vector<int> truth;
  for (const auto& e : part.epochs) truth.push_back(e.y);
  const auto m = metrics::macro_metrics(metrics::confusion(truth, pred));
  const fs::path path(a.out);
  auto out = open_out(path);
  out << "metric,value\n"
      << "macro_accuracy," << fmt6(m.accuracy) << '\n'
      << "macro_precision," << fmt6(m.precision) << '\n'
      << "macro_recall," << fmt6(m.recall) << '\n'
      << "macro_f1," << fmt6(m.f1) << '\n';
  close_out(out, path);
}

struct AnalyzeArgs {
  std::string manifest, out;
};

void run_analyze(const AnalyzeArgs& a) {
  const auto set = load_manifest(a.manifest).second;
  if (set.empty()) throw ValidationError("manifest has no epochs");
  const auto bands = metrics::bands_for_rate(set.sample_rate_hz());
  const double window = std::min(2.0, static_cast<double>(set.samples()) / set.sample_rate_hz());

  // Mean band power per (subject, class) and per subject, averaged over epochs and channels.
  const std::size_t L = set.num_subjects(), B = bands.size();
  std::vector<double> cell(L * 2 * B, 0.0), subj(L * B, 0.0);
  std::vector<std::size_t> cell_n(L * 2, 0), subj_n(L, 0);
  std::vector<double> series;
  for (const auto& e : set.epochs) {
    const auto s = static_cast<std::size_t>(e.subject_index);
    const auto k = s * 2 + static_cast<std::size_t>(e.y);
    for (std::size_t c = 0; c < e.channels; ++c) {
      const auto ch = e.channel(c);
      series.assign(ch.begin(), ch.end());
      const auto bp = metrics::band_power(metrics::welch_psd(series, e.sample_rate_hz, window), bands);
      for (std::size_t b = 0; b < B; ++b) {
        cell[k * B + b] += bp[b];
        subj[s * B + b] += bp[b];
      }
      ++cell_n[k];
      ++subj_n[s];
    }
  }
  const fs::path dir(a.out);
  ensure_dir(dir);
  {
    const auto path = dir / "psd_bands.csv";
    auto out = open_out(path);
    out << "subject,class,band,power\n";
    for (std::size_t s = 0; s < L; ++s)
      for (std::size_t y = 0; y < 2; ++y) {
        const auto k = s * 2 + y;
        if (cell_n[k] == 0) continue;
        for (std::size_t b = 0; b < B; ++b) {
          out << set.subjects[s] << ',' << y << ',' << bands[b].name << ','
              << fmt6(cell[k * B + b] / static_cast<double>(cell_n[k])) << '\n';
        }
      }
    close_out(out, path);
  }
  {
    const auto path = dir / "cv.csv";
    auto out = open_out(path);
    out << "band,cv\n";
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<double> means;
      for (std::size_t s = 0; s < L; ++s) means.push_back(subj[s * B + b] / static_cast<double>(subj_n[s]));
      out << bands[b].name << ',' << fmt6(metrics::coefficient_of_variation(means)) << '\n';
    }
    close_out(out, path);
  }
  const auto features = metrics::band_power_features(set.epochs, bands, window);
  std::vector<int> groups;
  for (const auto& e : set.epochs) groups.push_back(e.subject_index);
  const auto write_scalar = [&](const char* name, double v) {
    const auto path = dir / name;
    auto out = open_out(path);
    out << fmt6(v) << '\n';
    close_out(out, path);
  };
  write_scalar("silhouette.txt", metrics::silhouette(features, groups));
  write_scalar("fstat.txt", metrics::f_statistic(features, groups));
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Swap-adversarial training toolkit", "saf"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-subject dataset");
  synth->add_option("--config", synth_args.config)->required();
  synth->add_option("--out", synth_args.out)->required();
  synth->add_flag("--raw", synth_args.raw, "Also write the raw recordings");

  PreprocessArgs pre_args;
  auto* pre = app.add_subcommand("preprocess", "Filter, clean and slice one raw recording");
  pre->add_option("--config", pre_args.config)->required();
  pre->add_option("--in", pre_args.in)->required();
  pre->add_option("--subject", pre_args.subject)->required();
  pre->add_option("--class", pre_args.y)->required();
  pre->add_option("--out", pre_args.out)->required();
  pre->add_option("--asr-calib", pre_args.asr_calib);

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train one model");
  tr->add_option("--config", train_args.config)->required();
  tr->add_option("--manifest", train_args.manifest)->required();
  auto* lmi = tr->add_option("--lambda-mi", train_args.lambda_mi);
  auto* lgrl = tr->add_option("--lambda-grl", train_args.lambda_grl);
  tr->add_option("--out", train_args.out)->required();
  tr->add_option("--log", train_args.log)->required();
  auto* base = tr->add_flag("--baseline", train_args.baseline, "No augmentation, no adversary");
  lmi->excludes(base);
  lgrl->excludes(base);

  GridArgs grid_args;
  auto* grid = app.add_subcommand("grid", "Lambda grid search");
  grid->add_option("--config", grid_args.config)->required();
  grid->add_option("--manifest", grid_args.manifest)->required();
  grid->add_option("--out", grid_args.out)->required();
  grid->add_option("--jobs", grid_args.jobs)->check(CLI::PositiveNumber);

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Evaluate a model on one split");
  ev->add_option("--model", eval_args.model)->required();
  ev->add_option("--manifest", eval_args.manifest)->required();
  ev->add_option("--split", eval_args.split);
  ev->add_option("--out", eval_args.out)->required();

  AnalyzeArgs an_args;
  auto* an = app.add_subcommand("analyze", "Band power, CV, silhouette and F statistic");
  an->add_option("--manifest", an_args.manifest)->required();
  an->add_option("--out", an_args.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cerr, std::cerr);
    if (code == 0) return kExitOk;
    std::cerr << app.help();
    return kExitInvalid;
  }

  try {
    if (*synth) {
      run_synth(synth_args);
    } else if (*pre) {
      run_preprocess(pre_args);
    } else if (*tr) {
      if (!train_args.baseline && (lmi->count() == 0 || lgrl->count() == 0)) {
        throw ValidationError("train needs --lambda-mi and --lambda-grl, or --baseline");
      }
      run_train(train_args);
    } else if (*grid) {
      run_grid(grid_args);
    } else if (*ev) {
      run_eval(eval_args);
    } else if (*an) {
      run_analyze(an_args);
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitOk;
}

}  // namespace saf::cli
