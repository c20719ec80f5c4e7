#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "photocon/ablation.hpp"
#include "photocon/config.hpp"
#include "photocon/dataset.hpp"
#include "photocon/error.hpp"
#include "photocon/inference.hpp"
#include "photocon/invariance.hpp"
#include "photocon/matcher.hpp"
#include "photocon/network.hpp"
#include "photocon/parallel.hpp"
#include "photocon/png_io.hpp"
#include "photocon/random.hpp"
#include "photocon/registration.hpp"
#include "photocon/reports.hpp"
#include "photocon/trainer.hpp"

namespace photocon::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  int threads = 0;
  std::string config;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--threads", c.threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  sub->add_option("--config", c.config, "key = value config file");
}

// Config file (if any) applied over the defaults; flags are layered on top by the caller.
ConfigMap read_config(const Common& c) { return c.config.empty() ? ConfigMap{} : load_config(c.config); }

struct Resolved {
  TrainConfig train;
  EccConfig ecc;
};

Resolved resolve(const ConfigMap& cfg) {
  Resolved r;
  apply_config(cfg, r.train, r.ecc);
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os || !(os << text)) throw DataError("cannot write '" + path.string() + "'");
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path sibling(const fs::path& report, const std::string& suffix) {
  fs::path p = report;
  return p.replace_extension(suffix);
}

Json file_ref(const std::string& path) {
  if (path.empty()) return nullptr;
  return {{"path", path}, {"sha256", sha256_file(path)}};
}

std::vector<SceneSet> load_scenes(const std::string& dir) {
  auto scenes = ingest_scene_dir(dir);
  if (scenes.empty()) throw DataError("no scenes under '" + dir + "'");
  return scenes;
}

std::optional<ModelWeights> maybe_weights(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_weights(path);
}

std::vector<fs::path> pngs_in(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no PNG files in '" + dir.string() + "'");
  return files;
}

void print_match(const MatchBenchReport& r) {
  std::printf("%s representation\n", r.transformed ? "transformed" : "raw");
  for (const auto& s : r.sizes)
    std::printf("  size %4d  trials %4d  skipped %3d  AUC %.4f\n", s.patch_size, s.trials, s.skipped, s.roc.auc);
  std::printf("  all             AUC %.4f\n", r.overall.auc);
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Photo-consistent image transform: training, matching and registration"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // prepare
  Common c_prep;
  std::string prep_scenes, prep_out;
  int prep_tpp = 0;
  std::uint64_t prep_seed = 0;
  SamplingConfig prep_cfg;
  auto* prep = app.add_subcommand("prepare", "sample training triplets from a scene directory");
  add_common(prep, c_prep);
  prep->add_option("--scenes", prep_scenes)->required();
  prep->add_option("--out", prep_out)->required();
  prep->add_option("--triplets-per-pair", prep_tpp)->required()->check(CLI::PositiveNumber);
  prep->add_option("--seed", prep_seed);
  prep->add_option("--sigma-p", prep_cfg.sigma_p)->capture_default_str();
  prep->add_option("--shift", prep_cfg.shift_px)->capture_default_str()->check(CLI::PositiveNumber);
  prep->add_option("--patch", prep_cfg.patch)->capture_default_str()->check(CLI::PositiveNumber);

  // synth
  Common c_synth;
  std::string synth_base, synth_out;
  int synth_variants = 4;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "relight base photos into scene sets");
  add_common(synth, c_synth);
  synth->add_option("--base", synth_base)->required();
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--variants", synth_variants)->capture_default_str()->check(CLI::Range(2, 64));
  synth->add_option("--seed", synth_seed);

  // make-bases
  Common c_bases;
  std::string bases_out;
  int bases_count = 20, bases_size = 256;
  std::uint64_t bases_seed = 0;
  auto* bases = app.add_subcommand("make-bases", "write procedural base images");
  add_common(bases, c_bases);
  bases->add_option("--out", bases_out)->required();
  bases->add_option("--count", bases_count)->capture_default_str()->check(CLI::PositiveNumber);
  bases->add_option("--size", bases_size)->capture_default_str()->check(CLI::Range(72, 4096));
  bases->add_option("--seed", bases_seed);

  // train
  Common c_train;
  std::string train_archive, train_out;
  std::uint64_t train_seed = 0;
  int train_epochs = 0;
  bool train_resume = false;
  auto* trn = app.add_subcommand("train", "train the transform on a triplet archive");
  add_common(trn, c_train);
  trn->add_option("--archive", train_archive)->required();
  trn->add_option("--out", train_out)->required();
  trn->add_option("--seed", train_seed, "overrides the config's seed");
  trn->add_option("--epochs", train_epochs, "overrides the config's epochs")->check(CLI::PositiveNumber);
  trn->add_flag("--resume", train_resume, "continue from the checkpoint in --out");

  // transform
  Common c_tf;
  std::string tf_weights, tf_out;
  std::vector<std::string> tf_in;
  bool tf_raw = false;
  auto* tf = app.add_subcommand("transform", "apply trained weights to images");
  add_common(tf, c_tf);
  tf->add_option("--weights", tf_weights)->required();
  tf->add_option("--in", tf_in)->required();
  tf->add_option("--out", tf_out)->required();
  tf->add_flag("--raw", tf_raw, "write unquantized f32 planes (.f32) instead of PNG");

  // diff
  Common c_diff;
  std::string diff_weights, diff_a, diff_b, diff_out;
  std::optional<double> diff_threshold;
  auto* dif = app.add_subcommand("diff", "difference map between two representations");
  add_common(dif, c_diff);
  dif->add_option("--weights", diff_weights)->required();
  dif->add_option("--a", diff_a)->required();
  dif->add_option("--b", diff_b)->required();
  dif->add_option("--threshold", diff_threshold, "change threshold in 8-bit levels");
  dif->add_option("--out", diff_out)->required();

  // eval-match
  Common c_em;
  std::string em_scenes, em_weights, em_out, em_method = "fft";
  MatchBenchConfig em_cfg;
  auto* em = app.add_subcommand("eval-match", "template-matching benchmark");
  add_common(em, c_em);
  em->add_option("--scenes", em_scenes)->required();
  em->add_option("--weights", em_weights);
  em->add_option("--sizes", em_cfg.patch_sizes)->delimiter(',')->capture_default_str();
  em->add_option("--seed", em_cfg.seed);
  em->add_option("--patches", em_cfg.patches_per_scene)->capture_default_str()->check(CLI::PositiveNumber);
  em->add_option("--sigma", em_cfg.sigma_min)->capture_default_str();
  em->add_option("--method", em_method)->check(CLI::IsMember({"fft", "naive"}))->capture_default_str();
  em->add_option("--out", em_out)->required();

  // eval-register
  Common c_er;
  std::string er_scenes, er_weights, er_out;
  RegistrationBenchConfig er_cfg;
  auto* er = app.add_subcommand("eval-register", "ECC registration benchmark");
  add_common(er, c_er);
  er->add_option("--scenes", er_scenes)->required();
  er->add_option("--weights", er_weights);
  er->add_option("--angles", er_cfg.angles)->delimiter(',')->capture_default_str();
  er->add_option("--max-translation", er_cfg.max_translation)->capture_default_str();
  er->add_option("--seed", er_cfg.seed);
  er->add_option("--out", er_out)->required();

  // eval-invariance
  Common c_ei;
  std::string ei_scenes, ei_weights, ei_out;
  InvarianceConfig ei_cfg;
  auto* ei = app.add_subcommand("eval-invariance", "photo-consistency and discriminability measurements");
  add_common(ei, c_ei);
  ei->add_option("--scenes", ei_scenes)->required();
  ei->add_option("--weights", ei_weights);
  ei->add_option("--seed", ei_cfg.seed);
  ei->add_option("--patch", ei_cfg.patch)->capture_default_str()->check(CLI::PositiveNumber);
  ei->add_option("--samples", ei_cfg.samples_per_scene)->capture_default_str()->check(CLI::PositiveNumber);
  ei->add_option("--out", ei_out)->required();

  // ablate
  Common c_ab;
  std::string ab_archive, ab_grid, ab_scenes, ab_out;
  MatchBenchConfig ab_match;
  auto* ab = app.add_subcommand("ablate", "train and evaluate a grid of config variants");
  add_common(ab, c_ab);
  ab->add_option("--archive", ab_archive)->required();
  ab->add_option("--grid", ab_grid, "grid file, or 'default' for the K / loss-term / rotation grid")->required();
  ab->add_option("--scenes", ab_scenes, "held-out scenes for eval-match")->required();
  ab->add_option("--sizes", ab_match.patch_sizes)->delimiter(',')->capture_default_str();
  ab->add_option("--seed", ab_match.seed, "match benchmark seed");
  ab->add_option("--out", ab_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (*prep) {
      resolve(read_config(c_prep));
      const auto scenes = load_scenes(prep_scenes);
      const auto archive = build_training_set(scenes, prep_tpp, prep_cfg, prep_seed);
      archive.write(prep_out);
      std::printf("wrote %zu triplets from %zu scenes to %s\n", archive.triplets.size(), scenes.size(),
                  prep_out.c_str());
    } else if (*synth) {
      resolve(read_config(c_synth));
      const auto files = pngs_in(synth_base);
      std::vector<SceneSet> scenes;
      for (std::size_t i = 0; i < files.size(); ++i)
        scenes.push_back(synth_scene(load_png(files[i]), files[i].stem().string(), synth_variants,
                                     derive_seed(synth_seed, i)));
      write_scene_dir(scenes, synth_out);
      std::printf("wrote %zu scenes x %d variants to %s\n", scenes.size(), synth_variants, synth_out.c_str());
    } else if (*bases) {
      resolve(read_config(c_bases));
      fs::create_directories(bases_out);
      for (int i = 0; i < bases_count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "base_%03d.png", i);
        save_png(procedural_base_image(bases_size, bases_size, derive_seed(bases_seed, static_cast<std::uint64_t>(i))),
                 fs::path(bases_out) / name);
      }
      std::printf("wrote %d base images to %s\n", bases_count, bases_out.c_str());
    } else if (*trn) {
      ConfigMap cfg = read_config(c_train);
      if (trn->count("--seed")) cfg["seed"] = std::to_string(train_seed);
      if (trn->count("--epochs")) cfg["epochs"] = std::to_string(train_epochs);
      const auto r = resolve(cfg);
      r.train.validate();
      const auto archive = TripletArchive::read(train_archive);
      TrainOptions opt;
      opt.threads = resolve_threads(c_train.threads);
      opt.resume = train_resume;
      const long long total = r.train.total_steps();
      const long long every = std::max<long long>(1, r.train.epoch_size / 10);
      opt.on_step = [&](const StepLog& row) {
        if (row.step % every == 0 || row.step == total) {
          std::printf("step %lld/%lld  loss %.6f  triplet %.6f\n", row.step, total, row.loss.total,
                      row.loss.raw.triplet);
          std::fflush(stdout);
        }
      };
      std::printf("training %lld steps on %zu triplets, %d threads\n", total, archive.triplets.size(), opt.threads);
      const auto res = train(archive, r.train, train_out, opt);
      Json j = {{"command", "train"}, {"archive", file_ref(train_archive)}, {"config", to_json(r.train)},
                {"weights", file_ref((fs::path(train_out) / "weights.phit").string())}};
      if (!res.log.empty()) j["final_loss"] = to_json(res.log.back().loss);
      write_json(fs::path(train_out) / "train.json", j);
      std::printf("weights written to %s\n", (fs::path(train_out) / "weights.phit").c_str());
    } else if (*tf) {
      resolve(read_config(c_tf));
      const auto w = load_weights(tf_weights);
      fs::create_directories(tf_out);
      std::vector<ImageTensor> reps(tf_in.size());
      parallel_for(static_cast<int>(tf_in.size()), resolve_threads(c_tf.threads),
                   [&](int i) { reps[i] = transform_image(w, load_png(tf_in[i])); });
      for (std::size_t i = 0; i < tf_in.size(); ++i) {
        const std::string stem = fs::path(tf_in[i]).stem().string();
        if (tf_raw) {
          write_raw_representation(reps[i], fs::path(tf_out) / (stem + ".f32"));
          std::printf("%s -> %s.f32\n", tf_in[i].c_str(), stem.c_str());
        } else {
          const auto q = normalize_to_8bit(reps[i]);
          if (q.degenerate) std::fprintf(stderr, "warning: %s: constant representation\n", tf_in[i].c_str());
          for (const auto& f : save_representation(q.image, fs::path(tf_out) / (stem + ".png")))
            std::printf("%s -> %s\n", tf_in[i].c_str(), f.filename().c_str());
        }
      }
    } else if (*dif) {
      resolve(read_config(c_diff));
      const auto w = load_weights(diff_weights);
      const auto qa = normalize_to_8bit(transform_image(w, load_png(diff_a)));
      const auto qb = normalize_to_8bit(transform_image(w, load_png(diff_b)));
      std::optional<double> thr;
      if (diff_threshold) thr = *diff_threshold / 255.0;
      const auto d = diff_map(qa.image, qb.image, thr);
      fs::create_directories(diff_out);
      save_png(d.display, fs::path(diff_out) / "diff.png");
      save_representation(qa.image, fs::path(diff_out) / "a.png");
      save_representation(qb.image, fs::path(diff_out) / "b.png");
      if (d.mask) {
        ImageTensor m(d.mask->height, d.mask->width, 1);
        for (std::size_t p = 0; p < d.mask->bits.size(); ++p) m.data()[p] = d.mask->bits[p] ? 1.0f : 0.0f;
        save_png(m, fs::path(diff_out) / "mask.png");
        std::printf("changed pixels: %zu of %zu\n", d.mask->count(), d.mask->bits.size());
      }
      std::printf("wrote %s\n", (fs::path(diff_out) / "diff.png").c_str());
    } else if (*em) {
      resolve(read_config(c_em));
      const auto scenes = load_scenes(em_scenes);
      const auto w = maybe_weights(em_weights);
      em_cfg.method = em_method == "naive" ? MatchMethod::kNaive : MatchMethod::kFft;
      em_cfg.threads = resolve_threads(c_em.threads);
      const auto rep = run_match_benchmark(scenes, w ? &*w : nullptr, em_cfg);
      print_match(rep);
      write_json(em_out, {{"command", "eval-match"},
                          {"scenes", em_scenes},
                          {"weights", file_ref(em_weights)},
                          {"report", to_json(rep)}});
      write_text(sibling(em_out, ".trials.csv"), trials_csv(rep));
    } else if (*er) {
      const auto r = resolve(read_config(c_er));
      const auto scenes = load_scenes(er_scenes);
      const auto w = maybe_weights(er_weights);
      er_cfg.ecc = r.ecc;
      er_cfg.threads = resolve_threads(c_er.threads);
      const auto rep = run_registration_benchmark(scenes, w ? &*w : nullptr, er_cfg);
      std::printf("%s representation\n", rep.transformed ? "transformed" : "raw");
      for (const auto& a : rep.angles)
        std::printf("  angle %5.1f  trials %3d  failures %3d  PSNR %.2f dB  (truth %.2f dB)\n", a.angle, a.trials,
                    a.failures, a.mean_psnr, a.mean_psnr_truth);
      write_json(er_out, {{"command", "eval-register"},
                          {"scenes", er_scenes},
                          {"weights", file_ref(er_weights)},
                          {"report", to_json(rep)}});
      write_text(sibling(er_out, ".trials.csv"), trials_csv(rep));
    } else if (*ei) {
      resolve(read_config(c_ei));
      const auto scenes = load_scenes(ei_scenes);
      const auto w = maybe_weights(ei_weights);
      ei_cfg.threads = resolve_threads(c_ei.threads);
      const auto rep = invariance_report(scenes, w ? &*w : nullptr, ei_cfg);
      auto line = [](const char* what, const InvarianceStats& s) {
        std::printf("  %-12s eps %.5f  cross %.5f  ratio %.4f\n", what, s.epsilon_hat, s.cross, s.ratio);
      };
      line("raw", rep.raw);
      if (rep.transformed) line("transformed", *rep.transformed);
      Json j = {{"command", "eval-invariance"},
                {"scenes", ei_scenes},
                {"weights", file_ref(ei_weights)},
                {"report", to_json(rep)}};
      if (w) {
        std::vector<ImageTensor> imgs;
        for (const auto& s : scenes) imgs.push_back(s.instances.front());
        CropCommutationConfig cc;
        cc.seed = ei_cfg.seed;
        const auto crops = crop_commutation_report(*w, imgs, cc);
        std::printf("  crop commutation d_corr %.5f\n", crops.mean);
        j["crop_commutation"] = to_json(crops);
      }
      write_json(ei_out, j);
      write_text(sibling(ei_out, ".samples.csv"), samples_csv(rep));
    } else if (*ab) {
      const ConfigMap base = read_config(c_ab);
      std::vector<AblationCell> grid;
      if (ab_grid == "default") {
        grid = default_ablation_grid();
      } else {
        std::ifstream is(ab_grid);
        if (!is) throw DataError("cannot open grid '" + ab_grid + "'");
        std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        grid = parse_ablation_grid(text, ab_grid);
      }
      const auto archive = TripletArchive::read(ab_archive);
      const auto scenes = load_scenes(ab_scenes);
      const auto rep = run_ablation(archive, base, grid, scenes, ab_match, ab_out, resolve_threads(c_ab.threads));
      const std::string csv = ablation_csv(rep);
      write_text(fs::path(ab_out) / "ablation.csv", csv);
      Json rows = Json::array();
      for (const auto& row : rep.rows)
        rows.push_back({{"cell", row.cell.name},
                        {"overrides", row.cell.overrides},
                        {"config", to_json(row.train)},
                        {"final_loss", to_json(row.final_loss)},
                        {"match", to_json(row.match)}});
      write_json(fs::path(ab_out) / "ablation.json",
                 {{"command", "ablate"}, {"archive", file_ref(ab_archive)}, {"scenes", ab_scenes}, {"rows", rows}});
      std::fputs(csv.c_str(), stdout);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace photocon::cli
