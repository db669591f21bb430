#pragma once

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "biasdiag/annotations.hpp"
#include "biasdiag/attribution.hpp"
#include "biasdiag/bench.hpp"
#include "biasdiag/diagnosis.hpp"
#include "biasdiag/errors.hpp"
#include "biasdiag/groundtruth.hpp"
#include "biasdiag/io.hpp"
#include "biasdiag/net.hpp"
#include "biasdiag/pipeline.hpp"

namespace biasdiag {

// ---------------------------------------------------------------------------
// Command-line entry point. Every command is a pure function of
// (config, input files, seed); outputs are rewritten atomically and embed
// the full effective configuration. The only run-dependent output field is
// the marked "timestamp".
// ---------------------------------------------------------------------------

namespace cli_detail {

inline std::string iso_utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void require_out_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("output directory does not exist: " + dir.string());
  }
}

// Collects the options of one subcommand so a JSON config file can fill in
// anything not given on the command line, and so the merged effective
// values can be echoed into every output.
class OptionSync {
 public:
  template <typename T>
  void bind(CLI::Option* opt, std::string key, T& ref) {
    entries_.push_back({opt, std::move(key),
                        [&ref](const nlohmann::json& j) { ref = j.get<T>(); },
                        [&ref]() { return nlohmann::ordered_json(ref); }});
  }

  template <typename T>
  void bind_optional(CLI::Option* opt, std::string key, std::optional<T>& ref) {
    entries_.push_back({opt, std::move(key),
                        [&ref](const nlohmann::json& j) {
                          if (j.is_null()) {
                            ref.reset();
                          } else {
                            ref = j.get<T>();
                          }
                        },
                        [&ref]() {
                          return ref ? nlohmann::ordered_json(*ref)
                                     : nlohmann::ordered_json(nullptr);
                        }});
  }

  void merge_config_file(const std::optional<std::string>& path) {
    if (!path) return;
    auto is = open_input(*path);
    nlohmann::json cfg;
    try {
      cfg = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("config file " + *path + ": " + e.what());
    }
    for (const auto& entry : entries_) {
      if ((entry.opt == nullptr || entry.opt->count() == 0) && cfg.contains(entry.key)) {
        try {
          entry.apply(cfg.at(entry.key));
        } catch (const nlohmann::json::exception& e) {
          throw FormatError("config key '" + entry.key + "': " + e.what());
        }
      }
    }
  }

  nlohmann::ordered_json echo(const std::string& command) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    for (const auto& entry : entries_) j[entry.key] = entry.read();
    return j;
  }

 private:
  struct Entry {
    CLI::Option* opt;
    std::string key;
    std::function<void(const nlohmann::json&)> apply;
    std::function<nlohmann::ordered_json()> read;
  };
  std::vector<Entry> entries_;
};

inline void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  atomic_write(path, [&](std::ostream& os) { os << j.dump(2) << "\n"; });
}

inline nlohmann::ordered_json with_timestamp(nlohmann::ordered_json body) {
  nlohmann::ordered_json out;
  out["timestamp"] = iso_utc_now();
  for (auto& [k, v] : body.items()) out[k] = std::move(v);
  return out;
}

inline std::vector<LossKind> parse_loss_kinds(const std::string& text, std::size_t n) {
  const auto parse_one = [](const std::string& t) {
    if (t == "logistic") return LossKind::Logistic;
    if (t == "squared") return LossKind::SquaredError;
    throw ValidationError("loss must be 'logistic' or 'squared', got '" + t + "'");
  };
  std::vector<LossKind> kinds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) kinds.push_back(parse_one(detail::trim(item)));
  if (kinds.size() == 1) kinds.assign(n, kinds[0]);
  if (kinds.size() != n) {
    throw ValidationError("loss list covers " + std::to_string(kinds.size()) +
                          " attributes, need " + std::to_string(n));
  }
  return kinds;
}

struct LoadedDataset {
  std::vector<Tensor> images;
  AnnotationTable table;
  std::vector<std::size_t> degenerate;
};

inline LoadedDataset load_dataset(const std::string& images_path, const std::string& annot_path,
                                  const std::vector<std::string>& flip_names, double threshold) {
  LoadedDataset ds;
  const Tensor stacked = read_bltn_file(images_path);
  if (stacked.shape().size() != 4) {
    throw FormatError("images file must hold a rank-4 (samples,C,H,W) tensor, got " +
                      shape_str(stacked.shape()));
  }
  if (!stacked.all_finite()) throw FormatError("images file contains non-finite values");
  ds.images = unstack_tensor(stacked);

  auto is = open_input(annot_path);
  const RawAnnotations raw = read_annotations_csv(is);
  NormalizeResult norm =
      normalize_annotations(raw, flip_flags_from_names(raw.attributes, flip_names), threshold);
  ds.table = std::move(norm.table);
  ds.degenerate = std::move(norm.degenerate);
  if (ds.images.size() != ds.table.sample_count()) {
    throw ShapeMismatch("dataset: " + std::to_string(ds.images.size()) + " images vs " +
                        std::to_string(ds.table.sample_count()) + " annotation rows");
  }
  for (std::size_t a : ds.degenerate) {
    std::cerr << "warning: attribute '" << ds.table.attributes[a]
              << "' is constant after normalization; it cannot be mined\n";
  }
  return ds;
}

inline void write_heatmap_files(const std::filesystem::path& dir, const std::string& stem,
                                const Tensor& map, std::size_t image_index,
                                const std::string& attribute) {
  double scale = 0.0;
  atomic_write(dir / (stem + ".pgm"),
               [&](std::ostream& os) { scale = write_pgm(os, map); }, std::ios::binary);
  write_bltn_file(dir / (stem + ".bltn"), map);
  nlohmann::ordered_json side;
  side["scale"] = scale;
  side["height"] = map.shape()[0];
  side["width"] = map.shape()[1];
  side["mapping"] = "pixel = round(127.5 + 127.5 * value / scale)";
  side["image_index"] = image_index;
  side["attribute"] = attribute;
  write_json_file(dir / (stem + ".json"), side);
}

}  // namespace cli_detail

inline int run_cli(const std::vector<std::string>& args) {
  using cli_detail::OptionSync;

  CLI::App app{"representation-bias diagnosis for tiny attribute classifiers"};
  app.require_subcommand(1);

  // ---- synth ----------------------------------------------------------
  struct {
    std::string out;
    std::optional<std::string> config;
    std::uint64_t seed = 1;
    std::size_t samples = 600, attrs = 2, height = 16, width = 16;
    double pos_prob = 0.5, noise = 0.25, intensity = 1.0;
    std::vector<double> joint;  // optional explicit joint, config file only
  } sy;
  OptionSync sy_sync;
  {
    CLI::App* c = app.add_subcommand("synth", "generate a synthetic attribute dataset");
    c->add_option("--config", sy.config, "JSON config file; flags override");
    sy_sync.bind(c->add_option("--out", sy.out, "output directory (must exist)")->required(),
                 "out", sy.out);
    sy_sync.bind(c->add_option("--seed", sy.seed), "seed", sy.seed);
    sy_sync.bind(c->add_option("--samples", sy.samples), "samples", sy.samples);
    sy_sync.bind(c->add_option("--attrs", sy.attrs), "attrs", sy.attrs);
    sy_sync.bind(c->add_option("--height", sy.height), "height", sy.height);
    sy_sync.bind(c->add_option("--width", sy.width), "width", sy.width);
    sy_sync.bind(c->add_option("--pos-prob", sy.pos_prob), "pos_prob", sy.pos_prob);
    sy_sync.bind(c->add_option("--noise", sy.noise), "noise", sy.noise);
    sy_sync.bind(c->add_option("--intensity", sy.intensity), "intensity", sy.intensity);
    sy_sync.bind(c->add_option("--joint", sy.joint, "explicit joint over 2^n cells")
                     ->delimiter(','),
                 "joint", sy.joint);
    c->callback([&] {
      sy_sync.merge_config_file(sy.config);
      cli_detail::require_out_dir(sy.out);
      SynthSpec spec = default_synth_spec(sy.attrs, sy.samples, sy.seed, sy.height, sy.width,
                                          sy.pos_prob, sy.noise, sy.intensity);
      if (!sy.joint.empty()) spec.joint = sy.joint;
      const SynthDataset ds = synth_dataset(spec);
      const std::filesystem::path out = sy.out;
      write_bltn_file(out / "images.bltn", stack_tensors(ds.images));
      atomic_write(out / "annotations.csv",
                   [&](std::ostream& os) { write_annotations_csv(os, ds.table); });
      cli_detail::write_json_file(
          out / "synth_meta.json",
          cli_detail::with_timestamp({{"config", sy_sync.echo("synth")}}));
    });
  }

  // ---- train ----------------------------------------------------------
  struct {
    std::string images, annotations, out;
    std::optional<std::string> config;
    std::uint64_t seed = 1;
    std::size_t epochs = 30, batch = 16;
    double lr = 0.15, init_scale = 1.0, binarize_threshold = 0.5;
    std::string loss = "logistic";
    std::vector<std::string> flips;
  } tr;
  OptionSync tr_sync;
  {
    CLI::App* c = app.add_subcommand("train", "train the classifier on a dataset");
    c->add_option("--config", tr.config, "JSON config file; flags override");
    tr_sync.bind(c->add_option("--images", tr.images)->required(), "images", tr.images);
    tr_sync.bind(c->add_option("--annotations", tr.annotations)->required(), "annotations",
                 tr.annotations);
    tr_sync.bind(c->add_option("--out", tr.out, "output directory (must exist)")->required(),
                 "out", tr.out);
    tr_sync.bind(c->add_option("--seed", tr.seed), "seed", tr.seed);
    tr_sync.bind(c->add_option("--epochs", tr.epochs), "epochs", tr.epochs);
    tr_sync.bind(c->add_option("--batch", tr.batch), "batch", tr.batch);
    tr_sync.bind(c->add_option("--lr", tr.lr), "lr", tr.lr);
    tr_sync.bind(c->add_option("--init-scale", tr.init_scale), "init_scale", tr.init_scale);
    tr_sync.bind(c->add_option("--loss", tr.loss, "logistic|squared or per-attribute list"),
                 "loss", tr.loss);
    tr_sync.bind(c->add_option("--flip", tr.flips, "attributes whose sign is flipped")
                     ->delimiter(','),
                 "flip", tr.flips);
    tr_sync.bind(c->add_option("--binarize-threshold", tr.binarize_threshold),
                 "binarize_threshold", tr.binarize_threshold);
    c->callback([&] {
      tr_sync.merge_config_file(tr.config);
      cli_detail::require_out_dir(tr.out);
      const auto ds = cli_detail::load_dataset(tr.images, tr.annotations, tr.flips,
                                               tr.binarize_threshold);
      const Shape& img = ds.images.front().shape();
      const std::size_t n = ds.table.attribute_count();
      TrainConfig cfg;
      cfg.learning_rate = tr.lr;
      cfg.epochs = tr.epochs;
      cfg.batch_size = tr.batch;
      cfg.seed = derive_seed(tr.seed, "train");
      cfg.init_scale = tr.init_scale;
      LossSpec loss;
      loss.kinds = cli_detail::parse_loss_kinds(tr.loss, n);
      Network net = Network::randomized(default_network_config(n, img[0], img[1], img[2]),
                                        cfg.seed, cfg.init_scale);
      TrainResult res = train(std::move(net), ds.images, ds.table.as_targets(), loss, cfg);

      const std::filesystem::path out = tr.out;
      save_model(out / "model.bin", res.net);
      atomic_write(out / "loss_log.csv", [&](std::ostream& os) {
        os << "epoch,mean_loss\n";
        for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
          os << e << "," << cli_detail::fmt_double(res.epoch_loss[e]) << "\n";
        }
      });
      nlohmann::ordered_json meta{{"config", tr_sync.echo("train")}};
      if (!res.epoch_loss.empty()) meta["final_loss"] = res.epoch_loss.back();
      cli_detail::write_json_file(out / "train_meta.json",
                                  cli_detail::with_timestamp(std::move(meta)));
    });
  }

  // ---- diagnose -------------------------------------------------------
  struct {
    std::string model, images, annotations, relations, out;
    std::optional<std::string> config;
    std::size_t bins = 64;
    double epsilon = 0.5, sigma_min = 0.05, gate_percentile = 75.0;
    double cos_threshold = 0.2, mu_threshold = 0.2, binarize_threshold = 0.5;
    std::optional<double> lambda;
    std::optional<std::size_t> max_units, probe_layer;
    bool pooled_fit = false;
    std::size_t heatmaps = 0;
    std::vector<std::string> flips;
  } dg;
  OptionSync dg_sync;
  {
    CLI::App* c = app.add_subcommand("diagnose", "mine relationships and diagnose the model");
    c->add_option("--config", dg.config, "JSON config file; flags override");
    dg_sync.bind(c->add_option("--model", dg.model)->required(), "model", dg.model);
    dg_sync.bind(c->add_option("--images", dg.images)->required(), "images", dg.images);
    dg_sync.bind(c->add_option("--annotations", dg.annotations)->required(), "annotations",
                 dg.annotations);
    dg_sync.bind(c->add_option("--relations", dg.relations)->required(), "relations",
                 dg.relations);
    dg_sync.bind(c->add_option("--out", dg.out)->required(), "out", dg.out);
    dg_sync.bind(c->add_option("--bins", dg.bins), "bins", dg.bins);
    dg_sync.bind(c->add_option("--epsilon", dg.epsilon), "epsilon", dg.epsilon);
    dg_sync.bind(c->add_option("--sigma-min", dg.sigma_min), "sigma_min", dg.sigma_min);
    dg_sync.bind(c->add_option("--kl-gate-percentile", dg.gate_percentile), "kl_gate_percentile",
                 dg.gate_percentile);
    dg_sync.bind(c->add_option("--cos-threshold", dg.cos_threshold), "cos_threshold",
                 dg.cos_threshold);
    dg_sync.bind(c->add_option("--mu-threshold", dg.mu_threshold), "mu_threshold",
                 dg.mu_threshold);
    dg_sync.bind_optional(c->add_option("--lambda", dg.lambda, "mask penalty; default auto"),
                          "lambda", dg.lambda);
    dg_sync.bind_optional(c->add_option("--max-units", dg.max_units), "max_units", dg.max_units);
    dg_sync.bind_optional(c->add_option("--probe-layer", dg.probe_layer), "probe_layer",
                          dg.probe_layer);
    dg_sync.bind(c->add_flag("--pooled-fit", dg.pooled_fit,
                             "fit label Gaussians over pooled per-image cosines"),
                 "pooled_fit", dg.pooled_fit);
    dg_sync.bind(c->add_option("--heatmaps", dg.heatmaps,
                               "emit heat maps for the first N images"),
                 "heatmaps", dg.heatmaps);
    dg_sync.bind(c->add_option("--flip", dg.flips)->delimiter(','), "flip", dg.flips);
    dg_sync.bind(c->add_option("--binarize-threshold", dg.binarize_threshold),
                 "binarize_threshold", dg.binarize_threshold);
    c->callback([&] {
      dg_sync.merge_config_file(dg.config);
      cli_detail::require_out_dir(dg.out);
      const auto ds = cli_detail::load_dataset(dg.images, dg.annotations, dg.flips,
                                               dg.binarize_threshold);
      // validate the relations file before any heavy compute
      auto rel_is = open_input(dg.relations);
      const RelationGraph graph = parse_relations(rel_is, ds.table.attributes);

      Network net = load_model(dg.model);
      if (dg.probe_layer) {
        NetworkConfig cfg = net.config();
        cfg.probe_layer = *dg.probe_layer;
        Network reprobed(cfg);
        reprobed.params() = net.params();
        net = std::move(reprobed);
      }

      DiagnosisOptions dopt;
      dopt.bins = dg.bins;
      dopt.epsilon = dg.epsilon;
      dopt.sigma_min = dg.sigma_min;
      dopt.gate_percentile = dg.gate_percentile;
      dopt.cos_threshold = dg.cos_threshold;
      dopt.mu_threshold = dg.mu_threshold;
      dopt.pooled_fit = dg.pooled_fit;
      MiningOptions mopt;
      mopt.mask.lambda = dg.lambda;
      mopt.mask.max_units = dg.max_units;
      mopt.bins = dg.bins;

      DiagnoseOutcome outcome = diagnose_dataset(net, ds.images, ds.table, graph, dopt, mopt);
      outcome.report.config_echo = dg_sync.echo("diagnose");

      const std::filesystem::path out = dg.out;
      cli_detail::write_json_file(
          out / "report.json",
          cli_detail::with_timestamp(report_to_json(outcome.report, graph)));
      atomic_write(out / "summary.csv",
                   [&](std::ostream& os) { write_summary_csv(os, outcome.report, graph); });
      for (std::size_t k = 0; k < graph.edges.size(); ++k) {
        const auto& e = graph.edges[k];
        const std::string name =
            "hist_" + graph.attributes[e.i] + "__" + graph.attributes[e.j] + ".csv";
        atomic_write(out / name, [&](std::ostream& os) {
          write_pair_distribution_csv(os, outcome.edges.dists[k]);
        });
      }
      if (dg.heatmaps > 0) {
        const std::filesystem::path hdir = out / "heatmaps";
        std::filesystem::create_directory(hdir);
        const Shape& probe = net.probe_shape();
        const std::size_t count = std::min(dg.heatmaps, ds.images.size());
        for (std::size_t img = 0; img < count; ++img) {
          for (std::size_t a = 0; a < net.attribute_count(); ++a) {
            const Tensor map = heatmap(outcome.mined.attrs[a].vectors[img],
                                       outcome.mined.probe_x[img], probe[0], probe[1], probe[2]);
            cli_detail::write_heatmap_files(
                hdir, "img" + std::to_string(img) + "_" + ds.table.attributes[a], map, img,
                ds.table.attributes[a]);
          }
        }
      }
    });
  }

  // ---- experiment2 ----------------------------------------------------
  struct {
    std::string out;
    std::optional<std::string> config;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::vector<double> taus{0.0, 0.5, 1.0};
    std::size_t samples = 600, height = 16, width = 16, epochs = 20, batch = 16;
    double pos_prob = 0.5, noise = 0.25, intensity = 1.0, lr = 0.15, init_scale = 1.0;
    std::size_t bins = 9;
    double epsilon = 0.5, sigma_ref = 0.05;
    std::optional<double> lambda;
    std::optional<std::size_t> max_units = 32;
  } e2;
  OptionSync e2_sync;
  {
    CLI::App* c = app.add_subcommand("experiment2", "KL trend across bias levels tau");
    c->add_option("--config", e2.config, "JSON config file; flags override");
    e2_sync.bind(c->add_option("--out", e2.out)->required(), "out", e2.out);
    e2_sync.bind(c->add_option("--seeds", e2.seeds)->delimiter(','), "seeds", e2.seeds);
    e2_sync.bind(c->add_option("--taus", e2.taus)->delimiter(','), "taus", e2.taus);
    e2_sync.bind(c->add_option("--samples", e2.samples), "samples", e2.samples);
    e2_sync.bind(c->add_option("--height", e2.height), "height", e2.height);
    e2_sync.bind(c->add_option("--width", e2.width), "width", e2.width);
    e2_sync.bind(c->add_option("--epochs", e2.epochs), "epochs", e2.epochs);
    e2_sync.bind(c->add_option("--batch", e2.batch), "batch", e2.batch);
    e2_sync.bind(c->add_option("--lr", e2.lr), "lr", e2.lr);
    e2_sync.bind(c->add_option("--init-scale", e2.init_scale), "init_scale", e2.init_scale);
    e2_sync.bind(c->add_option("--pos-prob", e2.pos_prob), "pos_prob", e2.pos_prob);
    e2_sync.bind(c->add_option("--noise", e2.noise), "noise", e2.noise);
    e2_sync.bind(c->add_option("--intensity", e2.intensity), "intensity", e2.intensity);
    e2_sync.bind(c->add_option("--bins", e2.bins), "bins", e2.bins);
    e2_sync.bind(c->add_option("--epsilon", e2.epsilon), "epsilon", e2.epsilon);
    e2_sync.bind(c->add_option("--sigma-ref", e2.sigma_ref), "sigma_ref", e2.sigma_ref);
    e2_sync.bind_optional(c->add_option("--lambda", e2.lambda), "lambda", e2.lambda);
    e2_sync.bind_optional(c->add_option("--max-units", e2.max_units), "max_units", e2.max_units);
    c->callback([&] {
      e2_sync.merge_config_file(e2.config);
      cli_detail::require_out_dir(e2.out);
      Experiment2Config cfg;
      cfg.samples = e2.samples;
      cfg.height = e2.height;
      cfg.width = e2.width;
      cfg.pos_prob = e2.pos_prob;
      cfg.noise = e2.noise;
      cfg.intensity = e2.intensity;
      cfg.taus = e2.taus;
      cfg.seeds = e2.seeds;
      cfg.train.learning_rate = e2.lr;
      cfg.train.epochs = e2.epochs;
      cfg.train.batch_size = e2.batch;
      cfg.train.init_scale = e2.init_scale;
      cfg.mask.lambda = e2.lambda;
      cfg.mask.max_units = e2.max_units;
      cfg.bins = e2.bins;
      cfg.epsilon = e2.epsilon;
      cfg.sigma_ref = e2.sigma_ref;
      const std::vector<Exp2Row> rows = run_experiment2(cfg);
      const std::filesystem::path out = e2.out;
      atomic_write(out / "experiment2_results.csv", [&](std::ostream& os) {
        os << "pair,tau,seed,kl\n";
        for (const auto& r : rows) {
          os << r.pair << "," << cli_detail::fmt_double(r.tau) << "," << r.seed << ","
             << cli_detail::fmt_double(r.kl) << "\n";
        }
      });
      cli_detail::write_json_file(
          out / "experiment2_meta.json",
          cli_detail::with_timestamp({{"config", e2_sync.echo("experiment2")}}));
    });
  }

  // ---- experiment3 ----------------------------------------------------
  struct {
    std::string out;
    std::optional<std::string> config;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::size_t attrs = 4, train_samples = 600, test_samples = 400;
    std::size_t height = 16, width = 16, epochs = 20, batch = 16, top_n = 3;
    std::size_t biased_i = 0, biased_j = 1;
    double tau = 1.0, pos_prob = 0.5, noise = 0.25, intensity = 1.0, lr = 0.15, init_scale = 1.0;
    std::size_t bins = 64;
    double epsilon = 0.5, sigma_min = 0.05, gate_percentile = 75.0;
    std::optional<double> lambda;
    std::optional<std::size_t> max_units;
  } e3;
  OptionSync e3_sync;
  {
    CLI::App* c = app.add_subcommand("experiment3",
                                     "failure-mode discovery vs the entropy baseline");
    c->add_option("--config", e3.config, "JSON config file; flags override");
    e3_sync.bind(c->add_option("--out", e3.out)->required(), "out", e3.out);
    e3_sync.bind(c->add_option("--seeds", e3.seeds)->delimiter(','), "seeds", e3.seeds);
    e3_sync.bind(c->add_option("--attrs", e3.attrs), "attrs", e3.attrs);
    e3_sync.bind(c->add_option("--train-samples", e3.train_samples), "train_samples",
                 e3.train_samples);
    e3_sync.bind(c->add_option("--test-samples", e3.test_samples), "test_samples",
                 e3.test_samples);
    e3_sync.bind(c->add_option("--height", e3.height), "height", e3.height);
    e3_sync.bind(c->add_option("--width", e3.width), "width", e3.width);
    e3_sync.bind(c->add_option("--epochs", e3.epochs), "epochs", e3.epochs);
    e3_sync.bind(c->add_option("--batch", e3.batch), "batch", e3.batch);
    e3_sync.bind(c->add_option("--lr", e3.lr), "lr", e3.lr);
    e3_sync.bind(c->add_option("--init-scale", e3.init_scale), "init_scale", e3.init_scale);
    e3_sync.bind(c->add_option("--top-n", e3.top_n), "top_n", e3.top_n);
    e3_sync.bind(c->add_option("--biased-i", e3.biased_i), "biased_i", e3.biased_i);
    e3_sync.bind(c->add_option("--biased-j", e3.biased_j), "biased_j", e3.biased_j);
    e3_sync.bind(c->add_option("--tau", e3.tau), "tau", e3.tau);
    e3_sync.bind(c->add_option("--pos-prob", e3.pos_prob), "pos_prob", e3.pos_prob);
    e3_sync.bind(c->add_option("--noise", e3.noise), "noise", e3.noise);
    e3_sync.bind(c->add_option("--intensity", e3.intensity), "intensity", e3.intensity);
    e3_sync.bind(c->add_option("--bins", e3.bins), "bins", e3.bins);
    e3_sync.bind(c->add_option("--epsilon", e3.epsilon), "epsilon", e3.epsilon);
    e3_sync.bind(c->add_option("--sigma-min", e3.sigma_min), "sigma_min", e3.sigma_min);
    e3_sync.bind(c->add_option("--kl-gate-percentile", e3.gate_percentile),
                 "kl_gate_percentile", e3.gate_percentile);
    e3_sync.bind_optional(c->add_option("--lambda", e3.lambda), "lambda", e3.lambda);
    e3_sync.bind_optional(c->add_option("--max-units", e3.max_units), "max_units", e3.max_units);
    c->callback([&] {
      e3_sync.merge_config_file(e3.config);
      cli_detail::require_out_dir(e3.out);
      Experiment3Config cfg;
      cfg.attrs = e3.attrs;
      cfg.train_samples = e3.train_samples;
      cfg.test_samples = e3.test_samples;
      cfg.height = e3.height;
      cfg.width = e3.width;
      cfg.pos_prob = e3.pos_prob;
      cfg.noise = e3.noise;
      cfg.intensity = e3.intensity;
      cfg.biased_i = e3.biased_i;
      cfg.biased_j = e3.biased_j;
      cfg.tau = e3.tau;
      cfg.top_n = e3.top_n;
      cfg.seeds = e3.seeds;
      cfg.train.learning_rate = e3.lr;
      cfg.train.epochs = e3.epochs;
      cfg.train.batch_size = e3.batch;
      cfg.train.init_scale = e3.init_scale;
      cfg.mask.lambda = e3.lambda;
      cfg.mask.max_units = e3.max_units;
      cfg.diagnosis.bins = e3.bins;
      cfg.diagnosis.epsilon = e3.epsilon;
      cfg.diagnosis.sigma_min = e3.sigma_min;
      cfg.diagnosis.gate_percentile = e3.gate_percentile;
      const Exp3Result res = run_experiment3(cfg);
      const std::filesystem::path out = e3.out;
      atomic_write(out / "experiment3_results.csv", [&](std::ostream& os) {
        os << "seed,method,rank,pair,mode,acc_ordinary,acc_mode,decrease\n";
        for (const auto& r : res.rows) {
          os << r.seed << "," << r.method << "," << r.rank << "," << r.pair << ","
             << (r.sign_i > 0 ? "+1" : "-1") << ";" << (r.sign_j > 0 ? "+1" : "-1") << ","
             << cli_detail::fmt_double(r.acc_ordinary) << ","
             << cli_detail::fmt_double(r.acc_mode) << ","
             << cli_detail::fmt_double(r.decrease) << "\n";
        }
      });
      atomic_write(out / "experiment3_summary.csv", [&](std::ostream& os) {
        os << "method,mean_acc_ordinary,mean_acc_mode,mean_decrease,modes_evaluated\n";
        for (const auto& s : res.summary) {
          os << s.method << "," << cli_detail::fmt_double(s.mean_ordinary) << ","
             << cli_detail::fmt_double(s.mean_mode) << ","
             << cli_detail::fmt_double(s.mean_decrease) << "," << s.modes_evaluated << "\n";
        }
      });
      cli_detail::write_json_file(
          out / "experiment3_meta.json",
          cli_detail::with_timestamp({{"config", e3_sync.echo("experiment3")}}));
    });
  }

  // ---- heatmap --------------------------------------------------------
  struct {
    std::string model, images, out;
    std::optional<std::string> config;
    std::size_t attr = 0, image_index = 0;
    std::optional<double> lambda;
    std::optional<std::size_t> max_units;
  } hm;
  OptionSync hm_sync;
  {
    CLI::App* c = app.add_subcommand("heatmap", "export an inference-pattern heat map");
    c->add_option("--config", hm.config, "JSON config file; flags override");
    hm_sync.bind(c->add_option("--model", hm.model)->required(), "model", hm.model);
    hm_sync.bind(c->add_option("--images", hm.images)->required(), "images", hm.images);
    hm_sync.bind(c->add_option("--out", hm.out)->required(), "out", hm.out);
    hm_sync.bind(c->add_option("--attr", hm.attr, "attribute index"), "attr", hm.attr);
    hm_sync.bind(c->add_option("--image-index", hm.image_index), "image_index", hm.image_index);
    hm_sync.bind_optional(c->add_option("--lambda", hm.lambda), "lambda", hm.lambda);
    hm_sync.bind_optional(c->add_option("--max-units", hm.max_units), "max_units", hm.max_units);
    c->callback([&] {
      hm_sync.merge_config_file(hm.config);
      cli_detail::require_out_dir(hm.out);
      const Network net = load_model(hm.model);
      const Tensor stacked = read_bltn_file(hm.images);
      if (stacked.shape().size() != 4) {
        throw FormatError("images file must hold a rank-4 tensor");
      }
      const std::vector<Tensor> images = unstack_tensor(stacked);
      if (hm.attr >= net.attribute_count()) {
        throw ValidationError("heatmap: attribute index out of range");
      }
      if (hm.image_index >= images.size()) {
        throw ValidationError("heatmap: image index out of range");
      }
      MiningOptions mopt;
      mopt.mask.lambda = hm.lambda;
      mopt.mask.max_units = hm.max_units;
      const Mined mined = mine_representations(net, images, mopt);
      const Shape& probe = net.probe_shape();
      const Tensor map =
          heatmap(mined.attrs[hm.attr].vectors[hm.image_index], mined.probe_x[hm.image_index],
                  probe[0], probe[1], probe[2]);
      cli_detail::write_heatmap_files(
          hm.out, "heatmap_img" + std::to_string(hm.image_index) + "_attr" +
                       std::to_string(hm.attr),
          map, hm.image_index, "attr_" + std::to_string(hm.attr + 1));
      cli_detail::write_json_file(
          std::filesystem::path(hm.out) / "heatmap_meta.json",
          cli_detail::with_timestamp({{"config", hm_sync.echo("heatmap")}}));
    });
  }

  std::vector<const char*> argv;
  argv.push_back("biasdiag");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

inline int run_cli(int argc, const char* const* argv) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace biasdiag
