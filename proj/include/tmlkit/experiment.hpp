#pragma once

// Experiment orchestration: dataset preparation with a persistence-image
// cache, the eight-model training grid, the stitching and CKA comparison
// matrices, and report emission. Every stage is deterministic for a fixed
// config and idempotent on disk.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tmlkit/cka.hpp"
#include "tmlkit/config.hpp"
#include "tmlkit/dataset.hpp"
#include "tmlkit/model.hpp"
#include "tmlkit/report.hpp"
#include "tmlkit/stats.hpp"
#include "tmlkit/stitch.hpp"
#include "tmlkit/synthdigits.hpp"

namespace tml {

// One pairing in a comparison matrix. a/b index the seed lists of their
// respective input kinds; the comparison kind is "<a_kind>-<b_kind>".
struct PairSpec {
  std::string kind;
  std::string a_kind, b_kind;
  int a = 0, b = 0;

  bool operator==(const PairSpec&) const = default;
};

namespace detail {

inline void append_pairs(std::vector<PairSpec>& out, const std::string& a_kind,
                         const std::string& b_kind, int n) {
  const std::string kind = a_kind + "-" + b_kind;
  if (a_kind == b_kind) {
    for (int i = 0; i + 1 < n; ++i)
      out.push_back({kind, a_kind, b_kind, i, i + 1});
  } else {
    for (int i = 0; i < n; ++i) out.push_back({kind, a_kind, b_kind, i, i});
  }
}

}  // namespace detail

// Stitching compares every ordered kind combination: within a kind the n-1
// consecutive seed pairs, across kinds the n seed-aligned pairs.
inline std::vector<PairSpec> stitch_pair_specs(int n) {
  std::vector<PairSpec> out;
  detail::append_pairs(out, "pi", "pi", n);
  detail::append_pairs(out, "pi", "raw", n);
  detail::append_pairs(out, "raw", "pi", n);
  detail::append_pairs(out, "raw", "raw", n);
  return out;
}

// CKA is symmetric, so only one cross-kind direction is measured.
inline std::vector<PairSpec> cka_pair_specs(int n) {
  std::vector<PairSpec> out;
  detail::append_pairs(out, "pi", "pi", n);
  detail::append_pairs(out, "pi", "raw", n);
  detail::append_pairs(out, "raw", "raw", n);
  return out;
}

struct ExperimentData {
  DatasetSplit raw_train, raw_test, pi_train, pi_test;

  const DatasetSplit& train_for(const std::string& input_kind) const {
    return input_kind == "pi" ? pi_train : raw_train;
  }
  const DatasetSplit& test_for(const std::string& input_kind) const {
    return input_kind == "pi" ? pi_test : raw_test;
  }
};

struct TrainedModel {
  std::string id;
  std::string input_kind;
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
  Model model;
};

inline std::string model_id(const std::string& input_kind, uint64_t seed) {
  return input_kind + "_s" + std::to_string(seed);
}

// Cut count implied by the architecture config: one per hidden activation.
inline int config_num_cuts(const ExperimentConfig& cfg) {
  return cfg.family == Family::MLP
             ? 4
             : static_cast<int>(cfg.channels.size()) - 1;
}

namespace detail {

inline DatasetSplit limited(DatasetSplit s, int64_t limit) {
  if (limit <= 0 || s.size() <= limit) return s;
  s.labels.resize(limit);
  s.images.resize(limit * s.sample_numel());
  return s;
}

inline DatasetSplit cached_pi_split(const DatasetSplit& gray,
                                    const ExperimentConfig& cfg,
                                    const std::string& path) {
  if (std::filesystem::exists(path)) {
    try {
      auto s = load_pi_cache(path, cfg.pi);
      if (s.height == cfg.resize_hw && s.width == cfg.resize_hw &&
          s.channels == 2 * gray.channels && s.labels == gray.labels) {
        std::cout << "[prep] persistence-image cache hit: " << path << "\n";
        return s;
      }
      std::cout << "[prep] persistence-image cache stale, recomputing: "
                << path << "\n";
    } catch (const std::exception& e) {
      std::cout << "[prep] persistence-image cache unusable (" << e.what()
                << "), recomputing\n";
    }
  }
  auto s = pi_preprocess(gray, cfg.pi, cfg.resize_hw);
  save_pi_cache(s, cfg.pi, path);
  std::cout << "[prep] persistence-image cache written: " << path << " ("
            << s.size() << " samples)\n";
  return s;
}

}  // namespace detail

// Loads the IDX dataset (generating the synthetic fallback when files are
// missing), filters and limits both splits, and materializes the raw and
// persistence-image views. The persistence-image view is cached on disk.
inline ExperimentData run_prep(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(cfg.out_dir) / "cache");

  const auto train_images =
      (fs::path(cfg.dataset_dir) / "train-images-idx3-ubyte").string();
  const auto train_labels =
      (fs::path(cfg.dataset_dir) / "train-labels-idx1-ubyte").string();
  const auto test_images =
      (fs::path(cfg.dataset_dir) / "t10k-images-idx3-ubyte").string();
  const auto test_labels =
      (fs::path(cfg.dataset_dir) / "t10k-labels-idx1-ubyte").string();

  const bool have_files = fs::exists(train_images) &&
                          fs::exists(train_labels) && fs::exists(test_images) &&
                          fs::exists(test_labels);
  if (!have_files) {
    if (!cfg.synth_fallback)
      throw std::runtime_error("dataset files missing under " +
                               cfg.dataset_dir +
                               " and the synthetic fallback is disabled");
    std::cout << "[prep] dataset files missing, generating synthetic digits"
                 " under " << cfg.dataset_dir << "\n";
    fs::create_directories(cfg.dataset_dir);
    generate_synth_digits(cfg.dataset_dir,
                          static_cast<int>(cfg.synth_train_count),
                          static_cast<int>(cfg.synth_test_count),
                          cfg.synth_seed);
  }

  std::vector<int32_t> keep(cfg.keep_classes.begin(), cfg.keep_classes.end());
  auto gray_train = detail::limited(
      filter_classes(load_mnist_idx(train_images, train_labels), keep),
      cfg.train_limit);
  auto gray_test = detail::limited(
      filter_classes(load_mnist_idx(test_images, test_labels), keep),
      cfg.test_limit);
  if (gray_train.size() == 0 || gray_test.size() == 0)
    throw std::runtime_error("dataset empty after class filtering");

  ExperimentData data;
  data.raw_train = raw_preprocess(gray_train, cfg.resize_hw);
  data.raw_test = raw_preprocess(gray_test, cfg.resize_hw);
  auto cache = std::filesystem::path(cfg.out_dir) / "cache";
  data.pi_train = detail::cached_pi_split(gray_train, cfg,
                                          (cache / "pi_train.pich").string());
  data.pi_test = detail::cached_pi_split(gray_test, cfg,
                                         (cache / "pi_test.pich").string());
  std::cout << "[prep] train " << data.raw_train.size() << " samples, test "
            << data.raw_test.size() << " samples\n";
  return data;
}

namespace detail {

inline void write_models_csv(const std::string& path,
                             const std::vector<TrainedModel>& models,
                             Family family) {
  std::string out =
      "model_id,input_kind,family,seed,status,train_accuracy,test_accuracy\n";
  for (const auto& t : models) {
    double tr = t.ok ? t.model.train_accuracy
                     : std::numeric_limits<double>::quiet_NaN();
    double te = t.ok ? t.model.test_accuracy
                     : std::numeric_limits<double>::quiet_NaN();
    out += t.id + "," + t.input_kind + "," + family_name(family) + "," +
           std::to_string(t.seed) + "," + (t.ok ? "trained" : "failed") + "," +
           format_double(tr) + "," + format_double(te) + "\n";
  }
  write_file(path, out);
}

}  // namespace detail

// Trains one model per (input kind, seed), reusing a checkpoint when one
// exists for the same architecture and seed. A training failure is recorded
// and leaves the remaining grid runnable.
inline std::vector<TrainedModel> run_train(const ExperimentConfig& cfg,
                                           const ExperimentData& data) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(cfg.out_dir) / "models");

  std::vector<TrainedModel> models;
  const std::vector<std::pair<std::string, const std::vector<uint64_t>*>>
      kinds = {{"raw", &cfg.seeds_raw}, {"pi", &cfg.seeds_pi}};
  for (const auto& [kind, seeds] : kinds) {
    const auto spec = cfg.model_spec(kind);
    for (uint64_t seed : *seeds) {
      TrainedModel t;
      t.id = model_id(kind, seed);
      t.input_kind = kind;
      t.seed = seed;
      const auto path =
          (fs::path(cfg.out_dir) / "models" / (t.id + ".ckpt")).string();
      if (fs::exists(path)) {
        try {
          auto m = load_checkpoint(path);
          if (m.spec.descriptor(m.input_kind) == spec.descriptor(kind) &&
              m.seed == seed) {
            std::cout << "[train] " << t.id << " reused from checkpoint"
                      << " (test accuracy "
                      << format_double(m.test_accuracy) << ")\n";
            t.model = std::move(m);
            t.ok = true;
            models.push_back(std::move(t));
            continue;
          }
          std::cout << "[train] " << t.id
                    << " checkpoint does not match config, retraining\n";
        } catch (const std::exception& e) {
          std::cout << "[train] " << t.id << " checkpoint unusable ("
                    << e.what() << "), retraining\n";
        }
      }
      try {
        t.model = build_model(spec, seed, kind);
        train_model(t.model, data.train_for(kind), data.test_for(kind),
                    cfg.train);
        save_checkpoint(t.model, path);
        t.ok = true;
        std::cout << "[train] " << t.id << " trained: train accuracy "
                  << format_double(t.model.train_accuracy)
                  << ", test accuracy "
                  << format_double(t.model.test_accuracy) << "\n";
      } catch (const std::exception& e) {
        t.ok = false;
        t.error = e.what();
        std::cerr << "[train] " << t.id << " failed: " << e.what() << "\n";
      }
      models.push_back(std::move(t));
    }
  }
  detail::write_models_csv(
      (fs::path(cfg.out_dir) / "models.csv").string(), models, cfg.family);
  return models;
}

namespace detail {

inline TrainedModel& model_at(std::vector<TrainedModel>& models,
                              const std::string& input_kind, int idx,
                              const ExperimentConfig& cfg) {
  const auto& seeds =
      input_kind == "pi" ? cfg.seeds_pi : cfg.seeds_raw;
  auto id = model_id(input_kind, seeds.at(idx));
  for (auto& t : models)
    if (t.id == id) return t;
  throw std::runtime_error("model " + id + " missing from the training grid");
}

// Mean and CI over the finite entries. One value gets a degenerate zero
// half-width, zero values an all-nan row.
inline SummaryRow summarize(const std::string& metric, const std::string& kind,
                            int cut, std::vector<double> values) {
  SummaryRow r;
  r.metric = metric;
  r.kind = kind;
  r.cut = cut;
  r.values = std::move(values);
  std::vector<double> finite;
  for (double v : r.values)
    if (std::isfinite(v)) finite.push_back(v);
  r.n_pairs = static_cast<int>(finite.size());
  if (finite.size() >= 2) {
    auto ci = aggregate_ci(finite);
    r.mean = ci.mean;
    r.half_width = ci.half_width;
  } else if (finite.size() == 1) {
    r.mean = finite[0];
    r.half_width = 0.0;
  } else {
    r.mean = r.half_width = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

}  // namespace detail

// Stitching matrix: for every comparison kind, pair, and cut, trains an
// adapter between the frozen halves and reports stitched test accuracy on the
// prefix kind's dataset. A trained self-stitch diagnostic rides along.
inline std::vector<SummaryRow> run_stitch_matrix(
    const ExperimentConfig& cfg, std::vector<TrainedModel>& models,
    const ExperimentData& data) {
  const int n = cfg.seeds_per_kind();
  const auto pairs = stitch_pair_specs(n);
  const int num_cuts = config_num_cuts(cfg);

  const std::vector<std::string> kind_order = {"pi-pi", "pi-raw", "raw-pi",
                                               "raw-raw"};
  std::vector<SummaryRow> rows;
  for (size_t ki = 0; ki < kind_order.size(); ++ki) {
    const auto& kind = kind_order[ki];
    for (int k = 1; k <= num_cuts; ++k) {
      std::vector<double> values;
      int pair_idx = 0;
      for (const auto& p : pairs) {
        if (p.kind != kind) continue;
        auto& a = detail::model_at(models, p.a_kind, p.a, cfg);
        auto& b = detail::model_at(models, p.b_kind, p.b, cfg);
        double v = std::numeric_limits<double>::quiet_NaN();
        if (a.ok && b.ok) {
          uint64_t seed = mix_seed(
              mix_seed(0xD15C0, static_cast<uint64_t>(ki) * 100 + pair_idx),
              static_cast<uint64_t>(k));
          auto st = make_stitched(a.model, b.model, k);
          v = train_stitch(st, data.train_for(p.a_kind),
                           data.test_for(p.a_kind), cfg.stitch, seed);
        } else {
          std::cerr << "[stitch] skipping " << a.id << " -> " << b.id
                    << " at cut " << k << ": untrained model\n";
        }
        values.push_back(v);
        ++pair_idx;
      }
      rows.push_back(detail::summarize("stitch", kind, k, std::move(values)));
      std::cout << "[stitch] " << kind << " cut " << k << ": mean "
                << format_double(rows.back().mean) << " over "
                << rows.back().n_pairs << " pairs\n";
    }
  }

  auto& self = detail::model_at(models, "raw", 0, cfg);
  for (int k = 1; k <= num_cuts; ++k) {
    double v = std::numeric_limits<double>::quiet_NaN();
    if (self.ok) {
      uint64_t seed = mix_seed(mix_seed(0xD15C0, 400 + k), 0);
      auto st = make_stitched(self.model, self.model, k);
      v = train_stitch(st, data.raw_train, data.raw_test, cfg.stitch, seed);
    }
    rows.push_back(detail::summarize("stitch", "self", k, {v}));
  }
  return rows;
}

// CKA matrix over the full test split. Grams are computed once per model and
// cut and shared across every pairing that touches them.
inline std::vector<SummaryRow> run_cka_matrix(const ExperimentConfig& cfg,
                                              std::vector<TrainedModel>& models,
                                              const ExperimentData& data) {
  const int n = cfg.seeds_per_kind();
  const auto pairs = cka_pair_specs(n);
  const int num_cuts = config_num_cuts(cfg);

  std::map<std::pair<std::string, int>, std::vector<double>> grams;
  auto gram_for = [&](TrainedModel& t, int k) -> const std::vector<double>& {
    auto key = std::make_pair(t.id, k);
    auto it = grams.find(key);
    if (it == grams.end()) {
      auto acts = activations_at_cut(t.model, data.test_for(t.input_kind), k);
      it = grams.emplace(key, centered_gram(acts)).first;
    }
    return it->second;
  };

  const std::vector<std::string> kind_order = {"pi-pi", "pi-raw", "raw-raw"};
  std::vector<SummaryRow> rows;
  for (const auto& kind : kind_order) {
    for (int k = 1; k <= num_cuts; ++k) {
      std::vector<double> values;
      for (const auto& p : pairs) {
        if (p.kind != kind) continue;
        auto& a = detail::model_at(models, p.a_kind, p.a, cfg);
        auto& b = detail::model_at(models, p.b_kind, p.b, cfg);
        double v = std::numeric_limits<double>::quiet_NaN();
        if (a.ok && b.ok) {
          try {
            v = cka_from_grams(gram_for(a, k), gram_for(b, k));
          } catch (const std::domain_error& e) {
            std::cerr << "[cka] " << a.id << " vs " << b.id << " at cut " << k
                      << ": " << e.what() << "\n";
          }
        } else {
          std::cerr << "[cka] skipping " << a.id << " vs " << b.id
                    << " at cut " << k << ": untrained model\n";
        }
        values.push_back(v);
      }
      rows.push_back(detail::summarize("cka", kind, k, std::move(values)));
      std::cout << "[cka] " << kind << " cut " << k << ": mean "
                << format_double(rows.back().mean) << " over "
                << rows.back().n_pairs << " pairs\n";
    }
  }

  auto& self = detail::model_at(models, "raw", 0, cfg);
  for (int k = 1; k <= num_cuts; ++k) {
    double v = std::numeric_limits<double>::quiet_NaN();
    if (self.ok) v = cka_from_grams(gram_for(self, k), gram_for(self, k));
    rows.push_back(detail::summarize("cka", "self", k, {v}));
  }
  return rows;
}

// Renders the SVG profile charts from the CSVs already on disk.
inline void run_report(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const std::string fam = family_name(cfg.family);
  const auto stitch_csv = (fs::path(cfg.out_dir) / "stitch.csv").string();
  const auto cka_csv = (fs::path(cfg.out_dir) / "cka.csv").string();
  bool any = false;
  if (fs::exists(stitch_csv)) {
    write_profile_svg(
        (fs::path(cfg.out_dir) / ("stitch_" + fam + ".svg")).string(),
        parse_summary_csv(stitch_csv), "stitching accuracy (" + fam + ")",
        "stitched test accuracy");
    std::cout << "[report] wrote stitch_" << fam << ".svg\n";
    any = true;
  }
  if (fs::exists(cka_csv)) {
    write_profile_svg((fs::path(cfg.out_dir) / ("cka_" + fam + ".svg")).string(),
                      parse_summary_csv(cka_csv), "linear CKA (" + fam + ")",
                      "CKA");
    std::cout << "[report] wrote cka_" << fam << ".svg\n";
    any = true;
  }
  if (!any)
    throw std::runtime_error("no stitch.csv or cka.csv under " + cfg.out_dir +
                             "; run the comparison stages first");
}

// Full pipeline: prep, train, both comparison matrices, report.
inline void run_all(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  auto data = run_prep(cfg);
  auto models = run_train(cfg, data);
  auto stitch_rows = run_stitch_matrix(cfg, models, data);
  write_summary_csv((fs::path(cfg.out_dir) / "stitch.csv").string(),
                    stitch_rows);
  auto cka_rows = run_cka_matrix(cfg, models, data);
  write_summary_csv((fs::path(cfg.out_dir) / "cka.csv").string(), cka_rows);
  run_report(cfg);
}

}  // namespace tml
