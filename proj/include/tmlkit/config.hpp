#pragma once

// Experiment configuration: a minimal TOML-style key/value parser (sections,
// comments, scalars, flat arrays) and the typed config struct with every
// training, stitching, and persistence-image default overridable per run.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmlkit/model.hpp"
#include "tmlkit/persistence_image.hpp"

namespace tml {

class KeyValueFile {
 public:
  static KeyValueFile parse_string(const std::string& text) {
    KeyValueFile kv;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      auto stripped = strip_comment(line);
      auto t = trim(stripped);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw std::invalid_argument("config line " + std::to_string(lineno) +
                                      ": unterminated section header");
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      auto eq = t.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": expected key = value");
      auto key = trim(t.substr(0, eq));
      auto value = trim(t.substr(eq + 1));
      if (key.empty() || value.empty())
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": empty key or value");
      if (!section.empty()) key = section + "_" + key;
      if (kv.values_.count(key))
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": duplicate key '" + key + "'");
      kv.values_[key] = parse_value(value, lineno);
    }
    return kv;
  }

  static KeyValueFile parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f.good())
      throw std::runtime_error("cannot open config file " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_string(ss.str());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& dflt) {
    if (!has(key)) return dflt;
    return scalar(key);
  }

  bool get_bool(const std::string& key, bool dflt) {
    if (!has(key)) return dflt;
    auto v = scalar(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw std::invalid_argument("config key '" + key +
                                "': expected true or false, got '" + v + "'");
  }

  int64_t get_int(const std::string& key, int64_t dflt) {
    if (!has(key)) return dflt;
    return to_int(scalar(key), key);
  }

  double get_double(const std::string& key, double dflt) {
    if (!has(key)) return dflt;
    return to_double(scalar(key), key);
  }

  std::vector<int64_t> get_int_list(const std::string& key,
                                    std::vector<int64_t> dflt) {
    if (!has(key)) return dflt;
    consumed_.insert(key);
    std::vector<int64_t> out;
    for (auto& v : values_.at(key)) out.push_back(to_int(v, key));
    return out;
  }

  // Typo guard: every key in the file must have been read by a getter.
  void reject_unknown_keys() const {
    for (auto& [key, value] : values_)
      if (!consumed_.count(key))
        throw std::invalid_argument("config: unknown key '" + key + "'");
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      else if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static std::vector<std::string> parse_value(const std::string& v,
                                              int lineno) {
    if (v.front() == '[') {
      if (v.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": unterminated array");
      std::vector<std::string> out;
      std::istringstream is(v.substr(1, v.size() - 2));
      std::string item;
      while (std::getline(is, item, ',')) {
        auto t = trim(item);
        if (!t.empty()) out.push_back(unquote(t));
      }
      return out;
    }
    return {unquote(v)};
  }

  static std::string unquote(const std::string& v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
      return v.substr(1, v.size() - 2);
    return v;
  }

  std::string scalar(const std::string& key) {
    consumed_.insert(key);
    auto& v = values_.at(key);
    if (v.size() != 1)
      throw std::invalid_argument("config key '" + key +
                                  "': expected a single value, got an array");
    return v[0];
  }

  static int64_t to_int(const std::string& v, const std::string& key) {
    try {
      size_t pos = 0;
      int64_t out = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw std::invalid_argument("config key '" + key +
                                  "': expected an integer, got '" + v + "'");
    }
  }

  static double to_double(const std::string& v, const std::string& key) {
    try {
      size_t pos = 0;
      double out = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw std::invalid_argument("config key '" + key +
                                  "': expected a number, got '" + v + "'");
    }
  }

  std::map<std::string, std::vector<std::string>> values_;
  std::set<std::string> consumed_;
};

struct ExperimentConfig {
  std::string dataset_dir;  // empty: TMLKIT_DATA_DIR, then ./data
  std::string out_dir = "out";
  Family family = Family::MLP;

  // Dataset shaping.
  int resize_hw = 32;
  int64_t train_limit = 1536, test_limit = 512;
  std::vector<int> keep_classes = {0, 1, 8};  // remapped to 0,1,2 by position

  // Synthetic-digit fallback when no IDX files are present.
  bool synth_fallback = true;
  int64_t synth_train_count = 4000, synth_test_count = 1000;
  uint64_t synth_seed = 7;

  PIParams pi;

  // Model widths.
  int hidden = 256;
  std::vector<int> channels = {8, 8, 16, 16, 32, 32};

  TrainHyper train;   // iterations default 1000 (mlp) / 2000 (cnn)
  TrainHyper stitch;  // lr 1e-4, batch 64, weight decay 1e-5, 300 iterations

  std::vector<uint64_t> seeds_raw = {11, 12, 13, 14};
  std::vector<uint64_t> seeds_pi = {21, 22, 23, 24};

  int num_classes() const { return static_cast<int>(keep_classes.size()); }
  int seeds_per_kind() const { return static_cast<int>(seeds_raw.size()); }

  ModelSpec model_spec(const std::string& input_kind) const {
    ModelSpec s;
    s.family = family;
    s.in_channels = input_kind == "pi" ? 2 : 3;
    s.input_hw = resize_hw;
    s.num_classes = num_classes();
    s.hidden = hidden;
    s.channels = channels;
    return s;
  }

  void validate() const {
    if (seeds_raw.size() < 2 || seeds_pi.size() != seeds_raw.size())
      throw std::invalid_argument(
          "config: need equal seed lists with at least 2 seeds per input kind");
    std::set<uint64_t> raw(seeds_raw.begin(), seeds_raw.end());
    std::set<uint64_t> pis(seeds_pi.begin(), seeds_pi.end());
    if (raw.size() != seeds_raw.size() || pis.size() != seeds_pi.size())
      throw std::invalid_argument("config: duplicate seed within a kind");
    for (uint64_t s : seeds_pi)
      if (raw.count(s))
        throw std::invalid_argument(
            "config: seed lists must be disjoint across input kinds, seed " +
            std::to_string(s) + " appears in both");
    train.validate();
    stitch.validate();
    pi.validate();
    if (train_limit < 0 || test_limit < 0)
      throw std::invalid_argument("config: negative dataset limit");
    if (keep_classes.empty())
      throw std::invalid_argument("config: keep_classes empty");
    model_spec("raw").validate();
    model_spec("pi").validate();
  }
};

inline ExperimentConfig config_from_kv(KeyValueFile kv) {
  ExperimentConfig c;
  auto fam = kv.get_string("family", "mlp");
  if (fam == "mlp") c.family = Family::MLP;
  else if (fam == "cnn") c.family = Family::CNN;
  else
    throw std::invalid_argument("config: unknown family '" + fam +
                                "' (expected mlp or cnn)");

  c.dataset_dir = kv.get_string("dataset_dir", "");
  c.out_dir = kv.get_string("out_dir", c.out_dir);
  c.resize_hw = static_cast<int>(kv.get_int("resize_hw", c.resize_hw));
  c.train_limit = kv.get_int("train_limit", c.train_limit);
  c.test_limit = kv.get_int("test_limit", c.test_limit);
  c.synth_fallback = kv.get_bool("synth_fallback", c.synth_fallback);
  c.synth_train_count = kv.get_int("synth_train_count", c.synth_train_count);
  c.synth_test_count = kv.get_int("synth_test_count", c.synth_test_count);
  c.synth_seed = static_cast<uint64_t>(kv.get_int("synth_seed",
                                                  static_cast<int64_t>(c.synth_seed)));

  c.pi.res_h = static_cast<int>(kv.get_int("pi_res", c.pi.res_h));
  c.pi.res_w = c.pi.res_h;
  c.pi.sigma = kv.get_double("pi_sigma", c.pi.sigma);
  c.pi.weight_power = kv.get_double("pi_weight_power", c.pi.weight_power);
  c.pi.essential_death = kv.get_double("pi_essential_death",
                                       c.pi.essential_death);

  c.hidden = static_cast<int>(kv.get_int("hidden", c.hidden));
  auto ch = kv.get_int_list("channels", {});
  if (!ch.empty()) {
    c.channels.clear();
    for (auto v : ch) c.channels.push_back(static_cast<int>(v));
  }

  c.train.lr = kv.get_double("train_lr", 5e-3);
  c.train.batch = static_cast<int>(kv.get_int("train_batch", 64));
  c.train.weight_decay = kv.get_double("train_weight_decay", 1e-5);
  c.train.iterations = static_cast<int>(
      kv.get_int("train_iters", c.family == Family::CNN ? 2000 : 1000));

  c.stitch.lr = kv.get_double("stitch_lr", 1e-4);
  c.stitch.batch = static_cast<int>(kv.get_int("stitch_batch", 64));
  c.stitch.weight_decay = kv.get_double("stitch_weight_decay", 1e-5);
  c.stitch.iterations = static_cast<int>(kv.get_int("stitch_iters", 300));

  auto to_seeds = [](const std::vector<int64_t>& v) {
    std::vector<uint64_t> out;
    for (auto s : v) out.push_back(static_cast<uint64_t>(s));
    return out;
  };
  auto sr = kv.get_int_list("seeds_raw", {});
  if (!sr.empty()) c.seeds_raw = to_seeds(sr);
  auto sp = kv.get_int_list("seeds_pi", {});
  if (!sp.empty()) c.seeds_pi = to_seeds(sp);

  kv.reject_unknown_keys();

  if (c.dataset_dir.empty()) {
    const char* env = std::getenv("TMLKIT_DATA_DIR");
    c.dataset_dir = env && *env ? env : "data";
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  return config_from_kv(KeyValueFile::parse_file(path));
}

inline ExperimentConfig default_config() {
  return config_from_kv(KeyValueFile::parse_string(""));
}

}  // namespace tml
