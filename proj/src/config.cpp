#include "saf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "saf/error.hpp"

namespace saf {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(std::string_view v, const std::string& key) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError(key + ": not a number: '" + std::string(v) + "'");
  return out;
}

std::uint64_t to_u64(std::string_view v, const std::string& key) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError(key + ": not a non-negative integer: '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false");
}

std::vector<double> to_list(std::string_view v, const std::string& key) {
  std::vector<double> out;
  if (v.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(to_double(trim(v.substr(start, comma - start)), key));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

synth::BandAmplitudes to_bands(std::string_view v, const std::string& key) {
  const auto list = to_list(v, key);
  if (list.size() != synth::kBands) throw ConfigError(key + ": expected 5 band amplitudes");
  synth::BandAmplitudes out{};
  std::copy(list.begin(), list.end(), out.begin());
  return out;
}

using Setter = std::function<void(CliConfig&, std::string_view, const std::string&)>;

template <class F>
Setter num(F field) {
  return [field](CliConfig& c, std::string_view v, const std::string& k) { field(c) = to_double(v, k); };
}
template <class F>
Setter count(F field) {
  return [field](CliConfig& c, std::string_view v, const std::string& k) {
    field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(to_u64(v, k));
  };
}
template <class F>
Setter flag(F field) {
  return [field](CliConfig& c, std::string_view v, const std::string& k) { field(c) = to_bool(v, k); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"pipeline.band_lo_hz", num([](CliConfig& c) -> double& { return c.pipeline.band_lo_hz; })},
      {"pipeline.band_hi_hz", num([](CliConfig& c) -> double& { return c.pipeline.band_hi_hz; })},
      {"pipeline.notch_hz",
       [](CliConfig& c, std::string_view v, const std::string& k) { c.pipeline.notch_hz = to_list(v, k); }},
      {"pipeline.notch_q", num([](CliConfig& c) -> double& { return c.pipeline.notch_q; })},
      {"pipeline.target_rate_hz", num([](CliConfig& c) -> double& { return c.pipeline.target_rate_hz; })},
      {"pipeline.epoch_seconds", num([](CliConfig& c) -> double& { return c.pipeline.epoch_seconds; })},
      {"pipeline.butter_order",
       [](CliConfig& c, std::string_view v, const std::string& k) {
         c.pipeline.butter_order = static_cast<int>(to_u64(v, k));
       }},

      {"asr.enabled", flag([](CliConfig& c) -> bool& { return c.asr_enabled; })},
      {"asr.cutoff_k", num([](CliConfig& c) -> double& { return c.asr.cutoff_k; })},
      {"asr.calib_window_s", num([](CliConfig& c) -> double& { return c.asr.calib_window_s; })},
      {"asr.calib_z_lo", num([](CliConfig& c) -> double& { return c.asr.calib_z_lo; })},
      {"asr.calib_z_hi", num([](CliConfig& c) -> double& { return c.asr.calib_z_hi; })},
      {"asr.min_calib_windows", count([](CliConfig& c) -> std::size_t& { return c.asr.min_calib_windows; })},
      {"asr.proc_window_s", num([](CliConfig& c) -> double& { return c.asr.proc_window_s; })},
      {"asr.proc_overlap", num([](CliConfig& c) -> double& { return c.asr.proc_overlap; })},

      {"swap.p", num([](CliConfig& c) -> double& { return c.swap.p; })},
      {"swap.seed", count([](CliConfig& c) -> std::uint64_t& { return c.swap.seed; })},
      {"swap.keep_originals", flag([](CliConfig& c) -> bool& { return c.swap.keep_originals; })},

      {"train.lr", num([](CliConfig& c) -> double& { return c.train.lr; })},
      {"train.batch_size", count([](CliConfig& c) -> std::size_t& { return c.train.batch_size; })},
      {"train.min_epochs", count([](CliConfig& c) -> std::size_t& { return c.train.min_epochs; })},
      {"train.max_epochs", count([](CliConfig& c) -> std::size_t& { return c.train.max_epochs; })},
      {"train.patience", count([](CliConfig& c) -> std::size_t& { return c.train.patience; })},
      {"train.plateau_window", count([](CliConfig& c) -> std::size_t& { return c.train.plateau_window; })},
      {"train.improvement_eps", num([](CliConfig& c) -> double& { return c.train.improvement_eps; })},
      {"train.lr_factor", num([](CliConfig& c) -> double& { return c.train.lr_factor; })},
      {"train.lr_floor", num([](CliConfig& c) -> double& { return c.train.lr_floor; })},
      {"train.beta1", num([](CliConfig& c) -> double& { return c.train.beta1; })},
      {"train.beta2", num([](CliConfig& c) -> double& { return c.train.beta2; })},
      {"train.adam_eps", num([](CliConfig& c) -> double& { return c.train.adam_eps; })},
      {"train.seed", count([](CliConfig& c) -> std::uint64_t& { return c.train.seed; })},
      {"train.mi_routing",
       [](CliConfig& c, std::string_view v, const std::string& k) {
         if (v == "reversed") {
           c.train.mi_routing = train::MiRouting::kReversed;
         } else if (v == "literal") {
           c.train.mi_routing = train::MiRouting::kLiteral;
         } else {
           throw ConfigError(k + ": expected reversed or literal");
         }
       }},
      {"train.grid_lo", num([](CliConfig& c) -> double& { return c.grid.lo; })},
      {"train.grid_hi", num([](CliConfig& c) -> double& { return c.grid.hi; })},
      {"train.grid_n_mi", count([](CliConfig& c) -> std::size_t& { return c.grid.n_mi; })},
      {"train.grid_n_grl", count([](CliConfig& c) -> std::size_t& { return c.grid.n_grl; })},
      {"train.grid_epochs", count([](CliConfig& c) -> std::size_t& { return c.grid.max_epochs; })},

      {"synth.subjects", count([](CliConfig& c) -> std::size_t& { return c.synth.subjects; })},
      {"synth.channels", count([](CliConfig& c) -> std::size_t& { return c.synth.channels; })},
      {"synth.fs", num([](CliConfig& c) -> double& { return c.synth.fs; })},
      {"synth.duration_s", num([](CliConfig& c) -> double& { return c.synth.duration_s; })},
      {"synth.class0",
       [](CliConfig& c, std::string_view v, const std::string& k) { c.synth.class_signature[0] = to_bands(v, k); }},
      {"synth.class1",
       [](CliConfig& c, std::string_view v, const std::string& k) { c.synth.class_signature[1] = to_bands(v, k); }},
      {"synth.subject_bias", num([](CliConfig& c) -> double& { return c.synth.subject_bias; })},
      {"synth.tilt_scale", num([](CliConfig& c) -> double& { return c.synth.tilt_scale; })},
      {"synth.line_noise_amp", num([](CliConfig& c) -> double& { return c.synth.line_noise_amp; })},
      {"synth.line_freq_hz", num([](CliConfig& c) -> double& { return c.synth.line_freq_hz; })},
      {"synth.artifact_rate_per_min", num([](CliConfig& c) -> double& { return c.synth.artifact_rate_per_min; })},
      {"synth.artifact_gain", num([](CliConfig& c) -> double& { return c.synth.artifact_gain; })},
      {"synth.seed", count([](CliConfig& c) -> std::uint64_t& { return c.synth.seed; })},
      {"synth.holdout_subject",
       [](CliConfig& c, std::string_view v, const std::string&) { c.holdout_subject = std::string(v); }},
  };
  return table;
}

}  // namespace

void CliConfig::validate() const {
  pipeline.validate();
  if (asr_enabled) asr.validate();
  swap.validate();
  train.validate();
  synth.validate();
  if (grid.n_mi < 2 || grid.n_grl < 2) throw ConfigError("grid sizes must be >= 2");
  if (grid.max_epochs < 1) throw ConfigError("grid_epochs must be >= 1");
  if (!(grid.lo <= grid.hi)) throw ConfigError("grid_lo must not exceed grid_hi");
}

CliConfig parse_config(std::string_view text) {
  static const std::set<std::string> sections{"pipeline", "asr", "swap", "train", "synth"};
  CliConfig cfg;
  std::string section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const auto raw = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(raw);
    const std::string where = "line " + std::to_string(line_no);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!sections.count(section)) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside any section");
    const std::string key = section + "." + std::string(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + ": unknown key " + key);
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key " + key);
    it->second(cfg, value, key);
  }
  cfg.validate();
  return cfg;
}

CliConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace saf
