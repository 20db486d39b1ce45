#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "urecon/dataset.hpp"
#include "urecon/errors.hpp"
#include "urecon/train.hpp"
#include "urecon/unroll.hpp"

// Run configuration: sectioned key = value text. Every key is validated
// before any computation; unknown keys or sections are rejected by name.

namespace urecon {

struct RunConfig {
  // [dataset]
  std::size_t n_train = 40, n_test = 20;
  std::size_t height = 64, width = 64, coils = 4;
  bool mask_random = false;
  std::size_t acceleration = 4, center_lines = 8;
  double noise_sigma = 0.01;
  std::uint64_t data_seed = 1;
  // [model]
  ProxKind prox = ProxKind::ResNet;
  std::size_t blocks = 5, channels = 32;
  Algorithm algorithm = Algorithm::PGD;
  std::size_t unrolls = 5, cg_iters = 10;
  // [train]
  std::size_t epochs = 30, batch_size = 1;
  double lr = 1e-3;
  std::uint64_t train_seed = 1;

  MaskSpec mask_spec() const {
    return MaskSpec{mask_random, acceleration, center_lines};
  }

  UnrollConfig unroll_config() const {
    UnrollConfig u;
    u.algorithm = algorithm;
    u.unrolls = unrolls;
    u.cg_iters = cg_iters;
    u.prox.kind = prox;
    u.prox.resnet = ResNetConfig{blocks, channels, 0.1};
    u.prox.unet = UNetConfig{channels};
    return u;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.adam.lr = lr;
    t.seed = train_seed;
    return t;
  }
};

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::PGD: return "pgd";
    case Algorithm::HC_PGD: return "hc-pgd";
    case Algorithm::NESTEROV_PGD: return "nesterov-pgd";
    case Algorithm::VSQP: return "vsqp";
    case Algorithm::HC_VSQP: return "hc-vsqp";
    case Algorithm::ADMM: return "admm";
    case Algorithm::HC_ADMM: return "hc-admm";
  }
  throw ContractError("unknown algorithm");
}

inline Algorithm algorithm_from_name(const std::string& s) {
  if (s == "pgd") return Algorithm::PGD;
  if (s == "hc-pgd") return Algorithm::HC_PGD;
  if (s == "nesterov-pgd") return Algorithm::NESTEROV_PGD;
  if (s == "vsqp") return Algorithm::VSQP;
  if (s == "hc-vsqp") return Algorithm::HC_VSQP;
  if (s == "admm") return Algorithm::ADMM;
  if (s == "hc-admm") return Algorithm::HC_ADMM;
  throw ConfigError("unknown algorithm '" + s + "'");
}

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" +
                      v + "'");
  }
}

inline std::uint64_t parse_seed(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer seed, got '" + v +
                      "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace config_detail

inline RunConfig parse_config(const std::string& text) {
  namespace d = config_detail;
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = d::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = d::trim(t.substr(1, t.size() - 2));
      if (section != "dataset" && section != "model" && section != "train")
        throw ConfigError("unknown config section '" + section + "'");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value, got '" + t + "'");
    const std::string key = d::trim(t.substr(0, eq));
    const std::string value = d::trim(t.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "dataset.n_train") cfg.n_train = d::parse_size(qual, value);
    else if (qual == "dataset.n_test") cfg.n_test = d::parse_size(qual, value);
    else if (qual == "dataset.height") cfg.height = d::parse_size(qual, value);
    else if (qual == "dataset.width") cfg.width = d::parse_size(qual, value);
    else if (qual == "dataset.coils") cfg.coils = d::parse_size(qual, value);
    else if (qual == "dataset.mask") {
      if (value == "uniform") cfg.mask_random = false;
      else if (value == "random") cfg.mask_random = true;
      else throw ConfigError("key 'dataset.mask': expected uniform|random, got '" +
                             value + "'");
    }
    else if (qual == "dataset.acceleration")
      cfg.acceleration = d::parse_size(qual, value);
    else if (qual == "dataset.center_lines")
      cfg.center_lines = d::parse_size(qual, value);
    else if (qual == "dataset.noise_sigma")
      cfg.noise_sigma = d::parse_double(qual, value);
    else if (qual == "dataset.seed") cfg.data_seed = d::parse_seed(qual, value);
    else if (qual == "model.prox") {
      if (value == "resnet") cfg.prox = ProxKind::ResNet;
      else if (value == "unet") cfg.prox = ProxKind::UNet;
      else throw ConfigError("key 'model.prox': expected resnet|unet, got '" +
                             value + "'");
    }
    else if (qual == "model.blocks") cfg.blocks = d::parse_size(qual, value);
    else if (qual == "model.channels") cfg.channels = d::parse_size(qual, value);
    else if (qual == "model.algorithm") cfg.algorithm = algorithm_from_name(value);
    else if (qual == "model.unrolls") cfg.unrolls = d::parse_size(qual, value);
    else if (qual == "model.cg_iters") cfg.cg_iters = d::parse_size(qual, value);
    else if (qual == "train.epochs") cfg.epochs = d::parse_size(qual, value);
    else if (qual == "train.lr") cfg.lr = d::parse_double(qual, value);
    else if (qual == "train.batch_size")
      cfg.batch_size = d::parse_size(qual, value);
    else if (qual == "train.seed") cfg.train_seed = d::parse_seed(qual, value);
    else throw ConfigError("unknown config key '" + qual + "'");
  }

  if (cfg.unrolls < 1) throw ConfigError("model.unrolls must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (uses_cg(cfg.algorithm) && cfg.cg_iters < 1)
    throw ConfigError("model.cg_iters must be >= 1 for CG-based algorithms");
  if (cfg.noise_sigma < 0) throw ConfigError("dataset.noise_sigma must be >= 0");
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Canonical rendering; parse(render(cfg)) reproduces cfg and rendering is
// byte-stable, so files embedding it round-trip exactly.
inline std::string render_config(const RunConfig& c) {
  namespace d = config_detail;
  std::string s;
  s += "[dataset]\n";
  s += "n_train = " + std::to_string(c.n_train) + "\n";
  s += "n_test = " + std::to_string(c.n_test) + "\n";
  s += "height = " + std::to_string(c.height) + "\n";
  s += "width = " + std::to_string(c.width) + "\n";
  s += "coils = " + std::to_string(c.coils) + "\n";
  s += std::string("mask = ") + (c.mask_random ? "random" : "uniform") + "\n";
  s += "acceleration = " + std::to_string(c.acceleration) + "\n";
  s += "center_lines = " + std::to_string(c.center_lines) + "\n";
  s += "noise_sigma = " + d::fmt_double(c.noise_sigma) + "\n";
  s += "seed = " + std::to_string(c.data_seed) + "\n";
  s += "[model]\n";
  s += std::string("prox = ") + (c.prox == ProxKind::UNet ? "unet" : "resnet") +
       "\n";
  s += "blocks = " + std::to_string(c.blocks) + "\n";
  s += "channels = " + std::to_string(c.channels) + "\n";
  s += std::string("algorithm = ") + algorithm_name(c.algorithm) + "\n";
  s += "unrolls = " + std::to_string(c.unrolls) + "\n";
  s += "cg_iters = " + std::to_string(c.cg_iters) + "\n";
  s += "[train]\n";
  s += "epochs = " + std::to_string(c.epochs) + "\n";
  s += "lr = " + d::fmt_double(c.lr) + "\n";
  s += "batch_size = " + std::to_string(c.batch_size) + "\n";
  s += "seed = " + std::to_string(c.train_seed) + "\n";
  return s;
}

}  // namespace urecon
