#pragma once

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "urecon/checkpoint.hpp"
#include "urecon/classical.hpp"
#include "urecon/config.hpp"
#include "urecon/dataset.hpp"
#include "urecon/metrics.hpp"
#include "urecon/pgm.hpp"
#include "urecon/train.hpp"

// Command-line entry points. Everything here is a thin, testable layer over
// the library: each cmd_* function does the work of one subcommand, run()
// parses arguments and maps failures onto the documented exit codes
// (0 ok, 1 usage/config, 2 numerical, 3 I/O).

namespace urecon::cli {

constexpr const char* kDatasetMarker = "# urecon dataset\n";
constexpr const char* kCheckpointMarker = "# urecon checkpoint\n";

struct CheckpointData {
  RunConfig config;
  ParamSet params;
  AdamState adam;
  std::vector<double> loss_history;
};

inline TensorFile checkpoint_to_file(const RunConfig& cfg, const ParamSet& ps,
                                     const AdamState& adam,
                                     const std::vector<double>& loss_history) {
  TensorFile f;
  f.config_text = std::string(kCheckpointMarker) + render_config(cfg);
  for (const auto& [name, t] : ps.items) f.add(name, t);
  Tensor t_step({1});
  t_step[0] = static_cast<double>(adam.t);
  f.add("adam.t", std::move(t_step));
  for (std::size_t k = 0; k < ps.items.size(); ++k) {
    f.add("adam.m." + ps.items[k].first, adam.m[k]);
    f.add("adam.v." + ps.items[k].first, adam.v[k]);
  }
  f.add("loss_history", Tensor({loss_history.size()}, loss_history));
  return f;
}

inline CheckpointData checkpoint_from_file(const TensorFile& f) {
  CheckpointData c;
  c.config = parse_config(f.config_text);
  for (const auto& [name, t] : f.tensors) {
    if (name.rfind("adam.", 0) == 0 || name == "loss_history") continue;
    Tensor copy = t;
    copy.requires_grad = true;
    c.params.add(name, std::move(copy));
  }
  c.adam.init(c.params, c.config.train_config().adam);
  c.adam.t = static_cast<std::uint64_t>(f.at("adam.t")[0]);
  for (std::size_t k = 0; k < c.params.items.size(); ++k) {
    c.adam.m[k] = f.at("adam.m." + c.params.items[k].first);
    c.adam.v[k] = f.at("adam.v." + c.params.items[k].first);
  }
  const Tensor& hist = f.at("loss_history");
  c.loss_history.assign(hist.data.begin(), hist.data.end());
  return c;
}

inline void save_dataset_file(const RunConfig& cfg, const Dataset& ds,
                              const std::string& path) {
  TensorFile f;
  f.config_text = std::string(kDatasetMarker) + render_config(cfg);
  dataset_to_file(ds, f);
  save_tensor_file(f, path);
}

inline std::pair<RunConfig, Dataset> load_dataset_file(
    const std::string& path) {
  const TensorFile f = load_tensor_file(path);
  if (f.config_text.rfind(kDatasetMarker, 0) != 0)
    throw IoError("not a dataset file: " + path);
  const RunConfig cfg = parse_config(f.config_text);
  return {cfg, dataset_from_file(f, cfg.n_train, cfg.n_test)};
}

inline void require_matching_geometry(const RunConfig& a, const RunConfig& b,
                                      const std::string& what) {
  if (a.height != b.height || a.width != b.width || a.coils != b.coils ||
      a.n_train != b.n_train || a.n_test != b.n_test)
    throw ConfigError("dataset geometry mismatch between " + what);
}

inline void cmd_make_data(const RunConfig& cfg, const std::string& out_path) {
  const Dataset ds =
      make_dataset(cfg.n_train, cfg.n_test, cfg.height, cfg.width, cfg.coils,
                   cfg.mask_spec(), cfg.noise_sigma, cfg.data_seed);
  save_dataset_file(cfg, ds, out_path);
}

inline void cmd_train(const RunConfig& cfg, const std::string& data_path,
                      const std::string& out_checkpoint, std::ostream& log) {
  const auto [data_cfg, ds] = load_dataset_file(data_path);
  require_matching_geometry(cfg, data_cfg, "config and " + data_path);
  char line[64];
  const TrainResult res =
      train(ds, cfg.unroll_config(), cfg.train_config(),
            [&](std::size_t epoch, double loss) {
              std::snprintf(line, sizeof(line), "%zu,%.10g\n", epoch, loss);
              log << line << std::flush;
            });
  save_tensor_file(
      checkpoint_to_file(cfg, res.params, res.adam, res.loss_history),
      out_checkpoint);
}

inline std::vector<std::uint8_t> to_gray(const ComplexImage& img, double peak,
                                         double gain = 1.0) {
  std::vector<std::uint8_t> px(img.pixels());
  const auto mag = magnitude(img);
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = 255.0 * gain * mag[i] / peak;
    px[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0) + 0.5);
  }
  return px;
}

inline void cmd_reconstruct(const std::string& checkpoint_path,
                            const std::string& data_path, std::size_t item,
                            const std::string& out_dir) {
  const CheckpointData ckpt =
      checkpoint_from_file(load_tensor_file(checkpoint_path));
  const auto [data_cfg, ds] = load_dataset_file(data_path);
  require_matching_geometry(ckpt.config, data_cfg,
                            checkpoint_path + " and " + data_path);
  if (item >= ds.test_items.size())
    throw ConfigError("item " + std::to_string(item) +
                      " out of range: test split has " +
                      std::to_string(ds.test_items.size()) + " items");
  const DatasetItem& it = ds.test_items[item];
  const ComplexImage zf = zero_filled(it.encoder, it.y);
  const ComplexImage rec =
      reconstruct(it.encoder, it.y, ckpt.config.unroll_config(), ckpt.params);

  double peak = 0.0;
  for (double v : magnitude(it.x_ref)) peak = std::max(peak, v);
  if (peak == 0.0) throw NumericError("reference image is identically zero");

  ComplexImage err(rec.height, rec.width);
  for (std::size_t i = 0; i < err.data.size(); ++i)
    err.data[i] = rec.data[i] - it.x_ref.data[i];

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const std::string base = out_dir + "/";
  write_pgm(base + "reference.pgm", rec.width, rec.height,
            to_gray(it.x_ref, peak));
  write_pgm(base + "zero_filled.pgm", rec.width, rec.height,
            to_gray(zf, peak));
  write_pgm(base + "reconstruction.pgm", rec.width, rec.height,
            to_gray(rec, peak));
  write_pgm(base + "error_map.pgm", rec.width, rec.height,
            to_gray(err, peak, 10.0));  // x10 error scaling
}

inline std::string format_psnr(double v) {
  if (std::isinf(v)) return "perfect";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string csv = "item,method,psnr_db,ssim\n";
  for (const auto& r : rows)
    csv += std::to_string(r.item) + "," + r.method + "," +
           format_psnr(r.psnr_db) + "," + format_value(r.ssim_value) + "\n";
  return csv;
}

inline std::string summary_text(const std::vector<std::string>& methods,
                                const std::vector<MetricsRow>& rows) {
  std::string s;
  for (const auto& name : methods) {
    const MetricsSummary sum = summarize(name, rows);
    s += name + ".mean_psnr = " + format_value(sum.mean_psnr) + "\n";
    s += name + ".median_psnr = " + format_value(sum.median_psnr) + "\n";
    s += name + ".iqr_lo_psnr = " + format_value(sum.iqr_lo_psnr) + "\n";
    s += name + ".iqr_hi_psnr = " + format_value(sum.iqr_hi_psnr) + "\n";
    s += name + ".mean_ssim = " + format_value(sum.mean_ssim) + "\n";
    s += name + ".median_ssim = " + format_value(sum.median_ssim) + "\n";
    s += name + ".iqr_lo_ssim = " + format_value(sum.iqr_lo_ssim) + "\n";
    s += name + ".iqr_hi_ssim = " + format_value(sum.iqr_hi_ssim) + "\n";
    s += name + ".perfect_count = " + std::to_string(sum.perfect_count) + "\n";
  }
  return s;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << text;
  if (!os) throw IoError("write failed: " + path);
}

inline void cmd_evaluate(const std::string& checkpoint_path,
                         const std::string& data_path,
                         const std::string& out_csv, std::ostream& out) {
  const CheckpointData ckpt =
      checkpoint_from_file(load_tensor_file(checkpoint_path));
  const auto [data_cfg, ds] = load_dataset_file(data_path);
  require_matching_geometry(ckpt.config, data_cfg,
                            checkpoint_path + " and " + data_path);
  std::vector<ComplexImage> refs;
  for (const auto& it : ds.test_items) refs.push_back(it.x_ref);

  const UnrollConfig ucfg = ckpt.config.unroll_config();
  validate_params(ucfg, ckpt.params);
  std::vector<MethodUnderTest> methods;
  methods.push_back({"zero-filled", [&](std::size_t i) {
                       return zero_filled(ds.test_items[i].encoder,
                                          ds.test_items[i].y);
                     }});
  methods.push_back({algorithm_name(ckpt.config.algorithm),
                     [&](std::size_t i) {
                       return reconstruct(ds.test_items[i].encoder,
                                          ds.test_items[i].y, ucfg,
                                          ckpt.params);
                     }});
  const auto rows = evaluate_methods(refs, methods);
  write_text(out_csv, metrics_csv(rows));
  out << summary_text({methods[0].name, methods[1].name}, rows);
}

// Resolves one --methods token into a named reconstruction method; classical
// baselines are grid-tuned on the test split first.
inline MethodUnderTest resolve_method(const std::string& token,
                                      const Dataset& ds, const RunConfig& cfg,
                                      std::string& notes) {
  const auto& items = ds.test_items;
  if (token == "zero-filled")
    return {"zero-filled", [&items](std::size_t i) {
              return zero_filled(items[i].encoder, items[i].y);
            }};
  if (token == "l1w-pgd" || token == "l1w-admm") {
    const bool admm = token == "l1w-admm";
    std::size_t levels = 3;
    while (levels > 1 && ((ds.height >> levels) == 0 || ds.height % (1u << levels) ||
                          ds.width % (1u << levels)))
      --levels;
    const std::size_t lv = levels;
    auto recon = [&items, admm, lv](double lambda, std::size_t i) {
      return admm ? l1w_admm(items[i].y, items[i].encoder, lambda, 0.1, 60,
                             10, lv)
                  : l1w_pgd(items[i].y, items[i].encoder, lambda, 1.0, 100,
                            lv);
    };
    const double lambda = tune_lambda(
        items.size(), recon,
        [&items](const ComplexImage& rec, std::size_t i) {
          const double v = psnr(items[i].x_ref, rec);
          return std::isinf(v) ? 1e6 : v;
        });
    notes += token + ".lambda = " + format_value(lambda) + "\n";
    return {token,
            [recon, lambda](std::size_t i) { return recon(lambda, i); }};
  }
  // anything else is a checkpoint path
  const CheckpointData ckpt = checkpoint_from_file(load_tensor_file(token));
  if (ckpt.config.height != ds.height || ckpt.config.width != ds.width ||
      ckpt.config.coils != ds.n_coils)
    throw ConfigError("checkpoint " + token +
                      " does not match the dataset dimensions");
  const UnrollConfig ucfg = ckpt.config.unroll_config();
  validate_params(ucfg, ckpt.params);
  std::string name = std::filesystem::path(token).stem().string();
  auto params = std::make_shared<ParamSet>(ckpt.params);
  return {std::move(name), [&items, ucfg, params](std::size_t i) {
            return reconstruct(items[i].encoder, items[i].y, ucfg, *params);
          }};
}

inline void cmd_compare(const RunConfig& cfg, const std::string& data_path,
                        const std::vector<std::string>& method_tokens,
                        const std::string& out_dir, std::ostream& out) {
  if (method_tokens.size() < 2)
    throw ConfigError("compare needs at least two methods");
  const auto [data_cfg, ds] = load_dataset_file(data_path);
  (void)data_cfg;
  std::vector<ComplexImage> refs;
  for (const auto& it : ds.test_items) refs.push_back(it.x_ref);

  std::string notes;
  std::vector<MethodUnderTest> methods;
  methods.push_back(resolve_method("zero-filled", ds, cfg, notes));
  for (const auto& token : method_tokens) {
    if (token == "zero-filled") continue;
    methods.push_back(resolve_method(token, ds, cfg, notes));
  }
  std::vector<std::string> names;
  for (const auto& m : methods) names.push_back(m.name);

  const auto rows = evaluate_methods(refs, methods);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  write_text(out_dir + "/metrics.csv", metrics_csv(rows));

  // pairwise Wilcoxon signed-rank tests on both metrics
  std::string wil = "metric,method_a,method_b,statistic,p_value\n";
  auto values = [&](const std::string& name, bool use_psnr) {
    std::vector<double> v;
    for (const auto& r : rows)
      if (r.method == name) v.push_back(use_psnr ? r.psnr_db : r.ssim_value);
    return v;
  };
  for (std::size_t a = 0; a < names.size(); ++a)
    for (std::size_t b = a + 1; b < names.size(); ++b)
      for (const bool use_psnr : {true, false}) {
        std::vector<double> va = values(names[a], use_psnr);
        std::vector<double> vb = values(names[b], use_psnr);
        // drop pairs with a non-finite entry (perfect reconstructions)
        std::vector<double> fa, fb;
        for (std::size_t i = 0; i < va.size(); ++i)
          if (std::isfinite(va[i]) && std::isfinite(vb[i])) {
            fa.push_back(va[i]);
            fb.push_back(vb[i]);
          }
        const WilcoxonResult r = wilcoxon_signed_rank(fa, fb);
        wil += std::string(use_psnr ? "psnr" : "ssim") + "," + names[a] + "," +
               names[b] + "," + format_value(r.statistic) + "," +
               format_value(r.p_value) + "\n";
      }
  write_text(out_dir + "/wilcoxon.csv", wil);

  std::string summary = summary_text(names, rows);
  std::vector<std::pair<double, std::string>> ranking;
  for (const auto& name : names)
    ranking.emplace_back(summarize(name, rows).mean_psnr, name);
  std::sort(ranking.begin(), ranking.end(), [](const auto& x, const auto& y) {
    return x.first > y.first || (x.first == y.first && x.second < y.second);
  });
  summary += "ranking_by_mean_psnr =";
  for (const auto& [v, name] : ranking) summary += " " + name;
  summary += "\n" + notes;
  write_text(out_dir + "/summary.txt", summary);
  out << summary;
}

inline int run(std::vector<std::string> args, std::ostream& out,
               std::ostream& err) {
  CLI::App app{"unrolled optimization networks for multi-coil MRI"};
  app.name("urecon");
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, checkpoint_path, out_dir;
  std::string methods_arg;
  std::size_t item = 0;

  CLI::App* make_data = app.add_subcommand("make-data", "generate a dataset");
  make_data->add_option("--config", config_path, "run configuration")
      ->required();
  make_data->add_option("--out", out_path, "output dataset file")->required();

  CLI::App* train_cmd = app.add_subcommand("train", "train an unrolled network");
  train_cmd->add_option("--config", config_path, "run configuration")
      ->required();
  train_cmd->add_option("--data", data_path, "dataset file")->required();
  train_cmd->add_option("--out", out_path, "output checkpoint")->required();

  CLI::App* rec = app.add_subcommand("reconstruct", "write image files");
  rec->add_option("--checkpoint", checkpoint_path, "trained checkpoint")
      ->required();
  rec->add_option("--data", data_path, "dataset file")->required();
  rec->add_option("--item", item, "test item index")->required();
  rec->add_option("--out-dir", out_dir, "output directory")->required();

  CLI::App* eval = app.add_subcommand("evaluate", "metrics on the test split");
  eval->add_option("--checkpoint", checkpoint_path, "trained checkpoint")
      ->required();
  eval->add_option("--data", data_path, "dataset file")->required();
  eval->add_option("--out", out_path, "metrics CSV path")->required();

  CLI::App* cmp = app.add_subcommand("compare", "compare several methods");
  cmp->add_option("--config", config_path, "run configuration")->required();
  cmp->add_option("--data", data_path, "dataset file")->required();
  cmp->add_option("--methods", methods_arg,
                  "comma-separated checkpoints / l1w-pgd / l1w-admm / "
                  "zero-filled")
      ->required();
  cmp->add_option("--out-dir", out_dir, "output directory")->required();

  try {
    std::vector<const char*> argv;
    argv.push_back("urecon");
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());

    if (app.got_subcommand(make_data)) {
      cmd_make_data(load_config(config_path), out_path);
    } else if (app.got_subcommand(train_cmd)) {
      cmd_train(load_config(config_path), data_path, out_path, out);
    } else if (app.got_subcommand(rec)) {
      cmd_reconstruct(checkpoint_path, data_path, item, out_dir);
    } else if (app.got_subcommand(eval)) {
      cmd_evaluate(checkpoint_path, data_path, out_path, out);
    } else if (app.got_subcommand(cmp)) {
      std::vector<std::string> tokens;
      std::stringstream ss(methods_arg);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) tokens.push_back(tok);
      cmd_compare(load_config(config_path), data_path, tokens, out_dir, out);
    }
    return 0;
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace urecon::cli
