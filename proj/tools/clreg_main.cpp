// clreg: continual-learning regularisation testbed CLI.
//
// Subcommands: run, sweep, shuffle, probe, metrics. Exit codes: 0 success,
// 2 config error, 3 numerical failure.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "clreg/csvio.hpp"
#include "clreg/diagnostics.hpp"
#include "clreg/errors.hpp"
#include "clreg/metrics.hpp"
#include "clreg/runner.hpp"
#include "json.hpp"

namespace {

using namespace clreg;

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& field : split_csv_line(text)) out.push_back(parse_double(field));
  return out;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
  const RunConfig config = load_run_config(config_path);
  const std::filesystem::path out = out_dir.empty() ? config.output_dir : out_dir;
  nlohmann::json summary = nlohmann::json::array();
  bool any_aborted = false;
  for (std::uint64_t seed : config.seeds) {
    const RunArtifacts art = run_sequence(config, seed);
    emit_reports(art, out / ("seed_" + std::to_string(seed)));
    nlohmann::json entry;
    entry["seed"] = seed;
    entry["aborted"] = art.aborted;
    if (art.aborted) {
      entry["reason"] = art.abort_reason;
      any_aborted = true;
    } else {
      entry["mean_acc"] = mean_acc(art.matrix);
      entry["final_acc"] = final_acc(art.matrix);
      if (art.matrix.task_count() >= 2) {
        entry["bwt"] = bwt(art.matrix);
        entry["fwt"] = fwt(art.matrix);
      }
      if (art.has_unseen) entry["unseen_f1"] = art.unseen_f1;
    }
    summary.push_back(entry);
  }
  write_text_file(out / "summary.json", summary.dump(2) + "\n");
  std::cout << "wrote " << (out / "summary.json").string() << "\n";
  return any_aborted ? 3 : 0;
}

int cmd_sweep(const std::string& config_path, const std::string& lambdas_text,
              const std::string& out_dir) {
  const RunConfig config = load_run_config(config_path);
  const std::vector<double> lambdas = parse_double_list(lambdas_text);
  const SweepResult sweep = sweep_lambda(config, lambdas);
  const std::filesystem::path out = out_dir.empty() ? config.output_dir : out_dir;
  write_text_file(out / "sweep.csv", sweep_to_csv(sweep));
  std::cout << "wrote " << (out / "sweep.csv").string() << "\n";
  return 0;
}

int cmd_shuffle(const std::string& config_path, std::size_t n, const std::string& out_dir) {
  const RunConfig config = load_run_config(config_path);
  const auto rows = shuffle_grid(config, n);
  const std::filesystem::path out = out_dir.empty() ? config.output_dir : out_dir;
  write_text_file(out / "shuffle.csv", shuffle_rows_to_csv(rows));
  std::cout << "wrote " << (out / "shuffle.csv").string() << "\n";
  return 0;
}

ProbeTrainSpec probe_spec_from(const RunConfig& config) {
  ProbeTrainSpec spec;
  spec.stream = config.stream;
  spec.hidden = config.model.hidden;
  spec.activation = config.model.activation;
  spec.use_adam = config.optimizer.use_adam;
  spec.lr = config.optimizer.lr;
  spec.epochs = config.epochs;
  spec.xi_damp = config.xi_damp;
  return spec;
}

int cmd_probe(const std::string& which, const std::string& config_path,
              const std::string& out_dir) {
  const RunConfig config = load_run_config(config_path);
  const std::filesystem::path out = out_dir.empty() ? config.output_dir : out_dir;
  std::filesystem::create_directories(out);

  if (which == "fisher") {
    const StreamResult stream = generate_stream(config.stream);
    std::vector<std::size_t> sizes_all = {1, 10, 100, 500};
    std::vector<std::size_t> sizes;
    for (std::size_t n : sizes_all) {
      if (n <= stream.stream.front().train.size()) sizes.push_back(n);
    }
    std::vector<std::size_t> layer_sizes;
    layer_sizes.push_back(config.stream.d);
    for (std::size_t h : config.model.hidden) layer_sizes.push_back(h);
    layer_sizes.push_back(config.stream.k);
    const ClassifierModel model = make_classifier(
        layer_sizes, config.model.activation, derive_seed(config.seeds.front(), "init"));
    const auto result = probe_fisher_convergence(model, stream.stream.front().train, sizes,
                                                 true, 5,
                                                 derive_seed(config.seeds.front(), "fisher_probe"));
    write_probe_csv(result.rows, out / "probe_fisher.csv");
    write_stat_json(result.stat, out / "probe_fisher.json");
    std::cout << "wrote " << (out / "probe_fisher.csv").string() << "\n";
    return 0;
  }
  if (which == "si-batch" || which == "mas-batch") {
    const ProbeTrainSpec spec = probe_spec_from(config);
    std::vector<std::size_t> batches;
    for (std::size_t b : {std::size_t{1}, std::size_t{4}, std::size_t{16}, std::size_t{64}}) {
      if (b <= config.stream.n_train) batches.push_back(b);
    }
    const bool si = which == "si-batch";
    const BatchProbeResult result = si ? probe_si_batch_inflation(spec, batches, config.seeds)
                                       : probe_mas_batch_robustness(spec, batches, config.seeds);
    const std::string stem = si ? "probe_si_batch" : "probe_mas_batch";
    write_probe_csv(result.rows, out / (stem + ".csv"));
    // primary statistic: gradient noise for SI, batch size for MAS
    write_stat_json(si ? result.variance_vs_magnitude : result.batch_vs_magnitude,
                    out / (stem + ".json"));
    write_stat_json(si ? result.batch_vs_magnitude : result.variance_vs_magnitude,
                    out / (stem + "_secondary.json"));
    std::cout << "wrote " << (out / (stem + ".csv")).string() << "\n";
    return 0;
  }
  if (which == "interference") {
    const RunArtifacts art = run_sequence(config, config.seeds.front());
    if (art.aborted) throw numeric_error("probe: run aborted: " + art.abort_reason);
    const auto rows = probe_gradient_interference(art.snapshots, {0.05, 0.20, 1.0});
    write_probe_csv(rows, out / "probe_interference.csv");
    std::cout << "wrote " << (out / "probe_interference.csv").string() << "\n";
    return 0;
  }
  if (which == "omega") {
    const RunArtifacts art = run_sequence(config, config.seeds.front());
    if (art.aborted) throw numeric_error("probe: run aborted: " + art.abort_reason);
    const auto result = probe_importance_accumulation(art.snapshots);
    write_probe_csv(result.rows, out / "probe_omega.csv");
    write_stat_json(result.stat, out / "probe_omega.json");
    std::cout << "wrote " << (out / "probe_omega.csv").string() << "\n";
    return 0;
  }
  throw config_error("unknown probe: " + which);
}

int cmd_metrics(const std::string& matrix_path, const std::string& baseline_text) {
  AccuracyMatrix m = accuracy_matrix_from_csv(read_lines(matrix_path));
  if (!baseline_text.empty()) {
    const auto b = parse_double_list(baseline_text);
    if (b.size() != m.task_count()) {
      throw config_error("metrics: baseline length does not match matrix");
    }
    m.b = b;
  }
  nlohmann::json j;
  j["mean_acc"] = mean_acc(m);
  j["final_acc"] = final_acc(m);
  if (m.task_count() >= 2) {
    j["bwt"] = bwt(m);
    j["fwt"] = fwt(m);
  } else {
    j["bwt"] = nullptr;
    j["fwt"] = nullptr;
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual-learning regularisation testbed"};
  app.require_subcommand(1);

  std::string config_path, out_dir, lambdas_text, probe_kind, matrix_path, baseline_text;
  std::size_t n_shuffles = 5;

  auto* run = app.add_subcommand("run", "train a subject-incremental sequence per seed");
  run->add_option("--config", config_path, "run config JSON")->required();
  run->add_option("--out", out_dir, "output directory (default: config output_dir)");

  auto* sweep = app.add_subcommand("sweep", "lambda sweep with naive baseline and t-tests");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--lambdas", lambdas_text, "comma-separated lambda grid")->required();
  sweep->add_option("--out", out_dir);

  auto* shuffle = app.add_subcommand("shuffle", "subject-order shuffle grid");
  shuffle->add_option("--config", config_path)->required();
  shuffle->add_option("--n", n_shuffles, "number of shuffles (index 0 = identity)")->required();
  shuffle->add_option("--out", out_dir);

  auto* probe = app.add_subcommand("probe", "diagnostic probes");
  probe->add_option("kind", probe_kind, "fisher|si-batch|mas-batch|interference|omega")
      ->required();
  probe->add_option("--config", config_path)->required();
  probe->add_option("--out", out_dir);

  auto* metrics = app.add_subcommand("metrics", "recompute metrics from an R.csv");
  metrics->add_option("--matrix", matrix_path, "R.csv path")->required();
  metrics->add_option("--baseline", baseline_text, "comma-separated init-accuracy row");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir);
    if (sweep->parsed()) return cmd_sweep(config_path, lambdas_text, out_dir);
    if (shuffle->parsed()) return cmd_shuffle(config_path, n_shuffles, out_dir);
    if (probe->parsed()) return cmd_probe(probe_kind, config_path, out_dir);
    if (metrics->parsed()) return cmd_metrics(matrix_path, baseline_text);
  } catch (const clreg::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const clreg::numeric_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const clreg::invalid_input& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
