// nnf: command-line front end for the DAG performance predictor.
//
// Subcommands: gen-data, train, eval, ablate, grad-check.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config failure.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "nnf/data.hpp"
#include "nnf/error.hpp"
#include "nnf/metrics.hpp"
#include "nnf/model.hpp"
#include "nnf/rng.hpp"
#include "nnf/tensor.hpp"
#include "nnf/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nnf;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct ConfigFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool is_config_error(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::UnknownVariant:
    case ErrorCode::EmptyInput:
      return true;
    default:
      return false;
  }
}

// ---- run configuration -------------------------------------------------

json default_run_config(const std::string& preset) {
  ModelConfig model;
  TrainConfig train;
  if (preset == "accuracy") {
    model = ModelConfig::accuracy_preset();
    train = TrainConfig::accuracy_preset();
  } else if (preset == "latency") {
    model = ModelConfig::latency_preset();
    train = TrainConfig::latency_preset();
  } else {
    throw ConfigFailure("unknown preset '" + preset + "'");
  }
  json cfg;
  cfg["model"] = json::parse(model.to_json());
  cfg["train"] = json::parse(train.to_json());
  cfg["split"] = {{"train", 0.8}, {"val", 0.1}, {"test", 0.1}};
  return cfg;
}

// Applies "a.b.c=value" onto a json tree. Values parse as JSON literals
// when possible and fall back to plain strings.
void apply_dotted_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigFailure("override must look like key.path=value: " +
                        assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &cfg;
  size_t start = 0;
  for (;;) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigFailure("empty key in override: " + assignment);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  double split_train = 0.8, split_val = 0.1, split_test = 0.1;
  json echo;
};

RunConfig resolve_run_config(const std::string& preset,
                             const std::string& config_path,
                             const std::vector<std::string>& overrides) {
  json cfg = default_run_config(preset);
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigFailure("cannot open config file " + config_path);
    json from_file = json::parse(in, nullptr, false);
    if (from_file.is_discarded())
      throw ConfigFailure("config file is not valid JSON: " + config_path);
    cfg.merge_patch(from_file);
  }
  for (const auto& o : overrides) apply_dotted_override(cfg, o);

  RunConfig run;
  try {
    run.model = ModelConfig::from_json(cfg.at("model").dump());
    run.train = TrainConfig::from_json(cfg.at("train").dump());
    run.split_train = cfg.at("split").at("train").get<double>();
    run.split_val = cfg.at("split").at("val").get<double>();
    run.split_test = cfg.at("split").at("test").get<double>();
  } catch (const json::exception& e) {
    throw ConfigFailure(std::string("bad run config: ") + e.what());
  } catch (const Error& e) {
    throw ConfigFailure(e.what());
  }
  run.echo = cfg;
  return run;
}

void require_readable(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw ConfigFailure(std::string(what) + " does not exist: " + path);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path);
  out << text;
  if (!out) raise(ErrorCode::IoError, "write failed for " + path);
}

void write_history_csv(const std::string& path,
                       const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out << "epoch,lr,train_mse,val_metric,ema_val_metric\n";
  out.precision(17);
  for (const auto& row : history)
    out << row.epoch << ',' << row.lr << ',' << row.train_mse << ','
        << row.val_metric << ',' << row.ema_val_metric << '\n';
  write_text(path, out.str());
}

// ---- gen-data -----------------------------------------------------------

int cmd_gen_data(const std::string& out_path, int n, uint64_t seed,
                 int depth_min, int depth_max, int width_min, int width_max,
                 double beta, double extra_edge_prob) {
  if (n < 1) throw ConfigFailure("--n must be at least 1");
  SynthConfig cfg;
  cfg.n_graphs = n;
  cfg.seed = seed;
  cfg.depth_min = depth_min;
  cfg.depth_max = depth_max;
  cfg.width_min = width_min;
  cfg.width_max = width_max;
  cfg.parallel_discount = beta;
  cfg.extra_edge_prob = extra_edge_prob;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw ConfigFailure(e.what());
  }
  const auto records = generate_synthetic(cfg);
  save_jsonl(records, out_path);
  std::cout << "wrote " << records.size() << " records to " << out_path
            << "\n";
  return 0;
}

// ---- train --------------------------------------------------------------

int cmd_train(const RunConfig& run, const std::string& data_path,
              const std::string& out_dir) {
  const auto records = load_jsonl(data_path);
  if (records.empty()) raise(ErrorCode::EmptyDataset, data_path);
  const SplitResult splits = split(records, run.split_train, run.split_val,
                                   run.split_test, run.train.seed);

  fs::create_directories(out_dir);
  json echo = run.echo;
  echo["data"] = data_path;
  write_text((fs::path(out_dir) / "config.json").string(), echo.dump(2) + "\n");

  const TrainedModel model = fit(run.model, splits.train, splits.val, run.train);

  write_history_csv((fs::path(out_dir) / "history.csv").string(),
                    model.history);
  save_checkpoint((fs::path(out_dir) / "final.ckpt").string(),
                  {run.model, model.final_params, model.target_lo,
                   model.target_hi});
  save_checkpoint((fs::path(out_dir) / "best.ckpt").string(),
                  {run.model, model.best_params, model.target_lo,
                   model.target_hi});
  save_checkpoint((fs::path(out_dir) / "best_ema.ckpt").string(),
                  {run.model, model.best_ema_params, model.target_lo,
                   model.target_hi});

  const double final_val =
      model.history.empty() ? 0.0 : model.history.back().val_metric;
  std::cout << "final_val_kendall_tau " << final_val << "\n";
  return 0;
}

// ---- eval ---------------------------------------------------------------

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& metric, double delta) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto records = load_jsonl(data_path);
  if (records.empty()) raise(ErrorCode::EmptyDataset, data_path);
  for (const auto& r : records)
    for (const auto& nd : r.nodes)
      if (nd.op_type >= ckpt.cfg.encoding.op_onehot_dim)
        raise(ErrorCode::CheckpointMismatch,
              "record op_type " + std::to_string(nd.op_type) +
                  " exceeds the checkpoint's encoding width");

  const auto pred = predict(ckpt, records);
  std::vector<double> gt;
  gt.reserve(records.size());
  for (const auto& r : records) gt.push_back(r.target);

  json out;
  out["n"] = records.size();
  char key[32];
  std::snprintf(key, sizeof(key), "acc@%.2f", delta);
  if (metric.empty() || metric == "kt") out["kendall_tau"] = kendall_tau(pred, gt);
  if (metric.empty() || metric == "mape") out["mape"] = mape(pred, gt);
  if (metric.empty() || metric == "acc") out[key] = acc_delta(pred, gt, delta);
  std::cout << out.dump() << "\n";
  return 0;
}

// ---- ablate -------------------------------------------------------------

struct GridCell {
  MaskVariant mask;
  FfnVariant ffn;
  uint64_t seed;
};

std::vector<GridCell> load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigFailure("cannot open grid file " + path);
  std::vector<GridCell> cells;
  std::string line;
  bool first = true;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t start = 0;
    for (;;) {
      const size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first && !fields.empty() && fields[0] == "mask_variant") {
      first = false;
      continue;  // header row
    }
    first = false;
    if (fields.size() != 3)
      throw ConfigFailure("grid line " + std::to_string(line_no) +
                          ": expected mask_variant,ffn_variant,seed");
    try {
      cells.push_back({mask_variant_from_string(fields[0]),
                       ffn_variant_from_string(fields[1]),
                       std::stoull(fields[2])});
    } catch (const Error& e) {
      throw ConfigFailure("grid line " + std::to_string(line_no) + ": " +
                          e.what());
    } catch (const std::exception&) {
      throw ConfigFailure("grid line " + std::to_string(line_no) +
                          ": bad seed '" + fields[2] + "'");
    }
  }
  return cells;
}

int cmd_ablate(const RunConfig& base, const std::string& data_path,
               const std::string& grid_path, const std::string& out_dir,
               int jobs) {
  const auto cells = load_grid(grid_path);
  if (cells.empty()) throw ConfigFailure("grid file has no cells");
  const auto records = load_jsonl(data_path);
  if (records.empty()) raise(ErrorCode::EmptyDataset, data_path);

  fs::create_directories(out_dir);

  struct CellResult {
    double final_val = 0.0, best_val = 0.0;
    std::string status = "ok";
  };
  std::vector<CellResult> results(cells.size());

  // Cells are independent: isolated params, optimizer state, and RNG
  // streams per cell; the CSV is assembled in grid order afterward.
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const GridCell& cell = cells[i];
      try {
        ModelConfig mcfg = base.model;
        mcfg.mask_variant = cell.mask;
        mcfg.ffn_variant = cell.ffn;
        TrainConfig tcfg = base.train;
        tcfg.seed = cell.seed;
        const SplitResult splits = split(records, base.split_train,
                                         base.split_val, base.split_test,
                                         tcfg.seed);
        const TrainedModel model = fit(mcfg, splits.train, splits.val, tcfg);
        results[i].final_val =
            model.history.empty() ? 0.0 : model.history.back().val_metric;
        results[i].best_val = model.best_val;
      } catch (const std::exception& e) {
        results[i].status = std::string("error: ") + e.what();
      }
    }
  };
  const int thread_count = std::max(1, std::min<int>(jobs, int(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ostringstream csv;
  csv << "mask_variant,ffn_variant,seed,final_val_kt,best_val_kt,status\n";
  csv.precision(17);
  for (size_t i = 0; i < cells.size(); ++i) {
    csv << to_string(cells[i].mask) << ',' << to_string(cells[i].ffn) << ','
        << cells[i].seed << ',' << results[i].final_val << ','
        << results[i].best_val << ',' << results[i].status << '\n';
  }
  const std::string csv_path = (fs::path(out_dir) / "ablation.csv").string();
  write_text(csv_path, csv.str());
  std::cout << csv.str();
  return 0;
}

// ---- grad-check ----------------------------------------------------------

int cmd_grad_check(const std::string& preset, uint64_t seed, bool dropout_on) {
  ModelConfig cfg = preset == "latency" ? ModelConfig::latency_preset()
                                        : ModelConfig::accuracy_preset();
  cfg.channels = 16;
  cfg.blocks = 2;
  cfg.dropout = dropout_on ? 0.1 : 0.0;

  Rng rng(substream_seed(seed, "gradcheck-graph"));
  std::vector<std::pair<int, int>> edges;
  const int n = 5;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.next_double() < 0.5) edges.emplace_back(i, j);
  std::vector<NodeDescriptor> nodes(static_cast<size_t>(n));
  for (auto& nd : nodes) {
    nd.op_type = int(rng.next_below(8));
    if (cfg.encoding.attr_sin_dim > 0) nd.attrs = {rng.uniform(0.0, 4.0)};
  }
  const Dag dag = Dag::from_edges(n, edges, std::move(nodes));

  Params params = init_params(cfg, seed);
  const GraphCache cache = build_graph_cache(dag, cfg);
  const double target[1] = {0.5};
  uint64_t fresh_seed = 0;  // advances when dropout is forced on

  auto value_fn = [&]() {
    ad::Tape tape;
    const ad::Tensor pred = model_forward_cached(
        tape, cache, params, cfg, dropout_on, dropout_on ? ++fresh_seed : 0);
    return tape.mse_loss(pred, target).scalar_value();
  };
  auto grad_fn = [&]() {
    params.zero_grad();
    ad::Tape tape;
    const ad::Tensor pred = model_forward_cached(
        tape, cache, params, cfg, dropout_on, dropout_on ? ++fresh_seed : 0);
    tape.backward(tape.mse_loss(pred, target));
  };
  std::vector<ad::ParamRef> refs;
  for (auto& p : params.all()) refs.push_back(p.ref());

  const auto report = ad::finite_diff_check(value_fn, grad_fn, refs, 1e-5, 1e-4);
  std::cout << "checked " << report.coords_checked
            << " coordinates, max relative error " << report.max_rel_err
            << " (param " << report.worst.param << "[" << report.worst.index
            << "], analytic " << report.worst.analytic << ", numeric "
            << report.worst.numeric << ")\n";
  if (!report.pass) {
    std::cerr << "gradient check failed: max relative error "
              << report.max_rel_err << " exceeds 1e-4 at "
              << report.worst.param << "\n";
    return kExitRuntime;
  }
  std::cout << "gradient check passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NN-Former style DAG performance predictor"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out;
  int gen_n = 1000;
  uint64_t gen_seed = 0;
  int depth_min = 3, depth_max = 12, width_min = 1, width_max = 4;
  double beta = 0.2, extra_edge_prob = 0.15;
  gen->add_option("--out", gen_out, "output JSONL path")->required();
  gen->add_option("--n", gen_n, "number of graphs");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--depth-min", depth_min);
  gen->add_option("--depth-max", depth_max);
  gen->add_option("--width-min", width_min);
  gen->add_option("--width-max", width_max);
  gen->add_option("--beta", beta, "parallel-work discount");
  gen->add_option("--extra-edge-prob", extra_edge_prob);

  // shared model/train flags
  std::string config_path, preset = "accuracy";
  std::vector<std::string> overrides;
  std::string mask_variant, ffn_variant;
  int epochs = -1, batch_size = -1, warmup = -1;
  int64_t seed_flag = -1;

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run config");
    cmd->add_option("--preset", preset, "accuracy|latency")
        ->check(CLI::IsMember({"accuracy", "latency"}));
    cmd->add_option("--set", overrides,
                    "dotted-key override, e.g. model.channels=64");
    cmd->add_option("--mask-variant", mask_variant);
    cmd->add_option("--ffn-variant", ffn_variant);
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--warmup-epochs", warmup);
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--seed", seed_flag);
  };

  // train
  auto* train_cmd = app.add_subcommand("train", "train a predictor");
  std::string train_data, train_out;
  train_cmd->add_option("--data", train_data, "JSONL dataset")->required();
  train_cmd->add_option("--out", train_out, "run directory")->required();
  add_run_flags(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_metric;
  double eval_delta = 0.1;
  eval_cmd->add_option("--ckpt", eval_ckpt)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--metric", eval_metric, "kt|mape|acc")
      ->check(CLI::IsMember({"kt", "mape", "acc"}));
  eval_cmd->add_option("--delta", eval_delta, "error bound for acc");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation grid");
  std::string ablate_data, ablate_grid, ablate_out;
  int jobs = int(std::thread::hardware_concurrency());
  ablate_cmd->add_option("--data", ablate_data)->required();
  ablate_cmd->add_option("--grid", ablate_grid)->required();
  ablate_cmd->add_option("--out", ablate_out)->required();
  ablate_cmd->add_option("--jobs", jobs, "parallel cells");
  add_run_flags(ablate_cmd);

  // grad-check
  auto* grad_cmd =
      app.add_subcommand("grad-check", "finite-difference model check");
  uint64_t grad_seed = 0;
  std::string grad_preset = "accuracy";
  bool dropout_on = false;
  grad_cmd->add_option("--preset", grad_preset, "accuracy|latency")
      ->check(CLI::IsMember({"accuracy", "latency"}));
  grad_cmd->add_option("--seed", grad_seed);
  grad_cmd->add_flag("--dropout-on", dropout_on,
                     "force train-time dropout (fails the determinism probe)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_out, gen_n, gen_seed, depth_min, depth_max,
                          width_min, width_max, beta, extra_edge_prob);

    auto build_run = [&]() {
      RunConfig run = resolve_run_config(preset, config_path, overrides);
      try {
        if (!mask_variant.empty())
          run.model.mask_variant = mask_variant_from_string(mask_variant);
        if (!ffn_variant.empty())
          run.model.ffn_variant = ffn_variant_from_string(ffn_variant);
        if (epochs >= 0) run.train.epochs = epochs;
        if (warmup >= 0) run.train.warmup_epochs = warmup;
        if (batch_size >= 0) run.train.batch_size = batch_size;
        if (seed_flag >= 0) run.train.seed = uint64_t(seed_flag);
        run.model.validate();
        run.train.validate();
      } catch (const Error& e) {
        throw ConfigFailure(e.what());
      }
      // refresh the echo with flag-level overrides applied
      run.echo["model"] = json::parse(run.model.to_json());
      run.echo["train"] = json::parse(run.train.to_json());
      return run;
    };

    if (train_cmd->parsed()) {
      require_readable(train_data, "data file");
      return cmd_train(build_run(), train_data, train_out);
    }
    if (eval_cmd->parsed()) {
      require_readable(eval_ckpt, "checkpoint");
      require_readable(eval_data, "data file");
      return cmd_eval(eval_ckpt, eval_data, eval_metric, eval_delta);
    }
    if (ablate_cmd->parsed()) {
      require_readable(ablate_data, "data file");
      require_readable(ablate_grid, "grid file");
      return cmd_ablate(build_run(), ablate_data, ablate_grid, ablate_out,
                        jobs);
    }
    if (grad_cmd->parsed())
      return cmd_grad_check(grad_preset, grad_seed, dropout_on);
  } catch (const ConfigFailure& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    if (is_config_error(e)) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    }
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
