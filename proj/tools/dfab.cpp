#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "dfab/dataset.hpp"
#include "dfab/manifest.hpp"
#include "dfab/model_io.hpp"
#include "dfab/runtime.hpp"
#include "dfab/socket_transport.hpp"
#include "dfab/synth.hpp"
#include "dfab/worker.hpp"

namespace {

using namespace dfab;

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

TaskKind parse_task(const std::string& s) {
  if (s == "regression") return TaskKind::kRegression;
  if (s == "classification") return TaskKind::kBinaryClassification;
  throw ContractError("task must be regression or classification");
}

int run_synth(const SyntheticSpec& spec, const std::string& out_data,
              const std::string& out_model) {
  const SyntheticData out = synth_generate(spec);
  write_csv(out.data, out_data);
  save_model(ModelDocument{out.truth, "", std::nullopt, std::nullopt}, out_model);

  RunManifest manifest;
  manifest.command = "synth seed=" + std::to_string(spec.seed) + " n=" + std::to_string(spec.n) +
                     " d=" + std::to_string(spec.d) + " experts=" + std::to_string(spec.experts) +
                     " depth=" + std::to_string(spec.depth);
  manifest.outputs = {out_data, out_model};
  save_manifest(manifest, out_data + ".manifest.json");
  std::cout << "wrote " << out_data << " and " << out_model << "\n";
  return 0;
}

struct TrainArgs {
  std::string data_path, target = "target", task = "regression", out_prefix = "model";
  std::string transport = "inprocess", resume;
  TrainConfig tc;
  ClusterConfig cc;
  Real eps_shrink = -1;  // <0: default to 0.01*N
  Real holdout = 0;
  bool no_standardize = false;
};

int run_train(TrainArgs args) {
  args.tc.task = parse_task(args.task);
  args.cc.transport =
      args.transport == "socket" ? TransportKind::kSocket : TransportKind::kInProcess;

  Dataset raw = load_csv(args.data_path, args.target, args.tc.task);
  Dataset holdout_set;
  Dataset train_set;
  const bool standardize_inputs = !args.no_standardize;
  if (args.holdout > 0) {
    auto [tr, te] = split_train_test(raw, 1.0 - args.holdout, args.tc.seed, standardize_inputs);
    train_set = std::move(tr);
    holdout_set = std::move(te);
  } else {
    train_set = standardize_inputs ? standardize(raw) : raw;
  }
  args.tc.eps_shrink = args.eps_shrink >= 0
                           ? args.eps_shrink
                           : 0.01 * static_cast<Real>(train_set.n());

  if (args.tc.restarts > 1 && !args.resume.empty())
    throw ContractError("--resume cannot be combined with --restarts");
  const TrainResult result = args.tc.restarts > 1
                                 ? run_training_restarts(train_set, args.tc, args.cc)
                                 : run_training(train_set, args.tc, args.cc, args.resume);

  ModelDocument doc;
  doc.model = result.model;
  doc.train_config_echo = train_config_json(args.tc);
  if (!std::isnan(result.report.final_fic)) doc.final_fic = result.report.final_fic;
  doc.standardization = train_set.standardization;
  const std::string model_path = args.out_prefix + ".model.json";
  const std::string report_path = args.out_prefix + ".report.csv";
  const std::string manifest_path = args.out_prefix + ".manifest.json";
  save_model(doc, model_path);
  write_report_csv(result.report, report_path);

  RunManifest manifest;
  manifest.command = "train";
  manifest.train = args.tc;
  manifest.cluster = args.cc;
  manifest.inputs = {{args.data_path, content_hash(args.data_path)}};
  manifest.outputs = {model_path, report_path};
  save_manifest(manifest, manifest_path);

  std::cout << "iterations: " << result.report.iterations.size()
            << "  final FIC: " << result.report.final_fic
            << "  active experts: " << result.report.final_active_experts << "\n";
  if (args.holdout > 0) {
    Real se = 0;
    Index errors = 0;
    for (Index i = 0; i < holdout_set.n(); ++i) {
      const Prediction p = predict(holdout_set.X.row(i).transpose(), result.model);
      if (args.tc.task == TaskKind::kRegression) {
        Real yhat = p.value, ytrue = holdout_set.y[i];
        if (holdout_set.standardization) {
          yhat = inverse_standardize_target(*holdout_set.standardization, yhat);
          ytrue = inverse_standardize_target(*holdout_set.standardization, ytrue);
        }
        se += (yhat - ytrue) * (yhat - ytrue);
      } else {
        errors += p.label != static_cast<int>(holdout_set.y[i]);
      }
    }
    if (args.tc.task == TaskKind::kRegression)
      std::cout << "holdout RMSE: " << std::sqrt(se / static_cast<Real>(holdout_set.n()))
                << "\n";
    else
      std::cout << "holdout 0-1 error: "
                << static_cast<Real>(errors) / static_cast<Real>(holdout_set.n()) << "\n";
  }
  return 0;
}

int run_predict(const std::string& model_path, const std::string& data_path,
                const std::string& target, const std::string& out_path) {
  const ModelDocument doc = load_model(model_path);
  Dataset data = load_csv_features(data_path, target, doc.model.task);
  if (data.d() != doc.model.feature_dim())
    throw ContractError("data has " + std::to_string(data.d()) + " features, model expects " +
                        std::to_string(doc.model.feature_dim()));
  std::ofstream out(out_path);
  if (!out) throw ParseError("cannot write " + out_path);
  char buf[64];
  if (doc.model.task == TaskKind::kRegression)
    out << "prediction\n";
  else
    out << "label,probability\n";
  for (Index i = 0; i < data.n(); ++i) {
    VectorX x = data.X.row(i).transpose();
    if (doc.standardization) x = standardize_features(*doc.standardization, x);
    const Prediction p = predict(x, doc.model);
    if (doc.model.task == TaskKind::kRegression) {
      Real v = p.value;
      if (doc.standardization) v = inverse_standardize_target(*doc.standardization, v);
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << buf << "\n";
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g", p.value);
      out << p.label << "," << buf << "\n";
    }
  }
  RunManifest manifest;
  manifest.command = "predict";
  manifest.inputs = {{model_path, content_hash(model_path)},
                     {data_path, content_hash(data_path)}};
  manifest.outputs = {out_path};
  save_manifest(manifest, out_path + ".manifest.json");
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_evaluate(const std::string& model_path, const std::string& data_path,
                 const std::string& target) {
  const ModelDocument doc = load_model(model_path);
  const Dataset data = load_csv(data_path, target, doc.model.task);
  if (data.d() != doc.model.feature_dim())
    throw ContractError("data has " + std::to_string(data.d()) + " features, model expects " +
                        std::to_string(doc.model.feature_dim()));
  Real se = 0;
  Index errors = 0;
  std::map<int, Index> assignment;
  for (Index i = 0; i < data.n(); ++i) {
    VectorX x = data.X.row(i).transpose();
    if (doc.standardization) x = standardize_features(*doc.standardization, x);
    const Prediction p = predict(x, doc.model);
    ++assignment[p.expert];
    if (doc.model.task == TaskKind::kRegression) {
      Real v = p.value;
      if (doc.standardization) v = inverse_standardize_target(*doc.standardization, v);
      se += (v - data.y[i]) * (v - data.y[i]);
    } else {
      errors += p.label != static_cast<int>(data.y[i]);
    }
  }
  if (doc.model.task == TaskKind::kRegression)
    std::cout << "RMSE: " << std::sqrt(se / static_cast<Real>(data.n())) << "\n";
  else
    std::cout << "0-1 error: " << static_cast<Real>(errors) / static_cast<Real>(data.n())
              << "\n";
  std::cout << "assignments:\n";
  for (const auto& [expert, count] : assignment)
    std::cout << "  expert " << expert << ": " << count << "\n";
  return 0;
}

void render_expert(const ModelParams& model, int j, const std::string& indent) {
  const ExpertParams& e = model.experts[static_cast<std::size_t>(j)];
  std::cout << indent << "expert " << j << " (cardinality " << e.cardinality() << "): y = ";
  bool first = true;
  for (Index d = 0; d < e.weights.size(); ++d) {
    if (e.weights[d] == 0.0) continue;
    if (!first) std::cout << " + ";
    std::cout << e.weights[d] << "*x[" << d << "]";
    first = false;
  }
  if (!first) std::cout << " + ";
  std::cout << e.intercept;
  if (model.task == TaskKind::kRegression) std::cout << "  (sigma2 " << e.sigma2 << ")";
  std::cout << "\n";
}

void render_node(const ModelParams& model, int node, const std::string& indent) {
  const TreeTopology& topo = model.topology;
  if (node >= topo.gate_count) {
    const int leaf = node - topo.gate_count;
    if (topo.expert_active[leaf]) render_expert(model, leaf, indent);
    return;
  }
  const auto [lo, mid, hi] = topo.gate_span[node];
  if (topo.gate_passthrough[node]) {
    std::cout << indent << "gate " << node << ": (collapsed)\n";
    render_node(model, topo.any_active_in(lo, mid) ? 2 * node + 1 : 2 * node + 2, indent);
    return;
  }
  const GateParams& g = model.gates[static_cast<std::size_t>(node)];
  std::cout << indent << "gate " << node << ": x[" << g.gamma << "] < " << g.threshold
            << "  (g " << g.g << ")\n";
  std::cout << indent << "then:\n";
  render_node(model, 2 * node + 1, indent + "  ");
  std::cout << indent << "else:\n";
  render_node(model, 2 * node + 2, indent + "  ");
}

int run_inspect(const std::string& model_path) {
  const ModelDocument doc = load_model(model_path);
  render_node(doc.model, 0, "");
  if (doc.final_fic) std::cout << "final FIC: " << *doc.final_fic << "\n";
  return 0;
}

int run_worker(const std::string& host, std::uint16_t port, const std::string& data_dir) {
  auto link = socket_connect(host, port);
  const WorkerHello hello = link->recv_hello();
  TaskKind task;
  WorkerPartition part = read_partition_file(
      data_dir + "/part_" + std::to_string(hello.worker_index) + ".bin", &task);
  allocate_state(part, hello.expert_count, hello.init_seed);
  if (hello.resume_iteration >= 0)
    load_q_snapshot(part, q_snapshot_path(data_dir, hello.worker_index, hello.resume_iteration));
  WorkerConfig cfg;
  cfg.task = hello.task == 0 ? TaskKind::kRegression : TaskKind::kBinaryClassification;
  cfg.worker_count = hello.worker_count;
  cfg.worker_index = hello.worker_index;
  cfg.foba_max_features = hello.foba_max_features;
  cfg.checkpoint_interval = hello.checkpoint_interval;
  cfg.checkpoint_dir = data_dir;
  WorkerNode node(std::move(part), cfg);
  node.serve(*link);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed trainer for gated trees of sparse linear experts"};
  app.require_subcommand(1);
  std::function<int()> action;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset and its true model");
  auto spec = std::make_shared<SyntheticSpec>();
  auto out_data = std::make_shared<std::string>("synth.csv");
  auto out_model = std::make_shared<std::string>("synth.truth.json");
  synth->add_option("--n", spec->n, "sample count");
  synth->add_option("--d", spec->d, "feature count");
  synth->add_option("--experts", spec->experts, "true expert count");
  synth->add_option("--depth", spec->depth, "true tree depth");
  synth->add_option("--noise", spec->noise, "noise variance");
  synth->add_flag("--noise-stddev", spec->noise_is_stddev,
                  "interpret --noise as a standard deviation");
  synth->add_option("--nnz-min", spec->nnz_min, "minimum nonzero weights per expert");
  synth->add_option("--nnz-max", spec->nnz_max, "maximum nonzero weights per expert");
  synth->add_option("--seed", spec->seed, "rng seed");
  synth->add_option("--out-data", *out_data, "output CSV path");
  synth->add_option("--out-model", *out_model, "output true-model path");
  synth->callback([=, &action] { action = [=] { return run_synth(*spec, *out_data, *out_model); }; });

  // train
  auto* train = app.add_subcommand("train", "fit a model with the coordinator/worker EM loop");
  auto targs = std::make_shared<TrainArgs>();
  std::uint64_t seed = 0;
  train->add_option("--data", targs->data_path, "training CSV")->required();
  train->add_option("--target", targs->target, "target column name");
  train->add_option("--task", targs->task, "regression or classification");
  train->add_option("--workers", targs->cc.workers, "worker count");
  train->add_option("--depth", targs->tc.depth, "initial tree depth");
  train->add_option("--tmax", targs->tc.t_max, "split-grid bin count");
  train->add_option("--eps-shrink", targs->eps_shrink,
                    "shrinkage mass threshold (default 0.01*N)");
  train->add_option("--delta-term", targs->tc.delta_term, "relative FIC termination tolerance");
  train->add_option("--max-iters", targs->tc.max_iterations, "iteration cap");
  train->add_option("--seed", seed, "seed for shuffling and initialization");
  train->add_option("--d-beta", targs->tc.d_beta, "per-gate parameter count");
  train->add_option("--foba-max", targs->tc.foba_max_features, "feature-selection cardinality cap");
  train->add_option("--restarts", targs->tc.restarts,
                    "probe runs to race; the best objective continues");
  train->add_option("--probe-iters", targs->tc.probe_iterations, "iterations per probe run");
  train->add_flag("--swapped-gate-score", targs->tc.swapped_gate_score,
                  "use the swapped-argument gate score");
  train->add_option("--transport", targs->transport, "inprocess or socket");
  train->add_option("--checkpoint-every", targs->cc.checkpoint_interval,
                    "snapshot interval in iterations (0 disables)");
  train->add_option("--checkpoint-dir", targs->cc.checkpoint_dir, "snapshot directory");
  train->add_option("--port", targs->cc.port, "socket transport port");
  train->add_option("--data-dir", targs->cc.data_dir, "socket partition-file directory");
  train->add_option("--holdout", targs->holdout, "holdout fraction for evaluation");
  train->add_flag("--no-standardize", targs->no_standardize, "train on the data as given");
  train->add_option("--resume", targs->resume, "snapshot to resume from");
  train->add_option("--out", targs->out_prefix, "output path prefix");
  train->callback([=, &action, &seed] {
    action = [=] {
      TrainArgs copy = *targs;
      copy.tc.seed = seed;
      copy.cc.seed = seed;
      return run_train(std::move(copy));
    };
  });

  // predict
  auto* pred = app.add_subcommand("predict", "write one prediction per input row");
  auto pmodel = std::make_shared<std::string>();
  auto pdata = std::make_shared<std::string>();
  auto ptarget = std::make_shared<std::string>("target");
  auto pout = std::make_shared<std::string>("predictions.csv");
  pred->add_option("--model", *pmodel, "model document")->required();
  pred->add_option("--data", *pdata, "input CSV")->required();
  pred->add_option("--target", *ptarget, "target column to ignore if present");
  pred->add_option("--out", *pout, "output path");
  pred->callback([=, &action] {
    action = [=] { return run_predict(*pmodel, *pdata, *ptarget, *pout); };
  });

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "report RMSE or 0-1 error on labeled data");
  auto emodel = std::make_shared<std::string>();
  auto edata = std::make_shared<std::string>();
  auto etarget = std::make_shared<std::string>("target");
  eval->add_option("--model", *emodel, "model document")->required();
  eval->add_option("--data", *edata, "labeled CSV")->required();
  eval->add_option("--target", *etarget, "target column name");
  eval->callback([=, &action] {
    action = [=] { return run_evaluate(*emodel, *edata, *etarget); };
  });

  // inspect
  auto* inspect = app.add_subcommand("inspect", "print the gate rules and expert formulas");
  auto imodel = std::make_shared<std::string>();
  inspect->add_option("--model", *imodel, "model document")->required();
  inspect->callback([=, &action] { action = [=] { return run_inspect(*imodel); }; });

  // worker
  auto* worker = app.add_subcommand("worker", "serve one partition over a socket");
  auto whost = std::make_shared<std::string>("127.0.0.1");
  auto wport = std::make_shared<std::uint16_t>(0);
  auto wdir = std::make_shared<std::string>();
  worker->add_option("--host", *whost, "coordinator host");
  worker->add_option("--port", *wport, "coordinator port (default DFAB_WORKER_PORT)");
  worker->add_option("--data-dir", *wdir, "partition-file directory (default DFAB_DATA_DIR)");
  worker->callback([=, &action] {
    action = [=] {
      const std::uint16_t port =
          *wport != 0 ? *wport
                      : static_cast<std::uint16_t>(std::stoi(env_or("DFAB_WORKER_PORT", "7711")));
      const std::string dir = wdir->empty() ? env_or("DFAB_DATA_DIR", ".") : *wdir;
      return run_worker(*whost, port, dir);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    return action();
  } catch (const dfab::TrainingAborted& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    if (!e.checkpoint_path.empty())
      std::cerr << "resume from checkpoint: " << e.checkpoint_path << "\n";
    return 3;
  } catch (const dfab::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dfab::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
