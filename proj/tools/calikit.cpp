// Copyright 2026 The calikit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Command-line front end: dataset generation, training, jackknife
// uncertainty, temperature fitting, evaluation and parameter sweeps.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "calikit/calikit.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace calikit;

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

std::size_t default_workers() {
  const auto n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t workers = default_workers();

  std::size_t hidden_dim = 16;
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  double dropout = 0.5;
  std::size_t max_epochs = 200;
  std::size_t patience = 30;

  double damping = 0.01;
  double cg_tol = 1e-6;
  std::size_t cg_max_iter = 200;
  bool upweight_sign = false;

  std::string method = "baseline";
  double alpha = 0.9;
  double lambda = 0.1;
  std::size_t refresh_every = 10;
  double epsilon = 0.1;

  // Unset sizes are derived from the dataset.
  std::optional<std::size_t> lr_c;
  std::optional<std::size_t> val_size;
  std::optional<std::size_t> test_size;
  std::optional<int> minority;
  std::string nodes = "test";
  std::size_t bins = 10;

  std::vector<double> alphas{0.7, 0.75, 0.8, 0.85, 0.9};
  std::vector<double> lambdas{0.1, 0.2, 0.3, 0.4};
};

template <class F>
void visit_fields(RunConfig& c, F&& f) {
  f("seed", c.seed);
  f("workers", c.workers);
  f("hidden_dim", c.hidden_dim);
  f("learning_rate", c.learning_rate);
  f("weight_decay", c.weight_decay);
  f("dropout", c.dropout);
  f("max_epochs", c.max_epochs);
  f("patience", c.patience);
  f("damping", c.damping);
  f("cg_tol", c.cg_tol);
  f("cg_max_iter", c.cg_max_iter);
  f("upweight_sign", c.upweight_sign);
  f("method", c.method);
  f("alpha", c.alpha);
  f("lambda", c.lambda);
  f("refresh_every", c.refresh_every);
  f("epsilon", c.epsilon);
  f("lr_c", c.lr_c);
  f("val_size", c.val_size);
  f("test_size", c.test_size);
  f("minority", c.minority);
  f("nodes", c.nodes);
  f("bins", c.bins);
  f("alphas", c.alphas);
  f("lambdas", c.lambdas);
}

template <class T>
struct is_optional : std::false_type {};
template <class T>
struct is_optional<std::optional<T>> : std::true_type {};

json to_json(RunConfig c) {
  json j = json::object();
  visit_fields(c, [&](const char* key, const auto& field) {
    using T = std::decay_t<decltype(field)>;
    if constexpr (is_optional<T>::value) {
      j[key] = field ? json(*field) : json(nullptr);
    } else {
      j[key] = field;
    }
  });
  return j;
}

void merge_json(RunConfig& c, const json& j, const std::string& origin) {
  if (!j.is_object()) throw DomainError(origin + ": configuration must be a JSON object");
  std::set<std::string> known;
  visit_fields(c, [&](const char* key, auto& field) {
    known.insert(key);
    if (!j.contains(key)) return;
    using T = std::decay_t<decltype(field)>;
    const auto& v = j.at(key);
    try {
      if constexpr (is_optional<T>::value) {
        if (v.is_null()) {
          field.reset();
        } else {
          field = v.get<typename T::value_type>();
        }
      } else {
        field = v.get<T>();
      }
    } catch (const json::exception&) {
      throw DomainError(origin + ": bad value for '" + key + "'");
    }
  });
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw DomainError(origin + ": unknown key '" + key + "'");
  }
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw calikit::ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  if (detail::trim(text).empty()) return out;
  for (auto field : detail::split_fields(text, ',')) {
    double x = 0.0;
    if (!detail::parse_number(field, x)) {
      throw DomainError("cannot parse '" + std::string(field) + "' in " + what);
    }
    out.push_back(x);
  }
  return out;
}

std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

const std::map<std::string, std::string>& flag_help() {
  static const std::map<std::string, std::string> help{
      {"hidden_dim", "hidden layer width"},
      {"learning_rate", "Adam step size"},
      {"weight_decay", "L2 penalty added to the gradient"},
      {"dropout", "dropout rate during training"},
      {"max_epochs", "epoch limit"},
      {"patience", "epochs without validation improvement before stopping"},
      {"damping", "Hessian damping"},
      {"cg_tol", "relative residual every Hessian solve must meet"},
      {"cg_max_iter", "conjugate-gradient iteration cap"},
      {"upweight_sign", "use theta - H^-1 g / n for leave-one-out models (true/false)"},
      {"method", "baseline, calirare or label-smooth"},
      {"alpha", "jackknife coverage level"},
      {"lambda", "weight of the calibration term"},
      {"refresh_every", "epochs between uncertainty target refreshes"},
      {"epsilon", "label smoothing strength"},
      {"lr_c", "training nodes per original class"},
      {"val_size", "validation nodes"},
      {"test_size", "test nodes"},
      {"minority", "original class treated as the minority"},
      {"nodes", "evaluation node set: train, val or test"},
      {"bins", "bins for ECE and ACE"},
      {"alphas", "comma-separated coverage levels"},
      {"lambdas", "comma-separated lambda values"},
  };
  return help;
}

void add_config_flags(CLI::App* sub, std::initializer_list<const char*> keys) {
  for (const char* key : keys) sub->add_option(flag_name(key), flag_help().at(key));
}

/// Overwrites every field whose flag was given on the command line.
void apply_flags(RunConfig& c, const CLI::App& app, const CLI::App& sub) {
  visit_fields(c, [&](const char* key, auto& field) {
    const auto name = flag_name(key);
    const CLI::Option* opt = sub.get_option_no_throw(name);
    if (!opt || opt->count() == 0) opt = app.get_option_no_throw(name);
    if (!opt || opt->count() == 0) return;
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, std::vector<double>>) {
      field = parse_list(opt->template as<std::string>(), name);
    } else if constexpr (is_optional<T>::value) {
      field = opt->template as<typename T::value_type>();
    } else {
      field = opt->template as<T>();
    }
  });
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.hidden_dim = c.hidden_dim;
  t.learning_rate = c.learning_rate;
  t.weight_decay = c.weight_decay;
  t.dropout = c.dropout;
  t.max_epochs = c.max_epochs;
  t.patience = c.patience;
  t.seed = c.seed;
  t.validate();
  return t;
}

SolverConfig solver_config(const RunConfig& c) {
  SolverConfig s;
  s.damping = c.damping;
  s.cg_tol = c.cg_tol;
  s.cg_max_iter = c.cg_max_iter;
  s.upweight_sign = c.upweight_sign;
  s.validate();
  return s;
}

CoverageConfig coverage_config(double alpha) {
  CoverageConfig cov;
  cov.coverage = alpha;
  cov.validate();
  return cov;
}

CaliRareConfig calirare_config(const RunConfig& c, double alpha, double lambda) {
  CaliRareConfig cc;
  cc.train = train_config(c);
  cc.solver = solver_config(c);
  cc.coverage = coverage_config(alpha);
  cc.lambda = lambda;
  cc.refresh_every = c.refresh_every;
  cc.workers = c.workers;
  cc.validate();
  return cc;
}

// ---------------------------------------------------------------------------
// Datasets

const char* kEdgeFile = "edges.txt";
const char* kFeatureFile = "features.csv";
const char* kLabelFile = "labels.txt";
const char* kSplitFile = "split.csv";

struct SplitSizes {
  std::size_t lr_c, val, test;
};

// Unset validation and test sizes take up to 500 and 1000 of the nodes left
// after training selection, capped at a third and the rest respectively.
SplitSizes split_sizes(const RunConfig& c, std::span<const ClassId> original,
                       std::size_t default_lr_c) {
  std::set<ClassId> classes(original.begin(), original.end());
  SplitSizes s{c.lr_c.value_or(default_lr_c), 0, 0};
  const std::size_t used = s.lr_c * classes.size();
  const std::size_t rest = original.size() > used ? original.size() - used : 0;
  s.val = c.val_size.value_or(std::min<std::size_t>(500, rest / 3));
  s.test = c.test_size.value_or(std::min<std::size_t>(1000, rest > s.val ? rest - s.val : 0));
  return s;
}

struct Dataset {
  std::optional<Graph> graph;
  std::vector<ClassId> original;
  DatasetSplit split;
  fs::path split_source;
};

/// Loads the three dataset files, binarizes around the minority class when
/// needed, and resolves the split: an explicit file, then the split stored
/// next to the checkpoint, then the dataset's own split unless a label rate
/// was requested, and finally a fresh sample.
Dataset load_dataset(const RunConfig& c, const fs::path& dir, const std::string& split_flag,
                     const std::optional<fs::path>& model_dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " not found");
  Graph g = load_graph(dir / kEdgeFile, dir / kFeatureFile, dir / kLabelFile);
  Dataset ds;
  ds.original.assign(g.labels().begin(), g.labels().end());
  if (c.minority) {
    ds.graph.emplace(binarize(g, *c.minority));
  } else if (g.class_count() > 2) {
    ds.graph.emplace(binarize(g, rarest_class(g)));
  } else {
    ds.graph.emplace(std::move(g));
  }

  if (!split_flag.empty()) {
    ds.split_source = split_flag;
  } else if (model_dir && fs::exists(*model_dir / kSplitFile)) {
    ds.split_source = *model_dir / kSplitFile;
  } else if (!c.lr_c && fs::exists(dir / kSplitFile)) {
    ds.split_source = dir / kSplitFile;
  }
  if (!ds.split_source.empty()) {
    ds.split = read_split(ds.split_source);
  } else {
    const auto sz = split_sizes(c, ds.original, 20);
    ds.split = make_split(ds.original, sz.lr_c, sz.val, sz.test, c.seed);
  }
  validate_split(ds.split, ds.graph->labels(), ds.graph->class_count());
  return ds;
}

std::span<const NodeId> eval_nodes(const RunConfig& c, const DatasetSplit& s) {
  std::span<const NodeId> nodes;
  if (c.nodes == "test") {
    nodes = s.test;
  } else if (c.nodes == "val") {
    nodes = s.val;
  } else if (c.nodes == "train") {
    nodes = s.train;
  } else {
    throw DomainError("--nodes must be train, val or test, got '" + c.nodes + "'");
  }
  if (nodes.empty()) throw DomainError("the " + c.nodes + " node set is empty");
  return nodes;
}

ModelParams load_model(const fs::path& path, const Graph& g) {
  auto params = load_params(path);
  require_compatible(params, g.feature_dim(), static_cast<std::size_t>(g.class_count()));
  return params;
}

InfluenceProblem influence_problem(const RunConfig& c, const GraphData& data,
                                   const DatasetSplit& split) {
  return InfluenceProblem(data, split.train,
                          inverse_frequency_weights(data.labels(), split.train,
                                                    data.graph().class_count()),
                          c.weight_decay);
}

double read_temperature(const std::string& path) {
  if (path.empty()) return 1.0;
  const auto j = read_json(path);
  if (!j.is_object() || !j.contains("temperature") || !j["temperature"].is_number()) {
    throw calikit::ParseError(path + ": missing numeric 'temperature'");
  }
  const double t = j["temperature"].get<double>();
  if (!(t > 0.0)) throw DomainError(path + ": temperature must be positive");
  return t;
}

void write_manifest(const fs::path& out, const std::string& command, const RunConfig& c,
                    json extra = json::object()) {
  json m = json::object();
  m["command"] = command;
  m["config"] = to_json(c);
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_json(m, out / "manifest.json");
}

json split_json(const Dataset& ds) {
  json j = json::object();
  j["source"] = ds.split_source.empty() ? json("sampled") : json(ds.split_source.string());
  j["train"] = ds.split.train.size();
  j["val"] = ds.split.val.size();
  j["test"] = ds.split.test.size();
  return j;
}

// ---------------------------------------------------------------------------
// Commands

struct Paths {
  fs::path out = "calikit-out";
  std::string config;
  std::string data;
  std::string split;
  std::string model;
  std::string temperature;
};

struct GenArgs {
  std::string blocks;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t dim = 8;
  double shift = 2.0;
};

void cmd_gen(const RunConfig& c, const Paths& p, const GenArgs& a) {
  std::vector<std::size_t> blocks;
  for (double b : parse_list(a.blocks, "--blocks")) {
    if (!(b >= 0.0) || b != static_cast<double>(static_cast<std::size_t>(b))) {
      throw DomainError("block sizes must be non-negative integers");
    }
    blocks.push_back(static_cast<std::size_t>(b));
  }
  const Graph g = gen_synthetic(blocks, a.p_in, a.p_out, a.dim, a.shift, c.seed);
  const auto smallest = *std::min_element(blocks.begin(), blocks.end());
  const auto sz = split_sizes(c, g.labels(), std::clamp<std::size_t>(smallest / 2, 1, 20));
  const auto split = make_split(g.labels(), sz.lr_c, sz.val, sz.test, c.seed);

  fs::create_directories(p.out);
  save_graph(g, p.out / kEdgeFile, p.out / kFeatureFile, p.out / kLabelFile);
  write_split(split, p.out / kSplitFile);
  json gen = json::object();
  gen["blocks"] = blocks;
  gen["p_in"] = a.p_in;
  gen["p_out"] = a.p_out;
  gen["dim"] = a.dim;
  gen["shift"] = a.shift;
  gen["lr_c"] = sz.lr_c;
  gen["val_size"] = sz.val;
  gen["test_size"] = sz.test;
  write_manifest(p.out, "gen", c, {{"generator", gen}});
}

void write_train_log(std::span<const TrainLogRow> log, const fs::path& path) {
  auto out = detail::open_output(path);
  out << "epoch,loss_total,loss_ce,loss_eice,val_macro_ace,val_macro_f1\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << detail::format_double(r.loss_total) << ','
        << detail::format_double(r.loss_ce) << ',' << detail::format_double(r.loss_eice) << ','
        << detail::format_double(r.val_macro_ace) << ',' << detail::format_double(r.val_macro_f1)
        << '\n';
  }
}

void cmd_train(const RunConfig& c, const Paths& p) {
  const auto ds = load_dataset(c, p.data, p.split, std::nullopt);
  const GraphData data(*ds.graph);
  TrainResult res;
  if (c.method == "baseline") {
    res = fit(data, ds.split, train_config(c));
  } else if (c.method == "calirare") {
    auto r = train_calirare(data, ds.split, calirare_config(c, c.alpha, c.lambda));
    res.params = std::move(r.params);
    res.log = std::move(r.log);
    res.best_epoch = r.best_epoch;
  } else if (c.method == "label-smooth") {
    res = train_label_smoothing(data, ds.split, train_config(c), c.epsilon);
  } else {
    throw DomainError("unknown method '" + c.method + "'");
  }
  fs::create_directories(p.out);
  save_params(res.params, p.out / "model.bin");
  write_train_log(res.log, p.out / "train_log.csv");
  write_split(ds.split, p.out / kSplitFile);
  write_manifest(p.out, "train", c,
                 {{"data", p.data}, {"split", split_json(ds)}, {"best_epoch", res.best_epoch}});
}

std::uint64_t cache_key(const ModelParams& params, const InfluenceProblem& prob,
                        const SolverConfig& solver, double temperature) {
  detail::Fnv1a h;
  h.value(loo_cache_key(params, prob, solver));
  h.value(temperature);
  return h.digest();
}

void cmd_uncertainty(const RunConfig& c, const Paths& p) {
  const fs::path model = p.model;
  const auto ds = load_dataset(c, p.data, p.split, model.parent_path());
  const GraphData data(*ds.graph);
  const auto params = load_model(model, *ds.graph);
  const auto prob = influence_problem(c, data, ds.split);
  const auto solver = solver_config(c);
  const auto coverage = coverage_config(c.alpha);
  const double temperature = read_temperature(p.temperature);
  const auto nodes = eval_nodes(c, ds.split);

  fs::create_directories(p.out);
  const auto csv = p.out / "loo.csv";
  const auto bin = p.out / "loo.bin";
  const auto key = cache_key(params, prob, solver, temperature);
  std::vector<LooResult> results;
  if (fs::exists(csv) && fs::exists(bin)) {
    try {
      results = read_loo_cache(csv, bin, key);
    } catch (const CompatibilityError&) {
      std::cerr << "calikit: LOO cache is stale, recomputing\n";
    }
  }
  const auto base = predict(params, data, temperature);
  Eigen::MatrixXd scalars;
  if (results.empty()) {
    const HessianSolver hs(params, prob, solver);
    auto ens = loo_ensemble(params, prob, hs, base, nodes, c.workers, temperature);
    results = std::move(ens.results);
    scalars = std::move(ens.scalars);
    write_loo_cache(results, key, csv, bin);
  } else {
    scalars = loo_scalars(params, data, results, base, nodes, c.workers, temperature);
  }
  const auto records = uncertainty_records(base, results, nodes, scalars, coverage);

  auto out = detail::open_output(p.out / "uncertainty.csv");
  out << "node_id,lower,upper,uncertainty,confidence\n";
  for (const auto& r : records) {
    out << r.node_id << ',' << detail::format_double(r.lower) << ','
        << detail::format_double(r.upper) << ',' << detail::format_double(r.uncertainty) << ','
        << detail::format_double(r.confidence) << '\n';
  }
  json summary = json::object();
  summary["nodes"] = c.nodes;
  summary["count"] = records.size();
  summary["eice"] = eice(records);
  summary["temperature"] = temperature;
  write_json(summary, p.out / "uncertainty.json");
  write_manifest(p.out, "uncertainty", c,
                 {{"data", p.data}, {"model", p.model}, {"split", split_json(ds)}});
}

void cmd_calibrate(const RunConfig& c, const Paths& p) {
  const fs::path model = p.model;
  const auto ds = load_dataset(c, p.data, p.split, model.parent_path());
  const GraphData data(*ds.graph);
  const auto params = load_model(model, *ds.graph);
  const auto fit = temperature_scale(predict(params, data), data.labels(), ds.split.val);
  fs::create_directories(p.out);
  json j = json::object();
  j["temperature"] = fit.temperature;
  j["val_nll"] = fit.nll;
  j["at_bound"] = fit.at_bound;
  write_json(j, p.out / "temperature.json");
  write_manifest(p.out, "calibrate", c,
                 {{"data", p.data}, {"model", p.model}, {"split", split_json(ds)}});
}

json bins_json(const ReliabilityBins& bins) {
  json rows = json::array();
  for (const auto& b : bins.bins) {
    rows.push_back({{"bin_lo", b.lo},
                    {"bin_hi", b.hi},
                    {"count", b.count},
                    {"accuracy", b.accuracy},
                    {"confidence", b.confidence}});
  }
  return rows;
}

void cmd_evaluate(const RunConfig& c, const Paths& p) {
  const fs::path model = p.model;
  const auto ds = load_dataset(c, p.data, p.split, model.parent_path());
  const GraphData data(*ds.graph);
  const auto params = load_model(model, *ds.graph);
  const auto prob = influence_problem(c, data, ds.split);
  const double temperature = read_temperature(p.temperature);
  const auto nodes = eval_nodes(c, ds.split);
  const auto jk = run_jackknife(params, prob, solver_config(c), nodes,
                                JackknifeOptions{coverage_config(c.alpha), temperature, c.workers});
  const auto rep =
      calibration_report(jk.base_preds, data.labels(), nodes, 1, jk.records, ReportBins{c.bins, 20});

  fs::create_directories(p.out);
  json j = json::object();
  j["ece"] = rep.ece;
  j["ace_minority"] = rep.ace_minority;
  j["macro_ace"] = rep.macro_ace;
  j["eice"] = rep.eice;
  j["accuracy"] = rep.accuracy;
  j["recall"] = rep.recall_minority;
  j["macro_f1"] = rep.macro_f1;
  j["ace_per_class"] = rep.ace_per_class;
  j["nodes"] = c.nodes;
  j["count"] = nodes.size();
  j["bins"] = c.bins;
  j["alpha"] = c.alpha;
  j["temperature"] = temperature;
  j["reliability"] = bins_json(rep.bins);
  write_json(j, p.out / "report.json");

  auto out = detail::open_output(p.out / "reliability.csv");
  out << "bin_lo,bin_hi,count,accuracy,confidence\n";
  for (const auto& b : rep.bins.bins) {
    out << detail::format_double(b.lo) << ',' << detail::format_double(b.hi) << ',' << b.count
        << ',' << detail::format_double(b.accuracy) << ',' << detail::format_double(b.confidence)
        << '\n';
  }
  write_manifest(p.out, "evaluate", c,
                 {{"data", p.data}, {"model", p.model}, {"split", split_json(ds)}});
}

const char* kSweepHeader = "alpha,lambda,macro_ace,macro_f1";

/// Completed (alpha, lambda) cells of an earlier run. Rewrites the file with
/// only its complete, well-formed, first-seen rows so a run killed mid-write
/// leaves no partial line behind.
std::set<std::pair<double, double>> resume_sweep(const fs::path& path) {
  std::set<std::pair<double, double>> done;
  std::vector<std::string> keep;
  if (fs::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    std::size_t start = 0;
    while (start < text.size()) {
      const auto nl = text.find('\n', start);
      if (nl == std::string::npos) break;  // unterminated tail
      const std::string line = text.substr(start, nl - start);
      start = nl + 1;
      if (line == kSweepHeader) continue;
      const auto f = detail::split_fields(line, ',');
      double a = 0.0, l = 0.0, ace_v = 0.0, f1 = 0.0;
      if (f.size() != 4 || !detail::parse_number(f[0], a) || !detail::parse_number(f[1], l) ||
          !detail::parse_number(f[2], ace_v) || !detail::parse_number(f[3], f1)) {
        continue;
      }
      if (done.insert({a, l}).second) keep.push_back(line);
    }
  }
  auto out = detail::open_output(path);
  out << kSweepHeader << '\n';
  for (const auto& line : keep) out << line << '\n';
  return done;
}

void cmd_sweep(const RunConfig& c, const Paths& p) {
  if (c.alphas.empty()) throw DomainError("--alphas is empty");
  if (c.lambdas.empty()) throw DomainError("--lambdas is empty");
  for (double a : c.alphas) coverage_config(a);
  for (double l : c.lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) throw DomainError("lambda values must lie in [0, 1]");
  }
  const auto ds = load_dataset(c, p.data, p.split, std::nullopt);
  const GraphData data(*ds.graph);
  const auto nodes = eval_nodes(c, ds.split);

  fs::create_directories(p.out);
  const auto path = p.out / "sweep.csv";
  const auto done = resume_sweep(path);
  write_manifest(p.out, "sweep", c, {{"data", p.data}, {"split", split_json(ds)}});
  for (double a : c.alphas) {
    for (double l : c.lambdas) {
      if (done.count({a, l})) continue;
      const auto r = train_calirare(data, ds.split, calirare_config(c, a, l));
      const auto preds = predict(r.params, data);
      const double macro_ace = ace(preds, data.labels(), nodes, c.bins).macro;
      const double f1 = classification_metrics(preds, data.labels(), nodes, 1).macro_f1;
      std::ofstream out(path, std::ios::binary | std::ios::app);
      out << detail::format_double(a) << ',' << detail::format_double(l) << ','
          << detail::format_double(macro_ace) << ',' << detail::format_double(f1) << '\n';
      if (!out.flush()) throw IoError("failed writing " + path.string());
    }
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Calibration of graph neural networks on imbalanced node classification"};
  app.require_subcommand(1);
  app.fallthrough();
  Paths paths;
  app.add_option("--config", paths.config, "JSON configuration; flags override it");
  app.add_option("--seed", "seed for every random stream");
  app.add_option("--workers", "threads for leave-one-out computations");
  app.add_option("--out", paths.out, "output directory");

  auto* gen = app.add_subcommand("gen", "write a synthetic block-model dataset");
  GenArgs gen_args;
  gen->add_option("--blocks", gen_args.blocks, "comma-separated block sizes")->required();
  gen->add_option("--p-in", gen_args.p_in, "edge probability inside a block");
  gen->add_option("--p-out", gen_args.p_out, "edge probability across blocks");
  gen->add_option("--dim", gen_args.dim, "feature dimension");
  gen->add_option("--shift", gen_args.shift, "distance between adjacent block means");
  add_config_flags(gen, {"lr_c", "val_size", "test_size"});

  auto data_flags = [&](CLI::App* sub, bool needs_model) {
    sub->add_option("--data", paths.data, "dataset directory")->required();
    sub->add_option("--split", paths.split, "split file (node_id,role)");
    add_config_flags(sub, {"lr_c", "val_size", "test_size", "minority"});
    if (needs_model) sub->add_option("--model", paths.model, "checkpoint")->required();
  };
  const auto model_keys = {"hidden_dim", "learning_rate", "weight_decay", "dropout",
                           "max_epochs", "patience"};
  const auto solver_keys = {"damping", "cg_tol", "cg_max_iter", "upweight_sign"};

  auto* train_cmd = app.add_subcommand("train", "train a model");
  data_flags(train_cmd, false);
  add_config_flags(train_cmd, model_keys);
  add_config_flags(train_cmd, solver_keys);
  add_config_flags(train_cmd, {"method", "alpha", "lambda", "refresh_every", "epsilon"});

  auto* unc = app.add_subcommand("uncertainty", "jackknife intervals for evaluation nodes");
  data_flags(unc, true);
  add_config_flags(unc, {"weight_decay", "alpha", "nodes"});
  add_config_flags(unc, solver_keys);
  unc->add_option("--temperature-file", paths.temperature, "temperature.json from calibrate");

  auto* cal = app.add_subcommand("calibrate", "fit a temperature on the validation nodes");
  data_flags(cal, true);

  auto* eval = app.add_subcommand("evaluate", "calibration and classification report");
  data_flags(eval, true);
  add_config_flags(eval, {"weight_decay", "alpha", "nodes", "bins"});
  add_config_flags(eval, solver_keys);
  eval->add_option("--temperature-file", paths.temperature, "temperature.json from calibrate");

  auto* sweep = app.add_subcommand("sweep", "grid over coverage levels and lambda");
  data_flags(sweep, false);
  add_config_flags(sweep, model_keys);
  add_config_flags(sweep, solver_keys);
  add_config_flags(sweep, {"refresh_every", "nodes", "bins", "alphas", "lambdas"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }
  CLI::App* sub = app.get_subcommands().front();

  RunConfig cfg;
  if (!paths.model.empty()) {
    const auto manifest = fs::path(paths.model).parent_path() / "manifest.json";
    if (fs::exists(manifest)) {
      const auto m = read_json(manifest);
      if (m.is_object() && m.contains("config")) merge_json(cfg, m["config"], manifest.string());
    }
  }
  if (!paths.config.empty()) merge_json(cfg, read_json(paths.config), paths.config);
  try {
    apply_flags(cfg, app, *sub);
  } catch (const CLI::ParseError& e) {
    std::cerr << "calikit: " << e.what() << '\n';
    return kExitUsage;
  }

  const std::string name = sub->get_name();
  if (name == "gen") {
    cmd_gen(cfg, paths, gen_args);
  } else if (name == "train") {
    cmd_train(cfg, paths);
  } else if (name == "uncertainty") {
    cmd_uncertainty(cfg, paths);
  } else if (name == "calibrate") {
    cmd_calibrate(cfg, paths);
  } else if (name == "evaluate") {
    cmd_evaluate(cfg, paths);
  } else {
    cmd_sweep(cfg, paths);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const DomainError& e) {
    std::cerr << "calikit: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BoundsError& e) {
    std::cerr << "calikit: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::cerr << "calikit: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "calikit: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const calikit::Error& e) {
    std::cerr << "calikit: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "calikit: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "calikit: " << e.what() << '\n';
    return 1;
  }
}
