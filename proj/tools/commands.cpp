// Copyright (c) 2026 The powq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "powq/dataset.hpp"
#include "powq/error.hpp"
#include "powq/layer_opt.hpp"
#include "powq/search.hpp"

namespace powq::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw IoError("cannot write '" + path.string() + "'");
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    long v = 0;
    try {
      v = std::stol(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v <= 0) throw ConfigError("bad layer width '" + item + "' in --hidden");
    dims.push_back(static_cast<std::size_t>(v));
  }
  if (dims.empty()) throw ConfigError("--hidden needs at least one width");
  return dims;
}

Granularity parse_granularity(const std::string& name, std::size_t group_size) {
  switch (granularity_kind_from_string(name)) {
    case Granularity::Kind::per_tensor: return Granularity::per_tensor();
    case Granularity::Kind::per_channel: return Granularity::per_channel();
    case Granularity::Kind::per_group: return Granularity::per_group(group_size);
  }
  throw ConfigError("unknown granularity '" + name + "'");
}

// Bookkeeping for one invocation; turned into the run manifest at the end.
struct Run {
  std::string command;
  std::uint64_t seed = 0;
  fs::path manifest;
  json outputs = json::array();
  json details = json::object();

  void output(const fs::path& p) { outputs.push_back(p.string()); }
};

json resolved_flags(const CLI::App& sub) {
  json flags = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      flags[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      flags[name] = opt->get_default_str();
    }
  }
  return flags;
}

// Directory outputs carry `manifest.json`; file outputs get a sibling.
fs::path manifest_for_dir(const fs::path& dir) { return dir / "manifest.json"; }
fs::path manifest_for_file(const fs::path& file) {
  fs::path m = file;
  m += ".manifest.json";
  return m;
}

QuantPolicy naive_policy(const ModelSpec& model, const PolicyOptions& po, const fs::path& calib_path) {
  QuantPolicy policy = make_policy(model, po);
  if (po.activation_bits > 0) {
    if (calib_path.empty()) throw ConfigError("activation quantization needs --calib for the frozen scales");
    calibrate_activations(model, policy, load_csv(calib_path).features);
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    policy.layers[l].weight_codes = quantize(model.layers[l].weight, policy.layers[l].weight);
  }
  return policy;
}

// ---------------------------------------------------------------------------

struct FixtureArgs {
  fs::path out;
  int classes = 4;
  std::size_t samples = 4096;
  std::size_t dims = 8;
  std::string hidden = "64,32";
  std::size_t epochs = 30;
  double separation = 4.0;
  std::size_t calib = 1024;
  std::size_t test = 2048;
};

std::string cmd_fixture(const FixtureArgs& a, Run& run) {
  BlobsOptions bo;
  bo.num_classes = a.classes;
  bo.num_samples = a.samples + a.test;
  bo.input_dim = a.dims;
  bo.separation = a.separation;
  bo.seed = run.seed;
  const auto splits = split_dataset(make_blobs(bo), a.calib, a.test);

  TrainOptions to;
  to.hidden = parse_dims(a.hidden);
  to.epochs = a.epochs;
  to.seed = run.seed;
  ModelSpec model = train_fixture(splits.train, to);
  model.name = "fixture";

  fs::create_directories(a.out);
  save_model(model, a.out / "model.json");
  save_csv(splits.train, a.out / "train.csv");
  save_csv(splits.calib, a.out / "calib.csv");
  save_csv(splits.test, a.out / "test.csv");
  for (const char* f : {"model.json", "model.bin", "train.csv", "calib.csv", "test.csv"}) run.output(a.out / f);

  const double train_acc = evaluate(model, splits.train);
  const double test_acc = evaluate(model, splits.test);
  json layers = json::array();
  for (const auto& l : model.layers) layers.push_back({l.in_dim(), l.out_dim()});
  run.details = {{"layer_dims", to.hidden}, {"layers", layers}, {"train_accuracy", train_acc},
                 {"test_accuracy", test_acc}};
  run.manifest = manifest_for_dir(a.out);
  return "fixture: " + std::to_string(model.layers.size()) + " layers, train accuracy " + fmt("%.4f", train_acc) +
         ", test accuracy " + fmt("%.4f", test_acc) + " -> " + a.out.string();
}

struct SearchArgs {
  fs::path model;
  fs::path calib;
  fs::path out;
  int bits = 4;
  int abits = 4;
  int p = 2;
  double init = 0.5;
  bool first_last_8bit = true;
};

std::string cmd_search(const SearchArgs& a, Run& run) {
  const ModelSpec model = load_model(a.model);
  SearchConfig sc;
  sc.bits = a.bits;
  sc.p = a.p;
  sc.init = a.init;
  const DataFreeResult res = powerquant_datafree(model, sc);

  PolicyOptions po;
  po.weight_bits = a.bits;
  po.activation_bits = a.calib.empty() ? 0 : a.abits;
  po.exponent = res.a_shared;
  po.first_last_8bit = a.first_last_8bit;
  const QuantPolicy policy = naive_policy(model, po, a.calib);

  fs::create_directories(a.out);
  save_bundle(policy, a.out / "bundle.json");
  run.output(a.out / "bundle.json");

  json trace = json::array();
  for (const auto& t : res.search.trace) {
    trace.push_back({{"iteration", t.iteration},
                     {"simplex", {{t.simplex[0][0], t.simplex[0][1]}, {t.simplex[1][0], t.simplex[1][1]}}},
                     {"best_a", t.best_a},
                     {"best_error", t.best_error}});
  }
  const json doc = {{"a", res.a_shared},       {"error", res.error},
                    {"bits", a.bits},          {"p", a.p},
                    {"iterations", res.search.iterations},
                    {"evaluations", res.search.evaluations},
                    {"trace", trace}};
  write_text(a.out / "search_trace.json", doc.dump(2) + "\n");
  run.output(a.out / "search_trace.json");
  run.details = {{"a", res.a_shared}, {"error", res.error}};
  run.manifest = manifest_for_dir(a.out);
  return "search: a=" + fmt("%.6f", res.a_shared) + " error=" + fmt("%.6g", res.error) + " (" +
         std::to_string(res.search.evaluations) + " evaluations) -> " + a.out.string();
}

struct QuantizeArgs {
  fs::path model;
  fs::path calib;
  fs::path out;
  int wbits = 4;
  int abits = 4;
  double a = 1.0;
  std::string granularity = "per_tensor";
  std::size_t group_size = 128;
  bool first_last_8bit = true;
};

std::string cmd_quantize(const QuantizeArgs& a, Run& run) {
  const ModelSpec model = load_model(a.model);
  PolicyOptions po;
  po.weight_bits = a.wbits;
  po.activation_bits = a.abits;
  po.exponent = a.a;
  po.weight_granularity = parse_granularity(a.granularity, a.group_size);
  po.first_last_8bit = a.first_last_8bit;
  const QuantPolicy policy = naive_policy(model, po, a.calib);
  fs::create_directories(a.out);
  save_bundle(policy, a.out / "bundle.json");
  run.output(a.out / "bundle.json");
  run.manifest = manifest_for_dir(a.out);
  return "quantize: W" + std::to_string(a.wbits) + "/A" + (a.abits > 0 ? std::to_string(a.abits) : "fp") +
         " a=" + fmt("%g", a.a) + " -> " + a.out.string();
}

struct OptimizeArgs {
  fs::path model;
  fs::path calib;
  fs::path out;
  int wbits = 4;
  int abits = 4;
  std::string mode = "w";
  std::string method = "nupes";
  std::string scheduler = "const:20";
  long steps = 10000;
  std::size_t batch = 32;
  std::size_t samples = 1024;
  std::string init_a = "search";
  bool first_last_8bit = true;
};

std::string cmd_optimize(const OptimizeArgs& a, Run& run) {
  const ModelSpec model = load_model(a.model);
  const Dataset calib = load_csv(a.calib);

  OptConfig cfg;
  cfg.steps = a.steps;
  cfg.batch_size = a.batch;
  cfg.calibration_samples = a.samples;
  cfg.mode = opt_mode_from_string(a.mode);
  cfg.method = rounding_method_from_string(a.method);
  cfg.dsq_beta = BetaScheduler::parse(a.scheduler, a.steps);
  cfg.seed = run.seed;
  if (a.init_a == "search") {
    SearchConfig sc;
    sc.bits = a.wbits;
    cfg.init_a = powerquant_datafree(model, sc).a_shared;
  } else {
    try {
      cfg.init_a = std::stod(a.init_a);
    } catch (const std::exception&) {
      throw ConfigError("--init-a must be a number or 'search'");
    }
  }

  PolicyOptions po;
  po.weight_bits = a.wbits;
  po.activation_bits = a.abits;
  po.first_last_8bit = a.first_last_8bit;
  const ModelOptResult res = optimize_model(model, calib.features, po, cfg);

  fs::create_directories(a.out);
  save_bundle(res.policy, a.out / "bundle.json");
  write_text(a.out / "report.json", report_to_json(res.report) + "\n");
  run.output(a.out / "bundle.json");
  run.output(a.out / "report.json");
  run.details = {{"init_a", cfg.init_a}};
  run.manifest = manifest_for_dir(a.out);

  double before = 0.0, after = 0.0;
  for (const auto& r : res.report) {
    before += r.initial_loss;
    after += r.final_loss;
  }
  return "optimize: " + to_string(cfg.method) + " mode " + a.mode + ", " + std::to_string(res.report.size()) +
         " layers, summed layer loss " + fmt("%.6g", before) + " -> " + fmt("%.6g", after) + " -> " + a.out.string();
}

struct EvalArgs {
  fs::path model;
  fs::path bundle;
  fs::path data;
  fs::path out;
};

std::string cmd_eval(const EvalArgs& a, Run& run) {
  const ModelSpec model = load_model(a.model);
  const Dataset data = load_csv(a.data);
  double acc = 0.0;
  std::string policy_name = "fp";
  if (a.bundle.empty()) {
    acc = evaluate(model, data);
  } else {
    const QuantPolicy policy = load_bundle(a.bundle);
    acc = evaluate(model, data, &policy);
    policy_name = a.bundle.string();
  }
  const json doc = {{"accuracy", acc}, {"num_samples", data.size()}, {"policy", policy_name}};
  write_text(a.out, doc.dump(2) + "\n");
  run.output(a.out);
  run.manifest = manifest_for_file(a.out);
  return "eval: accuracy " + fmt("%.4f", acc) + " on " + std::to_string(data.size()) + " samples (" + policy_name +
         ")";
}

struct LevelsArgs {
  std::string format = "uniform";
  int bits = 4;
  double a = 0.5;
  fs::path out;
};

std::string cmd_levels(const LevelsArgs& a, Run& run) {
  const auto format = level_format_from_string(a.format);
  const auto levels = generate_levels(format, a.bits, a.a);
  std::ostringstream os;
  os << "index,level\n";
  os.precision(17);
  for (std::size_t i = 0; i < levels.size(); ++i) os << i << ',' << levels[i] << '\n';
  write_text(a.out, os.str());
  run.output(a.out);
  run.manifest = manifest_for_file(a.out);
  return "levels: " + std::to_string(levels.size()) + " " + a.format + " levels -> " + a.out.string();
}

struct ErrorHistArgs {
  fs::path model;
  double a = 0.5;
  int bits = 4;
  fs::path out;
};

std::string cmd_error_hist(const ErrorHistArgs& a, Run& run) {
  const ModelSpec model = load_model(a.model);
  const QuantConfig cfg{a.bits, a.a, Granularity::per_tensor()};
  cfg.validate();
  std::ostringstream os;
  os << "layer,index,weight,dequantized,error\n";
  os.precision(9);
  std::size_t rows = 0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Tensor& w = model.layers[l].weight;
    const Tensor q = fake_quantize(w, cfg);
    for (std::size_t i = 0; i < w.size(); ++i, ++rows) {
      os << l << ',' << i << ',' << w[i] << ',' << q[i] << ',' << (static_cast<double>(q[i]) - w[i]) << '\n';
    }
  }
  write_text(a.out, os.str());
  run.output(a.out);
  run.manifest = manifest_for_file(a.out);
  return "error-hist: " + std::to_string(rows) + " weights -> " + a.out.string();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"powq: power-exponent post-training quantization", "powq"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", POWQ_VERSION);

  std::uint64_t seed = 0;
  auto add_seed = [&seed](CLI::App* sub) {
    sub->add_option("--seed", seed, "random seed")->envname("POWQ_SEED");
  };

  FixtureArgs fx;
  auto* fixture = app.add_subcommand("fixture", "train a fixture model and write dataset splits");
  fixture->add_option("--out", fx.out, "output directory")->required();
  fixture->add_option("--classes", fx.classes, "number of classes")->check(CLI::PositiveNumber);
  fixture->add_option("--samples", fx.samples, "training samples")->check(CLI::PositiveNumber);
  fixture->add_option("--dims", fx.dims, "input dimension")->check(CLI::PositiveNumber);
  fixture->add_option("--hidden", fx.hidden, "hidden widths, comma separated");
  fixture->add_option("--epochs", fx.epochs, "training epochs")->check(CLI::PositiveNumber);
  fixture->add_option("--separation", fx.separation, "class mean distance in units of sigma");
  fixture->add_option("--calib", fx.calib, "calibration rows taken from the training split");
  fixture->add_option("--test", fx.test, "held-out test rows")->check(CLI::PositiveNumber);
  add_seed(fixture);

  SearchArgs sa;
  auto* search = app.add_subcommand("search", "data-free shared exponent search");
  search->add_option("--model", sa.model, "model manifest")->required();
  search->add_option("--bits", sa.bits, "weight bits");
  search->add_option("--p", sa.p, "error norm (1 or 2)");
  search->add_option("--init", sa.init, "starting exponent");
  search->add_option("--calib", sa.calib, "calibration csv; enables activation quantization");
  search->add_option("--abits", sa.abits, "activation bits when --calib is given");
  search->add_option("--first-last-8bit", sa.first_last_8bit, "keep first and last layers at 8 bits");
  search->add_option("--out", sa.out, "output directory")->required();
  add_seed(search);

  QuantizeArgs qa;
  auto* quant = app.add_subcommand("quantize", "naive power (or uniform, a=1) quantization bundle");
  quant->add_option("--model", qa.model, "model manifest")->required();
  quant->add_option("--calib", qa.calib, "calibration csv for activation scales");
  quant->add_option("--wbits", qa.wbits, "weight bits");
  quant->add_option("--abits", qa.abits, "activation bits, 0 for none");
  quant->add_option("--a", qa.a, "exponent");
  quant->add_option("--granularity", qa.granularity, "per_tensor, per_channel or per_group");
  quant->add_option("--group-size", qa.group_size, "group length for per_group");
  quant->add_option("--first-last-8bit", qa.first_last_8bit, "keep first and last layers at 8 bits");
  quant->add_option("--out", qa.out, "output directory")->required();
  add_seed(quant);

  OptimizeArgs oa;
  auto* optimize = app.add_subcommand("optimize", "layer-wise rounding and exponent optimization");
  optimize->add_option("--model", oa.model, "model manifest")->required();
  optimize->add_option("--calib", oa.calib, "calibration csv")->required();
  optimize->add_option("--wbits", oa.wbits, "weight bits");
  optimize->add_option("--abits", oa.abits, "activation bits, 0 for none");
  optimize->add_option("--mode", oa.mode, "w, a or wa")->check(CLI::IsMember({"w", "a", "wa"}));
  optimize->add_option("--method", oa.method, "nupes or adaround");
  optimize->add_option("--scheduler", oa.scheduler, "adaround, const:C or power:C");
  optimize->add_option("--steps", oa.steps, "steps per layer");
  optimize->add_option("--batch", oa.batch, "batch size");
  optimize->add_option("--samples", oa.samples, "calibration samples used");
  optimize->add_option("--init-a", oa.init_a, "starting exponent, or 'search'");
  optimize->add_option("--first-last-8bit", oa.first_last_8bit, "keep first and last layers at 8 bits");
  optimize->add_option("--out", oa.out, "output directory")->required();
  add_seed(optimize);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "top-1 accuracy of a model, optionally under a bundle");
  eval->add_option("--model", ea.model, "model manifest")->required();
  eval->add_option("--bundle", ea.bundle, "quantized bundle");
  eval->add_option("--data", ea.data, "dataset csv")->required();
  eval->add_option("--out", ea.out, "accuracy json")->required();
  add_seed(eval);

  LevelsArgs la;
  auto* levels = app.add_subcommand("levels", "quantization level set as csv");
  levels->add_option("--format", la.format, "uniform, power, log2 or fp4");
  levels->add_option("--bits", la.bits, "bits");
  levels->add_option("--a", la.a, "exponent for the power format");
  levels->add_option("--out", la.out, "output csv")->required();
  add_seed(levels);

  ErrorHistArgs ha;
  auto* hist = app.add_subcommand("error-hist", "per-weight quantization error as csv");
  hist->add_option("--model", ha.model, "model manifest")->required();
  hist->add_option("--a", ha.a, "exponent");
  hist->add_option("--bits", ha.bits, "bits");
  hist->add_option("--out", ha.out, "output csv")->required();
  add_seed(hist);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << POWQ_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& c : msg) if (c == '\n') c = ' ';
    err << "error: usage: " << msg << '\n';
    return 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  Run run;
  run.command = sub->get_name();
  run.seed = seed;
  const std::string started = utc_now();
  try {
    std::string summary;
    if (sub == fixture) summary = cmd_fixture(fx, run);
    else if (sub == search) summary = cmd_search(sa, run);
    else if (sub == quant) summary = cmd_quantize(qa, run);
    else if (sub == optimize) summary = cmd_optimize(oa, run);
    else if (sub == eval) summary = cmd_eval(ea, run);
    else if (sub == levels) summary = cmd_levels(la, run);
    else summary = cmd_error_hist(ha, run);

    const json manifest = {{"command", run.command},
                           {"flags", resolved_flags(*sub)},
                           {"seed", run.seed},
                           {"version", POWQ_VERSION},
                           {"started_at", started},
                           {"finished_at", utc_now()},
                           {"outputs", run.outputs},
                           {"details", run.details}};
    write_text(run.manifest, manifest.dump(2) + "\n");
    out << summary << '\n';
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << '\n';
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
  }
  return 1;
}

}  // namespace powq::cli
