// Command-line driver: gen-world, collect, build-map, train, eval-loc, eval-nav, report.
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "topoloc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace topoloc;
using nlohmann::json;

namespace {

struct CliError : std::runtime_error {
  CliError(std::string msg, fs::path p) : std::runtime_error(std::move(msg)), path(std::move(p)) {}
  fs::path path;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::string method = "ours";
  std::string domain = "real_like";
};

RunConfig load_config(const Options& o) {
  RunConfig c;
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) throw CliError("config file not found", o.config);
    try {
      c = load_run_config(o.config);
    } catch (const std::exception& e) {
      throw CliError(e.what(), o.config);
    }
  }
  if (o.seed) c.seed = *o.seed;
  return c;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw CliError("missing input artifact", p);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CliError(std::string("malformed artifact: ") + e.what(), p);
  }
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw CliError("cannot write output", p);
  out << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(1) + "\n"); }

std::string stamp(const RunConfig& c) {
  return "# config_hash=" + config_hash(c) + " seed=" + std::to_string(c.seed) + "\n";
}

// Artifacts produced by earlier commands must come from the same config.
void check_meta(const json& j, const RunConfig& c, const fs::path& p) {
  if (!j.contains("meta")) throw CliError("artifact has no meta block", p);
  if (j["meta"].value("config_hash", "") != config_hash(c))
    throw CliError("artifact was produced with a different config (hash " + j["meta"].value("config_hash", "") +
                       ", expected " + config_hash(c) + ")",
                   p);
}

Benchmark load_world(const RunConfig& c, const fs::path& dir) {
  const fs::path wp = dir / "world.json";
  const json w = read_json(wp);
  check_meta(w, c, wp);
  Benchmark b;
  try {
    b.world = generate_world(world_spec_from_json(w.at("world")));
    b.obs = observation_model_from_json(w.at("observation_model"));
  } catch (const std::exception& e) {
    throw CliError(e.what(), wp);
  }
  return b;
}

Benchmark load_benchmark(const RunConfig& c, const fs::path& dir) {
  Benchmark b = load_world(c, dir);
  const fs::path mp = dir / "map.json";
  const json m = read_json(mp);
  check_meta(m, c, mp);
  try {
    b.map = map_from_json(m.at("map"));
    b.map_trajectory = trajectory_from_json(m.at("trajectory"));
  } catch (const std::exception& e) {
    throw CliError(e.what(), mp);
  }
  return b;
}

Dataset load_dataset(const RunConfig& c, const fs::path& dir) {
  const fs::path p = dir / "dataset.json";
  const json j = read_json(p);
  check_meta(j, c, p);
  try {
    return dataset_from_json(j.at("dataset"));
  } catch (const std::exception& e) {
    throw CliError(e.what(), p);
  }
}

std::string model_stem(Method m, Domain d) { return std::string("model_") + to_string(m) + "_" + to_string(d); }

LocalizerModel load_model(const RunConfig& c, const fs::path& dir, Method m, Domain d) {
  const fs::path meta = dir / (model_stem(m, d) + ".json");
  const fs::path ckpt = dir / (model_stem(m, d) + ".ckpt");
  const json j = read_json(meta);
  check_meta(j, c, meta);
  if (!fs::exists(ckpt)) throw CliError("missing input artifact", ckpt);
  try {
    return LocalizerModel::from_params(dims_from_json(j.at("dims")), load_checkpoint(ckpt));
  } catch (const std::exception& e) {
    throw CliError(e.what(), ckpt);
  }
}

LocalizerFactory factory(const RunConfig& c, Method m, const std::shared_ptr<const LocalizerModel>& model) {
  switch (m) {
    case Method::nearest: return [] { return std::make_unique<NearestDescriptorLocalizer>(); };
    case Method::oracle: return [w = c.map.omega_m] { return std::make_unique<OracleLocalizer>(w); };
    default: return [model, m] { return std::make_unique<NetworkLocalizer>(*model, to_string(m)); };
  }
}

int cmd_gen_world(const Options& o) {
  const RunConfig c = load_config(o);
  generate_world(c.world);  // validates
  json j{{"meta", artifact_meta(c, c.seed)},
         {"world", world_spec_to_json(c.world)},
         {"observation_model", observation_model_to_json(make_observation_model(c.obs))},
         {"config", run_config_to_json(c)}};
  write_json(fs::path(o.out) / "world.json", j);
  return 0;
}

int cmd_build_map(const Options& o) {
  const RunConfig c = load_config(o);
  const fs::path wp = fs::path(o.out) / "world.json";
  check_meta(read_json(wp), c, wp);
  const Benchmark b = make_benchmark(c);
  json j{{"meta", artifact_meta(c, c.seed)}, {"map", map_to_json(b.map)}, {"trajectory", trajectory_to_json(b.map_trajectory)}};
  write_json(fs::path(o.out) / "map.json", j);
  return 0;
}

int cmd_collect(const Options& o) {
  const RunConfig c = load_config(o);
  const Benchmark b = load_world(c, o.out);
  const Dataset d = collect_dataset(b, c, c.seed);
  write_json(fs::path(o.out) / "dataset.json", {{"meta", artifact_meta(c, c.seed)}, {"dataset", dataset_to_json(d)}});
  return 0;
}

int cmd_train(const Options& o) {
  const RunConfig c = load_config(o);
  const Method m = method_from_string(o.method);
  const Domain dom = domain_from_string(o.domain);
  const Variant v = method_variant(m);
  const Benchmark b = load_benchmark(c, o.out);
  const Dataset d = load_dataset(c, o.out);
  const double mix = dom == Domain::sim ? 0.0 : c.train.mix_ratio;
  const TrainResult r = train_variant(b, d, c, v, mix, c.seed);
  const fs::path dir = o.out;
  save_checkpoint(dir / (model_stem(m, dom) + ".ckpt"), r.model.params());
  write_json(dir / (model_stem(m, dom) + ".json"), {{"meta", artifact_meta(c, c.seed)},
                                                    {"dims", dims_to_json(r.model.dims())},
                                                    {"mix_ratio", mix},
                                                    {"best_iteration", r.best_iteration},
                                                    {"best_val_loss", r.best_val_loss},
                                                    {"iterations", r.iterations}});
  std::ostringstream csv;
  csv << stamp(c);
  write_history_csv(csv, r.history);
  write_text(dir / ("history_" + model_stem(m, dom).substr(6) + ".csv"), csv.str());
  std::cout << to_string(m) << " (" << to_string(dom) << "): best val loss " << r.best_val_loss << " at iteration "
            << r.best_iteration << " of " << r.iterations << "\n";
  return 0;
}

int cmd_eval_loc(const Options& o) {
  const RunConfig c = load_config(o);
  const Method m = method_from_string(o.method);
  const Domain dom = domain_from_string(o.domain);
  const Benchmark b = load_benchmark(c, o.out);
  const Dataset d = load_dataset(c, o.out);
  std::shared_ptr<const LocalizerModel> model;
  if (m != Method::nearest && m != Method::oracle)
    model = std::make_shared<const LocalizerModel>(load_model(c, o.out, m, dom));
  Dataset test_only = d;
  if (m == Method::oracle)  // oracle needs poses: sim categories only
    std::erase_if(test_only.test, [](const Episode& e) { return e.domain != Domain::sim; });
  const std::string label = model ? model_stem(m, dom).substr(6) : to_string(m);
  const auto rows = evaluate_localization(b, test_only, c, label, factory(c, m, model));
  std::ostringstream csv;
  csv << stamp(c);
  write_loc_csv(csv, rows);
  write_text(fs::path(o.out) / ("loc_" + label + ".csv"), csv.str());
  write_loc_table(std::cout, rows);
  return 0;
}

int cmd_eval_nav(const Options& o) {
  const RunConfig c = load_config(o);
  const Method m = method_from_string(o.method);
  const Domain dom = domain_from_string(o.domain);
  const Benchmark b = load_benchmark(c, o.out);
  std::shared_ptr<const LocalizerModel> model;
  if (m != Method::nearest && m != Method::oracle)
    model = std::make_shared<const LocalizerModel>(load_model(c, o.out, m, dom));
  const std::string label = model ? model_stem(m, dom).substr(6) : to_string(m);
  const auto trials = make_nav_trials(b, c, c.seed);
  const auto outcomes = run_nav_trials(b, c, trials, factory(c, m, model));
  const NavMetrics nm = nav_metrics(outcomes);
  std::ostringstream csv;
  csv << stamp(c);
  write_nav_csv(csv, {{label, nm}});
  write_text(fs::path(o.out) / ("nav_" + label + ".csv"), csv.str());
  json logs = json::array();
  for (const auto& t : outcomes) logs.push_back(trial_log_to_json(t));
  write_json(fs::path(o.out) / ("nav_" + label + "_trials.json"), {{"meta", artifact_meta(c, c.seed)}, {"trials", logs}});
  std::printf("%s: SR %.3f CR %.3f TR %.3f CovR %.3f over %zu trials\n", label.c_str(), nm.sr, nm.cr, nm.tr, nm.covr,
              nm.trials);
  return 0;
}

// Concatenates the per-method CSVs into two plot-ready summaries.
int cmd_report(const Options& o) {
  const RunConfig c = load_config(o);
  const fs::path dir = o.out;
  if (!fs::is_directory(dir)) throw CliError("output directory not found", dir);
  std::map<std::string, fs::path> loc, nav;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (e.path().extension() != ".csv") continue;
    if (n.rfind("loc_", 0) == 0) loc[n] = e.path();
    if (n.rfind("nav_", 0) == 0) nav[n] = e.path();
  }
  if (loc.empty() && nav.empty()) throw CliError("no loc_*.csv or nav_*.csv to summarize", dir);
  auto merge = [&](const std::map<std::string, fs::path>& files, const fs::path& target) {
    std::string header;
    std::ostringstream body;
    for (const auto& [name, p] : files) {
      std::ifstream in(p);
      std::string line;
      std::getline(in, line);
      if (line != stamp(c).substr(0, stamp(c).size() - 1)) throw CliError("artifact from a different config", p);
      std::getline(in, line);
      if (header.empty()) header = line;
      if (line != header) throw CliError("unexpected CSV header", p);
      while (std::getline(in, line))
        if (!line.empty()) body << line << "\n";
    }
    if (!header.empty()) write_text(target, stamp(c) + header + "\n" + body.str());
  };
  merge(loc, dir / "summary_loc.csv");
  merge(nav, dir / "summary_nav.csv");
  std::cout << "wrote " << (dir / "summary_loc.csv").string() << " and " << (dir / "summary_nav.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topological-map localization pipeline"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub, bool method, bool domain) {
    sub->add_option("--config", o.config, "run configuration (JSON)");
    sub->add_option("--seed", o.seed, "root seed (overrides the config)");
    sub->add_option("--out", o.out, "artifact directory");
    if (method)
      sub->add_option("--method", o.method, "localization method")
          ->check(CLI::IsMember({"ours", "no_gclstm", "no_skip", "nearest", "oracle"}));
    if (domain)
      sub->add_option("--domain", o.domain, "training domains: sim (sim only) or real_like (mixed)")
          ->check(CLI::IsMember({"sim", "real_like"}));
  };
  std::map<CLI::App*, int (*)(const Options&)> handlers;
  auto add = [&](const char* name, const char* help, int (*fn)(const Options&), bool method, bool domain) {
    CLI::App* sub = app.add_subcommand(name, help);
    common(sub, method, domain);
    handlers[sub] = fn;
  };
  add("gen-world", "write the world spec", cmd_gen_world, false, false);
  add("build-map", "build the reference map from one nominal traversal", cmd_build_map, false, false);
  add("collect", "render training, validation and test episodes", cmd_collect, false, false);
  add("train", "train a localizer", cmd_train, true, true);
  add("eval-loc", "localization metrics per test category", cmd_eval_loc, true, true);
  add("eval-nav", "closed-loop navigation trials", cmd_eval_nav, true, true);
  add("report", "merge metric CSVs", cmd_report, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    for (const auto& [sub, fn] : handlers)
      if (sub->parsed()) return fn(o);
  } catch (const CliError& e) {
    std::cerr << json{{"error", e.what()}, {"path", e.path.string()}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 1;
}
