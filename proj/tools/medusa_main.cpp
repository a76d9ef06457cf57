// Command-line front end: fit factors on a fusion graph, enumerate and
// materialize chains, detect modules, and run the evaluation protocols.
// Every command records a run manifest with input hashes and seeds so runs
// can be reproduced byte for byte.

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "medusa/chains.hpp"
#include "medusa/detection.hpp"
#include "medusa/errors.hpp"
#include "medusa/evaluation.hpp"
#include "medusa/factorization.hpp"
#include "medusa/fusion_graph.hpp"
#include "medusa/matrix_io.hpp"
#include "medusa/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace medusa;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string timestamp_utc() {
  std::time_t t = 0;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"))
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  else
    t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t draw_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

void write_json(const fs::path& path, const json& doc) {
  atomic_write_file(path, doc.dump(2) + "\n");
}

void write_run_manifest(const fs::path& out_dir, const std::string& command,
                        const json& arguments, const std::vector<fs::path>& inputs,
                        const json& seeds, const std::vector<std::string>& outputs) {
  json doc;
  doc["tool"] = "medusa";
  doc["version"] = kVersion;
  doc["command"] = command;
  doc["arguments"] = arguments;
  json hashes = json::object();
  for (const auto& p : inputs) hashes[p.generic_string()] = file_hash_hex(p);
  doc["inputs"] = hashes;
  doc["seeds"] = seeds;
  doc["outputs"] = outputs;
  doc["created_utc"] = timestamp_utc();
  write_json(out_dir / "run_manifest.json", doc);
}

json parse_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing file: " + path.string());
  try {
    json doc;
    in >> doc;
    return doc;
  } catch (const json::exception& e) {
    throw ValidationError("bad JSON in " + path.string() + ": " + e.what());
  }
}

// All files a graph manifest pulls in, for input hashing.
std::vector<fs::path> graph_input_files(const fs::path& manifest_file) {
  std::vector<fs::path> files = {manifest_file};
  const json doc = parse_json_file(manifest_file);
  const fs::path dir = manifest_file.parent_path();
  for (const auto& t : doc.value("types", json::array()))
    if (t.contains("labels_file")) files.push_back(dir / t["labels_file"].get<std::string>());
  for (const auto& r : doc.value("relations", json::array()))
    if (r.contains("matrix_file")) files.push_back(dir / r["matrix_file"].get<std::string>());
  for (const auto& c : doc.value("constraints", json::array()))
    if (c.contains("matrix_file")) files.push_back(dir / c["matrix_file"].get<std::string>());
  return files;
}

std::vector<fs::path> model_input_files(const fs::path& model_dir, const LatentModel& model) {
  std::vector<fs::path> files = {model_dir / "model.json"};
  for (const auto& t : model.schema.types) files.push_back(model_dir / ("factor_" + t.id + ".coo"));
  for (const auto& e : model.schema.relations)
    files.push_back(model_dir / ("interaction_" + e.edge_id + ".coo"));
  return files;
}

std::vector<Index> resolve_labels(const GraphSchema& schema, const std::string& type_id,
                                  const std::vector<std::string>& labels) {
  std::vector<Index> indices;
  std::vector<std::string> unknown;
  for (const auto& label : labels) {
    const Index i = schema.label_index(type_id, label);
    if (i < 0)
      unknown.push_back(label);
    else
      indices.push_back(i);
  }
  if (!unknown.empty()) {
    std::string joined;
    for (const auto& u : unknown) joined += (joined.empty() ? "" : ", ") + u;
    throw ValidationError("unknown " + type_id + " label(s): " + joined);
  }
  return indices;
}

InitScheme parse_init(const std::string& name) {
  return name == "acol" ? InitScheme::RandomAcol : InitScheme::RandomUniform;
}

Regime parse_regime(const std::string& name) {
  return name == "cpi" ? Regime::CPI : Regime::CPE;
}

std::string regime_name(Regime regime) { return regime == Regime::CPE ? "cpe" : "cpi"; }

json semantics_json(const SemanticsEnsemble& ensemble) {
  json out = json::array();
  for (const auto& c : ensemble.chains)
    out.push_back({{"spec", chain_spec_string(c.chain)}, {"label", c.label}});
  return out;
}

json module_to_json(const Module& module, const DetectionConfig& config,
                    const SemanticsEnsemble& ensemble, const std::vector<std::string>& labels) {
  json doc;
  doc["regime"] = regime_name(module.regime);
  doc["k"] = module.k;
  doc["combination"] = config.combination == Combination::Combined ? "combined" : "single";
  doc["alpha"] = config.alpha;
  doc["beta"] = config.beta;
  doc["q"] = config.q;
  doc["semantics"] = semantics_json(ensemble);
  doc["members"] = json::array();
  for (const auto& m : module.members) {
    json member;
    member["index"] = m.candidate;
    member["label"] = labels[static_cast<std::size_t>(m.candidate)];
    member["iteration"] = m.iteration;
    member["p_value"] = m.p_value;
    member["per_semantic"] = m.per_semantic;
    doc["members"].push_back(std::move(member));
  }
  doc["weights_per_round"] = module.weights_log;
  doc["valuation"] = module_valuation(module);
  return doc;
}

// Minimal static SVG: framed unit square with one polyline.
std::string curve_svg(const std::vector<std::pair<double, double>>& points,
                      const std::string& title, const std::string& x_label,
                      const std::string& y_label) {
  const double size = 400.0, margin = 45.0;
  auto px = [&](double x) { return format_double(margin + x * size); };
  auto py = [&](double y) { return format_double(margin + (1.0 - y) * size); };
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"490\" height=\"490\" "
         "viewBox=\"0 0 490 490\">\n";
  svg += "  <rect x=\"" + px(0.0) + "\" y=\"" + py(1.0) +
         "\" width=\"400\" height=\"400\" fill=\"none\" stroke=\"#444\"/>\n";
  svg += "  <text x=\"245\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" + title +
         "</text>\n";
  svg += "  <text x=\"245\" y=\"478\" text-anchor=\"middle\" font-size=\"12\">" + x_label +
         "</text>\n";
  svg += "  <text x=\"14\" y=\"245\" text-anchor=\"middle\" font-size=\"12\" "
         "transform=\"rotate(-90 14 245)\">" +
         y_label + "</text>\n";
  svg += "  <polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i) svg += ' ';
    svg += px(points[i].first) + "," + py(points[i].second);
  }
  svg += "\"/>\n</svg>\n";
  return svg;
}

std::vector<std::pair<double, double>> roc_points(std::vector<std::pair<double, bool>> pairs) {
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double n_pos = 0, n_neg = 0;
  for (const auto& [v, pos] : pairs) (pos ? n_pos : n_neg) += 1.0;
  std::vector<std::pair<double, double>> points = {{0.0, 0.0}};
  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < pairs.size()) {
    std::size_t j = i;  // advance over a tie group as one threshold step
    while (j < pairs.size() && pairs[j].first == pairs[i].first) {
      (pairs[j].second ? tp : fp) += 1.0;
      ++j;
    }
    points.emplace_back(fp / n_neg, tp / n_pos);
    i = j;
  }
  return points;
}

std::vector<std::pair<double, double>> pr_points(std::vector<std::pair<double, bool>> pairs) {
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  double n_pos = 0;
  for (const auto& [v, pos] : pairs) n_pos += pos ? 1.0 : 0.0;
  std::vector<std::pair<double, double>> points = {{0.0, 1.0}};
  double hits = 0;
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    if (!pairs[r].second) continue;
    hits += 1.0;
    points.emplace_back(hits / n_pos, hits / static_cast<double>(r + 1));
  }
  return points;
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
  std::string graph;
  double p = 0.0;
  std::vector<std::string> ranks;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int max_iterations = 500;
  double tolerance = 1e-5;
  std::string init = "uniform";
  bool no_normalize = false;
  std::string out;
};

int run_fit(const FitOptions& opt) {
  const fs::path graph_path = opt.graph;
  FusionGraph graph = FusionGraph::load(graph_path);
  if (!opt.no_normalize) graph = normalize_graph(graph);

  if ((opt.p > 0.0) == !opt.ranks.empty())
    throw ValidationError("give exactly one of --p or --rank");
  RankSpec ranks;
  if (opt.p > 0.0) {
    ranks = select_ranks(graph, opt.p);
  } else {
    for (const auto& kv : opt.ranks) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ValidationError("--rank expects TYPE=K, got " + kv);
      ranks.ranks[kv.substr(0, eq)] =
          static_cast<Index>(std::stoll(kv.substr(eq + 1)));
    }
  }

  FactorizationOptions options;
  options.max_iterations = opt.max_iterations;
  options.rel_tolerance = opt.tolerance;
  options.seed = opt.seed_given ? opt.seed : draw_seed();
  options.init = parse_init(opt.init);

  const LatentModel model = factorize(graph, ranks, options);

  const fs::path out_dir = opt.out;
  fs::create_directories(out_dir);
  save_model(model, out_dir);

  std::vector<std::string> outputs = {"model.json"};
  for (const auto& t : model.schema.types) outputs.push_back("factor_" + t.id + ".coo");
  for (const auto& e : model.schema.relations)
    outputs.push_back("interaction_" + e.edge_id + ".coo");

  json arguments;
  arguments["graph"] = opt.graph;
  if (opt.p > 0.0) arguments["p"] = opt.p;
  json rank_obj = json::object();
  for (const auto& [t, k] : ranks.ranks) rank_obj[t] = k;
  arguments["ranks"] = rank_obj;
  arguments["max_iterations"] = opt.max_iterations;
  arguments["rel_tolerance"] = opt.tolerance;
  arguments["init"] = opt.init;
  arguments["normalize"] = !opt.no_normalize;
  write_run_manifest(out_dir, "fit", arguments, graph_input_files(graph_path),
                     {{"factorization", options.seed}}, outputs);

  std::cout << "objective " << format_double(model.final_objective) << " after "
            << model.fit_log.size() - 1 << " iterations\n";
  return 0;
}

// ---------------------------------------------------------------------------
// chains

struct ChainsOptions {
  std::string model;
  std::string from, to;
  int max_length = 5;
  std::string out;
};

int run_chains(const ChainsOptions& opt) {
  const LatentModel model = load_model(opt.model);
  const auto chains = enumerate_chains(model.schema, opt.from, opt.to, opt.max_length);
  for (const auto& c : chains)
    std::cout << chain_spec_string(c) << "\t" << semantic_label(model.schema, c) << "\n";

  if (!opt.out.empty()) {
    const fs::path out_dir = opt.out;
    fs::create_directories(out_dir);
    json doc;
    doc["from"] = opt.from;
    doc["to"] = opt.to;
    doc["max_length"] = opt.max_length;
    doc["chains"] = json::array();
    for (const auto& c : chains)
      doc["chains"].push_back({{"spec", chain_spec_string(c)},
                               {"label", semantic_label(model.schema, c)},
                               {"length", c.length()}});
    write_json(out_dir / "chains.json", doc);
    json arguments = {{"model", opt.model}, {"from", opt.from}, {"to", opt.to},
                      {"max_length", opt.max_length}};
    write_run_manifest(out_dir, "chains", arguments,
                       model_input_files(opt.model, model), json::object(), {"chains.json"});
  }
  return 0;
}

// ---------------------------------------------------------------------------
// detect

struct DetectOptions {
  std::string model;
  std::string pivots_file;
  std::string regime = "cpe";
  int k = 1;
  double alpha = 0.5;
  Index q = 2;
  double beta = 0.05;
  std::vector<std::string> chains;
  bool combine = false;
  std::string out;
};

DetectionConfig detection_config(const std::string& regime, int k, double alpha, Index q,
                                 double beta, bool combine) {
  DetectionConfig config;
  config.regime = parse_regime(regime);
  config.k = k;
  config.alpha = alpha;
  config.q = q;
  config.beta = beta;
  config.combination = combine ? Combination::Combined : Combination::Single;
  return config;
}

// CPE pivots name rows of the chains' shared source type; CPI pivots name
// columns of their shared target type.
std::string pivot_type_for(const SemanticsEnsemble& ensemble, Regime regime) {
  const std::string source = ensemble.chains.front().chain.source_type;
  if (regime == Regime::CPE) return source;
  const std::string target = ensemble.chains.front().chain.target_type;
  for (const auto& c : ensemble.chains)
    if (c.chain.target_type != target)
      throw ValidationError("visibility scoring needs a shared target type; got " +
                            c.chain.target_type + " and " + target);
  return target;
}

int run_detect(const DetectOptions& opt) {
  const LatentModel model = load_model(opt.model);
  const SemanticsEnsemble ensemble = build_ensemble(model, opt.chains);
  const DetectionConfig config =
      detection_config(opt.regime, opt.k, opt.alpha, opt.q, opt.beta, opt.combine);

  const std::string pivot_type = pivot_type_for(ensemble, config.regime);
  const std::vector<Index> pivots =
      resolve_labels(model.schema, pivot_type, read_labels(opt.pivots_file));

  const Module module = detect(ensemble, pivots, config);

  const std::string candidate_type = ensemble.chains.front().chain.source_type;
  const fs::path out_dir = opt.out;
  fs::create_directories(out_dir);
  write_json(out_dir / "module.json",
             module_to_json(module, config, ensemble, model.schema.type(candidate_type).labels));

  json arguments;
  arguments["model"] = opt.model;
  arguments["pivots"] = opt.pivots_file;
  arguments["regime"] = opt.regime;
  arguments["k"] = opt.k;
  arguments["alpha"] = opt.alpha;
  arguments["q"] = opt.q;
  arguments["beta"] = opt.beta;
  arguments["chains"] = opt.chains;
  arguments["combine"] = opt.combine;
  auto inputs = model_input_files(opt.model, model);
  inputs.emplace_back(opt.pivots_file);
  write_run_manifest(out_dir, "detect", arguments, inputs, json::object(), {"module.json"});
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string model;
  std::vector<std::string> chains;
  std::string regime = "cpe";
  double alpha = 0.5;
  Index q = 2;
  double beta = 0.05;
  bool combine = false;
  std::string protocol = "loocv";
  std::string cases_file;
  bool plot = false;
  std::string truth_file;
  double fraction = 0.5;
  std::uint64_t removal_seed = 0;
  bool removal_seed_given = false;
  std::string out;
};

int run_eval(const EvalOptions& opt) {
  const LatentModel model = load_model(opt.model);
  const SemanticsEnsemble ensemble = build_ensemble(model, opt.chains);
  const DetectionConfig config =
      detection_config(opt.regime, /*k=*/1, opt.alpha, opt.q, opt.beta, opt.combine);
  const std::string candidate_type = ensemble.chains.front().chain.source_type;

  const fs::path out_dir = opt.out;
  fs::create_directories(out_dir);

  json arguments;
  arguments["model"] = opt.model;
  arguments["chains"] = opt.chains;
  arguments["regime"] = opt.regime;
  arguments["alpha"] = opt.alpha;
  arguments["q"] = opt.q;
  arguments["beta"] = opt.beta;
  arguments["combine"] = opt.combine;
  arguments["protocol"] = opt.protocol;
  auto inputs = model_input_files(opt.model, model);
  json seeds = json::object();
  std::vector<std::string> outputs;

  json doc;
  doc["protocol"] = opt.protocol;
  doc["regime"] = opt.regime;
  doc["semantics"] = semantics_json(ensemble);

  if (opt.protocol == "loocv") {
    if (opt.cases_file.empty()) throw ValidationError("--protocol loocv requires --cases");
    const json cases_doc = parse_json_file(opt.cases_file);
    std::vector<LoocvCase> cases;
    for (const auto& c : cases_doc.value("cases", json::array())) {
      LoocvCase item;
      item.id = c.value("id", "case" + std::to_string(cases.size()));
      item.positives = resolve_labels(model.schema, candidate_type,
                                      c.value("positives", std::vector<std::string>{}));
      if (config.regime == Regime::CPI)
        item.pivot_columns =
            resolve_labels(model.schema, pivot_type_for(ensemble, config.regime),
                           c.value("pivot_columns", std::vector<std::string>{}));
      cases.push_back(std::move(item));
    }
    if (cases.empty()) throw ValidationError("no cases in " + opt.cases_file);

    const auto results = loocv_association(ensemble, cases, config);

    std::string tsv = "case\tauroc\tauprc\tn_pos\tn_neg\n";
    double sum_auroc = 0.0, sum_auprc = 0.0;
    std::size_t used = 0;
    doc["cases"] = json::array();
    for (const auto& r : results) {
      json row;
      row["id"] = r.id;
      row["skipped"] = r.skipped;
      if (r.skipped) {
        tsv += r.id + "\tNA\tNA\tNA\tNA\n";
      } else {
        row["auroc"] = r.metrics.auroc;
        row["auprc"] = r.metrics.auprc;
        row["n_pos"] = r.metrics.n_pos;
        row["n_neg"] = r.metrics.n_neg;
        tsv += r.id + "\t" + format_double(r.metrics.auroc) + "\t" +
               format_double(r.metrics.auprc) + "\t" + std::to_string(r.metrics.n_pos) +
               "\t" + std::to_string(r.metrics.n_neg) + "\n";
        sum_auroc += r.metrics.auroc;
        sum_auprc += r.metrics.auprc;
        ++used;
      }
      doc["cases"].push_back(std::move(row));
    }
    if (used > 0) {
      doc["mean_auroc"] = sum_auroc / static_cast<double>(used);
      doc["mean_auprc"] = sum_auprc / static_cast<double>(used);
    }
    write_json(out_dir / "eval.json", doc);
    atomic_write_file(out_dir / "metrics.tsv", tsv);
    outputs = {"eval.json", "metrics.tsv"};

    if (opt.plot) {
      std::vector<std::pair<double, bool>> pooled;
      for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        if (results[ci].skipped) continue;
        const auto pairs = association_score_pairs(ensemble, cases[ci], config);
        pooled.insert(pooled.end(), pairs.begin(), pairs.end());
      }
      if (!pooled.empty()) {
        atomic_write_file(out_dir / "roc.svg",
                          curve_svg(roc_points(pooled), "ROC", "false positive rate",
                                    "true positive rate"));
        atomic_write_file(out_dir / "pr.svg",
                          curve_svg(pr_points(pooled), "Precision-Recall", "recall",
                                    "precision"));
        outputs.push_back("pr.svg");
        outputs.push_back("roc.svg");
      }
    }
    arguments["cases"] = opt.cases_file;
    arguments["plot"] = opt.plot;
    inputs.emplace_back(opt.cases_file);
  } else if (opt.protocol == "recovery") {
    if (opt.truth_file.empty()) throw ValidationError("--protocol recovery requires --truth");
    const json truth_doc = parse_json_file(opt.truth_file);
    const std::vector<Index> truth = resolve_labels(
        model.schema, candidate_type, truth_doc.value("members", std::vector<std::string>{}));
    const std::uint64_t removal_seed =
        opt.removal_seed_given ? opt.removal_seed : draw_seed();

    const auto report = module_recovery(ensemble, truth, opt.fraction, config, removal_seed);
    doc["fraction"] = opt.fraction;
    doc["removal_seed"] = removal_seed;
    if (!report.has_value()) {
      doc["skipped"] = true;
    } else {
      doc["skipped"] = false;
      doc["recall_at_k"] = report->recall_at_k;
      const auto& labels = model.schema.type(candidate_type).labels;
      json held = json::array();
      for (const Index i : report->held_out) held.push_back(labels[static_cast<std::size_t>(i)]);
      doc["held_out"] = held;
      DetectionConfig module_config = config;
      module_config.k = report->module.k;
      doc["module"] = module_to_json(report->module, module_config, ensemble, labels);
    }
    write_json(out_dir / "eval.json", doc);
    outputs = {"eval.json"};
    arguments["truth"] = opt.truth_file;
    arguments["fraction"] = opt.fraction;
    seeds["removal"] = removal_seed;
    inputs.emplace_back(opt.truth_file);
  } else {
    throw ValidationError("unknown protocol: " + opt.protocol);
  }

  write_run_manifest(out_dir, "eval", arguments, inputs, seeds, outputs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data fusion by matrix tri-factorization with chain-based module detection"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = machine default)")
      ->capture_default_str();

  FitOptions fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Factorize a fusion graph into a latent model");
  fit_cmd->fallthrough();
  fit_cmd->add_option("--graph", fit.graph, "Graph manifest JSON")
      ->required()
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--p", fit.p, "Rank fraction in (0,1] applied to every type");
  fit_cmd->add_option("--rank", fit.ranks, "Explicit rank TYPE=K (repeatable)");
  CLI::Option* seed_opt = fit_cmd->add_option("--seed", fit.seed, "Factorization seed");
  fit_cmd->add_option("--max-iter", fit.max_iterations, "Maximum sweeps")
      ->capture_default_str();
  fit_cmd->add_option("--tol", fit.tolerance, "Relative objective tolerance")
      ->capture_default_str();
  fit_cmd->add_option("--init", fit.init, "Factor init: uniform | acol")
      ->check(CLI::IsMember({"uniform", "acol"}))
      ->capture_default_str();
  fit_cmd->add_flag("--no-normalize", fit.no_normalize, "Skip graph normalization");
  fit_cmd->add_option("--out", fit.out, "Output model directory")->required();

  ChainsOptions chains;
  CLI::App* chains_cmd =
      app.add_subcommand("chains", "Enumerate chains between two object types");
  chains_cmd->fallthrough();
  chains_cmd->add_option("--model", chains.model, "Model directory")->required();
  chains_cmd->add_option("--from", chains.from, "Source type")->required();
  chains_cmd->add_option("--to", chains.to, "Target type")->required();
  chains_cmd->add_option("--max-len", chains.max_length, "Maximum chain length")
      ->capture_default_str();
  chains_cmd->add_option("--out", chains.out, "Optional output directory");

  DetectOptions detect;
  CLI::App* detect_cmd = app.add_subcommand("detect", "Greedily grow a size-k module");
  detect_cmd->fallthrough();
  detect_cmd->add_option("--model", detect.model, "Model directory")->required();
  detect_cmd->add_option("--pivots", detect.pivots_file, "Pivot labels, one per line")
      ->required()
      ->check(CLI::ExistingFile);
  detect_cmd->add_option("--regime", detect.regime, "cpe | cpi")
      ->check(CLI::IsMember({"cpe", "cpi"}))
      ->capture_default_str();
  detect_cmd->add_option("--k", detect.k, "Module size")->capture_default_str();
  detect_cmd->add_option("--alpha", detect.alpha, "Accreted-pivot down-weighting (cpe)")
      ->capture_default_str();
  detect_cmd->add_option("--q", detect.q, "Strongest-column count (cpe)")
      ->capture_default_str();
  detect_cmd->add_option("--beta", detect.beta, "Visibility decay rate (cpi)")
      ->capture_default_str();
  detect_cmd->add_option("--chain", detect.chains, "Chain spec (repeatable)")->required();
  detect_cmd->add_flag("--combine", detect.combine, "Combine all chains into one score");
  detect_cmd->add_option("--out", detect.out, "Output directory")->required();

  EvalOptions eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Run an evaluation protocol");
  eval_cmd->fallthrough();
  eval_cmd->add_option("--model", eval.model, "Model directory")->required();
  eval_cmd->add_option("--chain", eval.chains, "Chain spec (repeatable)")->required();
  eval_cmd->add_option("--regime", eval.regime, "cpe | cpi")
      ->check(CLI::IsMember({"cpe", "cpi"}))
      ->capture_default_str();
  eval_cmd->add_option("--alpha", eval.alpha, "Accreted-pivot down-weighting (cpe)")
      ->capture_default_str();
  eval_cmd->add_option("--q", eval.q, "Strongest-column count (cpe)")->capture_default_str();
  eval_cmd->add_option("--beta", eval.beta, "Visibility decay rate (cpi)")
      ->capture_default_str();
  eval_cmd->add_flag("--combine", eval.combine, "Combine all chains into one score");
  eval_cmd->add_option("--protocol", eval.protocol, "loocv | recovery")
      ->check(CLI::IsMember({"loocv", "recovery"}))
      ->capture_default_str();
  eval_cmd->add_option("--cases", eval.cases_file, "Cases JSON (loocv)")
      ->check(CLI::ExistingFile);
  eval_cmd->add_flag("--plot", eval.plot, "Emit ROC and PR curves as SVG (loocv)");
  eval_cmd->add_option("--truth", eval.truth_file, "Truth module JSON (recovery)")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--fraction", eval.fraction, "Removal fraction in (0,1) (recovery)")
      ->capture_default_str();
  CLI::Option* removal_opt =
      eval_cmd->add_option("--removal-seed", eval.removal_seed, "Member-removal seed");
  eval_cmd->add_option("--out", eval.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  fit.seed_given = seed_opt->count() > 0;
  eval.removal_seed_given = removal_opt->count() > 0;
  set_thread_count(threads);

  try {
    if (fit_cmd->parsed()) return run_fit(fit);
    if (chains_cmd->parsed()) return run_chains(chains);
    if (detect_cmd->parsed()) return run_detect(detect);
    if (eval_cmd->parsed()) return run_eval(eval);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
