#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gdm/gdm.hpp"

namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

struct RunOptions {
  std::string input;
  int k = 2;
  std::string embedding = "nonlinear";
  bool normalize = false;
  double epsilon = 0.35;
  double p = 15.0;
  int restarts = 10;
  int grad_iters = 30;
  int genetic_passes = 10;
  double step = 0.3;
  int merge_candidates = 100;
  std::string outlier_mode = "none";
  double alpha = 0.01;
  double fraction = 0.20;
  double kappa = 0.05;
  bool adaptive_kappa = false;
  double adaptive_r = 3.0;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string config_file;
};

// Binds every run option to a flag and an environment variable, and records
// how to read each one back from the "config" object of a previous report.
class RunOptionBinder {
 public:
  RunOptionBinder(CLI::App* app, RunOptions& o) : app_(app) {
    app->add_option("-i,--input", o.input, "Correspondence or vector file (CSV/TSV)")->required();
    add("k", o.k, "--k", "Number of clusters");
    add("embedding", o.embedding, "--embedding", "nonlinear, linear or raw (rows are data vectors)")
        ->check(CLI::IsMember({"nonlinear", "linear", "raw"}));
    add_flag("normalize", o.normalize, "--normalize", "Center and scale each view before embedding");
    add("epsilon", o.epsilon, "--epsilon", "Empirical dimension exponent in (0, 1)");
    add("p", o.p, "--p", "Exponent of the global dimension p-norm");
    add("restarts", o.restarts, "--restarts", "Number of random restarts");
    add("grad_iters", o.grad_iters, "--grad-iters", "Projected gradient iterations per restart");
    add("genetic_passes", o.genetic_passes, "--genetic-passes", "Single-point reassignment sweeps");
    add("step", o.step, "--step", "Average move of the most affected membership columns");
    add("merge_candidates", o.merge_candidates, "--merge-candidates", "Candidate pairs per merge round");
    add("outlier_mode", o.outlier_mode, "--outlier-mode", "none, naive, known-fraction or model-reassign")
        ->check(CLI::IsMember({"none", "naive", "known-fraction", "model-reassign"}));
    add("alpha", o.alpha, "--alpha", "Weight of the outlier row");
    add("fraction", o.fraction, "--fraction", "Fraction of points rejected as outliers");
    add("kappa", o.kappa, "--kappa", "Distance threshold for model reassignment");
    add_flag("adaptive_kappa", o.adaptive_kappa, "--adaptive-kappa", "Per-cluster threshold mean + r * std");
    add("adaptive_r", o.adaptive_r, "--adaptive-r", "Multiplier r of the adaptive threshold");
    seed_option_ = add("seed", o.seed, "--seed", "Random seed (drawn at random and reported when absent)");
    add("threads", o.threads, "--threads", "Worker threads for restarts");
    app->add_option("--config", o.config_file, "Reuse the config of a previous report (flags take precedence)");
  }

  bool seed_given() const { return seed_option_->count() > 0; }

  // Values from the file fill in every option not given on the command line
  // or in the environment.
  bool apply_config(const json& doc) {
    const json& cfg = doc.contains("config") ? doc.at("config") : doc;
    bool seed_loaded = false;
    for (const auto& [key, entry] : entries_) {
      if (entry.option->count() > 0 || !cfg.contains(key)) continue;
      entry.load(cfg.at(key));
      if (key == "seed") seed_loaded = true;
    }
    return seed_loaded;
  }

 private:
  struct Entry {
    CLI::Option* option;
    std::function<void(const json&)> load;
  };

  template <typename T>
  CLI::Option* add(const std::string& key, T& target, const std::string& flag, const std::string& help) {
    auto* opt = app_->add_option(flag, target, help)->capture_default_str()->envname(env_name(key));
    entries_[key] = {opt, [&target](const json& v) { target = v.get<T>(); }};
    return opt;
  }

  CLI::Option* add_flag(const std::string& key, bool& target, const std::string& flag, const std::string& help) {
    auto* opt = app_->add_flag(flag, target, help)->envname(env_name(key));
    entries_[key] = {opt, [&target](const json& v) { target = v.get<bool>(); }};
    return opt;
  }

  static std::string env_name(std::string key) {
    for (auto& c : key) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return "GDM_" + key;
  }

  CLI::App* app_;
  CLI::Option* seed_option_ = nullptr;
  std::map<std::string, Entry> entries_;
};

std::uint64_t random_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

gdm::OutlierMode parse_mode(const std::string& s) {
  if (s == "naive") return gdm::OutlierMode::naive;
  if (s == "known-fraction") return gdm::OutlierMode::known_fraction;
  if (s == "model-reassign") return gdm::OutlierMode::model_reassign;
  return gdm::OutlierMode::none;
}

gdm::GdmConfig gdm_config(const RunOptions& o) {
  gdm::GdmConfig cfg;
  cfg.clusters = o.k;
  cfg.eps = o.epsilon;
  cfg.p = o.p;
  cfg.restarts = o.restarts;
  cfg.grad_iters = o.grad_iters;
  cfg.genetic_passes = o.genetic_passes;
  cfg.step = o.step;
  cfg.merge_candidates = o.merge_candidates;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  cfg.validate();
  return cfg;
}

gdm::OutlierConfig outlier_config(const RunOptions& o) {
  gdm::OutlierConfig out;
  out.mode = parse_mode(o.outlier_mode);
  out.alpha = o.alpha;
  out.fraction = o.fraction;
  out.kappa = o.kappa;
  out.adaptive_kappa = o.adaptive_kappa;
  out.adaptive_r = o.adaptive_r;
  out.validate();
  return out;
}

json config_echo(const RunOptions& o) {
  return {{"k", o.k},
          {"embedding", o.embedding},
          {"normalize", o.normalize},
          {"epsilon", o.epsilon},
          {"p", o.p},
          {"restarts", o.restarts},
          {"grad_iters", o.grad_iters},
          {"genetic_passes", o.genetic_passes},
          {"step", o.step},
          {"merge_candidates", o.merge_candidates},
          {"outlier_mode", o.outlier_mode},
          {"alpha", o.alpha},
          {"fraction", o.fraction},
          {"kappa", o.kappa},
          {"adaptive_kappa", o.adaptive_kappa},
          {"adaptive_r", o.adaptive_r},
          {"seed", o.seed},
          {"threads", o.threads}};
}

struct LoadedInput {
  gdm::DataMatrix data;
  std::optional<gdm::Partition> truth;
};

LoadedInput load_input(const RunOptions& o) {
  const gdm::io::Table table = gdm::io::read_table_file(o.input);
  LoadedInput out;
  if (o.embedding == "raw") {
    auto file = gdm::io::parse_vectors(table);
    out.data = std::move(file.data);
    out.truth = std::move(file.truth);
  } else {
    auto file = gdm::io::parse_correspondences(table);
    const auto mode = o.embedding == "linear" ? gdm::EmbeddingMode::linear : gdm::EmbeddingMode::nonlinear;
    out.data = gdm::embed_dataset(file.points, mode, o.normalize);
    out.truth = std::move(file.truth);
  }
  return out;
}

json to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (double x : v) arr.push_back(x);
  return arr;
}

json kappa_json(double kappa) { return std::isfinite(kappa) ? json(kappa) : json("inf"); }

// Writes the text to the file (or stdout when the path is empty) and reports
// whether every byte made it out.
bool emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    std::cout.flush();
    return static_cast<bool>(std::cout);
  }
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  return static_cast<bool>(out);
}

void prepare(RunOptionBinder& binder, RunOptions& o) {
  if (!o.config_file.empty()) {
    std::ifstream in(o.config_file);
    if (!in) throw gdm::Error(gdm::ErrorKind::invalid_input, "cannot open " + o.config_file);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw gdm::Error(gdm::ErrorKind::parse_error, o.config_file + ": " + e.what());
    }
    if (binder.apply_config(doc)) return;
  }
  if (!binder.seed_given()) o.seed = random_seed();
}

int run_segment(RunOptionBinder& binder, RunOptions& o, const std::string& output, const std::string& labels_out) {
  prepare(binder, o);
  const gdm::GdmConfig cfg = gdm_config(o);
  const gdm::OutlierConfig outliers = outlier_config(o);
  const auto start = std::chrono::steady_clock::now();
  const LoadedInput input = load_input(o);
  const gdm::RobustResult result = gdm::segment(input.data, cfg, outliers);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto& seg = result.segmentation;
  json flags = json::array();
  for (std::size_t n = 0; n < seg.partition.size(); ++n) flags.push_back(seg.partition.is_outlier(n));

  json report = {{"schema_version", kSchemaVersion},
                 {"command", "segment"},
                 {"input", o.input},
                 {"config", config_echo(o)},
                 {"seed", o.seed},
                 {"points", input.data.cols()},
                 {"ambient_dimension", input.data.rows()},
                 {"labels", gdm::io::partition_to_labels(seg.partition)},
                 {"outliers", flags},
                 {"gd_value", seg.gd_value},
                 {"per_cluster_dims", to_json(seg.per_cluster_dims)},
                 {"best_restart", seg.best_restart},
                 {"restart_values", seg.restart_values}};
  if (outliers.mode != gdm::OutlierMode::none) report["outlier_scores"] = to_json(result.outlier_scores);
  if (input.truth) {
    const auto rates = gdm::tpr_fpr(seg.partition.outliers(), input.truth->outliers(), input.truth->size());
    report["metrics"] = {{"misclassification", gdm::misclassification_rate(seg.partition, *input.truth)},
                         {"tpr", rates.tpr},
                         {"fpr", rates.fpr}};
  }
  report["wall_time_seconds"] = seconds;

  if (!labels_out.empty()) {
    std::ostringstream labels;
    gdm::io::write_labels(labels, seg.partition);
    if (!emit(labels_out, labels.str())) throw gdm::Error(gdm::ErrorKind::invalid_input, "cannot write " + labels_out);
  }
  if (!emit(output, report.dump(2) + "\n")) throw gdm::Error(gdm::ErrorKind::invalid_input, "cannot write report");
  return 0;
}

int run_roc(RunOptionBinder& binder, RunOptions& o, std::vector<double> grid, const std::string& format,
            const std::string& output) {
  prepare(binder, o);
  const gdm::GdmConfig cfg = gdm_config(o);
  const gdm::OutlierConfig outliers = outlier_config(o);
  const LoadedInput input = load_input(o);
  if (!input.truth) throw gdm::Error(gdm::ErrorKind::invalid_input, "roc needs a label column in the input");
  const auto curve = gdm::roc_sweep(input.data, cfg, *input.truth, grid, outliers);

  std::ostringstream text;
  if (format == "csv") {
    const auto shortest = [](double v) {
      char buf[32];
      return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
    };
    text << "kappa,tpr,fpr\n";
    for (const auto& pt : curve)
      text << shortest(pt.kappa) << ',' << shortest(pt.tpr) << ',' << shortest(pt.fpr) << '\n';
  } else {
    json points = json::array();
    for (const auto& pt : curve) points.push_back({{"kappa", kappa_json(pt.kappa)}, {"tpr", pt.tpr}, {"fpr", pt.fpr}});
    json report = {{"schema_version", kSchemaVersion}, {"command", "roc"},  {"input", o.input},
                   {"config", config_echo(o)},         {"seed", o.seed},    {"curve", points}};
    text << report.dump(2) << '\n';
  }
  if (!emit(output, text.str())) throw gdm::Error(gdm::ErrorKind::invalid_input, "cannot write report");
  return 0;
}

struct EvalOptions {
  std::string predicted;
  std::string truth;
};

int run_eval(const EvalOptions& o, const std::string& output) {
  const gdm::Partition pred = gdm::io::read_labels(o.predicted);
  const gdm::Partition truth = gdm::io::read_labels(o.truth);
  if (pred.size() != truth.size())
    throw gdm::Error(gdm::ErrorKind::invalid_input, "label files have different lengths");
  const auto rates = gdm::tpr_fpr(pred.outliers(), truth.outliers(), truth.size());
  const json report = {{"schema_version", kSchemaVersion},
                       {"command", "eval"},
                       {"predicted", o.predicted},
                       {"truth", o.truth},
                       {"points", truth.size()},
                       {"misclassification", gdm::misclassification_rate(pred, truth)},
                       {"tpr", rates.tpr},
                       {"fpr", rates.fpr},
                       {"predicted_outliers", pred.outliers().size()},
                       {"true_outliers", truth.outliers().size()}};
  if (!emit(output, report.dump(2) + "\n")) throw gdm::Error(gdm::ErrorKind::invalid_input, "cannot write report");
  return 0;
}

struct SceneOptions {
  std::vector<int> points{40, 40};
  double noise = 0.0;
  int outliers = 0;
  bool coplanar = false;
  double max_rotation = 30.0;
  double max_translation = 1.0;
  std::uint64_t seed = 0;
};

struct MixtureOptions {
  int ambient = 9;
  std::vector<int> dims{2, 3};
  std::vector<int> points{60, 60};
  double noise = 0.0;
  int outliers = 0;
  double radius = 1.0;
  std::uint64_t seed = 0;
};

int run_generate_scene(const SceneOptions& o, const std::string& output) {
  gdm::TwoViewSceneSpec spec;
  spec.points_per_body = o.points;
  spec.image_noise = o.noise;
  spec.outlier_count = o.outliers;
  spec.coplanar = o.coplanar;
  spec.max_rotation_deg = o.max_rotation;
  spec.max_translation = o.max_translation;
  spec.seed = o.seed;
  const auto scene = gdm::sample_two_view_scene(spec);
  std::ostringstream text;
  gdm::io::write_correspondences(text, scene.correspondences, scene.truth);
  if (!emit(output, text.str())) throw gdm::Error(gdm::ErrorKind::invalid_input, "cannot write output");
  return 0;
}

int run_generate_mixture(const MixtureOptions& o, const std::string& output) {
  gdm::SyntheticSpec spec;
  spec.ambient = o.ambient;
  spec.dims = o.dims;
  spec.points_per_cluster = o.points;
  spec.noise_sigma = o.noise;
  spec.outlier_count = o.outliers;
  spec.outlier_radius = o.radius;
  spec.seed = o.seed;
  const auto sample = gdm::sample_subspace_mixture(spec);
  std::ostringstream text;
  gdm::io::write_vectors(text, sample.data, sample.truth);
  if (!emit(output, text.str())) throw gdm::Error(gdm::ErrorKind::invalid_input, "cannot write output");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid linear modeling by global dimension minimization"};
  app.require_subcommand(1);

  RunOptions seg_opts;
  std::string seg_output, seg_labels;
  auto* seg = app.add_subcommand("segment", "Segment data and write a JSON report");
  RunOptionBinder seg_binder(seg, seg_opts);
  seg->add_option("-o,--output", seg_output, "Report path (stdout when absent)");
  seg->add_option("--labels-out", seg_labels, "Also write one label per line (0 = outlier)");

  RunOptions roc_opts;
  roc_opts.outlier_mode = "model-reassign";
  std::vector<double> grid{0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  std::string roc_format = "csv", roc_output;
  auto* roc = app.add_subcommand("roc", "Model-reassign TPR/FPR over a grid of kappa thresholds");
  RunOptionBinder roc_binder(roc, roc_opts);
  roc->add_option("--kappa-grid", grid, "Comma-separated thresholds")->delimiter(',')->capture_default_str();
  roc->add_option("--format", roc_format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  roc->add_option("-o,--output", roc_output, "Output path (stdout when absent)");

  EvalOptions eval_opts;
  std::string eval_output;
  auto* eval = app.add_subcommand("eval", "Compare predicted labels with ground truth");
  eval->add_option("--pred", eval_opts.predicted, "Predicted labels (label file or labelled data file)")->required();
  eval->add_option("--truth", eval_opts.truth, "True labels (label file or labelled data file)")->required();
  eval->add_option("-o,--output", eval_output, "Report path (stdout when absent)");

  auto* gen = app.add_subcommand("generate", "Write a synthetic labelled data set");
  gen->require_subcommand(1);
  gen->fallthrough();
  std::string gen_output;
  gen->add_option("-o,--output", gen_output, "Output path (stdout when absent)");

  SceneOptions scene_opts;
  auto* scene = gen->add_subcommand("scene", "Two-view correspondences of moving rigid bodies");
  scene->add_option("--points", scene_opts.points, "Points per body")->delimiter(',')->capture_default_str();
  scene->add_option("--noise", scene_opts.noise, "Gaussian image noise")->capture_default_str();
  scene->add_option("--outliers", scene_opts.outliers, "Random correspondences appended")->capture_default_str();
  scene->add_flag("--coplanar", scene_opts.coplanar, "Put each body's points on a plane");
  scene->add_option("--max-rotation", scene_opts.max_rotation, "Largest rotation angle in degrees")
      ->capture_default_str();
  scene->add_option("--max-translation", scene_opts.max_translation, "Largest translation component")
      ->capture_default_str();
  scene->add_option("--seed", scene_opts.seed, "Random seed")->capture_default_str();

  MixtureOptions mix_opts;
  auto* mixture = gen->add_subcommand("mixture", "Points on random linear subspaces with noise and outliers");
  mixture->add_option("--ambient", mix_opts.ambient, "Ambient dimension")->capture_default_str();
  mixture->add_option("--dims", mix_opts.dims, "Subspace dimensions")->delimiter(',')->capture_default_str();
  mixture->add_option("--points", mix_opts.points, "Points per subspace")->delimiter(',')->capture_default_str();
  mixture->add_option("--noise", mix_opts.noise, "Gaussian noise scale")->capture_default_str();
  mixture->add_option("--outliers", mix_opts.outliers, "Uniform-ball outliers appended")->capture_default_str();
  mixture->add_option("--radius", mix_opts.radius, "Outlier ball radius")->capture_default_str();
  mixture->add_option("--seed", mix_opts.seed, "Random seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (seg->parsed()) return run_segment(seg_binder, seg_opts, seg_output, seg_labels);
    if (roc->parsed()) return run_roc(roc_binder, roc_opts, grid, roc_format, roc_output);
    if (eval->parsed()) return run_eval(eval_opts, eval_output);
    if (scene->parsed()) return run_generate_scene(scene_opts, gen_output);
    if (mixture->parsed()) return run_generate_mixture(mix_opts, gen_output);
  } catch (const gdm::Error& e) {
    std::cerr << "gdm: " << gdm::to_string(e.kind()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "gdm: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
