// Command-line driver: ddc <command> --config FILE [options]

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ddc/harness.hpp"

using namespace ddc;
namespace fs = std::filesystem;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kConfig = 3,
  kMissingCheckpoint = 4,
  kData = 5,
  kTrainingAborted = 6,
};

struct CliError : std::runtime_error {
  CliError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

Dataset load_data(const fs::path& path, const char* what) {
  if (!fs::exists(path))
    throw CliError(kConfig, std::string(what) + " not found at " + path.string() + " (run gen-data first)");
  try {
    return load_dataset(path);
  } catch (const DatasetError& e) {
    throw CliError(kData, e.what());
  }
}

Checkpoint load_latest(const ExperimentConfig& cfg, const std::string& explicit_path) {
  fs::path path = explicit_path;
  if (path.empty()) {
    const auto latest = latest_checkpoint(cfg.output_dir);
    if (!latest) throw CliError(kMissingCheckpoint, "no checkpoint under " + cfg.checkpoint_dir().string());
    path = *latest;
  }
  if (!fs::exists(path)) throw CliError(kMissingCheckpoint, "checkpoint not found: " + path.string());
  Checkpoint ck = load_checkpoint(path);
  require_same_shapes(init_params(cfg.model, 0), ck.params);
  return ck;
}

std::string checksum_hex(std::uint32_t c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", c);
  return buf;
}

int gen_data(const ExperimentConfig& cfg) {
  const Dataset train = generate_training_data(cfg);
  const Dataset eval = generate_eval_data(cfg);
  for (const fs::path& p : {cfg.dataset_path(), cfg.eval_dataset_path()})
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
  save_dataset(train, cfg.dataset_path());
  save_dataset(eval, cfg.eval_dataset_path());
  std::cout << cfg.dataset_path().string() << " crc32=" << checksum_hex(dataset_checksum(train)) << '\n'
            << cfg.eval_dataset_path().string() << " crc32=" << checksum_hex(dataset_checksum(eval)) << '\n';
  return kOk;
}

int train_cmd(const ExperimentConfig& cfg, bool resume_run) {
  const Dataset data = load_data(cfg.dataset_path(), "training dataset");
  write_text(cfg.output_dir / "config.txt", format_experiment_config(cfg));
  TrainResult r;
  try {
    if (resume_run) {
      const auto latest = latest_checkpoint(cfg.output_dir);
      if (!latest) throw CliError(kMissingCheckpoint, "--resume: no checkpoint under " + cfg.checkpoint_dir().string());
      r = resume(load_checkpoint(*latest), cfg.train, cfg.model, data.triples_x, data.pairs_y);
    } else {
      r = train(cfg.train, cfg.model, data.triples_x, data.pairs_y);
    }
  } catch (const TrainingAborted& e) {
    std::cerr << "training aborted at step " << e.step() << " in " << e.term() << "; last good checkpoint "
              << e.last_good_checkpoint() << '\n';
    return kTrainingAborted;
  }
  for (const auto& e : r.report.epochs)
    std::cout << "epoch " << e.epoch << " loss " << e.mean_loss << " elbo_x " << e.mean_x.x_total() << " elbo_y "
              << e.mean_y.y_total() << '\n';
  std::cout << "final checkpoint " << r.report.final_checkpoint << " (" << r.report.wall_seconds << " s)\n";
  return kOk;
}

int eval_cmd(const ExperimentConfig& cfg, const std::string& checkpoint) {
  const Checkpoint ck = load_latest(cfg, checkpoint);
  const Dataset eval = load_data(cfg.eval_dataset_path(), "evaluation dataset");
  MetricsReport report = evaluate(cfg, ck.params, eval);
  report.checkpoint = checkpoint.empty() ? latest_checkpoint(cfg.output_dir)->string() : checkpoint;
  write_text(cfg.output_dir / "metrics.json", metrics_to_json(report));
  std::cout << format_metrics_table(report);
  return kOk;
}

int plan_cmd(const ExperimentConfig& cfg, const std::string& checkpoint, SetId set, int episode) {
  const Checkpoint ck = load_latest(cfg, checkpoint);
  EvalConfig one = cfg.eval;
  one.runs = 1;
  one.seed = cfg.eval.seed + static_cast<std::uint64_t>(episode);
  const PlanningEval r = eval_planning(cfg.env, ck.params, set, cfg.plan, one);
  const Episode& ep = r.episodes.front();
  std::ostringstream out;
  out << "set = " << to_string(set) << "\nstart = " << format_double(ep.start.position.x()) << ','
      << format_double(ep.start.position.y()) << "\ngoal_state = " << format_double(ep.goal.position.x()) << ','
      << format_double(ep.goal.position.y()) << "\nplanning_loss = " << format_double(ep.planning_loss)
      << "\nsuccess = " << (ep.success ? "true" : "false") << '\n';
  if (!ep.error.empty()) out << "error = " << ep.error << '\n';
  out << "states = ";
  for (std::size_t t = 0; t < ep.states.size(); ++t)
    out << (t ? ";" : "") << format_double(ep.states[t].position.x()) << ',' << format_double(ep.states[t].position.y());
  out << '\n';
  const IlqrOptions opts = cfg.plan.options(cfg.env);
  const AgentShape shape = shape_of(set, cfg.env);
  const Plan plan = ilqr_plan(render(ep.start, shape, cfg.env), render(ep.goal, shape, cfg.env), cfg.plan.horizon,
                              ck.params, cfg.plan.weights(cfg.model.latent_dim), opts);
  out << format_plan(plan);
  const fs::path path = cfg.output_dir / ("plan_" + to_string(set) + "_" + std::to_string(episode) + ".txt");
  write_text(path, out.str());
  std::cout << path.string() << ": loss " << ep.planning_loss << (ep.success ? " (reached)" : " (missed)") << '\n';
  return kOk;
}

int map_cmd(const ExperimentConfig& cfg, const std::string& checkpoint) {
  const Checkpoint ck = load_latest(cfg, checkpoint);
  const LatentMap x = latent_map(ck.params, cfg.env, cfg.eval.grid_n, SetId::x);
  const LatentMap y = latent_map(ck.params, cfg.env, cfg.eval.grid_n, SetId::y);
  for (const LatentMap* m : {&x, &y}) {
    write_latent_map_csv(*m, cfg.output_dir / ("latent_map_" + to_string(m->set) + ".csv"));
    write_latent_map_ppm(*m, cfg.output_dir / ("latent_map_" + to_string(m->set) + ".ppm"));
  }
  const ProcrustesFit fit = procrustes(x.latents, y.latents);
  std::ostringstream out;
  out << "points = " << x.states.size() << "\nresidual = " << format_double(fit.residual)
      << "\ndiameter = " << format_double(fit.diameter) << "\nrelative = " << format_double(fit.relative)
      << "\ndegenerate = " << (fit.degenerate ? "true" : "false") << '\n';
  write_text(cfg.output_dir / "procrustes.txt", out.str());
  std::cout << out.str();
  return kOk;
}

int filmstrip_cmd(const ExperimentConfig& cfg, const std::string& checkpoint, SetId set, std::uint64_t seed) {
  const Checkpoint ck = load_latest(cfg, checkpoint);
  Rng rng(seed);
  const Filmstrip strip = prediction_filmstrip(ck.params, cfg.env, set, 4, rng);
  const fs::path path = cfg.output_dir / ("filmstrip_" + to_string(set) + ".pgm");
  write_pgm(strip.sheet(), path);
  std::cout << path.string() << '\n';
  return kOk;
}

int report_cmd(const ExperimentConfig& cfg, const std::string& metrics_path) {
  const fs::path path = metrics_path.empty() ? cfg.output_dir / "metrics.json" : fs::path(metrics_path);
  std::ifstream in(path);
  if (!in) throw CliError(kConfig, "metrics not found at " + path.string() + " (run eval first)");
  std::stringstream text;
  text << in.rdbuf();
  const std::string table = format_metrics_table(metrics_from_json(text.str()));
  write_text(cfg.output_dir / "report.md", table);
  std::cout << table;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled latent dynamics: data, training, evaluation and planning"};
  app.require_subcommand(1);
  std::string config_path, checkpoint, set_name = "x", metrics_path;
  bool resume_run = false;
  int episode = 0;
  std::uint64_t seed = 0;

  auto with_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "experiment config file")->required();
    return sub;
  };
  auto with_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", checkpoint, "checkpoint file (default: latest under output.dir)");
    return sub;
  };
  auto* gen = with_config(app.add_subcommand("gen-data", "generate training and held-out datasets"));
  auto* tr = with_config(app.add_subcommand("train", "train the model"));
  tr->add_flag("--resume", resume_run, "continue from the latest checkpoint");
  auto* ev = with_checkpoint(with_config(app.add_subcommand("eval", "compute the metrics report")));
  auto* pl = with_checkpoint(with_config(app.add_subcommand("plan", "plan and execute one corner-to-corner episode")));
  pl->add_option("--set", set_name, "x or y")->check(CLI::IsMember({"x", "y", "X", "Y"}));
  pl->add_option("--episode", episode, "episode index");
  auto* mp = with_checkpoint(with_config(app.add_subcommand("map", "latent maps of both sets and their alignment")));
  auto* fm = with_checkpoint(with_config(app.add_subcommand("filmstrip", "true vs predicted frames for 4 actions")));
  fm->add_option("--set", set_name, "x or y")->check(CLI::IsMember({"x", "y", "X", "Y"}));
  fm->add_option("--seed", seed, "random seed for the start state and actions");
  auto* rp = with_config(app.add_subcommand("report", "format metrics.json as a table"));
  rp->add_option("--metrics", metrics_path, "metrics file (default: output.dir/metrics.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    if (gen->parsed()) return gen_data(cfg);
    if (tr->parsed()) return train_cmd(cfg, resume_run);
    if (ev->parsed()) return eval_cmd(cfg, checkpoint);
    if (pl->parsed()) return plan_cmd(cfg, checkpoint, parse_set_id(set_name), episode);
    if (mp->parsed()) return map_cmd(cfg, checkpoint);
    if (fm->parsed()) return filmstrip_cmd(cfg, checkpoint, parse_set_id(set_name), seed);
    if (rp->parsed()) return report_cmd(cfg, metrics_path);
    return kUsage;
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kMissingCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
