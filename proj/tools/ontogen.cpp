#include <pthread.h>

#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "ontogen/ontogen.hpp"

namespace {

using namespace ontogen;

enum Exit { kOk = 0, kConfig = 2, kDependency = 3, kStage = 4 };

void print(const StageReport& r) {
  std::cout << to_string(r.stage) << (r.no_op ? ": up to date" : ": done") << '\n';
  for (const auto& o : r.outputs) std::cout << "  wrote " << o << '\n';
  for (const auto& n : r.notes) std::cout << "  " << n << '\n';
}

int serve(const PipelineConfig& cfg) {
  const auto state_path = cfg.out(artifact::review_state);
  if (!fs::exists(state_path)) throw DependencyError("no " + std::string(artifact::review_state) + "; run build first");
  ReviewService service;
  service.load(load_state(state_path), cfg.out(artifact::edit_log));
  auto sc = cfg.serve;
  if (!sc.export_dir) sc.export_dir = cfg.out("review/export");
  // Block termination signals here; a watcher thread turns them into a clean stop.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);
  ReviewHttpServer server(service, sc);
  std::thread watcher([&] {
    int sig = 0;
    sigwait(&sigs, &sig);
    server.stop();
  });
  std::cout << "serving on http://" << sc.bind_address << ':' << sc.port << " ("
            << service.snapshot()->edit_count << " edits replayed)" << std::endl;
  try {
    server.run();
  } catch (...) {
    pthread_kill(watcher.native_handle(), SIGTERM);
    watcher.join();
    throw;
  }
  watcher.join();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topic ontology generation pipeline and expert review service"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> threads;
  app.add_option("-c,--config", config_path, "pipeline config JSON")->required();
  app.add_option("--seed", seed, "seed for stochastic stages (overrides config)");
  app.add_option("--out-dir", out_dir, "output directory (overrides config)");
  app.add_option("--threads", threads, "worker threads (overrides config)");

  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  for (auto s : {Stage::index, Stage::split, Stage::features, Stage::train, Stage::predict, Stage::build,
                 Stage::export_, Stage::eval})
    stage_cmds.emplace_back(app.add_subcommand(std::string(to_string(s)), "run the " + std::string(to_string(s)) + " stage"), s);
  auto* case_study = app.add_subcommand("case-study", "run every stage from index to export for the root topic");
  auto* serve_cmd = app.add_subcommand("serve", "serve the built ontology for expert review");
  std::optional<int> port;
  serve_cmd->add_option("--port", port, "listen port");
  auto* audit = app.add_subcommand("audit", "list output files no manifest entry accounts for");

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = load_config(config_path);
    if (seed) cfg.seed = seed;
    if (out_dir) cfg.output_dir = fs::absolute(*out_dir);
    if (threads) cfg.threads = *threads;
    if (port) cfg.serve.port = *port;
    Pipeline pipeline(cfg);

    for (auto& [cmd, stage] : stage_cmds)
      if (cmd->parsed()) {
        print(pipeline.run(stage));
        return kOk;
      }
    if (case_study->parsed()) {
      for (const auto& r : pipeline.run_case_study()) print(r);
      std::cout << "ontology: " << cfg.out(artifact::ontology).string() << '\n';
      return kOk;
    }
    if (audit->parsed()) {
      const auto orphans = pipeline.orphan_files();
      for (const auto& o : orphans) std::cout << o << '\n';
      return orphans.empty() ? kOk : kStage;
    }
    if (serve_cmd->parsed()) return serve(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << '\n';
    return kDependency;
  } catch (const DigestMismatchError& e) {
    std::cerr << "stale input: " << e.what() << '\n';
    return kDependency;
  } catch (const std::exception& e) {
    std::cerr << "stage failed: " << e.what() << '\n';
    return kStage;
  }
  return kOk;
}
