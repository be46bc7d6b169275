// Copyright 2026 The Ovis Authors.
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

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ovis/ovis.h"
#include "service.hpp"

namespace {

using nlohmann::json;

constexpr int kRuntimeFailure = 1;
constexpr int kUsageFailure = 2;

constexpr const char* kReproducible =
    " Runs are reproducible: identical inputs and seeds produce byte-identical outputs.";

class CallFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void check(ovis_status status, const std::string& what) {
  if (status != OVIS_OK)
    throw CallFailure(what + " failed (" + ovis_status_name(status) + "): " + ovis_last_error());
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CallFailure("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string take(char* s) {
  std::string out = s == nullptr ? "" : s;
  ovis_string_free(s);
  return out;
}

struct QueryArgs {
  std::string text;
  long long top_k = 5;
  double tau = 0.667;
  std::string mode = "soft";

  std::string request() const {
    return json{{"text", text}, {"top_k", top_k}, {"tau", tau}, {"mode", mode}}.dump();
  }
};

void add_query_options(CLI::App* cmd, QueryArgs& q) {
  cmd->add_option("--text", q.text, "Category name or free-form description")->required();
  cmd->add_option("--top-k", q.top_k, "Number of instances to return")->check(CLI::NonNegativeNumber);
  cmd->add_option("--tau", q.tau, "Ensemble weight of the mask-feature probability")->check(CLI::Range(0.5, 1.0));
  cmd->add_option("--mode", q.mode, "Ensemble mode")->check(CLI::IsMember({"none", "hard", "soft"}));
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

httplib::Server* running_server = nullptr;

void stop_server(int) {
  if (running_server != nullptr) running_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-vocabulary 3D instance segmentation toolkit."};
  app.set_version_flag("--version", std::string(ovis_version()));
  app.require_subcommand(1);

  auto* fixtures = app.add_subcommand("fixtures", "Synthetic scene fixtures.");
  fixtures->require_subcommand(1);
  std::string fixture_spec, fixture_out;
  auto* gen = fixtures->add_subcommand(
      "gen", std::string("Generate scene bundles from a fixture spec JSON.") + kReproducible);
  gen->add_option("spec", fixture_spec, "Fixture spec JSON file")->required()->check(CLI::ExistingFile);
  gen->add_option("out_dir", fixture_out, "Output directory; one bundle per scene")->required();

  std::string train_config, train_out, train_history;
  std::vector<std::string> train_scenes;
  auto* train = app.add_subcommand(
      "train", std::string("Train a model on scene bundles and save a checkpoint.") + kReproducible);
  train->add_option("config", train_config, "Training config JSON file")->required()->check(CLI::ExistingFile);
  train->add_option("scenes", train_scenes, "Scene bundle directories")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Checkpoint directory")->required();
  train->add_option("--history", train_history, "Per-step loss history CSV");

  std::string eval_ckpt, eval_report, eval_curves, eval_mode = "soft";
  std::vector<std::string> eval_scenes;
  double eval_tau = 0.667;
  bool eval_no_grounding = false;
  auto* eval = app.add_subcommand(
      "eval", std::string("Evaluate a checkpoint with class-agnostic matching and AP.") + kReproducible);
  eval->add_option("checkpoint", eval_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("scenes", eval_scenes, "Scene bundle directories")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--report", eval_report, "Report JSON destination")->required();
  eval->add_option("--curves", eval_curves, "Precision-recall curve CSV destination");
  eval->add_option("--tau", eval_tau, "Ensemble weight")->check(CLI::Range(0.5, 1.0));
  eval->add_option("--mode", eval_mode, "Ensemble mode")->check(CLI::IsMember({"none", "hard", "soft"}));
  eval->add_flag("--no-grounding", eval_no_grounding, "Skip caption grounding accuracy");

  std::string query_ckpt, query_scene;
  QueryArgs query_args;
  auto* query = app.add_subcommand(
      "query", std::string("Answer a text query on one scene and print the JSON response.") + kReproducible);
  query->add_option("checkpoint", query_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  query->add_option("scene", query_scene, "Scene bundle directory")->required()->check(CLI::ExistingDirectory);
  add_query_options(query, query_args);

  std::string ply_ckpt, ply_scene, ply_out;
  QueryArgs ply_args;
  auto* ply = app.add_subcommand(
      "export-ply", std::string("Write the scene as PLY with query results tinted by rank.") + kReproducible);
  ply->add_option("checkpoint", ply_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  ply->add_option("scene", ply_scene, "Scene bundle directory")->required()->check(CLI::ExistingDirectory);
  ply->add_option("--out", ply_out, "PLY destination")->required();
  add_query_options(ply, ply_args);

  std::string serve_ckpt, serve_host = "127.0.0.1";
  std::vector<std::string> serve_scenes;
  int serve_port = 8080;
  auto* serve = app.add_subcommand(
      "serve", std::string("Serve the viewer HTTP API over the given scenes.") + kReproducible);
  serve->add_option("checkpoint", serve_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  serve->add_option("scenes", serve_scenes, "Scene bundle directories")->required()->check(CLI::ExistingDirectory);
  serve->add_option("--port", serve_port, "TCP port")->check(CLI::Range(1, 65535));
  serve->add_option("--host", serve_host, "Bind address");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageFailure;
  }

  try {
    if (*gen) {
      char* ids = nullptr;
      check(ovis_fixtures_generate(read_text(fixture_spec).c_str(), fixture_out.c_str(), &ids), "fixture generation");
      std::cout << take(ids) << "\n";
    } else if (*train) {
      const auto dirs = c_strings(train_scenes);
      char* summary = nullptr;
      check(ovis_train(read_text(train_config).c_str(), dirs.data(), dirs.size(), train_out.c_str(),
                       train_history.empty() ? nullptr : train_history.c_str(), &summary),
            "training");
      std::cout << take(summary) << "\n";
    } else if (*eval) {
      const auto model = ovis::service::load_model(eval_ckpt);
      std::vector<ovis::service::SceneHandle> scenes;
      std::vector<const ovis_scene*> raw;
      for (const auto& dir : eval_scenes) {
        scenes.push_back(ovis::service::load_scene(dir));
        raw.push_back(scenes.back().get());
      }
      json options{{"tau", eval_tau}, {"mode", eval_mode}, {"grounding", !eval_no_grounding}};
      if (!eval_curves.empty()) options["curves_path"] = eval_curves;
      char* report = nullptr;
      check(ovis_evaluate(model.get(), raw.data(), raw.size(), options.dump().c_str(), &report), "evaluation");
      const std::string text = take(report);
      std::ofstream out(eval_report);
      if (!(out << text << "\n")) throw CallFailure("cannot write " + eval_report);
      std::cout << text << "\n";
    } else if (*query) {
      const auto model = ovis::service::load_model(query_ckpt);
      const auto scene = ovis::service::load_scene(query_scene);
      char* response = nullptr;
      check(ovis_query(model.get(), scene.get(), query_args.request().c_str(), &response), "query");
      std::cout << take(response) << "\n";
    } else if (*ply) {
      const auto model = ovis::service::load_model(ply_ckpt);
      const auto scene = ovis::service::load_scene(ply_scene);
      check(ovis_export_ply(model.get(), scene.get(), ply_args.request().c_str(), ply_out.c_str()), "PLY export");
    } else if (*serve) {
      std::vector<ovis::service::SceneHandle> scenes;
      for (const auto& dir : serve_scenes) scenes.push_back(ovis::service::load_scene(dir));
      const ovis::service::Service service(ovis::service::load_model(serve_ckpt), std::move(scenes));
      httplib::Server server;
      service.install(server);
      running_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cerr << "listening on " << serve_host << ":" << serve_port << "\n";
      if (!server.listen(serve_host, serve_port)) throw CallFailure("cannot bind " + serve_host);
      running_server = nullptr;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return 0;
}
