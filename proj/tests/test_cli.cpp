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

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>

#include "capi_support.hpp"
#include "doctest.h"
#include "json.hpp"

using nlohmann::json;
using ovis::testing::ScratchDir;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(OVIS_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace

TEST_CASE("cli workflow") {
  ScratchDir tmp("cli");
  ovis::testing::write_file(tmp / "spec.json", ovis::testing::kFixtureSpec);
  ovis::testing::write_file(tmp / "train.json", ovis::testing::train_config(2));

  auto gen = run("fixtures gen " + (tmp / "spec.json") + " " + (tmp / "scenes"));
  REQUIRE(gen.code == 0);
  const auto ids = json::parse(gen.out);
  REQUIRE(ids.size() == 2);
  const std::string s0 = tmp / ("scenes/" + ids[0].get<std::string>());
  const std::string s1 = tmp / ("scenes/" + ids[1].get<std::string>());

  const auto trained = run("train " + (tmp / "train.json") + " " + s0 + " " + s1 + " --out " + (tmp / "ckpt") +
                           " --history " + (tmp / "h.csv"));
  REQUIRE(trained.code == 0);
  CHECK(json::parse(trained.out)["steps"] == 4);
  const auto again = run("train " + (tmp / "train.json") + " " + s0 + " " + s1 + " --out " + (tmp / "ckpt2") +
                         " --history " + (tmp / "h2.csv"));
  REQUIRE(again.code == 0);
  CHECK(ovis::testing::read_file(tmp / "h.csv") == ovis::testing::read_file(tmp / "h2.csv"));

  const auto q1 = run("query " + (tmp / "ckpt") + " " + s0 + " --text chair --top-k 3 --mode hard --tau 0.9");
  const auto q2 = run("query " + (tmp / "ckpt2") + " " + s0 + " --text chair --top-k 3 --mode hard --tau 0.9");
  REQUIRE(q1.code == 0);
  CHECK(q1.out == q2.out);
  const auto response = json::parse(q1.out);
  CHECK(response["mode"] == "hard");
  CHECK(response["results"].size() <= 3);

  const auto ply = run("export-ply " + (tmp / "ckpt") + " " + s0 + " --text chair --out " + (tmp / "a.ply"));
  REQUIRE(ply.code == 0);
  const std::string text = ovis::testing::read_file(tmp / "a.ply");
  CHECK(text.rfind("ply\nformat ascii 1.0\nelement vertex 180\n", 0) == 0);

  const auto ev = run("eval " + (tmp / "ckpt") + " " + s0 + " " + s1 + " --report " + (tmp / "r.json") +
                      " --curves " + (tmp / "c.csv"));
  REQUIRE(ev.code == 0);
  const auto report = json::parse(ovis::testing::read_file(tmp / "r.json"));
  CHECK(report["categories"].size() == 3);
  CHECK(report.contains("grounding"));
  CHECK_FALSE(ovis::testing::read_file(tmp / "c.csv").empty());

  SUBCASE("usage errors exit with 2") {
    CHECK(run("").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("query " + (tmp / "ckpt")).code == 2);
    CHECK(run("query " + (tmp / "ckpt") + " " + s0).code == 2);
    CHECK(run("query " + (tmp / "ckpt") + " " + s0 + " --text chair --tau 0.2").code == 2);
    CHECK(run("query " + (tmp / "ckpt") + " " + s0 + " --text chair --mode mean").code == 2);
    CHECK(run("train " + (tmp / "missing.json") + " " + s0 + " --out x").code == 2);
  }

  SUBCASE("runtime failures exit with 1") {
    CHECK(run("query " + (tmp / "ckpt") + " " + (tmp / "scenes") + " --text chair").code == 1);
    CHECK(run("query " + s0 + " " + s0 + " --text chair").code == 1);
    ovis::testing::write_file(tmp / "bad.json", "{\"epochs\": \"many\"}");
    CHECK(run("train " + (tmp / "bad.json") + " " + s0 + " --out " + (tmp / "x")).code == 1);
    CHECK(run("export-ply " + (tmp / "ckpt") + " " + s0 + " --text chair --out " + (tmp / "no/dir/a.ply")).code == 1);
  }

  SUBCASE("help documents reproducibility") {
    for (const char* sub : {"fixtures gen", "train", "eval", "query", "export-ply", "serve"}) {
      const auto help = run(std::string(sub) + " --help");
      CHECK(help.code == 0);
      CHECK_MESSAGE(help.out.find("reproducible") != std::string::npos, sub);
    }
  }
}
