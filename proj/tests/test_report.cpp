#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gliv/error.hpp"
#include "gliv/report.hpp"
#include "gliv/simulation.hpp"

using namespace gliv;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() /
                 ("gliv_report_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  const fs::path o = scratch() / "stdout.txt";
  const fs::path e = scratch() / "stderr.txt";
  const std::string cmd = std::string(GLIV_CLI_PATH) + " " + args + " >" +
                          o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

std::string path(const std::string& name) { return (scratch() / name).string(); }

void write(const std::string& name, const std::string& text) {
  std::ofstream(scratch() / name) << text;
}

}  // namespace

TEST_CASE("config and manifest json") {
  const TypeConfig cfg = main_example();
  const TypeConfig back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"treatments":["a"]})")),
                  ValidationError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ValidationError);

  RunManifest m;
  m.command = "estimate";
  m.config = "main_example";
  m.dataset = "data.csv";
  m.flags = {{"params", "lasf"}};
  m.seed = 9;
  const Json j = to_json(m);
  CHECK_NOTHROW(validate_manifest(j));
  const RunManifest r = manifest_from_json(j);
  CHECK(r.command == m.command);
  CHECK(r.flags == m.flags);
  CHECK(r.seed == 9);
  CHECK(r.version == kVersion);

  Json bad = j;
  bad.erase("seed");
  CHECK_THROWS_AS(validate_manifest(bad), ValidationError);
  bad = j;
  bad["seed"] = -1;
  CHECK_THROWS_AS(validate_manifest(bad), ValidationError);
  bad = j;
  bad["flags"]["params"] = 3;
  CHECK_THROWS_AS(validate_manifest(bad), ValidationError);
  bad = j;
  bad["command"] = 1;
  CHECK_THROWS_AS(validate_manifest(bad), ValidationError);
}

TEST_CASE("estimate report json") {
  const TypeConfig cfg = main_example();
  DgpSpec d;
  d.n = 500;
  const Dataset data = generate(d);
  const EstimateReport r =
      estimate(data, cfg, fit(data, cfg, {}),
               with_companions(std::vector{ParameterId::beta(0, 1)}));
  const Json j = to_json(r, cfg);
  CHECK(j["n"] == 500);
  CHECK(j["parameters"].size() == 2);
  CHECK(j["parameters"][0]["id"] == "beta:t1:1");
  CHECK(j["parameters"][0]["estimate"].get<double>() == r.estimates(0));
  CHECK_FALSE(j.contains("influence"));
  CHECK(to_json(r, cfg, true)["influence"].size() == 500);
  CHECK(format_estimates(r, cfg).find("beta:t1:1") != std::string::npos);
}

TEST_CASE("command line estimation") {
  Run g = cli("generate --n 3000 --seed 5 --out " + path("clean.csv"));
  REQUIRE(g.code == 0);
  g = cli("generate --n 3000 --seed 5 --defier-share 0.1 --out " +
          path("defiers.csv"));
  REQUIRE(g.code == 0);

  const std::string base = "estimate --data " + path("clean.csv") +
                           " --timestamp t0 --seed 3";
  const Run a = cli(base + " --out " + path("a.json"));
  const Run b = cli(base + " --out " + path("b.json") + " --threads 4");
  CHECK(a.code == 0);
  CHECK(b.code == 0);
  CHECK(a.out.find("beta:t1:1") != std::string::npos);
  CHECK(slurp(path("a.json")) == slurp(path("b.json")));

  const Json doc = Json::parse(slurp(path("a.json")));
  CHECK_NOTHROW(validate_manifest(doc["manifest"]));
  CHECK(doc["manifest"]["command"] == "estimate");

  const Run rep = cli("replay " + path("a.json") + " --out " + path("c.json"));
  CHECK(rep.code == 0);
  CHECK(slurp(path("a.json")) == slurp(path("c.json")));

  // the gmm mean moment reproduces the estimate
  write("spec.json", R"({"moments":[{"t":"t1","k":1}],"bounds":[[-5,5]]})");
  const Run gm = cli("gmm --json --data " + path("clean.csv") + " --spec " +
                     path("spec.json"));
  REQUIRE(gm.code == 0);
  const Json gj = Json::parse(gm.out);
  double beta = 0.0;
  for (const auto& p : doc["report"]["parameters"]) {
    if (p["id"] == "beta:t1:1") beta = p["estimate"].get<double>();
  }
  CHECK(std::abs(gj["report"]["eta_hat"][0].get<double>() - beta) < 1e-6);

  const Run dml1 = cli("dml --json --threads 1 --data " + path("clean.csv"));
  const Run dml3 = cli("dml --json --threads 3 --data " + path("clean.csv"));
  CHECK(dml1.code == 0);
  CHECK(dml1.out == dml3.out);

  CHECK(cli("test-implications --data " + path("clean.csv")).code == 0);
  const Run bad = cli("test-implications --data " + path("defiers.csv"));
  CHECK(bad.code == 4);
  CHECK(bad.out.find("not a sized test") != std::string::npos);
}

TEST_CASE("command line errors") {
  CHECK(cli("--help").code == 0);
  CHECK(cli("estimate --bogus").code == 2);
  CHECK(cli("frobnicate").code == 2);

  write("badlabel.csv", "y,t,z,x1\n1.0,t9,z1,0.5\n");
  const Run label = cli("estimate --data " + path("badlabel.csv"));
  CHECK(label.code == 2);
  CHECK(label.err.find("t9") != std::string::npos);

  write("defiers.json",
        R"({"treatments":["t1","t2"],"instruments":["z1","z2"],)"
        R"("types":[["t1","t2"],["t2","t1"]]})");
  const Run mono = cli("estimate --config " + path("defiers.json") +
                       " --data " + path("badlabel.csv"));
  CHECK(mono.code == 2);
  CHECK(mono.err.find("[[1,0],[0,1]]") != std::string::npos);

  CHECK(cli("estimate --data " + path("missing.csv")).code == 2);
  CHECK(cli("estimate --params beta:t1:9 --data " + path("badlabel.csv")).code ==
        2);

  // every unit takes t1: beta_{t1,1} has a zero denominator
  std::ostringstream csv;
  csv << "y,t,z,x1\n";
  for (int i = 0; i < 40; ++i) {
    csv << 0.1 * i << ",t1," << (i % 2 ? "z1" : "z2") << "," << (i % 4 < 2 ? 0.5 : 0.6)
        << "\n";
  }
  write("always.csv", csv.str());
  const Run degenerate =
      cli("estimate --params beta:t1:1 --data " + path("always.csv"));
  CHECK(degenerate.code == 3);

  const Run sim = cli("simulate --n 300 --reps 3 --json --out " + path("s.json"));
  CHECK(sim.code == 0);
  const Run simr = cli("replay " + path("s.json") + " --threads 2 --json");
  CHECK(simr.code == 0);
  CHECK(simr.out == sim.out);
}
