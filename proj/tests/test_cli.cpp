#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "betanmf/io.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kDir = fs::temp_directory_path() / "betanmf_test_cli";

int cli(const std::string& args, const std::string& tag) {
  const std::string cmd = std::string(BETANMF_CLI) + " " + args + " > " + (kDir / (tag + ".out")).string() + " 2> " +
                          (kDir / (tag + ".err")).string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

struct Setup {
  Setup() {
    fs::remove_all(kDir);
    fs::create_directories(kDir);
    REQUIRE(cli("synth --kind simplex -F 12 -k 3 -N 30 --noise poisson --level 0.05 --seed 3 --out " +
                    (kDir / "data").string(),
                "synth") == 0);
  }
};

const Setup& setup() {
  static Setup s;
  return s;
}

}  // namespace

TEST_CASE("baseline run writes consistent outputs") {
  setup();
  const auto out = kDir / "baseline";
  REQUIRE(cli("fit --input " + (kDir / "data" / "V.csv").string() + " --model baseline --rank 3 --iters 40 --out " +
                  out.string(),
              "baseline") == 0);
  for (const char* f : {"W.csv", "H.csv", "trace.csv", "summary.json"}) CHECK(fs::exists(out / f));
  const auto rows = read_rows(out / "trace.csv");
  REQUIRE(rows.size() == 42);
  CHECK(rows[0][3] == "objective");
  for (std::size_t i = 2; i < rows.size(); ++i) {
    CHECK(std::stoi(rows[i][0]) == std::stoi(rows[i - 1][0]) + 1);
    const double prev = std::stod(rows[i - 1][3]), cur = std::stod(rows[i][3]);
    CHECK(cur <= prev + 1e-12 * (1 + std::abs(prev)));
  }
  const json s = json::parse(slurp(out / "summary.json"));
  CHECK(s["final"]["objective"].get<double>() == std::stod(rows.back()[3]));
  CHECK(s["manifest"]["rank"] == 3);
  CHECK(s["manifest"]["iters"] == 40);
}

TEST_CASE("ssnmf residuals in every row") {
  setup();
  const auto out = kDir / "ssnmf";
  REQUIRE(cli("fit -i " + (kDir / "data" / "V.csv").string() + " --model ssnmf --beta 0.5 -k 3 --iters 30 -o " +
                  out.string(),
              "ssnmf") == 0);
  const auto rows = read_rows(out / "trace.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::stod(rows[i][4]) <= 1e-6);
}

TEST_CASE("verify on a tiny constrained instance") {
  setup();
  const auto cons = kDir / "tiny.txt";
  std::ofstream(cons) << "# two pairs and a triple in H\nlinear 1 0,0 1,0\nlinear 2 0,1:2 1,1 2,1\n[W]\nlinear 1 0,0 1,0\n";
  const auto out = kDir / "verify";
  REQUIRE(cli("fit -i " + (kDir / "data" / "V.csv").string() + " --model constrained -k 3 --iters 10 --constraints " +
                  cons.string() + " --verify -o " + out.string(),
              "verify") == 0);
  const json s = json::parse(slurp(out / "summary.json"));
  REQUIRE(s.contains("verify"));
  CHECK(s["verify"]["blocks_checked"] == 3);
  CHECK(s["verify"]["agree"] == true);
}

TEST_CASE("other models run") {
  setup();
  const std::string v = (kDir / "data" / "V.csv").string();
  CHECK(cli("fit -i " + v + " --model minvol -k 3 --iters 15 --lambda 0.1 --delta 0.5 -o " + (kDir / "mv").string(),
            "mv") == 0);
  CHECK(cli("fit -i " + v + " --model sparse-sphere -k 3 --iters 15 --lambda 0.05 --rho 1 --schedule-window 2,10 -o " +
                (kDir / "sp").string(),
            "sp") == 0);
  const json s = json::parse(slurp(kDir / "sp" / "summary.json"));
  CHECK(s["manifest"]["schedule_window"][1] == 10);
  CHECK(s["row_sparsity"].size() == 3);
}

TEST_CASE("error exits") {
  setup();
  const std::string v = (kDir / "data" / "V.csv").string();
  CHECK(cli("fit -i " + (kDir / "nope.csv").string() + " -o " + (kDir / "e1").string(), "e1") == 4);
  const json rec = json::parse(slurp(kDir / "e1.err"));
  CHECK(rec["status"] == "error");
  CHECK(rec["kind"] == "io");

  std::ofstream(kDir / "neg.csv") << "1,2\n-3,4\n";
  CHECK(cli("fit -i " + (kDir / "neg.csv").string() + " -k 1 -o " + (kDir / "e2").string(), "e2") == 2);
  CHECK(slurp(kDir / "e2.err").find("row 2, column 1") != std::string::npos);

  CHECK(cli("fit -i " + v + " --model minvol --beta 0.5 -o " + (kDir / "e3").string(), "e3") == 2);
  CHECK(cli("fit -i " + v + " --model nonsense", "e4") == 2);
  CHECK(cli("fit -i " + v + " --rank 0 -o " + (kDir / "e5").string(), "e5") == 2);

  std::ofstream(kDir / "overlap.txt") << "linear 1 0,0 1,0\nlinear 1 0,0\n";
  CHECK(cli("fit -i " + v + " --model constrained -k 3 --constraints " + (kDir / "overlap.txt").string() + " -o " +
                (kDir / "e6").string(),
            "e6") == 2);
  CHECK(slurp(kDir / "e6.err").find("overlap at (0,0)") != std::string::npos);

  std::ofstream(kDir / "zero.csv") << "0,1\n1,1\n";
  CHECK(cli("fit -i " + (kDir / "zero.csv").string() + " -k 1 --beta 0 -o " + (kDir / "e7").string(), "e7") == 2);
}
