#include <gtest/gtest.h>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("sgdebias_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(SGDEBIAS_CLI_PATH) + " " + args + " > " + (scratch() / "stdout.txt").string() +
                          " 2> " + (scratch() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::string out_dir(const std::string& name) { return (scratch() / name).string(); }

double evalue_of(const std::string& log_or) {
  const std::string dir = out_dir("evalue_" + log_or);
  EXPECT_EQ(run("evalue --quiet --log-or " + log_or + " --out " + dir), 0);
  return read_json(fs::path(dir) / "evalue.json").at("estimate_evalue").get<double>();
}

}  // namespace

TEST(Cli, EvaluePublishedRows) {
  EXPECT_NEAR(evalue_of("0.41"), 2.38, 0.01);
  EXPECT_NEAR(evalue_of("0.35"), 2.19, 0.01);
  EXPECT_EQ(evalue_of("0"), 1.0);
  EXPECT_EQ(run("evalue --log-or 0.41 --out " + out_dir("evalue_text")), 0);
  EXPECT_NE(slurp(scratch() / "stdout.txt").find("E-value 2.38"), std::string::npos);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("evalue"), 1);
  EXPECT_EQ(run("evalue --log-or 0.2 --lower 0.5 --upper 0.1 --out " + out_dir("bad")), 1);
  EXPECT_EQ(run("evalue --log-or 0.2 --lower 0.5 --out " + out_dir("bad")), 1);
  EXPECT_EQ(run("power --grid 0.5,1 --reps 50 --out " + out_dir("bad")), 1);
  EXPECT_EQ(run("analyze x.csv --r 0.7 --out " + out_dir("bad")), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, DataErrorsExitTwo) {
  EXPECT_EQ(run("analyze /nonexistent/data.csv --out " + out_dir("missing")), 2);
  EXPECT_NE(slurp(scratch() / "stderr.txt").find("cannot open"), std::string::npos);

  const fs::path bad = scratch() / "bad.csv";
  std::ofstream(bad) << "y,t,s,w1\n1,0,1,0.5\n2,1,2,0.1\n";
  EXPECT_EQ(run("analyze " + bad.string() + " --r 0.15 --out " + out_dir("bad")), 2);
  EXPECT_NE(slurp(scratch() / "stderr.txt").find("row 2"), std::string::npos);

  const fs::path gap = scratch() / "gap.csv";
  std::ofstream(gap) << "y,t,s,w1\n1,0,1,0.5\n0,1,3,0.1\n";
  EXPECT_EQ(run("analyze " + gap.string() + " --r 0.15 --out " + out_dir("bad")), 2);
}

TEST(Cli, SeparatedDataExitsThree) {
  // The outcome equals the subgroup-1 treatment indicator.
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  const fs::path path = scratch() / "separated.csv";
  std::ofstream out(path);
  out << "y,t,s,w1,w2,w3,w4,w5\n";
  for (int i = 0; i < 300; ++i) {
    const int s = 1 + i % 2;
    const int t = (i / 2) % 2;
    out << (s == 1 && t == 1 ? 1 : 0) << "," << t << "," << s;
    for (int c = 0; c < 5; ++c) out << "," << g(rng);
    out << "\n";
  }
  out.close();
  EXPECT_EQ(run("analyze " + path.string() + " --r 0.15 --b1 6 --b2 100 --min-size 1 --max-size 3 --out " +
                out_dir("sep")),
            3);
  EXPECT_NE(slurp(scratch() / "stderr.txt").find("numerical failure"), std::string::npos);
}

TEST(Cli, SimulateThenAnalyze) {
  const std::string sim = out_dir("sim");
  ASSERT_EQ(run("simulate --quiet --design subgroup --n 800 --k 3 --p2 12 --seed 3 --out " + sim), 0);
  const fs::path data = fs::path(sim) / "data.csv";
  ASSERT_TRUE(fs::exists(data));
  const std::string ana = out_dir("analyze");
  ASSERT_EQ(run("analyze " + data.string() + " --quiet --r 0.15 --b1 10 --b2 200 --seed 5 --out " + ana), 0);
  const auto rep = read_json(fs::path(ana) / "analyze.json");
  EXPECT_EQ(rep.at("n").get<int>(), 800);
  EXPECT_EQ(rep.at("subgroups").size(), 3u);
  EXPECT_EQ(rep.at("r").get<double>(), 0.15);
  const auto manifest = read_json(fs::path(ana) / "manifest.json");
  EXPECT_EQ(manifest.at("manifest_hash"), rep.at("manifest_hash"));
  const std::string csv = slurp(fs::path(ana) / "analyze.csv");
  EXPECT_EQ(csv.rfind("# manifest_hash=" + rep.at("manifest_hash").get<std::string>(), 0), 0u);
}

TEST(Cli, PowerGridGivesFiveRates) {
  const std::string dir = out_dir("power");
  ASSERT_EQ(run("power --quiet --grid 0,0.1,0.2,0.3,0.4 --reps 50 --n 600 --p2 30 --b1 4 --b2 100 --seed 2 --out " +
                dir),
            0);
  const auto rep = read_json(fs::path(dir) / "power.json");
  ASSERT_EQ(rep.at("points").size(), 5u);
  for (const auto& p : rep.at("points")) {
    const double rate = p.at("calibrated").at("mean").get<double>();
    EXPECT_GE(rate, 0.0);
    EXPECT_LE(rate, 1.0);
    EXPECT_TRUE(p.at("calibrated").contains("se"));
  }
}

TEST(Cli, MonteCarloCsvHasThreeMethodRowsAndIsReproducible) {
  const std::string args = "mc --quiet --design latent --case heterogeneous --n 400 --p1 2 --p2 20 --reps 50 "
                           "--b1 4 --b2 100 --seed 9 --out ";
  const std::string a = out_dir("mc_a"), b = out_dir("mc_b");
  ASSERT_EQ(run(args + a), 0);
  ASSERT_EQ(run(args + b + " --workers 3"), 0);
  const std::string csv = slurp(fs::path(a) / "mc.csv");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# manifest_hash=", 0), 0u);
  std::getline(in, line);
  EXPECT_EQ(line.rfind("method,coverage,coverage_se,sqrt_n_length,sqrt_n_length_se,sqrt_n_bias,sqrt_n_bias_se", 0),
            0u);
  std::vector<std::string> methods;
  while (std::getline(in, line)) methods.push_back(line.substr(0, line.find(',')));
  EXPECT_EQ(methods, (std::vector<std::string>{"boot-calibrated", "no-adjustment", "simultaneous"}));
  for (const char* f : {"mc.csv", "mc.json", "mc.txt"})
    EXPECT_EQ(slurp(fs::path(a) / f), slurp(fs::path(b) / f)) << f;
}

TEST(Cli, SeedFromEnvironment) {
  const std::string a = out_dir("env_a"), b = out_dir("env_b");
  ASSERT_EQ(run("simulate --quiet --design subgroup --n 50 --k 2 --p2 2 --seed 17 --out " + a), 0);
  ASSERT_EQ(std::system(("SUBGROUP_DEBIAS_SEED=17 " + std::string(SGDEBIAS_CLI_PATH) +
                         " simulate --quiet --design subgroup --n 50 --k 2 --p2 2 --out " + b)
                            .c_str()),
            0);
  EXPECT_EQ(slurp(fs::path(a) / "data.csv"), slurp(fs::path(b) / "data.csv"));
}
