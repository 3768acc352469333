#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "fabsim/io/config.hpp"

namespace {

struct Output {
  int code = -1;
  std::string out;
};

Output cli(const std::string& args) {
  const std::string cmd = std::string(FABSIM_CLI) + " " + args + " 2>/dev/null";
  Output o;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return o;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) o.out.append(buf.data(), n);
  const int status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

int count_lines_containing(const std::string& text, const std::string& needle) {
  int n = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    const std::string line = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (line.find(needle) != std::string::npos) ++n;
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return n;
}

std::filesystem::path scratch(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("fabsim_cli_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST(Cli, ProfilesListsBothAspects) {
  const auto o = cli("profiles");
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("Aspect1"), std::string::npos);
  EXPECT_NE(o.out.find("Aspect2"), std::string::npos);
  EXPECT_NE(o.out.find("200 m x 300 m"), std::string::npos) << o.out;
}

TEST(Cli, CatalogFiltersByClass) {
  const auto o = cli("catalog --class safety");
  EXPECT_EQ(o.code, 0);
  EXPECT_EQ(count_lines_containing(o.out, " safety "), 2) << o.out;
  EXPECT_EQ(count_lines_containing(o.out, "PNIO"), 2) << o.out;
  EXPECT_EQ(cli("catalog --class bogus").code, 2);
}

TEST(Cli, ConfigDumpRoundTrips) {
  const auto o = cli("config dump --seed 9");
  ASSERT_EQ(o.code, 0);
  auto expected = fabsim::Scenario::defaults();
  expected.seed = 9;
  EXPECT_EQ(fabsim::io::parse_scenario(o.out), expected);
  const auto dir = scratch("dump");
  std::ofstream(dir / "s.yaml") << o.out;
  EXPECT_EQ(cli("config dump " + (dir / "s.yaml").string()).out, o.out);
}

TEST(Cli, RunWritesArtifactsAndCheckScores) {
  const auto dir = scratch("run");
  const auto o = cli("run --horizon 2s --out " + dir.string());
  ASSERT_EQ(o.code, 0) << o.out;
  for (const char* name : {"metrics.json", "packets.csv", "safety_log.csv", "compliance.json", "compliance.txt",
                           "products.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  }
  const auto metrics = (dir / "metrics.json").string();
  const auto ok = cli("check " + metrics);
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("aggregate vs Aspect2"), std::string::npos) << ok.out;
  // Camera frames are far outside the Aspect1 message size range.
  const auto bad = cli("check " + metrics + " --stream aggregate --profile Aspect1");
  EXPECT_EQ(bad.code, 1) << bad.out;
  EXPECT_EQ(cli("check " + metrics + " --profile Aspect7").code, 2);
}

TEST(Cli, ExitCodesForBadInput) {
  const auto dir = scratch("bad");
  std::ofstream(dir / "bad.yaml") << "link:\n  snr: 3\n";
  EXPECT_EQ(cli("run " + (dir / "bad.yaml").string() + " --out " + (dir / "o").string()).code, 2);
  EXPECT_EQ(cli("run --horizon 5 --out " + (dir / "o").string()).code, 2);
  EXPECT_EQ(cli("run " + (dir / "missing.yaml").string()).code, 3);
  EXPECT_EQ(cli("check " + (dir / "missing.json").string()).code, 3);
}
