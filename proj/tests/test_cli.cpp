// Drives the built `rek` binary end to end through the shell.

#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "rek/io.hpp"
#include "rek/rek.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
};

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("rek_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Result run(const std::string& args, const fs::path& dir) {
    const fs::path log = dir / "stdout.txt";
    const std::string cmd = std::string("\"") + REK_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, rek::read_file(log)};
}

}  // namespace

TEST(Cli, GenerateIsDeterministic) {
    const auto d = scratch("gen");
    ASSERT_EQ(run("scene --generate --seed 5 --out " + (d / "a").string(), d).code, 0);
    ASSERT_EQ(run("scene --generate --seed 5 --out " + (d / "b").string(), d).code, 0);
    ASSERT_EQ(run("scene --generate --seed 6 --out " + (d / "c").string(), d).code, 0);
    const auto a = rek::read_file(d / "a" / "scene.json");
    EXPECT_EQ(a, rek::read_file(d / "b" / "scene.json"));
    EXPECT_NE(a, rek::read_file(d / "c" / "scene.json"));
}

TEST(Cli, CanonicalSceneSummary) {
    const auto d = scratch("canon");
    const auto r = run("scene --canonical --out " + d.string(), d);
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("receivers: 7320"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("scatterers: 28"), std::string::npos) << r.out;
}

TEST(Cli, BadSceneFileExitsWithOne) {
    const auto d = scratch("bad");
    rek::atomic_write(d / "bad.json", "{\"tx\": 3");
    EXPECT_EQ(run("scene --scene " + (d / "bad.json").string() + " --out " + d.string(), d).code, 1);
    EXPECT_EQ(run("scene --scene " + (d / "missing.json").string() + " --out " + d.string(), d).code, 1);
}

TEST(Cli, BadArgumentsExitWithOne) {
    const auto d = scratch("args");
    EXPECT_EQ(run("frobnicate", d).code, 1);
    EXPECT_EQ(run("rek --canonical --coeff c_diag=0.3 --out " + d.string(), d).code, 1);
    EXPECT_EQ(run("rek --canonical --coeff bogus=1 --out " + d.string(), d).code, 1);
    EXPECT_EQ(run("rek --canonical --trajectory 61 --out " + d.string(), d).code, 1);
}

TEST(Cli, RekWritesOneSpectrumPerColumn) {
    const auto d = scratch("rek");
    ASSERT_EQ(run("rek --canonical --trajectory 0,30 --seed 3 --out " + d.string(), d).code, 0);
    for (const char* name : {"traj_000.csv", "traj_030.csv"}) {
        const auto s = rek::parse_spectrum_csv(rek::read_file(d / "rek" / name));
        EXPECT_EQ(s.size(), 120u);
    }
    EXPECT_TRUE(fs::exists(d / "rek" / "classification.csv"));
}

TEST(Cli, CoefficientOverrideChangesSpectrum) {
    const auto d = scratch("coeff");
    ASSERT_EQ(run("rek --canonical --trajectory 5 --out " + (d / "a").string(), d).code, 0);
    ASSERT_EQ(run("rek --canonical --trajectory 5 --coeff c_ref_g=2 --out " + (d / "b").string(), d).code, 0);
    EXPECT_NE(rek::read_file(d / "a" / "rek" / "traj_005.csv"), rek::read_file(d / "b" / "rek" / "traj_005.csv"));
}
