#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "eddynet/binary_io.hpp"
#include "eddynet/grid_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run cli(const std::string& args) {
    const std::string cmd = std::string(EDDYNET_CLI) + " " + args + " 2>/dev/null";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path fresh(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("eddynet_cli_" + name);
    fs::remove_all(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(cli("").code, 2);
    EXPECT_EQ(cli("bogus").code, 2);
    EXPECT_EQ(cli("train --out /tmp/x").code, 2);
    EXPECT_EQ(cli("train --data /tmp --out /tmp/x --loss focal").code, 2);
    EXPECT_EQ(cli("synth --out /tmp/x --n notanumber").code, 2);
}

TEST(Cli, HelpExitsZero) {
    const auto r = cli("--help");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("train"), std::string::npos);
    EXPECT_EQ(cli("eval --help").code, 0);
}

TEST(Cli, RuntimeErrorsExitOne) {
    EXPECT_EQ(cli("predict --weights /nonexistent.edyn --grid /nonexistent.sshg --out /tmp/x.mask").code, 1);
    EXPECT_EQ(cli("eval --truth-as-prediction --data /nonexistent").code, 1);
}

TEST(Cli, SynthIsReproducible) {
    const auto a = fresh("synth_a"), b = fresh("synth_b"), z = fresh("synth_0");
    ASSERT_EQ(cli("synth --out " + a.string() + " --n 3 --grid-size 32 --seed 5").code, 0);
    ASSERT_EQ(cli("synth --out " + b.string() + " --n 3 --grid-size 32 --seed 5").code, 0);
    for (const char* f : {"manifest.txt", "scene_00002.sshg", "scene_00002.mask", "scene_00002.contours"})
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_EQ(eddynet::data::load_ssh_grid(a / "scene_00000.sshg").values.rows, 32u);
    ASSERT_EQ(cli("synth --out " + z.string() + " --n 0").code, 0);
    EXPECT_TRUE(slurp(z / "manifest.txt").empty());
}

TEST(Cli, TrainPredictEvalGhost) {
    const auto data = fresh("pipe_data"), out = fresh("pipe_out");
    ASSERT_EQ(cli("synth --out " + data.string() + " --n 6 --grid-size 16 --n-eddies 1 --seed 2").code, 0);
    const auto tr = cli("train --data " + data.string() + " --out " + out.string() +
                        " --batch 2 --max-epochs 2 --seed 1 --no-timing --quiet");
    ASSERT_EQ(tr.code, 0);
    ASSERT_TRUE(fs::exists(out / "weights.edyn"));
    const std::string hist = slurp(out / "history.csv");
    EXPECT_EQ(hist.rfind("epoch,train_loss,val_loss,val_mean_dice,seconds\n", 0), 0u);
    EXPECT_NE(hist.find(",0.000000\n"), std::string::npos);

    const auto mask = out / "p.mask", ppm = out / "p.ppm";
    ASSERT_EQ(cli("predict --weights " + (out / "weights.edyn").string() + " --grid " +
                  (data / "scene_00000.sshg").string() + " --out " + mask.string() + " --out " + ppm.string())
                  .code,
              0);
    EXPECT_EQ(fs::file_size(ppm), std::string("P6\n16 16\n255\n").size() + 16 * 16 * 3);
    EXPECT_EQ(cli("predict --weights " + (out / "weights.edyn").string() + " --grid " +
                  (data / "scene_00000.sshg").string() + " --out " + (out / "p.png").string())
                  .code,
              2);

    const auto truth = cli("eval --truth-as-prediction --data " + data.string() +
                           " --n-sets 3 --set-size 4 --patch 8 --seed 1");
    ASSERT_EQ(truth.code, 0);
    const auto j = nlohmann::json::parse(truth.out);
    EXPECT_EQ(j["mean_dice"]["mean"], 1.0);
    EXPECT_EQ(j["global_accuracy"]["std"], 0.0);
    const auto net = cli("eval --weights " + (out / "weights.edyn").string() + " --data " + data.string() +
                         " --n-sets 3 --set-size 4 --patch 8 --mode per_patch");
    ASSERT_EQ(net.code, 0);
    EXPECT_EQ(nlohmann::json::parse(net.out)["aggregation"], "per_patch");

    const auto ghosts = out / "ghosts.txt";
    std::ofstream(ghosts) << "# none\n";
    const auto g = cli("ghost --weights " + (out / "weights.edyn").string() + " --grid " +
                       (data / "scene_00000.sshg").string() + " --ghosts " + ghosts.string());
    ASSERT_EQ(g.code, 0);
    EXPECT_TRUE(nlohmann::json::parse(g.out)["anticyclonic"].is_null());
    std::ofstream(ghosts) << "1,2,7\n";
    EXPECT_EQ(cli("ghost --weights " + (out / "weights.edyn").string() + " --grid " +
                  (data / "scene_00000.sshg").string() + " --ghosts " + ghosts.string())
                  .code,
              1);
}

TEST(Cli, ParamsAndGradcheck) {
    const auto p = cli("params --variant selu");
    EXPECT_EQ(p.code, 0);
    EXPECT_NE(p.out.find("177571"), std::string::npos) << p.out;
    const auto g = cli("gradcheck --seeds 2");
    EXPECT_EQ(g.code, 0) << g.out;
}
