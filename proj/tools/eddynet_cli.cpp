// eddynet: synthetic data, training, inference and evaluation from the command line.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "eddynet/binary_io.hpp"
#include "eddynet/dataset.hpp"
#include "eddynet/evaluator.hpp"
#include "eddynet/grad_suite.hpp"
#include "eddynet/grid_io.hpp"
#include "eddynet/model.hpp"
#include "eddynet/synth.hpp"
#include "eddynet/trainer.hpp"
#include "eddynet/weights_io.hpp"

namespace fs = std::filesystem;
using namespace eddynet;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string scene_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%05zu", i);
    return buf;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    fs::path out;
    std::size_t n = 0;
    data::SynthConfig config;
    std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
    fs::create_directories(a.out);
    data::Rng rng(a.seed);
    std::string manifest;
    for (std::size_t i = 0; i < a.n; ++i) {
        const auto scene = data::synth_scene(a.config, rng);
        const std::string name = scene_name(i);
        data::save_grid(scene.grid, a.out / (name + ".sshg"));
        data::save_mask(scene.mask, a.out / (name + ".mask"));
        data::save_contours(data::scene_contours(scene), a.out / (name + ".contours"));
        manifest += name + "\n";
    }
    write_file(a.out / "manifest.txt", std::vector<std::uint8_t>(manifest.begin(), manifest.end()));
    std::cout << "wrote " << a.n << " scenes to " << a.out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    fs::path data;
    fs::path out;
    std::string variant = "relu_bn";
    std::string loss = "dice";
    train::TrainConfig config;
    double train_fraction = 0.8;
    std::size_t patch = 0;
    std::size_t patches_per_scene = 1;
    bool no_timing = false;
    bool quiet = false;
};

std::vector<data::PatchPair> to_pairs(const std::vector<data::Scene>& scenes, std::size_t patch,
                                      std::size_t per_scene, data::Rng& rng) {
    std::vector<data::PatchPair> out;
    for (const auto& s : scenes) {
        if (patch == 0) {
            out.push_back(data::whole_grid(s.grid, s.mask, s.name));
        } else {
            for (std::size_t k = 0; k < per_scene; ++k) out.push_back(data::sample_patch(s.grid, s.mask, rng, patch, s.name));
        }
    }
    return out;
}

int run_train(TrainArgs a) {
    a.config.variant = model::parse_variant(a.variant);
    a.config.loss = loss::parse_loss(a.loss);
    const auto scenes = data::load_dataset(a.data);
    if (scenes.empty()) throw std::runtime_error("no scenes listed in " + (a.data / "manifest.txt").string());
    auto [train_scenes, val_scenes] = data::split_train_val(scenes, a.train_fraction, a.config.seed);
    data::Rng rng(a.config.seed);
    const auto train_set = to_pairs(train_scenes, a.patch, a.patches_per_scene, rng);
    const auto val_set = to_pairs(val_scenes, a.patch, a.patches_per_scene, rng);

    train::TrainHooks hooks;
    if (a.no_timing) hooks.clock = [] { return 0.0; };
    if (!a.quiet) {
        hooks.on_epoch = [](const train::EpochRecord& e) {
            std::cerr << "epoch " << e.epoch << "  train_loss " << std::setprecision(5) << e.train_loss << "  val_loss "
                      << e.val_loss << "  val_mean_dice " << e.val_mean_dice << "  " << std::setprecision(3)
                      << e.seconds << " s\n";
        };
    }
    const auto result = train::train(a.config, train_set, val_set, hooks);
    const auto paths = train::checkpoint(result.weights, result.history, a.out);
    std::cout << "weights " << paths.weights.string() << "\nhistory " << paths.history.string() << "\n";
    if (result.history.best_epoch) std::cout << "best epoch " << *result.history.best_epoch << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
    fs::path weights;
    fs::path grid;
    std::vector<fs::path> out;
};

int run_predict(const PredictArgs& a) {
    for (const auto& o : a.out) {
        if (o.extension() != ".mask" && o.extension() != ".ppm")
            throw UsageError("--out " + o.string() + ": extension must be .mask or .ppm");
    }
    const auto weights = model::load_weights(a.weights);
    const auto grid = data::load_ssh_grid(a.grid);
    const auto mask = eval::predict_grid(weights, grid);
    for (const auto& o : a.out) {
        if (o.extension() == ".mask") {
            data::save_mask(mask, o);
        } else {
            data::save_ppm(mask, o);
        }
        std::cout << "wrote " << o.string() << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    fs::path weights;
    fs::path data;
    eval::EvalProtocolConfig config;
    std::size_t pool = 0;
    std::string mode = "pooled";
    bool truth = false;
    fs::path out;
};

int run_eval(const EvalArgs& a) {
    const auto aggregation = eval::parse_aggregation(a.mode);
    if (!a.truth && a.weights.empty()) throw UsageError("eval needs --weights or --truth-as-prediction");
    const auto scenes = data::load_dataset(a.data);
    const std::size_t pool_size = a.pool ? a.pool : 4 * a.config.set_size;
    const auto pool = eval::build_pool(scenes, pool_size, a.config.patch_size, a.config.seed);
    eval::ProtocolReport report;
    if (a.truth) {
        report = eval::evaluate_protocol(eval::truth_predictor(), pool, a.config, aggregation);
    } else {
        const auto weights = model::load_weights(a.weights);
        report = eval::evaluate_protocol(weights, pool, a.config, aggregation);
    }
    const std::string text = eval::to_json(report).dump(2) + "\n";
    std::cout << text;
    if (!a.out.empty()) write_file(a.out, std::vector<std::uint8_t>(text.begin(), text.end()));
    return 0;
}

// ---------------------------------------------------------------------------

struct GhostArgs {
    fs::path weights;
    fs::path grid;
    fs::path ghosts;
};

int run_ghost(const GhostArgs& a) {
    const auto ghosts = eval::load_ghosts(a.ghosts);
    const auto grid = data::load_ssh_grid(a.grid);
    const auto weights = model::load_weights(a.weights);
    std::cout << eval::to_json(eval::ghost_check(weights, grid, ghosts)).dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

int run_gradcheck(std::uint64_t seed, std::size_t seeds) {
    verify::SuiteOptions opt;
    opt.base_seed = seed;
    opt.seeds = seeds;
    const auto report = verify::run_gradient_suite(opt);
    std::cout << verify::format_suite(report);
    return report.pass ? 0 : kExitRuntime;
}

int run_params(const std::string& variant, int upsample_kernel) {
    model::EddyNetConfig c;
    c.variant = model::parse_variant(variant);
    c.upsample_kernel = upsample_kernel;
    c.validate();
    std::cout << model::format_parameter_table(model::parameter_table(model::build_skeleton(c)));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EddyNet: pixel-wise eddy segmentation of sea surface height maps"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Write synthetic SSH scenes with masks and contours");
    c_synth->add_option("--out", synth.out, "Output directory")->required();
    c_synth->add_option("--n", synth.n, "Number of scenes")->required();
    c_synth->add_option("--grid-size", synth.config.grid_size, "Grid rows and columns")->capture_default_str();
    c_synth->add_option("--n-eddies", synth.config.n_eddies, "Eddies per scene")->capture_default_str();
    c_synth->add_option("--noise", synth.config.noise_sigma, "Noise standard deviation (m)")->capture_default_str();
    c_synth->add_option("--seed", synth.seed, "Random seed")->capture_default_str();

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train a network on a scene directory");
    c_train->add_option("--data", tr.data, "Scene directory with manifest.txt")->required();
    c_train->add_option("--out", tr.out, "Output directory")->required();
    c_train->add_option("--variant", tr.variant, "relu_bn or selu")
        ->check(CLI::IsMember({"relu_bn", "selu"}))
        ->capture_default_str();
    c_train->add_option("--loss", tr.loss, "dice or cce")->check(CLI::IsMember({"dice", "cce"}))->capture_default_str();
    c_train->add_option("--lr", tr.config.learning_rate, "ADAM learning rate")->capture_default_str();
    c_train->add_option("--dropout", tr.config.dropout_rate, "Dropout rate")->capture_default_str();
    c_train->add_option("--batch", tr.config.batch_size, "Mini-batch size")->capture_default_str();
    c_train->add_option("--patience", tr.config.patience, "Early-stopping patience (epochs)")->capture_default_str();
    c_train->add_option("--max-epochs", tr.config.max_epochs, "Epoch limit")->capture_default_str();
    c_train->add_option("--seed", tr.config.seed, "Random seed")->capture_default_str();
    c_train->add_option("--train-fraction", tr.train_fraction, "Share of scenes used for training")
        ->capture_default_str();
    c_train->add_option("--patch", tr.patch, "Patch size cut from each scene; 0 uses whole scenes")
        ->capture_default_str();
    c_train->add_option("--patches-per-scene", tr.patches_per_scene, "Patches per scene when --patch > 0")
        ->capture_default_str();
    c_train->add_option("--upsample-kernel", tr.config.architecture.upsample_kernel, "Transposed conv kernel (2 or 3)")
        ->capture_default_str();
    c_train->add_flag("--refresh-bn", tr.config.refresh_bn_stats,
                      "Re-estimate BN statistics without dropout after each epoch");
    c_train->add_flag("--no-timing", tr.no_timing, "Write 0 in the history seconds column");
    c_train->add_flag("--quiet", tr.quiet, "No per-epoch progress");

    PredictArgs pr;
    auto* c_predict = app.add_subcommand("predict", "Segment a grid file");
    c_predict->add_option("--weights", pr.weights, "Weight file")->required();
    c_predict->add_option("--grid", pr.grid, "SSH grid file")->required();
    c_predict->add_option("--out", pr.out, "Output .mask and/or .ppm file")->required();

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Random-set evaluation protocol");
    c_eval->add_option("--weights", ev.weights, "Weight file");
    c_eval->add_option("--data", ev.data, "Scene directory with manifest.txt")->required();
    c_eval->add_option("--n-sets", ev.config.n_sets, "Number of random sets")->capture_default_str();
    c_eval->add_option("--set-size", ev.config.set_size, "Patches per set")->capture_default_str();
    c_eval->add_option("--patch", ev.config.patch_size, "Patch size")->capture_default_str();
    c_eval->add_option("--pool", ev.pool, "Patches cut from the scenes (default 4 x set size)");
    c_eval->add_option("--seed", ev.config.seed, "Random seed")->capture_default_str();
    c_eval->add_option("--mode", ev.mode, "pooled or per_patch")
        ->check(CLI::IsMember({"pooled", "per_patch"}))
        ->capture_default_str();
    c_eval->add_flag("--truth-as-prediction", ev.truth, "Score the ground truth against itself");
    c_eval->add_option("--out", ev.out, "Also write the report to this file");

    GhostArgs gh;
    auto* c_ghost = app.add_subcommand("ghost", "Hit rates at ghost-eddy centers");
    c_ghost->add_option("--weights", gh.weights, "Weight file")->required();
    c_ghost->add_option("--grid", gh.grid, "SSH grid file")->required();
    c_ghost->add_option("--ghosts", gh.ghosts, "Text file of row,col,class lines")->required();

    std::uint64_t gc_seed = 0;
    std::size_t gc_seeds = 20;
    auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    c_grad->add_option("--seed", gc_seed, "First seed")->capture_default_str();
    c_grad->add_option("--seeds", gc_seeds, "Seeds per check")->capture_default_str();

    std::string pv = "relu_bn";
    int pk = 3;
    auto* c_params = app.add_subcommand("params", "Per-layer parameter table of the default network");
    c_params->add_option("--variant", pv, "relu_bn or selu")->check(CLI::IsMember({"relu_bn", "selu"}))->capture_default_str();
    c_params->add_option("--upsample-kernel", pk, "Transposed conv kernel (2 or 3)")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*c_synth) return run_synth(synth);
        if (*c_train) return run_train(tr);
        if (*c_predict) return run_predict(pr);
        if (*c_eval) return run_eval(ev);
        if (*c_ghost) return run_ghost(gh);
        if (*c_grad) return run_gradcheck(gc_seed, gc_seeds);
        if (*c_params) return run_params(pv, pk);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
