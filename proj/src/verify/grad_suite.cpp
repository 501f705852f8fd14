#include "eddynet/grad_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "eddynet/field.hpp"

namespace eddynet::verify {

using nn::CheckedOp;
using TensorD = Tensor4<double>;

namespace {

void fill_normal(std::span<double> v, nn::Rng& rng, double mean = 0.0, double sd = 1.0) {
    std::normal_distribution<double> d(mean, sd);
    for (auto& x : v) x = d(rng);
}

}  // namespace

LayerFixture make_layer_fixture(CheckedOp op, std::uint64_t seed, double step) {
    nn::Rng rng(seed);
    std::uniform_int_distribution<std::size_t> ch(1, 3), half(2, 3);
    const std::size_t n = 2, cin = ch(rng), cout = ch(rng);
    const std::size_t h = 2 * half(rng), w = 2 * half(rng);
    LayerFixture f;
    f.input = TensorD(n, cin, h, w);
    fill_normal(f.input.span(), rng);

    const double margin = 10.0 * step;
    switch (op) {
        case CheckedOp::relu:
        case CheckedOp::selu: {
            std::uniform_real_distribution<double> mag(margin, 2.0);
            std::bernoulli_distribution sign(0.5);
            for (auto& x : f.input.vec()) x = sign(rng) ? mag(rng) : -mag(rng);
            break;
        }
        case CheckedOp::maxpool: {
            // Distinct values on a grid much coarser than the step, so no window ties.
            std::vector<double> v(f.input.size());
            std::iota(v.begin(), v.end(), 0.0);
            std::shuffle(v.begin(), v.end(), rng);
            for (std::size_t i = 0; i < v.size(); ++i) f.input[i] = (v[i] - v.size() / 2.0) * margin * 2.0;
            break;
        }
        default: break;
    }

    switch (op) {
        case CheckedOp::conv3x3: f.params = nn::make_conv<double>(cin, cout, 3); break;
        case CheckedOp::conv1x1: f.params = nn::make_conv<double>(cin, cout, 1); break;
        case CheckedOp::transposed_conv:
            f.params = nn::make_transposed_conv<double>(cin, cout, seed % 2 == 0 ? 3 : 2);
            break;
        case CheckedOp::batchnorm_train:
        case CheckedOp::batchnorm_infer: {
            f.params = nn::make_batchnorm<double>(cin);
            std::uniform_real_distribution<double> var(0.5, 2.0);
            fill_normal(f.params.gamma, rng, 1.0, 0.3);
            fill_normal(f.params.beta, rng);
            fill_normal(f.params.moving_mean, rng, 0.0, 0.5);
            for (auto& v : f.params.moving_var) v = var(rng);
            return f;
        }
        default: return f;
    }
    fill_normal(f.params.weights.span(), rng, 0.0, 0.5);
    fill_normal(f.params.bias, rng, 0.0, 0.5);
    return f;
}

nn::GradCheckReport check_loss(loss::LossKind kind, std::uint64_t seed, const nn::GradCheckOptions& options) {
    nn::Rng rng(seed);
    const std::size_t n = 2, h = 3, w = 4;
    TensorD logits(n, kNumClasses, h, w), target(n, kNumClasses, h, w);
    // Logits in [-0.5, 0.5] keep every probability above 0.1, where the step is small
    // against the curvature of log p.
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& x : logits.vec()) x = u(rng);
    TensorD probs = nn::softmax_channels(logits);
    std::uniform_int_distribution<std::size_t> cls(0, kNumClasses - 1);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < h * w; ++i) target.plane(b, cls(rng))[i] = 1.0;

    const auto analytic = loss::compute_loss(kind, probs, target);
    auto f = [&] { return loss::compute_loss(kind, probs, target).loss; };
    return nn::compare_with_finite_differences(f, {{"probabilities", probs.span(), analytic.grad.span()}}, options);
}

model::EddyNetConfig tiny_config(model::Variant variant) {
    model::EddyNetConfig c;
    c.variant = variant;
    c.stages = 1;
    c.filters = 2;
    c.input_h = 8;
    c.input_w = 8;
    return c;
}

nn::GradCheckReport check_network(model::Variant variant, std::uint64_t seed, const nn::GradCheckOptions& options) {
    const model::EddyNetConfig cfg = tiny_config(variant);
    nn::Rng rng(seed);
    model::BasicNetworkWeights<double> net = model::build_model(cfg, rng).cast<double>();
    // Move BN affine parameters off their identity initialization.
    for (auto& l : net.layers) {
        if (l.params.kind != nn::LayerKind::batchnorm) continue;
        fill_normal(l.params.gamma, rng, 1.0, 0.2);
        fill_normal(l.params.beta, rng, 0.0, 0.2);
    }
    TensorD input(2, 1, 8, 8), target(2, kNumClasses, 8, 8);
    fill_normal(input.span(), rng);
    std::uniform_int_distribution<std::size_t> cls(0, kNumClasses - 1);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < 64; ++i) target.plane(b, cls(rng))[i] = 1.0;
    const std::uint64_t mask_seed = rng();

    auto run = [&] {
        nn::Rng masks(mask_seed);
        return model::forward(net, input, nn::Mode::train, masks);
    };
    auto fwd = run();
    const auto lv = loss::dice_loss(fwd.probabilities, target);
    const auto grads = model::backward(net, fwd.cache, lv.grad);

    std::vector<nn::GradTarget> targets;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        auto& p = net.layers[i].params;
        const auto& g = grads[i];
        const std::string& name = net.layers[i].name;
        if (!p.weights.empty()) targets.push_back({name + ".weights", p.weights.span(), g.weights.span()});
        if (!p.bias.empty()) targets.push_back({name + ".bias", p.bias, g.bias});
        if (!p.gamma.empty()) targets.push_back({name + ".gamma", p.gamma, g.gamma});
        if (!p.beta.empty()) targets.push_back({name + ".beta", p.beta, g.beta});
    }
    auto f = [&] { return loss::dice_loss(run().probabilities, target).loss; };
    return nn::compare_with_finite_differences(f, targets, options);
}

SuiteReport run_gradient_suite(const SuiteOptions& options, const std::function<void(const SuiteEntry&)>& on_entry) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteReport report;
    auto run = [&](const std::string& name, double tolerance, const std::function<nn::GradCheckReport(std::uint64_t)>& fn) {
        SuiteEntry e;
        e.name = name;
        e.tolerance = tolerance;
        for (std::size_t s = 0; s < options.seeds; ++s) {
            const auto r = fn(options.base_seed + s);
            ++e.runs;
            e.checked += r.checked;
            if (!(r.max_relative_error <= e.max_relative_error)) {
                e.max_relative_error = r.max_relative_error;
                e.worst = "seed " + std::to_string(options.base_seed + s) + ": " + r.worst;
            }
        }
        e.pass = e.max_relative_error < tolerance;
        report.entries.push_back(e);
        if (on_entry) on_entry(e);
    };

    for (int k = 0; k <= static_cast<int>(CheckedOp::alpha_dropout); ++k) {
        const auto op = static_cast<CheckedOp>(k);
        run(nn::to_string(op), options.layer.tolerance, [&](std::uint64_t seed) {
            const auto f = make_layer_fixture(op, seed, options.layer.step);
            return nn::grad_check(op, f.input, f.params, seed, options.layer);
        });
    }
    for (auto kind : {loss::LossKind::dice, loss::LossKind::cce}) {
        run(loss::to_string(kind) + "_loss", options.layer.tolerance,
            [&](std::uint64_t seed) { return check_loss(kind, seed, options.layer); });
    }
    for (auto v : {model::Variant::relu_bn, model::Variant::selu}) {
        run("network_" + model::to_string(v), options.network.tolerance,
            [&](std::uint64_t seed) { return check_network(v, seed, options.network); });
    }
    report.pass = std::all_of(report.entries.begin(), report.entries.end(), [](const auto& e) { return e.pass; });
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::string format_suite(const SuiteReport& report) {
    std::string out;
    char line[512];
    for (const auto& e : report.entries) {
        std::snprintf(line, sizeof line, "%-4s %-18s runs=%zu checked=%zu max_rel_err=%.3e tol=%.0e\n",
                      e.pass ? "ok" : "FAIL", e.name.c_str(), e.runs, e.checked, e.max_relative_error, e.tolerance);
        out += line;
        if (!e.pass) out += "     worst " + e.worst + "\n";
    }
    std::snprintf(line, sizeof line, "%s in %.1f s\n", report.pass ? "all gradient checks passed" : "gradient checks FAILED",
                  report.seconds);
    out += line;
    return out;
}

}  // namespace eddynet::verify
