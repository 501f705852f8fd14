#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <queue>
#include <random>

#include "eddynet/binary_io.hpp"
#include "eddynet/dataset.hpp"
#include "eddynet/grid_io.hpp"
#include "eddynet/raster.hpp"
#include "eddynet/synth.hpp"

using namespace eddynet;
using namespace eddynet::data;
namespace fs = std::filesystem;

namespace {

template <typename F>
FormatError error_of(F&& f) {
    try {
        f();
    } catch (const FormatException& e) {
        return e.code();
    }
    ADD_FAILURE() << "no FormatException";
    return FormatError::io_error;
}

SshGrid small_grid() {
    SshGrid g;
    g.values = Field2D<float>(2, 2);
    g.values.values = {0.1f, -0.2f, 0.3f, 0.4f};
    g.lat0 = -40.0;
    g.lon0 = 10.0;
    g.resolution = 0.25;
    return g;
}

std::vector<std::uint8_t> reseal(std::vector<std::uint8_t> b) {
    b.resize(b.size() - 4);
    const std::uint32_t c = crc32(b);
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(c >> (8 * i)));
    return b;
}

fs::path scratch_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("eddynet_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// Exact integer point-in-polygon: even-odd crossing test plus an on-edge test.
bool on_segment(long px, long py, long x0, long y0, long x1, long y1) {
    const long cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
    return cross == 0 && px >= std::min(x0, x1) && px <= std::max(x0, x1) && py >= std::min(y0, y1) &&
           py <= std::max(y0, y1);
}

bool pnpoly(long px, long py, const std::vector<LatticePoint>& v) {
    bool inside = false;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        const long xi = v[i].col, yi = v[i].row, xj = v[j].col, yj = v[j].row;
        if (on_segment(px, py, xi, yi, xj, yj)) return true;
        if ((yi > py) != (yj > py)) {
            // px < xi + (xj - xi) (py - yi) / (yj - yi), without division
            const long lhs = (px - xi) * (yj - yi);
            const long rhs = (xj - xi) * (py - yi);
            if (yj - yi > 0 ? lhs < rhs : lhs > rhs) inside = !inside;
        }
    }
    return inside;
}

EddyContour polygon(Label label, const std::vector<LatticePoint>& pts, const GridGeometry& g) {
    EddyContour c;
    c.label = label;
    for (const auto& p : pts) c.vertices.emplace_back(g.lon0 + p.col * g.resolution, g.lat0 + p.row * g.resolution);
    return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Grid files

TEST(GridIo, RoundTripIsBitExact) {
    SshGrid g = small_grid();
    g.values.values[1] = static_cast<float>(g.fill_value);
    const auto bytes = encode_grid(g);
    const SshGrid back = decode_grid(bytes);
    EXPECT_EQ(back, g);
    EXPECT_EQ(encode_grid(back), bytes);
    const auto d = scratch_dir("grid");
    save_grid(g, d / "g.sshg");
    EXPECT_EQ(load_ssh_grid(d / "g.sshg"), g);
}

TEST(GridIo, KnownBytesParse) {
    ByteWriter w;
    w.magic("SSHG");
    w.u32(1);
    w.u32(2);
    w.u32(2);
    w.f64(-40.0);
    w.f64(10.0);
    w.f64(0.25);
    w.f64(-2147483647.0);
    for (float v : {0.1f, -0.2f, 0.3f, 0.4f}) w.f32(v);
    w.seal();
    EXPECT_EQ(decode_grid(w.buffer()), small_grid());
    EXPECT_EQ(encode_grid(small_grid()), w.buffer());
}

TEST(GridIo, CorruptionCodes) {
    const auto good = encode_grid(small_grid());
    auto b = good;
    b[1] = 'x';
    EXPECT_EQ(error_of([&] { decode_grid(b); }), FormatError::bad_magic);
    b = good;
    b[4] = 2;
    EXPECT_EQ(error_of([&] { decode_grid(reseal(b)); }), FormatError::unsupported_version);
    EXPECT_EQ(error_of([&] { decode_grid(std::vector<std::uint8_t>(good.begin(), good.begin() + 6)); }),
              FormatError::truncated);
    // Drop one value and reseal: the payload is shorter than rows x cols.
    b = good;
    b.erase(b.end() - 8, b.end() - 4);
    EXPECT_EQ(error_of([&] { decode_grid(reseal(b)); }), FormatError::truncated);
    b = good;
    b[b.size() - 6] ^= 1;
    EXPECT_EQ(error_of([&] { decode_grid(b); }), FormatError::checksum_mismatch);
    b = good;
    b.insert(b.end() - 4, {0, 0, 0, 0});
    EXPECT_EQ(error_of([&] { decode_grid(reseal(b)); }), FormatError::shape_mismatch);
    SshGrid nan = small_grid();
    nan.values.values[0] = NAN;
    EXPECT_EQ(error_of([&] { decode_grid(encode_grid(nan)); }), FormatError::invalid_value);
    EXPECT_EQ(error_of([&] { load_ssh_grid("/nonexistent/grid.sshg"); }), FormatError::io_error);
}

TEST(MaskIo, RoundTripAndErrors) {
    SegmentationMask m(2, 3);
    m.values = {0, 1, 2, 2, 1, 0};
    const auto bytes = encode_mask(m);
    EXPECT_EQ(decode_mask(bytes), m);
    auto b = bytes;
    b.back() = 7;
    EXPECT_EQ(error_of([&] { decode_mask(b); }), FormatError::invalid_value);
    EXPECT_EQ(error_of([&] { decode_mask(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1)); }),
              FormatError::truncated);
    b = bytes;
    b[0] = 'N';
    EXPECT_EQ(error_of([&] { decode_mask(b); }), FormatError::bad_magic);
}

TEST(Contours, ParseFormatRoundTrip) {
    const std::string text = "# comment\n1;10.5,-40;11,-40;11,-39.5\n\n2;0,0;1,0;1,1;0,1\n";
    const auto set = parse_contours(text);
    ASSERT_EQ(set.size(), 2u);
    EXPECT_EQ(set[0].label, kAnticyclonic);
    EXPECT_EQ(set[1].vertices.size(), 4u);
    EXPECT_EQ(set[0].vertices[0], (std::pair<double, double>{10.5, -40.0}));
    const auto again = parse_contours(format_contours(set));
    ASSERT_EQ(again.size(), set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        EXPECT_EQ(again[i].label, set[i].label);
        EXPECT_EQ(again[i].vertices, set[i].vertices);
    }
    EXPECT_EQ(error_of([] { parse_contours("3;0,0;1,0;1,1\n"); }), FormatError::malformed);
    EXPECT_EQ(error_of([] { parse_contours("1;0,0;1,0\n"); }), FormatError::malformed);
    EXPECT_EQ(error_of([] { parse_contours("1;0,0;1,x;1,1\n"); }), FormatError::malformed);
}

TEST(Ppm, PaletteIsExact) {
    SegmentationMask m(1, 3);
    m.values = {0, 1, 2};
    const auto img = encode_ppm(m);
    const std::string header = "P6\n3 1\n255\n";
    ASSERT_EQ(img.size(), header.size() + 9);
    EXPECT_EQ(std::string(img.begin(), img.begin() + header.size()), header);
    const std::vector<std::uint8_t> px(img.begin() + header.size(), img.end());
    EXPECT_EQ(px, (std::vector<std::uint8_t>{0, 0, 255, 0, 160, 0, 150, 75, 0}));
}

// ---------------------------------------------------------------------------
// Rasterizer

TEST(Raster, AxisAlignedSquare) {
    const GridGeometry g{10, 10, -40.0, 10.0, 0.25};
    const auto r = rasterize_contours({polygon(kAnticyclonic, {{2, 2}, {5, 2}, {5, 5}, {2, 5}}, g)}, g);
    EXPECT_TRUE(r.warnings.empty());
    std::size_t count = 0;
    for (std::size_t row = 0; row < 10; ++row)
        for (std::size_t col = 0; col < 10; ++col) {
            const bool in = row >= 2 && row <= 5 && col >= 2 && col <= 5;
            EXPECT_EQ(r.mask.at(row, col), in ? 1 : 0);
            count += r.mask.at(row, col) != 0;
        }
    EXPECT_EQ(count, 16u);
}

TEST(Raster, EmptySetGivesZeroMask) {
    const GridGeometry g{7, 9, 0.0, 0.0, 0.25};
    const auto r = rasterize_contours({}, g);
    EXPECT_EQ(r.mask, SegmentationMask(7, 9));
}

TEST(Raster, TriangleMatchesPointInPolygon) {
    const GridGeometry g{16, 16, 0.0, 0.0, 0.25};
    const std::vector<LatticePoint> tri{{1, 2}, {14, 5}, {6, 13}};
    const auto r = rasterize_contours({polygon(kCyclonic, tri, g)}, g);
    for (long row = 0; row < 16; ++row)
        for (long col = 0; col < 16; ++col)
            EXPECT_EQ(r.mask.at(row, col), pnpoly(col, row, tri) ? 2 : 0) << row << "," << col;
}

TEST(Raster, RandomPolygonsMatchPointInPolygon) {
    const GridGeometry g{24, 20, -12.5, 33.0, 0.25};
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> nv(3, 9);
    std::uniform_int_distribution<long> cx(-4, 23), cy(-4, 27);
    std::size_t mismatches = 0;
    for (int t = 0; t < 200; ++t) {
        std::vector<LatticePoint> pts(static_cast<std::size_t>(nv(rng)));
        for (auto& p : pts) p = {cx(rng), cy(rng)};
        const auto r = rasterize_contours({polygon(kAnticyclonic, pts, g)}, g);
        for (long row = 0; row < 24; ++row)
            for (long col = 0; col < 20; ++col)
                mismatches += (r.mask.at(row, col) == 1) != pnpoly(col, row, pts);
    }
    EXPECT_EQ(mismatches, 0u);
}

TEST(Raster, LastPolygonWinsAndWarns) {
    const GridGeometry g{10, 10, 0.0, 0.0, 1.0};
    const auto r = rasterize_contours(
        {polygon(kAnticyclonic, {{0, 0}, {5, 0}, {5, 5}, {0, 5}}, g), polygon(kCyclonic, {{3, 3}, {8, 3}, {8, 8}, {3, 8}}, g)},
        g);
    EXPECT_EQ(r.mask.at(4, 4), 2);
    EXPECT_EQ(r.mask.at(1, 1), 1);
    EXPECT_FALSE(r.warnings.empty());
    const auto out = rasterize_contours({polygon(kCyclonic, {{-3, -3}, {2, -3}, {2, 2}}, g)}, g);
    EXPECT_FALSE(out.warnings.empty());
}

// ---------------------------------------------------------------------------
// Sanitizing, patches, encoding

TEST(Sanitize, ReplacesExactlyTheFillCells) {
    SshGrid g = small_grid();
    const float fill = static_cast<float>(g.fill_value);
    EXPECT_EQ(sanitize(g), g);
    g.values.values = {fill, 0.5f, fill, -0.25f};
    const auto s = sanitize(g);
    EXPECT_EQ(s.values.values, (std::vector<float>{0.0f, 0.5f, 0.0f, -0.25f}));
    g.values.values.assign(4, fill);
    EXPECT_EQ(sanitize(g).values.values, std::vector<float>(4, 0.0f));
}

TEST(Patches, SinglePossiblePatch) {
    SshGrid g;
    g.values = Field2D<float>(128, 128, 0.5f);
    SegmentationMask m(128, 128, 1);
    Rng rng(1);
    const auto p = sample_patch(g, m, rng, 128, "g");
    EXPECT_EQ(p.provenance.row, 0u);
    EXPECT_EQ(p.provenance.col, 0u);
    EXPECT_EQ(p.ssh, g.values);
    EXPECT_THROW(sample_patch(g, m, rng, 129), ShapeError);
}

TEST(Patches, ValuesComeFromTheOffset) {
    SshGrid g;
    g.values = Field2D<float>(40, 50);
    std::iota(g.values.values.begin(), g.values.values.end(), 0.0f);
    g.values.at(3, 3) = static_cast<float>(g.fill_value);
    SegmentationMask m(40, 50);
    for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = static_cast<std::uint8_t>(i % 3);
    Rng a(7), b(7);
    for (int t = 0; t < 20; ++t) {
        const auto p = sample_patch(g, m, a, 16);
        const auto q = sample_patch(g, m, b, 16);
        EXPECT_EQ(p.provenance.row, q.provenance.row);
        for (std::size_t r = 0; r < 16; ++r)
            for (std::size_t c = 0; c < 16; ++c) {
                const float v = g.values.at(p.provenance.row + r, p.provenance.col + c);
                EXPECT_EQ(p.ssh.at(r, c), g.is_fill(v) ? 0.0f : v);
                EXPECT_EQ(p.mask.at(r, c), m.at(p.provenance.row + r, p.provenance.col + c));
            }
    }
}

TEST(Encoding, OneHotAndArgmax) {
    SegmentationMask m(2, 2);
    m.values = {0, 1, 2, 1};
    const Tensor t = one_hot(m);
    EXPECT_EQ(t(0, 0, 0, 0), 1.0f);
    EXPECT_EQ(t(0, 1, 0, 0), 0.0f);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(t.plane(0, 0)[i] + t.plane(0, 1)[i] + t.plane(0, 2)[i], 1.0f);
    EXPECT_EQ(argmax_labels(t).front(), m);
}

TEST(Encoding, MakeBatch) {
    std::vector<PatchPair> items(3);
    for (std::size_t k = 0; k < 3; ++k) {
        items[k].ssh = Field2D<float>(2, 2, float(k));
        items[k].mask = SegmentationMask(2, 2, static_cast<std::uint8_t>(k));
    }
    const std::vector<std::size_t> idx{2, 0};
    const auto b = make_batch(items, idx);
    EXPECT_EQ(b.input.shape(), (Shape4{2, 1, 2, 2}));
    EXPECT_EQ(b.input(0, 0, 1, 1), 2.0f);
    EXPECT_EQ(b.target(0, 2, 0, 0), 1.0f);
    EXPECT_EQ(b.target(1, 0, 0, 0), 1.0f);
}

TEST(Split, EightyTwentyOfFiftyOneHundred) {
    std::vector<int> items(5100);
    std::iota(items.begin(), items.end(), 0);
    const auto [tr, va] = split_train_val(items, 0.8, 3);
    EXPECT_EQ(tr.size(), 4080u);
    EXPECT_EQ(va.size(), 1020u);
    std::vector<int> all = tr;
    all.insert(all.end(), va.begin(), va.end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, items);
    EXPECT_EQ(split_train_val(items, 0.8, 3), split_train_val(items, 0.8, 3));
    EXPECT_NE(split_train_val(items, 0.8, 3).first, split_train_val(items, 0.8, 4).first);
}

// ---------------------------------------------------------------------------
// Synthetic scenes

TEST(Synth, NoEddiesIsPureNoise) {
    SynthConfig c;
    c.n_eddies = 0;
    Rng rng(1);
    const auto s = synth_scene(c, rng);
    EXPECT_EQ(s.mask, SegmentationMask(64, 64));
    double sum = 0.0, ss = 0.0;
    for (float v : s.grid.values.values) sum += v;
    const double mean = sum / 4096.0;
    for (float v : s.grid.values.values) ss += (v - mean) * (v - mean);
    EXPECT_NEAR(std::sqrt(ss / 4096.0), c.noise_sigma, 0.01);
}

TEST(Synth, SingleBumpRegion) {
    SynthConfig c;
    c.n_eddies = 1;
    c.noise_sigma = 0.0;
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
        const auto s = synth_scene(c, rng);
        const auto& e = s.eddies.front();
        const std::uint8_t label = e.amplitude > 0 ? 1 : 2;
        // Closed form: labeled where exp(-d^2 / 2r^2) > 1/2.
        std::size_t arg = 0;
        for (std::size_t i = 0; i < s.grid.values.size(); ++i) {
            const double r = double(i / 64), col = double(i % 64);
            const double d2 = (r - e.row) * (r - e.row) + (col - e.col) * (col - e.col);
            EXPECT_EQ(s.mask.values[i], d2 < 2.0 * e.radius * e.radius * std::log(2.0) ? label : 0);
            if (std::abs(s.grid.values.values[i]) > std::abs(s.grid.values.values[arg])) arg = i;
        }
        // One 4-connected region, containing the extremum.
        ASSERT_EQ(s.mask.values[arg], label);
        std::vector<bool> seen(4096, false);
        std::queue<std::size_t> q;
        q.push(arg);
        seen[arg] = true;
        std::size_t reached = 0;
        while (!q.empty()) {
            const std::size_t i = q.front();
            q.pop();
            ++reached;
            const std::size_t r = i / 64, col = i % 64;
            const std::size_t nb[4] = {r > 0 ? i - 64 : i, r < 63 ? i + 64 : i, col > 0 ? i - 1 : i, col < 63 ? i + 1 : i};
            for (std::size_t j : nb)
                if (!seen[j] && s.mask.values[j] == label) {
                    seen[j] = true;
                    q.push(j);
                }
        }
        EXPECT_EQ(reached, static_cast<std::size_t>(std::count(s.mask.values.begin(), s.mask.values.end(), label)));
    }
}

TEST(Synth, SeedReproducibleAndSeparated) {
    SynthConfig c;
    Rng a(9), b(9);
    const auto s = synth_scene(c, a);
    const auto t = synth_scene(c, b);
    EXPECT_EQ(s.grid, t.grid);
    EXPECT_EQ(s.mask, t.mask);
    for (std::size_t i = 0; i < s.eddies.size(); ++i)
        for (std::size_t j = i + 1; j < s.eddies.size(); ++j) {
            const auto& p = s.eddies[i];
            const auto& q = s.eddies[j];
            EXPECT_GE(std::hypot(p.row - q.row, p.col - q.col), c.separation * (p.radius + q.radius));
        }
}

TEST(Synth, InfeasiblePackingFails) {
    SynthConfig c;
    c.grid_size = 16;
    c.n_eddies = 30;
    Rng rng(1);
    EXPECT_THROW(synth_scene(c, rng), std::runtime_error);
}

TEST(Synth, ContoursRasterizeNearTheMask) {
    SynthConfig c;
    c.noise_sigma = 0.0;
    Rng rng(11);
    const auto s = synth_scene(c, rng);
    const auto r = rasterize_contours(scene_contours(s), s.grid.geometry());
    std::size_t agree = 0;
    for (std::size_t i = 0; i < r.mask.size(); ++i) agree += r.mask.values[i] == s.mask.values[i];
    EXPECT_GT(double(agree) / r.mask.size(), 0.97);
}

TEST(Dataset, LoadsMasksOrRasterizesContours) {
    const auto d = scratch_dir("dataset");
    SynthConfig c;
    Rng rng(3);
    const auto a = synth_scene(c, rng);
    const auto b = synth_scene(c, rng);
    save_grid(a.grid, d / "a.sshg");
    save_mask(a.mask, d / "a.mask");
    save_grid(b.grid, d / "b.sshg");
    save_contours(scene_contours(b), d / "b.contours");
    const std::string manifest = "a\n# skipped\nb\n";
    write_file(d / "manifest.txt", std::vector<std::uint8_t>(manifest.begin(), manifest.end()));
    const auto scenes = load_dataset(d);
    ASSERT_EQ(scenes.size(), 2u);
    EXPECT_EQ(scenes[0].mask, a.mask);
    EXPECT_EQ(scenes[1].mask, rasterize_contours(scene_contours(b), b.grid.geometry()).mask);
    EXPECT_THROW(load_dataset(d / "missing"), std::runtime_error);
}
