#include "eddynet/grid_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace eddynet {

bool SshGrid::is_fill(float v) const {
    if (std::isnan(fill_value)) return std::isnan(v);
    return v == static_cast<float>(fill_value);
}

}  // namespace eddynet

namespace eddynet::data {

namespace {
constexpr std::string_view kGridMagic = "SSHG";
constexpr std::string_view kMaskMagic = "MASK";
}  // namespace

std::vector<std::uint8_t> encode_grid(const SshGrid& grid) {
    if (grid.values.values.size() != grid.values.rows * grid.values.cols) {
        throw ShapeError("encode_grid: payload does not match rows x cols");
    }
    ByteWriter w;
    w.magic(kGridMagic);
    w.u32(kGridFormatVersion);
    w.u32(static_cast<std::uint32_t>(grid.values.rows));
    w.u32(static_cast<std::uint32_t>(grid.values.cols));
    w.f64(grid.lat0);
    w.f64(grid.lon0);
    w.f64(grid.resolution);
    w.f64(grid.fill_value);
    for (float v : grid.values.values) w.f32(v);
    w.seal();
    return w.take();
}

SshGrid decode_grid(std::span<const std::uint8_t> bytes) {
    const SealedPayload sealed = open_sealed(bytes, kGridMagic, kGridFormatVersion, "grid file");
    ByteReader r(sealed.body);
    r.bytes(kGridMagic.size() + 4);
    SshGrid g;
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    g.lat0 = r.f64();
    g.lon0 = r.f64();
    g.resolution = r.f64();
    g.fill_value = r.f64();
    const std::uint64_t expected = static_cast<std::uint64_t>(rows) * cols * 4;
    if (r.remaining() < expected) {
        throw FormatException(FormatError::truncated, "grid file: " + std::to_string(rows) + "x" +
                                                          std::to_string(cols) + " grid needs " +
                                                          std::to_string(expected) + " payload bytes, found " +
                                                          std::to_string(r.remaining()));
    }
    if (r.remaining() > expected) {
        throw FormatException(FormatError::shape_mismatch, "grid file: " + std::to_string(r.remaining() - expected) +
                                                               " payload bytes beyond rows x cols");
    }
    g.values = Field2D<float>(rows, cols);
    for (auto& v : g.values.values) v = r.f32();
    verify_seal(sealed, "grid file");
    if (!(g.resolution > 0.0) || !std::isfinite(g.resolution)) {
        throw FormatException(FormatError::invalid_value, "grid file: resolution must be positive");
    }
    for (std::size_t i = 0; i < g.values.values.size(); ++i) {
        const float v = g.values.values[i];
        if (!std::isfinite(v) && !g.is_fill(v)) {
            throw FormatException(FormatError::invalid_value,
                                  "grid file: non-finite value at cell " + std::to_string(i));
        }
    }
    return g;
}

void save_grid(const SshGrid& grid, const std::filesystem::path& path) { write_file(path, encode_grid(grid)); }

SshGrid load_ssh_grid(const std::filesystem::path& path) { return decode_grid(read_file(path)); }

std::vector<std::uint8_t> encode_mask(const SegmentationMask& mask) {
    mask.validate();
    ByteWriter w;
    w.magic(kMaskMagic);
    w.u32(static_cast<std::uint32_t>(mask.rows));
    w.u32(static_cast<std::uint32_t>(mask.cols));
    w.bytes(mask.values.data(), mask.values.size());
    return w.take();
}

SegmentationMask decode_mask(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (bytes.size() < kMaskMagic.size()) throw FormatException(FormatError::truncated, "mask file: too short");
    if (!r.magic(kMaskMagic)) throw FormatException(FormatError::bad_magic, "mask file: expected magic \"MASK\"");
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    const std::uint64_t n = static_cast<std::uint64_t>(rows) * cols;
    if (r.remaining() < n) {
        throw FormatException(FormatError::truncated, "mask file: expected " + std::to_string(n) + " labels, found " +
                                                          std::to_string(r.remaining()));
    }
    if (r.remaining() > n) {
        throw FormatException(FormatError::shape_mismatch, "mask file: trailing bytes after rows x cols labels");
    }
    SegmentationMask m(rows, cols);
    auto payload = r.bytes(static_cast<std::size_t>(n));
    std::copy(payload.begin(), payload.end(), m.values.begin());
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatException(FormatError::invalid_value, std::string("mask file: ") + e.what());
    }
    return m;
}

void save_mask(const SegmentationMask& mask, const std::filesystem::path& path) {
    write_file(path, encode_mask(mask));
}

SegmentationMask load_mask(const std::filesystem::path& path) { return decode_mask(read_file(path)); }

EddyContourSet parse_contours(const std::string& text) {
    EddyContourSet out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& what) {
        throw FormatException(FormatError::malformed, "contour line " + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ';')) fields.push_back(f);
        if (fields.empty()) fail("empty record");
        EddyContour c;
        try {
            std::size_t used = 0;
            const int cls = std::stoi(fields[0], &used);
            if (cls != kAnticyclonic && cls != kCyclonic) fail("class must be 1 or 2, got " + fields[0]);
            c.label = static_cast<Label>(cls);
        } catch (const std::logic_error&) {
            fail("bad class id '" + fields[0] + "'");
        }
        for (std::size_t i = 1; i < fields.size(); ++i) {
            if (fields[i].find_first_not_of(" \t") == std::string::npos) continue;
            const auto comma = fields[i].find(',');
            if (comma == std::string::npos) fail("vertex '" + fields[i] + "' is not lon,lat");
            try {
                std::size_t u1 = 0, u2 = 0;
                const std::string a = fields[i].substr(0, comma), b = fields[i].substr(comma + 1);
                const double lon = std::stod(a, &u1);
                const double lat = std::stod(b, &u2);
                if (!std::isfinite(lon) || !std::isfinite(lat)) fail("non-finite vertex");
                c.vertices.emplace_back(lon, lat);
            } catch (const std::logic_error&) {
                fail("vertex '" + fields[i] + "' is not numeric");
            }
        }
        if (c.vertices.size() < 3) fail("polygon needs at least 3 vertices");
        out.push_back(std::move(c));
    }
    return out;
}

std::string format_contours(const EddyContourSet& contours) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& c : contours) {
        os << static_cast<int>(c.label);
        for (const auto& [lon, lat] : c.vertices) os << ';' << lon << ',' << lat;
        os << '\n';
    }
    return os.str();
}

EddyContourSet load_contours(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse_contours(std::string(bytes.begin(), bytes.end()));
}

void save_contours(const EddyContourSet& contours, const std::filesystem::path& path) {
    const std::string s = format_contours(contours);
    write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::vector<std::uint8_t> encode_ppm(const SegmentationMask& mask) {
    mask.validate();
    const std::string header = "P6\n" + std::to_string(mask.cols) + " " + std::to_string(mask.rows) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + mask.values.size() * 3);
    for (std::uint8_t l : mask.values) out.insert(out.end(), kPalette[l], kPalette[l] + 3);
    return out;
}

void save_ppm(const SegmentationMask& mask, const std::filesystem::path& path) { write_file(path, encode_ppm(mask)); }

}  // namespace eddynet::data
