#include "eddynet/binary_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

namespace eddynet {

std::string to_string(FormatError e) {
    switch (e) {
        case FormatError::io_error: return "io_error";
        case FormatError::bad_magic: return "bad_magic";
        case FormatError::unsupported_version: return "unsupported_version";
        case FormatError::truncated: return "truncated";
        case FormatError::checksum_mismatch: return "checksum_mismatch";
        case FormatError::malformed: return "malformed";
        case FormatError::invalid_value: return "invalid_value";
        case FormatError::layer_mismatch: return "layer_mismatch";
        case FormatError::shape_mismatch: return "shape_mismatch";
    }
    return "unknown";
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = ::crc32(crc, bytes.data() + off, chunk);
        off += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatException(FormatError::io_error, "cannot open " + path.string());
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw FormatException(FormatError::io_error, "read failed for " + path.string());
    return data;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatException(FormatError::io_error, "cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatException(FormatError::io_error, "write failed for " + path.string());
}

SealedPayload open_sealed(std::span<const std::uint8_t> bytes, std::string_view magic,
                          std::uint32_t expected_version, const std::string& what) {
    ByteReader head(bytes);
    if (bytes.size() < magic.size()) {
        throw FormatException(FormatError::truncated, what + ": file shorter than its magic");
    }
    if (!head.magic(magic)) {
        throw FormatException(FormatError::bad_magic, what + ": expected magic \"" + std::string(magic) + "\"");
    }
    const std::uint32_t version = head.u32();
    if (version != expected_version) {
        throw FormatException(FormatError::unsupported_version,
                              what + ": version " + std::to_string(version) + ", expected " +
                                  std::to_string(expected_version));
    }
    if (bytes.size() < head.position() + 4) {
        throw FormatException(FormatError::truncated, what + ": missing checksum");
    }
    SealedPayload p;
    p.body = bytes.first(bytes.size() - 4);
    ByteReader tail(bytes.last(4));
    p.stored_crc = tail.u32();
    return p;
}

void verify_seal(const SealedPayload& payload, const std::string& what) {
    if (crc32(payload.body) != payload.stored_crc) {
        throw FormatException(FormatError::checksum_mismatch, what + ": CRC-32 does not match payload");
    }
}

}  // namespace eddynet
