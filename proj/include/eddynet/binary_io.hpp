#ifndef EDDYNET_BINARY_IO_HPP
#define EDDYNET_BINARY_IO_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eddynet {

/// Distinct failure causes of the binary file readers.
enum class FormatError {
    io_error,
    bad_magic,
    unsupported_version,
    truncated,
    checksum_mismatch,
    malformed,
    invalid_value,
    layer_mismatch,
    shape_mismatch,
};

std::string to_string(FormatError e);

class FormatException : public std::runtime_error {
public:
    FormatException(FormatError code, const std::string& what)
        : std::runtime_error(to_string(code) + ": " + what), code_(code) {}
    FormatError code() const { return code_; }

private:
    FormatError code_;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Little-endian serializer.
class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        u32(u);
    }
    void f64(double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        u64(u);
    }
    void magic(std::string_view m) { bytes(m.data(), m.size()); }
    /// Appends the CRC-32 of everything written so far.
    void seal() { u32(crc32(buf_)); }

    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader; running past the end throws FormatError::truncated.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }

    void need(std::size_t n) const {
        if (remaining() < n) {
            throw FormatException(FormatError::truncated, "needed " + std::to_string(n) + " bytes at offset " +
                                                              std::to_string(pos_) + ", " +
                                                              std::to_string(remaining()) + " left");
        }
    }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8() { return bytes(1)[0]; }
    std::uint32_t u32() {
        auto b = bytes(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        auto b = bytes(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
        return v;
    }
    float f32() {
        const std::uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    double f64() {
        const std::uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    bool magic(std::string_view m) {
        if (remaining() < m.size()) return false;
        auto b = bytes(m.size());
        return std::memcmp(b.data(), m.data(), m.size()) == 0;
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

/// Splits a sealed buffer into (body, stored crc) after checking the magic and version
/// header. Throws bad_magic / unsupported_version / truncated.
struct SealedPayload {
    std::span<const std::uint8_t> body;
    std::uint32_t stored_crc = 0;
};
SealedPayload open_sealed(std::span<const std::uint8_t> bytes, std::string_view magic,
                          std::uint32_t expected_version, const std::string& what);
/// Throws checksum_mismatch when the body does not hash to the stored CRC.
void verify_seal(const SealedPayload& payload, const std::string& what);

}  // namespace eddynet

#endif  // EDDYNET_BINARY_IO_HPP
