#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pspread/hll.hpp"
#include "pspread/virtual_array.hpp"

namespace pspread {

// Snapshot layout, all integers little-endian:
//   "PSRS" | version u16 | kind u8 | h u8 | m u64 | period_id u64 |
//   seed digest u64 | payload length u64 | payload | CRC-32(payload) u32
// Register i occupies bits [i*h, i*h + h) of the payload, bit 0 being the
// least significant bit of byte 0.
inline constexpr std::uint16_t kSnapshotVersion = 1;
inline constexpr std::size_t kSnapshotHeaderBytes = 40;
inline constexpr std::size_t kSnapshotTrailerBytes = 4;

enum class SnapshotKind : std::uint8_t {
    physical_array = 0,
    sketch = 1,
};

enum class SnapshotErrorCode {
    io,
    bad_magic,
    version_mismatch,
    truncated,
    checksum_mismatch,
    malformed,
};

const char* to_string(SnapshotErrorCode code) noexcept;

class SnapshotError : public std::runtime_error {
public:
    SnapshotError(SnapshotErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    SnapshotErrorCode code() const noexcept { return code_; }

private:
    SnapshotErrorCode code_;
};

std::size_t packed_size(std::uint64_t register_count, unsigned register_width) noexcept;
std::vector<std::uint8_t> pack_registers(std::span<const std::uint8_t> registers, unsigned register_width);
std::vector<std::uint8_t> unpack_registers(std::span<const std::uint8_t> payload, std::uint64_t register_count,
                                           unsigned register_width);

struct Snapshot {
    SnapshotKind kind = SnapshotKind::physical_array;
    unsigned register_width = kDefaultRegisterWidth;
    std::uint64_t period_id = 0;
    std::uint64_t seed_digest = 0;
    std::vector<std::uint8_t> registers;

    PhysicalRegisterArray to_array() const;
    HllSketch to_sketch() const;
};

std::vector<std::uint8_t> encode_snapshot(const Snapshot& snapshot);
Snapshot decode_snapshot(std::span<const std::uint8_t> bytes);

// Header fields only, for manifest building without reading payloads.
struct SnapshotHeader {
    SnapshotKind kind;
    unsigned register_width;
    std::uint64_t register_count;
    std::uint64_t period_id;
    std::uint64_t seed_digest;
};

SnapshotHeader read_snapshot_header(const std::filesystem::path& path);

void save(const PhysicalRegisterArray& array, std::uint64_t seed_digest, const std::filesystem::path& path);
void save(const HllSketch& sketch, std::uint64_t period_id, const std::filesystem::path& path);
Snapshot load(const std::filesystem::path& path);

/// Ordered period list over snapshots that share (kind, m, h, seed digest).
/// Paths are stored relative to the manifest's directory when written.
struct Manifest {
    SnapshotKind kind = SnapshotKind::physical_array;
    std::uint64_t register_count = 0;
    unsigned register_width = kDefaultRegisterWidth;
    std::uint32_t virtual_size = 0;  // s; zero when unknown
    std::uint64_t master_seed = 0;
    std::uint64_t seed_digest = 0;
    std::string flow;  // owner of dedicated sketches; empty for physical arrays
    std::vector<std::uint64_t> period_ids;
    std::vector<std::filesystem::path> paths;

    std::size_t periods() const noexcept { return period_ids.size(); }
};

/// Reads each header, rejects mixed parameters and duplicate period ids, and
/// orders the entries by period id. Throws ParameterError.
Manifest manifest(std::span<const std::filesystem::path> paths);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
/// Relative snapshot paths resolve against the manifest's directory.
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace pspread
