#include "pspread/sketch_store.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include <fmt/format.h>
#include <json.hpp>
#include <zlib.h>

#include "pspread/errors.hpp"

namespace pspread {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'P', 'S', 'R', 'S'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t value, int bytes) {
    for (int i = 0; i < bytes; ++i) {
        out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t offset, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
    }
    return v;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> data) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large payloads in chunks
    constexpr std::size_t kChunk = 1u << 30;
    for (std::size_t pos = 0; pos < data.size(); pos += kChunk) {
        const auto n = static_cast<uInt>(std::min(kChunk, data.size() - pos));
        crc = crc32(crc, data.data() + pos, n);
    }
    return static_cast<std::uint32_t>(crc);
}

SnapshotHeader parse_header(std::span<const std::uint8_t> bytes, std::uint64_t& payload_len) {
    if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw SnapshotError(SnapshotErrorCode::bad_magic, "not a snapshot file (bad magic)");
    }
    if (bytes.size() < 6) {
        throw SnapshotError(SnapshotErrorCode::truncated, "snapshot truncated inside the header");
    }
    const auto version = static_cast<std::uint16_t>(get_le(bytes, 4, 2));
    if (version != kSnapshotVersion) {
        throw SnapshotError(SnapshotErrorCode::version_mismatch,
                            fmt::format("snapshot version {} (expected {})", version, kSnapshotVersion));
    }
    if (bytes.size() < kSnapshotHeaderBytes) {
        throw SnapshotError(SnapshotErrorCode::truncated, "snapshot truncated inside the header");
    }
    SnapshotHeader h{};
    const auto kind = bytes[6];
    if (kind > 1) {
        throw SnapshotError(SnapshotErrorCode::malformed, fmt::format("unknown snapshot kind {}", kind));
    }
    h.kind = static_cast<SnapshotKind>(kind);
    h.register_width = bytes[7];
    if (h.register_width < 1 || h.register_width > 8) {
        throw SnapshotError(SnapshotErrorCode::malformed,
                            fmt::format("register width {} outside [1, 8]", h.register_width));
    }
    h.register_count = get_le(bytes, 8, 8);
    h.period_id = get_le(bytes, 16, 8);
    h.seed_digest = get_le(bytes, 24, 8);
    payload_len = get_le(bytes, 32, 8);
    if (h.register_count > (std::uint64_t{1} << 56) ||
        payload_len != packed_size(h.register_count, h.register_width)) {
        throw SnapshotError(SnapshotErrorCode::malformed,
                            fmt::format("payload length {} does not fit m = {}, h = {}", payload_len,
                                        h.register_count, h.register_width));
    }
    return h;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path, std::size_t limit) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw SnapshotError(SnapshotErrorCode::io, fmt::format("cannot open {}", path.string()));
    }
    std::vector<std::uint8_t> bytes;
    if (limit == 0) {
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    } else {
        bytes.resize(limit);
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(limit));
        bytes.resize(static_cast<std::size_t>(in.gcount()));
    }
    return bytes;
}

}  // namespace

const char* to_string(SnapshotErrorCode code) noexcept {
    switch (code) {
    case SnapshotErrorCode::io: return "io";
    case SnapshotErrorCode::bad_magic: return "bad-magic";
    case SnapshotErrorCode::version_mismatch: return "version-mismatch";
    case SnapshotErrorCode::truncated: return "truncated";
    case SnapshotErrorCode::checksum_mismatch: return "checksum-mismatch";
    case SnapshotErrorCode::malformed: return "malformed";
    }
    return "unknown";
}

std::size_t packed_size(std::uint64_t register_count, unsigned register_width) noexcept {
    return static_cast<std::size_t>((register_count * register_width + 7) / 8);
}

std::vector<std::uint8_t> pack_registers(std::span<const std::uint8_t> registers, unsigned register_width) {
    if (register_width < 1 || register_width > 8) {
        throw ParameterError(fmt::format("register width {} outside [1, 8]", register_width));
    }
    const unsigned cap = register_cap(register_width);
    std::vector<std::uint8_t> out(packed_size(registers.size(), register_width), 0);
    std::uint64_t bit = 0;
    for (const auto r : registers) {
        if (r > cap) {
            throw ParameterError(fmt::format("register value {} exceeds {}-bit cap", r, register_width));
        }
        // an h-bit field spans at most two bytes
        const std::uint64_t byte = bit / 8;
        const unsigned shift = bit % 8;
        const unsigned v = static_cast<unsigned>(r) << shift;
        out[byte] |= static_cast<std::uint8_t>(v);
        if (shift + register_width > 8) {
            out[byte + 1] |= static_cast<std::uint8_t>(v >> 8);
        }
        bit += register_width;
    }
    return out;
}

std::vector<std::uint8_t> unpack_registers(std::span<const std::uint8_t> payload, std::uint64_t register_count,
                                           unsigned register_width) {
    if (register_width < 1 || register_width > 8) {
        throw ParameterError(fmt::format("register width {} outside [1, 8]", register_width));
    }
    if (payload.size() != packed_size(register_count, register_width)) {
        throw ParameterError(fmt::format("payload of {} bytes cannot hold {} registers of {} bits", payload.size(),
                                         register_count, register_width));
    }
    const unsigned mask = register_cap(register_width);
    std::vector<std::uint8_t> out(register_count);
    std::uint64_t bit = 0;
    for (auto& r : out) {
        const std::uint64_t byte = bit / 8;
        const unsigned shift = bit % 8;
        unsigned v = payload[byte] >> shift;
        if (shift + register_width > 8) {
            v |= static_cast<unsigned>(payload[byte + 1]) << (8 - shift);
        }
        r = static_cast<std::uint8_t>(v & mask);
        bit += register_width;
    }
    return out;
}

PhysicalRegisterArray Snapshot::to_array() const {
    if (kind != SnapshotKind::physical_array) {
        throw ParameterError("snapshot holds a dedicated sketch, not a physical array");
    }
    return PhysicalRegisterArray::from_registers(registers, register_width, period_id);
}

HllSketch Snapshot::to_sketch() const {
    if (kind != SnapshotKind::sketch) {
        throw ParameterError("snapshot holds a physical array, not a dedicated sketch");
    }
    return HllSketch::from_registers(registers, register_width);
}

std::vector<std::uint8_t> encode_snapshot(const Snapshot& snapshot) {
    const auto payload = pack_registers(snapshot.registers, snapshot.register_width);
    std::vector<std::uint8_t> out;
    out.reserve(kSnapshotHeaderBytes + payload.size() + kSnapshotTrailerBytes);
    for (const auto c : kMagic) {
        out.push_back(c);
    }
    put_le(out, kSnapshotVersion, 2);
    put_le(out, static_cast<std::uint8_t>(snapshot.kind), 1);
    put_le(out, snapshot.register_width, 1);
    put_le(out, snapshot.registers.size(), 8);
    put_le(out, snapshot.period_id, 8);
    put_le(out, snapshot.seed_digest, 8);
    put_le(out, payload.size(), 8);
    out.insert(out.end(), payload.begin(), payload.end());
    put_le(out, crc32_of(payload), 4);
    return out;
}

Snapshot decode_snapshot(std::span<const std::uint8_t> bytes) {
    std::uint64_t payload_len = 0;
    const SnapshotHeader h = parse_header(bytes, payload_len);
    const std::uint64_t expected = kSnapshotHeaderBytes + payload_len + kSnapshotTrailerBytes;
    if (bytes.size() < expected) {
        throw SnapshotError(SnapshotErrorCode::truncated,
                            fmt::format("snapshot has {} bytes, header declares {}", bytes.size(), expected));
    }
    if (bytes.size() > expected) {
        throw SnapshotError(SnapshotErrorCode::malformed,
                            fmt::format("{} trailing bytes after the checksum", bytes.size() - expected));
    }
    const auto payload = bytes.subspan(kSnapshotHeaderBytes, payload_len);
    const auto stored = static_cast<std::uint32_t>(get_le(bytes, kSnapshotHeaderBytes + payload_len, 4));
    const auto actual = crc32_of(payload);
    if (stored != actual) {
        throw SnapshotError(SnapshotErrorCode::checksum_mismatch,
                            fmt::format("payload CRC {:08x} does not match stored {:08x}", actual, stored));
    }
    Snapshot out;
    out.kind = h.kind;
    out.register_width = h.register_width;
    out.period_id = h.period_id;
    out.seed_digest = h.seed_digest;
    out.registers = unpack_registers(payload, h.register_count, h.register_width);
    return out;
}

SnapshotHeader read_snapshot_header(const std::filesystem::path& path) {
    const auto bytes = read_file(path, kSnapshotHeaderBytes);
    std::uint64_t payload_len = 0;
    return parse_header(bytes, payload_len);
}

namespace {

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw SnapshotError(SnapshotErrorCode::io, fmt::format("cannot write {}", path.string()));
    }
}

}  // namespace

void save(const PhysicalRegisterArray& array, std::uint64_t seed_digest, const std::filesystem::path& path) {
    Snapshot s;
    s.kind = SnapshotKind::physical_array;
    s.register_width = array.register_width();
    s.period_id = array.period_id();
    s.seed_digest = seed_digest;
    s.registers.assign(array.registers().begin(), array.registers().end());
    write_bytes(encode_snapshot(s), path.string());
}

void save(const HllSketch& sketch, std::uint64_t period_id, const std::filesystem::path& path) {
    Snapshot s;
    s.kind = SnapshotKind::sketch;
    s.register_width = sketch.register_width();
    s.period_id = period_id;
    s.registers.assign(sketch.registers().begin(), sketch.registers().end());
    write_bytes(encode_snapshot(s), path.string());
}

Snapshot load(const std::filesystem::path& path) {
    return decode_snapshot(read_file(path, 0));
}

Manifest manifest(std::span<const std::filesystem::path> paths) {
    if (paths.empty()) {
        throw ParameterError("manifest needs at least one snapshot");
    }
    std::vector<std::pair<std::uint64_t, std::filesystem::path>> entries;
    Manifest out;
    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const SnapshotHeader h = read_snapshot_header(paths[i]);
        if (i == 0) {
            out.kind = h.kind;
            out.register_count = h.register_count;
            out.register_width = h.register_width;
            out.seed_digest = h.seed_digest;
        } else if (h.kind != out.kind || h.register_count != out.register_count ||
                   h.register_width != out.register_width || h.seed_digest != out.seed_digest) {
            throw ParameterError(fmt::format("{} has (kind {}, m {}, h {}, digest {:016x}); expected ({}, {}, {}, {:016x})",
                                             paths[i].string(), static_cast<int>(h.kind), h.register_count, h.register_width,
                                             h.seed_digest, static_cast<int>(out.kind), out.register_count,
                                             out.register_width, out.seed_digest));
        }
        if (!seen.insert(h.period_id).second) {
            throw ParameterError(fmt::format("duplicate period id {} ({})", h.period_id, paths[i].string()));
        }
        entries.emplace_back(h.period_id, paths[i]);
    }
    std::sort(entries.begin(), entries.end());
    for (auto& [id, p] : entries) {
        out.period_ids.push_back(id);
        out.paths.push_back(std::move(p));
    }
    return out;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
    using nlohmann::json;
    const auto base = path.parent_path();
    json periods = json::array();
    for (std::size_t i = 0; i < m.periods(); ++i) {
        const auto rel = base.empty() ? m.paths[i] : m.paths[i].lexically_relative(base);
        periods.push_back({{"period_id", m.period_ids[i]}, {"path", rel.generic_string()}});
    }
    const json doc = {
        {"format", "pspread-manifest"},
        {"version", 1},
        {"kind", m.kind == SnapshotKind::physical_array ? "physical-array" : "sketch"},
        {"m", m.register_count},
        {"h", m.register_width},
        {"s", m.virtual_size},
        {"master_seed", m.master_seed},
        {"seed_digest", fmt::format("{:016x}", m.seed_digest)},
        {"flow", m.flow},
        {"periods", periods},
    };
    std::ofstream out(path, std::ios::trunc);
    out << doc.dump(2) << '\n';
    if (!out) {
        throw SnapshotError(SnapshotErrorCode::io, fmt::format("cannot write {}", path.string()));
    }
}

Manifest read_manifest(const std::filesystem::path& path) {
    using nlohmann::json;
    std::ifstream in(path);
    if (!in) {
        throw SnapshotError(SnapshotErrorCode::io, fmt::format("cannot open {}", path.string()));
    }
    json doc;
    try {
        doc = json::parse(in);
        if (doc.at("format") != "pspread-manifest" || doc.at("version") != 1) {
            throw ParameterError(fmt::format("{} is not a version-1 manifest", path.string()));
        }
        Manifest m;
        const std::string kind = doc.at("kind");
        if (kind != "physical-array" && kind != "sketch") {
            throw ParameterError(fmt::format("unknown manifest kind '{}'", kind));
        }
        m.kind = kind == "sketch" ? SnapshotKind::sketch : SnapshotKind::physical_array;
        m.register_count = doc.at("m");
        m.register_width = doc.at("h");
        m.virtual_size = doc.at("s");
        m.master_seed = doc.at("master_seed");
        m.seed_digest = std::stoull(doc.at("seed_digest").get<std::string>(), nullptr, 16);
        m.flow = doc.value("flow", std::string());
        const auto base = path.parent_path();
        std::set<std::uint64_t> seen;
        for (const auto& p : doc.at("periods")) {
            const std::uint64_t id = p.at("period_id");
            if (!seen.insert(id).second) {
                throw ParameterError(fmt::format("duplicate period id {} in {}", id, path.string()));
            }
            m.period_ids.push_back(id);
            const std::filesystem::path rel = p.at("path").get<std::string>();
            m.paths.push_back(rel.is_absolute() ? rel : base / rel);
        }
        if (!std::is_sorted(m.period_ids.begin(), m.period_ids.end())) {
            throw ParameterError(fmt::format("periods in {} are not in ascending order", path.string()));
        }
        return m;
    } catch (const json::exception& e) {
        throw ParameterError(fmt::format("malformed manifest {}: {}", path.string(), e.what()));
    } catch (const std::invalid_argument& e) {
        throw ParameterError(fmt::format("malformed manifest {}: {}", path.string(), e.what()));
    }
}

}  // namespace pspread
