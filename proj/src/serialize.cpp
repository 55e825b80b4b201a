#include "s2rl/serialize.hpp"

#include <cstring>
#include <fstream>

#include "s2rl/errors.hpp"

namespace s2rl::datastore {

namespace {

constexpr char kMagic[4] = {'S', '2', 'R', 'L'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

double get_f64(const unsigned char* p) {
    std::uint64_t bits = get_u64(p);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

std::uint64_t fnv1a(const unsigned char* data, std::size_t len) {
    std::uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 1099511628211ULL;
    }
    return h;
}

const Array& Blob::get(const std::string& name) const {
    for (const auto& [n, a] : arrays) {
        if (n == name) return a;
    }
    throw IoError("container has no array named '" + name + "'");
}

void write_container(const std::string& path, const Blob& blob) {
    nlohmann::json manifest;
    manifest["meta"] = blob.meta;
    manifest["arrays"] = nlohmann::json::array();
    for (const auto& [name, arr] : blob.arrays) {
        manifest["arrays"].push_back({{"name", name}, {"shape", arr.shape()}});
    }
    std::string mtext = manifest.dump();

    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kFormatVersion);
    put_u64(buf, mtext.size());
    buf += mtext;
    for (const auto& [name, arr] : blob.arrays) {
        for (std::size_t i = 0; i < arr.numel(); ++i) put_f64(buf, arr.at(i));
    }
    std::uint64_t sum = fnv1a(reinterpret_cast<const unsigned char*>(buf.data()), buf.size());
    put_u64(buf, sum);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("write failed on '" + path + "'");
}

Blob read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    const std::size_t n = buf.size();

    if (n < 16) throw TruncatedError("'" + path + "': too short for a container header");
    if (std::memcmp(p, kMagic, 4) != 0) throw IoError("'" + path + "': not a container file");
    std::uint32_t version = get_u32(p + 4);
    if (version != kFormatVersion) {
        throw VersionError("'" + path + "': format version " + std::to_string(version) +
                           ", expected " + std::to_string(kFormatVersion));
    }
    std::uint64_t mlen = get_u64(p + 8);
    if (16 + mlen + 8 > n) throw TruncatedError("'" + path + "': manifest overruns the file");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(buf.substr(16, mlen));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("'" + path + "': bad manifest JSON: " + e.what());
    }

    std::size_t payload_doubles = 0;
    std::vector<std::pair<std::string, std::vector<int>>> dir;
    for (const auto& entry : manifest.at("arrays")) {
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        std::size_t count = 1;
        for (int d : shape) count *= static_cast<std::size_t>(d);
        payload_doubles += count;
        dir.emplace_back(entry.at("name").get<std::string>(), std::move(shape));
    }
    std::size_t need = 16 + mlen + payload_doubles * 8 + 8;
    if (n < need) throw TruncatedError("'" + path + "': payload truncated");
    if (n != need) throw IoError("'" + path + "': trailing bytes after checksum");

    std::uint64_t stored = get_u64(p + n - 8);
    std::uint64_t actual = fnv1a(p, n - 8);
    if (stored != actual) throw ChecksumError("'" + path + "': checksum mismatch");

    Blob blob;
    blob.meta = manifest.value("meta", nlohmann::json::object());
    std::size_t off = 16 + mlen;
    for (auto& [name, shape] : dir) {
        Array arr(shape);
        for (std::size_t i = 0; i < arr.numel(); ++i) {
            arr.at(i) = get_f64(p + off);
            off += 8;
        }
        blob.arrays.emplace_back(std::move(name), std::move(arr));
    }
    return blob;
}

}  // namespace s2rl::datastore
