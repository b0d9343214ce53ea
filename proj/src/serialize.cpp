#include "h2t/serialize.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "h2t/errors.hpp"

namespace h2t {

uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for hashing");
    uint64_t h = kFnvOffset;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
    }
    return h;
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

const Tensor& NamedTensors::get(const std::string& name) const {
    for (const auto& [n, t] : entries) {
        if (n == name) return t;
    }
    throw IoError("container has no tensor named '" + name + "'");
}

bool NamedTensors::contains(const std::string& name) const {
    for (const auto& [n, t] : entries) {
        if (n == name) return true;
    }
    return false;
}

namespace {

// Little-endian writers; portable regardless of host endianness.
void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n, const char* what) {
        if (pos + n > buf.size()) {
            throw TruncatedFileError(std::string("container ends inside ") + what);
        }
    }
    uint64_t get_u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + static_cast<size_t>(i)]))
                 << (8 * i);
        }
        pos += 8;
        return v;
    }
    float get_f32(const char* what) {
        need(4, what);
        uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) {
            bits |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + static_cast<size_t>(i)]))
                    << (8 * i);
        }
        pos += 4;
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string get_bytes(size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

void write_container(const std::string& path, const std::string& magic,
                     const NamedTensors& tensors) {
    if (magic.size() != 8) throw ValidationError("container magic must be 8 bytes");
    std::string out;
    out += magic;
    put_u64(out, tensors.entries.size());
    for (const auto& [name, t] : tensors.entries) {
        put_u64(out, name.size());
        out += name;
        put_u64(out, t.rank());
        for (int64_t e : t.shape) put_u64(out, static_cast<uint64_t>(e));
        for (float v : t.data) put_f32(out, v);
    }
    put_u64(out, fnv1a(out.data(), out.size()));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to '" + path + "'");
}

NamedTensors read_container(const std::string& path, const std::string& magic) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf};
    const std::string got_magic = r.get_bytes(8, "magic");
    if (got_magic != magic) {
        throw BadMagicError("'" + path + "' starts with \"" + got_magic + "\", expected \"" +
                            magic + "\"");
    }
    const uint64_t count = r.get_u64("entry count");
    NamedTensors out;
    for (uint64_t i = 0; i < count; ++i) {
        const uint64_t name_len = r.get_u64("name length");
        const std::string name = r.get_bytes(name_len, "name");
        const uint64_t rank = r.get_u64("rank");
        std::vector<int64_t> shape;
        uint64_t numel = 1;
        for (uint64_t d = 0; d < rank; ++d) {
            const uint64_t e = r.get_u64("extent");
            shape.push_back(static_cast<int64_t>(e));
            // guard before multiplying: a promised size beyond the file is a
            // short file, not a reason to allocate
            if (e > buf.size() || numel * e > buf.size()) {
                throw TruncatedFileError("container ends inside tensor data of '" + name + "'");
            }
            numel *= e;
        }
        r.need(numel * 4, "tensor data");
        std::vector<float> data(static_cast<size_t>(numel));
        for (uint64_t k = 0; k < numel; ++k) data[static_cast<size_t>(k)] = r.get_f32("tensor data");
        out.add(name, Tensor(std::move(shape), std::move(data)));
    }
    const size_t payload_end = r.pos;
    const uint64_t stored = r.get_u64("checksum");
    if (r.pos != buf.size()) {
        throw TruncatedFileError("'" + path + "' has trailing bytes after checksum");
    }
    const uint64_t computed = fnv1a(buf.data(), payload_end);
    if (stored != computed) {
        throw ChecksumError("'" + path + "' stored " + hash_hex(stored) + ", computed " +
                            hash_hex(computed));
    }
    return out;
}

} // namespace h2t
