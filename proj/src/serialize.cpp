#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bpnn/model.hpp"

namespace bpnn {

namespace {

constexpr char kMagic[4] = {'B', 'P', 'N', 'N'};
constexpr unsigned char kFormatVersion = 1;

void put_u32le(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64le(std::ofstream& out, double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

struct Reader {
    const std::vector<unsigned char>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > bytes.size()) {
            throw TruncatedError("model file truncated at byte " + std::to_string(bytes.size()) +
                                 " while reading " + what);
        }
    }

    std::uint32_t u32le(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[pos + static_cast<std::size_t>(i)];
        pos += 4;
        return v;
    }

    double f64le(const char* what) {
        need(8, what);
        std::uint64_t u = 0;
        for (int i = 7; i >= 0; --i) u = (u << 8) | bytes[pos + static_cast<std::size_t>(i)];
        pos += 8;
        double d;
        std::memcpy(&d, &u, 8);
        return d;
    }
};

}  // namespace

void save_model(Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    out.put(static_cast<char>(kFormatVersion));
    const std::string arch = architecture_to_json(model.config()).dump();
    put_u32le(out, static_cast<std::uint32_t>(arch.size()));
    out.write(arch.data(), static_cast<std::streamsize>(arch.size()));
    for (const ParamRef& p : model.params()) {
        put_u32le(out, static_cast<std::uint32_t>(p.value->size()));
        for (std::size_t i = 0; i < p.value->size(); ++i) put_f64le(out, (*p.value)[i]);
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw BadMagicError("'" + path + "' is not a BPNN model file");
    }
    const unsigned char version = bytes[4];
    if (version != kFormatVersion) {
        throw VersionError("'" + path + "' has format version " + std::to_string(version) +
                           ", this build reads version " + std::to_string(kFormatVersion));
    }
    Reader r{bytes, 5};
    const std::uint32_t arch_len = r.u32le("architecture length");
    r.need(arch_len, "architecture descriptor");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                                    bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + arch_len));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("'" + path + "': malformed architecture descriptor: " + e.what());
    }
    r.pos += arch_len;

    Model model = Model::build(parse_architecture(doc));
    for (const ParamRef& p : model.params()) {
        const std::uint32_t count = r.u32le("tensor header");
        if (count != p.value->size()) {
            throw IoError("'" + path + "': tensor '" + p.name + "' declares " +
                          std::to_string(count) + " elements, architecture expects " +
                          std::to_string(p.value->size()));
        }
        for (std::size_t i = 0; i < count; ++i) (*p.value)[i] = r.f64le("tensor payload");
    }
    if (r.pos != bytes.size()) {
        throw IoError("'" + path + "': " + std::to_string(bytes.size() - r.pos) +
                      " trailing bytes after the last tensor");
    }
    return model;
}

}  // namespace bpnn
