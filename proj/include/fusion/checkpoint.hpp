#pragma once

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fusion/tensor.hpp"

namespace fusion {

// Flat parameter archive: 8-byte magic, little-endian u32 version, u64
// manifest length, a JSON manifest mapping hierarchical names to shape,
// dtype and payload offset, then the raw little-endian payloads. Doubles as
// the generic weight-import interface.
class ArchiveWriter {
public:
    template <typename S>
    void add(const std::string& name, const Shape& shape, const S* data) {
        nlohmann::json entry;
        entry["dtype"] = dtype_name<S>();
        entry["shape"] = shape;
        entry["offset"] = payload_.size();
        const std::size_t bytes = static_cast<std::size_t>(numel(shape)) * sizeof(S);
        entry["nbytes"] = bytes;
        tensors_[name] = entry;
        const std::size_t pos = payload_.size();
        payload_.resize(pos + bytes);
        std::memcpy(payload_.data() + pos, data, bytes);
    }

    void set_meta(nlohmann::json meta) { meta_ = std::move(meta); }

    void write(const std::string& path) const {
        nlohmann::json manifest;
        manifest["tensors"] = tensors_;
        manifest["meta"] = meta_;
        const std::string m = manifest.dump();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
        out.write(kMagic, 8);
        write_u32(out, kVersion);
        write_u64(out, m.size());
        out.write(m.data(), static_cast<std::streamsize>(m.size()));
        out.write(reinterpret_cast<const char*>(payload_.data()),
                  static_cast<std::streamsize>(payload_.size()));
        if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
    }

    template <typename S>
    static const char* dtype_name() {
        if constexpr (std::is_same_v<S, float>) return "f32";
        else if constexpr (std::is_same_v<S, double>) return "f64";
        else static_assert(std::is_same_v<S, float>, "unsupported dtype");
    }

    static constexpr const char kMagic[9] = "FUSNCKPT";
    static constexpr std::uint32_t kVersion = 1;

private:
    static void write_u32(std::ostream& out, std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
    static void write_u64(std::ostream& out, std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    }

    nlohmann::json tensors_ = nlohmann::json::object();
    nlohmann::json meta_ = nlohmann::json::object();
    std::vector<unsigned char> payload_;
};

class ArchiveReader {
public:
    explicit ArchiveReader(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, ArchiveWriter::kMagic, 8) != 0) {
            throw std::runtime_error("checkpoint: " + path + " is not a parameter archive");
        }
        const std::uint32_t version = read_u32(in);
        if (version != ArchiveWriter::kVersion) {
            throw std::runtime_error("checkpoint: unsupported archive version " + std::to_string(version));
        }
        const std::uint64_t mlen = read_u64(in);
        std::string m(mlen, '\0');
        in.read(m.data(), static_cast<std::streamsize>(mlen));
        if (!in) throw std::runtime_error("checkpoint: truncated manifest in " + path);
        manifest_ = nlohmann::json::parse(m);
        payload_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    const nlohmann::json& meta() const { return manifest_.at("meta"); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (auto it = manifest_.at("tensors").begin(); it != manifest_.at("tensors").end(); ++it) {
            out.push_back(it.key());
        }
        return out;
    }

    bool has(const std::string& name) const { return manifest_.at("tensors").contains(name); }

    Shape shape_of(const std::string& name) const {
        return entry(name).at("shape").get<Shape>();
    }

    std::string dtype_of(const std::string& name) const {
        return entry(name).at("dtype").get<std::string>();
    }

    template <typename S>
    void read(const std::string& name, const Shape& expect_shape, S* out) const {
        const auto& e = entry(name);
        const Shape stored = e.at("shape").get<Shape>();
        if (stored != expect_shape) {
            throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " + shape_str(stored) +
                                     ", expected " + shape_str(expect_shape));
        }
        const std::string dtype = e.at("dtype").get<std::string>();
        if (dtype != ArchiveWriter::dtype_name<S>()) {
            throw std::runtime_error("checkpoint: tensor '" + name + "' stored as " + dtype +
                                     ", expected " + ArchiveWriter::dtype_name<S>());
        }
        const std::size_t offset = e.at("offset").get<std::size_t>();
        const std::size_t nbytes = e.at("nbytes").get<std::size_t>();
        if (offset + nbytes > payload_.size()) {
            throw std::runtime_error("checkpoint: corrupt archive, payload for '" + name +
                                     "' out of range");
        }
        std::memcpy(out, payload_.data() + offset, nbytes);
    }

private:
    const nlohmann::json& entry(const std::string& name) const {
        const auto& t = manifest_.at("tensors");
        auto it = t.find(name);
        if (it == t.end()) throw std::runtime_error("checkpoint: no tensor named '" + name + "'");
        return *it;
    }

    static std::uint32_t read_u32(std::istream& in) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
               std::uint32_t(b[3]) << 24;
    }
    static std::uint64_t read_u64(std::istream& in) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
        return v;
    }

    nlohmann::json manifest_;
    std::vector<unsigned char> payload_;
};

}  // namespace fusion
