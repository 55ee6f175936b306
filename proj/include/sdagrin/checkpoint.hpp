#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sdagrin/errors.hpp"
#include "sdagrin/params.hpp"

namespace sdagrin {

// Binary checkpoint layout (all integers little-endian):
//   8 bytes   magic "SDAGRIN\0"
//   u32       format version
//   u32 + n   config echo, text of `key = value` lines (model keys first, then any extras)
//   u32       number of parameter blocks
//   per block u32 + n name, u64 rows, u64 cols, rows*cols IEEE-754 doubles (row-major)
// Blocks appear in ModelParams::entries() order; loading checks every name and shape
// against the model built from the echoed config.

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'S', 'D', 'A', 'G', 'R', 'I', 'N', '\0'};

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    std::string echo;  // full echoed text
};

inline std::string model_config_text(const ModelConfig& c) {
    std::ostringstream os;
    os << "nodes = " << c.nodes << "\n"
       << "window = " << c.window << "\n"
       << "heads = " << c.heads << "\n"
       << "head_dim = " << c.head_dim << "\n"
       << "state_dim = " << c.state_dim << "\n"
       << "spatial_dim = " << c.spatial_dim << "\n"
       << "diffusion_order = " << c.diffusion_order << "\n"
       << "fusion_hidden = " << c.fusion_hidden << "\n";
    return os.str();
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

class ByteReader {
   public:
    ByteReader(const std::string& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}
    std::uint64_t uint(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int b = 0; b < width; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
        pos_ += static_cast<std::size_t>(width);
        return v;
    }
    std::string text(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

   private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw DataError(path_ + ": truncated checkpoint");
    }
    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

inline std::map<std::string, std::string> parse_echo(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv.emplace(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
}

}  // namespace detail

inline std::string serialize_with_echo(const std::string& echo, const ModelParams& params) {
    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(echo.size()));
    out += echo;
    const auto entries = params.entries();
    detail::put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, t] : entries) {
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        detail::put_u64(out, t->rows());
        detail::put_u64(out, t->cols());
        for (double v : t->data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

inline std::string serialize_checkpoint(const ModelConfig& cfg, const ModelParams& params, const std::string& extra_echo = {}) {
    return serialize_with_echo(model_config_text(cfg) + extra_echo, params);
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& path = "checkpoint") {
    detail::ByteReader in(bytes, path);
    if (in.text(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic)))
        throw DataError(path + ": not a checkpoint (bad magic)");
    const auto version = in.uint(4);
    if (version != kCheckpointVersion) throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.echo = in.text(in.uint(4));
    const auto kv = detail::parse_echo(ck.echo);
    auto field = [&](const char* key) -> std::size_t {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError(path + ": config echo lacks '" + key + "'");
        try {
            return static_cast<std::size_t>(std::stoull(it->second));
        } catch (const std::exception&) {
            throw DataError(path + ": bad value for '" + key + "' in config echo");
        }
    };
    ck.config.nodes = field("nodes");
    ck.config.window = field("window");
    ck.config.heads = field("heads");
    ck.config.head_dim = field("head_dim");
    ck.config.state_dim = field("state_dim");
    ck.config.spatial_dim = field("spatial_dim");
    ck.config.diffusion_order = field("diffusion_order");
    ck.config.fusion_hidden = field("fusion_hidden");
    ck.params = zero_params(ck.config);
    auto entries = ck.params.entries();
    const auto count = in.uint(4);
    if (count != entries.size())
        throw DataError(path + ": checkpoint has " + std::to_string(count) + " blocks, config implies " +
                        std::to_string(entries.size()));
    for (auto& [name, t] : entries) {
        const std::string got = in.text(in.uint(4));
        if (got != name) throw DataError(path + ": expected block '" + name + "', found '" + got + "'");
        const auto rows = in.uint(8);
        const auto cols = in.uint(8);
        if (rows != t->rows() || cols != t->cols())
            throw DataError(path + ": block '" + name + "' has shape " + Tensor2::shape_string(rows, cols) + ", config implies " +
                            t->shape());
        for (auto& v : t->data()) v = std::bit_cast<double>(in.uint(8));
    }
    if (!in.done()) throw DataError(path + ": trailing bytes after last block");
    return ck;
}

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params,
                            const std::string& extra_echo = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    const std::string bytes = serialize_checkpoint(cfg, params, extra_echo);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path);
}

// Re-serializes a loaded checkpoint with its original echo.
inline std::string serialize_checkpoint(const Checkpoint& ck) { return serialize_with_echo(ck.echo, ck.params); }

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str(), path);
}

}  // namespace sdagrin
