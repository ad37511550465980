#include "tsgen/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "tsgen/errors.hpp"
#include "tsgen/nn.hpp"

namespace tsgen {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'G', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

std::uint64_t read_u64(std::istream& in) {
    char buf[8];
    in.read(buf, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}

}  // namespace

Tensor Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw InputError("checkpoint tensor not found: " + name);
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    write_u64(out, kVersion);
    write_u64(out, ckpt.config_echo.size());
    out.write(ckpt.config_echo.data(), static_cast<std::streamsize>(ckpt.config_echo.size()));
    write_u64(out, ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
        write_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u64(out, t.shape().size());
        for (int d : t.shape()) write_u64(out, static_cast<std::uint64_t>(d));
        const auto& v = t.values();
        write_u64(out, v.size());
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!out) throw InputError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError(path + ": not a checkpoint file (bad magic)");
    const std::uint64_t version = read_u64(in);
    if (version != kVersion)
        throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    const std::uint64_t cfg_len = read_u64(in);
    ckpt.config_echo.resize(cfg_len);
    in.read(ckpt.config_echo.data(), static_cast<std::streamsize>(cfg_len));

    const std::uint64_t count = read_u64(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t name_len = read_u64(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        const std::uint64_t ndim = read_u64(in);
        Shape shape(ndim);
        for (auto& d : shape) d = static_cast<int>(read_u64(in));
        const std::uint64_t numel = read_u64(in);
        std::vector<double> values(numel);
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(numel * sizeof(double)));
        if (!in) throw DataError(path + ": truncated checkpoint");
        ckpt.tensors.emplace_back(name, Tensor::from(shape, std::move(values)));
    }
    return ckpt;
}

Checkpoint checkpoint_from_params(const ParamStore& params, const std::string& config_echo) {
    Checkpoint ckpt;
    ckpt.config_echo = config_echo;
    for (const auto& [name, p] : params.all())
        ckpt.tensors.emplace_back(name, Tensor::from(p.shape(), p.values()));
    return ckpt;
}

void load_into_params(const Checkpoint& ckpt, ParamStore& params) {
    for (const auto& [name, p] : params.all()) {
        Tensor t = ckpt.find(name);
        if (t.shape() != p.shape())
            throw DataError("checkpoint tensor " + name + " has shape " + shape_str(t.shape()) +
                            ", expected " + shape_str(p.shape()));
        p.values() = t.values();
    }
}

}  // namespace tsgen
