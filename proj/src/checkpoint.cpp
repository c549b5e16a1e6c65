#include "smoothac/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace smoothac {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'M', 'A', 'C', 'K', 'P', 'T', '\0'};

template <class T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return value;
}

std::string read_string(std::istream& in, std::size_t n) {
    std::string s(n, '\0');
    in.read(s.data(), std::streamsize(n));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return s;
}

}  // namespace

void Checkpoint::put(const std::string& name, Tensor value) { arrays_[name] = std::move(value); }

const Tensor& Checkpoint::get(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw std::runtime_error("checkpoint: missing array '" + name + "'");
    return it->second;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
    out.write(kMagic.data(), kMagic.size());
    write_pod<std::uint32_t>(out, kVersion);
    const std::string header = meta.dump();
    write_pod<std::uint64_t>(out, header.size());
    out.write(header.data(), std::streamsize(header.size()));
    write_pod<std::uint64_t>(out, arrays_.size());
    for (const auto& [name, t] : arrays_) {
        write_pod<std::uint32_t>(out, std::uint32_t(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        write_pod<std::uint32_t>(out, std::uint32_t(t.rank()));
        for (std::size_t d : t.shape()) write_pod<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.data().data()), std::streamsize(t.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw std::runtime_error("checkpoint: bad magic in " + path.string());
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    const auto header_len = read_pod<std::uint64_t>(in);
    ckpt.meta = nlohmann::json::parse(read_string(in, header_len));
    const auto count = read_pod<std::uint64_t>(in);
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto name_len = read_pod<std::uint32_t>(in);
        std::string name = read_string(in, name_len);
        const auto rank = read_pod<std::uint32_t>(in);
        if (rank > 2) throw std::runtime_error("checkpoint: array '" + name + "' has rank " + std::to_string(rank));
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(read_pod<std::uint64_t>(in));
        std::vector<double> data(shape_numel(shape));
        in.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated array '" + name + "'");
        ckpt.arrays_[name] = Tensor(std::move(shape), std::move(data));
    }
    return ckpt;
}

}  // namespace smoothac
