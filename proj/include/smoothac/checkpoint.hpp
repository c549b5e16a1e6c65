#pragma once

// Binary checkpoint container, version 1. All integers little-endian.
//
//   bytes 0..7   magic "SMACKPT\0"
//   u32          format version
//   u64 n, n     bytes of UTF-8 JSON metadata
//   u64          array count
//   per array:   u32 name length, name bytes, u32 rank, rank x u64 dims,
//                prod(dims) x f64 values (row-major)
//
// Arrays are written in lexicographic name order.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "smoothac/tensor.hpp"

namespace smoothac {

class Checkpoint {
public:
    static constexpr std::uint32_t kVersion = 1;

    nlohmann::json meta = nlohmann::json::object();

    void put(const std::string& name, Tensor value);
    [[nodiscard]] const Tensor& get(const std::string& name) const;
    [[nodiscard]] bool contains(const std::string& name) const { return arrays_.count(name) != 0; }
    [[nodiscard]] const std::map<std::string, Tensor>& arrays() const noexcept { return arrays_; }

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

private:
    std::map<std::string, Tensor> arrays_;
};

}  // namespace smoothac
