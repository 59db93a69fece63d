#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "yoeo/nn/mlp.hpp"

namespace yoeo::nn {

/// One named tensor of a checkpoint. Rank-2 data is stored column-major.
struct NamedTensor {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> data;
};

/// Flat parameter container.
///
/// Byte layout (all integers little-endian):
///   "YOEO"                magic, 4 bytes
///   u32                   format version (1)
///   repeated until EOF:
///     u64 name_length, name bytes (UTF-8)
///     u64 rank, rank x u64 dims
///     prod(dims) x f64 data
class Checkpoint {
public:
    static constexpr std::uint32_t kVersion = 1;

    void add(NamedTensor tensor);
    void add_mlp(const std::string& prefix, const Mlp& net);
    void add_scalar(const std::string& name, double value);

    const NamedTensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    double scalar(const std::string& name) const;

    /// Copies tensors named "<prefix>.<i>.weight|bias" into an existing network of matching shape.
    void load_mlp(const std::string& prefix, Mlp& net) const;

    const std::vector<NamedTensor>& tensors() const noexcept { return tensors_; }

    std::string serialize() const;
    static Checkpoint deserialize(const std::string& bytes);

    /// Atomic: temp file + rename.
    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

private:
    std::vector<NamedTensor> tensors_;
};

}  // namespace yoeo::nn
