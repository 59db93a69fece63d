#include "yoeo/nn/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "yoeo/errors.hpp"
#include "yoeo/nn/binary_io.hpp"

namespace yoeo::nn {

namespace io {

void atomic_write(const std::string& path, const std::string& contents) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) {
        std::filesystem::create_directories(target.parent_path());
    }
    const std::string temp = path + ".tmp";
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open " + temp + " for writing");
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) {
            throw std::runtime_error("write to " + temp + " failed");
        }
    }
    std::filesystem::rename(temp, target);
}

}  // namespace io

void Checkpoint::add(NamedTensor tensor) {
    std::uint64_t count = 1;
    for (auto d : tensor.dims) count *= d;
    if (count != tensor.data.size()) {
        throw ConfigError("tensor '" + tensor.name + "' dims do not match its data length");
    }
    if (contains(tensor.name)) {
        throw ConfigError("duplicate tensor name '" + tensor.name + "'");
    }
    tensors_.push_back(std::move(tensor));
}

void Checkpoint::add_mlp(const std::string& prefix, const Mlp& net) {
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        const auto& layer = net.layers()[l];
        const std::string base = prefix + "." + std::to_string(l);
        add({base + ".weight",
             {static_cast<std::uint64_t>(layer.weight.rows()), static_cast<std::uint64_t>(layer.weight.cols())},
             std::vector<double>(layer.weight.data(), layer.weight.data() + layer.weight.size())});
        add({base + ".bias",
             {static_cast<std::uint64_t>(layer.bias.size())},
             std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())});
    }
}

void Checkpoint::add_scalar(const std::string& name, double value) {
    add({name, {}, {value}});
}

bool Checkpoint::contains(const std::string& name) const {
    for (const auto& t : tensors_) {
        if (t.name == name) return true;
    }
    return false;
}

const NamedTensor& Checkpoint::get(const std::string& name) const {
    for (const auto& t : tensors_) {
        if (t.name == name) return t;
    }
    throw LoadError("checkpoint has no tensor named '" + name + "'");
}

double Checkpoint::scalar(const std::string& name) const {
    const auto& t = get(name);
    if (t.data.size() != 1) {
        throw LoadError("tensor '" + name + "' is not a scalar");
    }
    return t.data.front();
}

void Checkpoint::load_mlp(const std::string& prefix, Mlp& net) const {
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        auto& layer = net.layers()[l];
        const std::string base = prefix + "." + std::to_string(l);
        const auto& w = get(base + ".weight");
        const auto& b = get(base + ".bias");
        if (w.dims.size() != 2 || w.dims[0] != static_cast<std::uint64_t>(layer.weight.rows()) ||
            w.dims[1] != static_cast<std::uint64_t>(layer.weight.cols())) {
            throw LoadError("tensor '" + w.name + "' has the wrong shape for this network");
        }
        if (b.dims.size() != 1 || b.dims[0] != static_cast<std::uint64_t>(layer.bias.size())) {
            throw LoadError("tensor '" + b.name + "' has the wrong shape for this network");
        }
        std::copy(w.data.begin(), w.data.end(), layer.weight.data());
        std::copy(b.data.begin(), b.data.end(), layer.bias.data());
    }
}

std::string Checkpoint::serialize() const {
    std::ostringstream out(std::ios::binary);
    io::write_bytes(out, "YOEO");
    io::write<std::uint32_t>(out, kVersion);
    for (const auto& t : tensors_) {
        io::write<std::uint64_t>(out, t.name.size());
        io::write_bytes(out, t.name);
        io::write<std::uint64_t>(out, t.dims.size());
        for (auto d : t.dims) io::write<std::uint64_t>(out, d);
        for (double v : t.data) io::write<double>(out, v);
    }
    return out.str();
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    if (io::read_bytes(in, 4, "magic") != "YOEO") {
        throw LoadError("not a checkpoint: bad magic bytes");
    }
    const auto version = io::read<std::uint32_t>(in, "version");
    if (version != kVersion) {
        throw LoadError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    while (in.peek() != std::char_traits<char>::eof()) {
        NamedTensor t;
        const auto name_length = io::read<std::uint64_t>(in, "tensor name length");
        if (name_length > (1u << 16)) {
            throw LoadError("implausible tensor name length " + std::to_string(name_length));
        }
        t.name = io::read_bytes(in, name_length, "tensor name");
        const auto rank = io::read<std::uint64_t>(in, "rank of '" + t.name + "'");
        if (rank > 8) {
            throw LoadError("implausible rank for '" + t.name + "'");
        }
        std::uint64_t count = 1;
        for (std::uint64_t r = 0; r < rank; ++r) {
            t.dims.push_back(io::read<std::uint64_t>(in, "dims of '" + t.name + "'"));
            count *= t.dims.back();
        }
        if (count * sizeof(double) > bytes.size()) {
            throw LoadError("tensor '" + t.name + "' is larger than the file");
        }
        t.data.resize(count);
        for (auto& v : t.data) v = io::read<double>(in, "data of '" + t.name + "'");
        ckpt.add(std::move(t));
    }
    return ckpt;
}

void Checkpoint::save(const std::string& path) const {
    io::atomic_write(path, serialize());
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open checkpoint " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return deserialize(buffer.str());
}

}  // namespace yoeo::nn
