#include "semikan/serialize.hpp"

#include "semikan/common.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "tensor blobs are little-endian; big-endian hosts are unsupported");

namespace semikan {

void write_tensor(std::ostream& os, const Tensor& t) {
    os.write("SKTN", 4);
    uint32_t rank = uint32_t(t.rank());
    os.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    for (int64_t i = 0; i < t.rank(); ++i) {
        uint64_t d = uint64_t(t.dim(i));
        os.write(reinterpret_cast<const char*>(&d), sizeof(d));
    }
    os.write(reinterpret_cast<const char*>(t.ptr()), std::streamsize(t.numel() * sizeof(double)));
    if (!os) throw IoError("write_tensor: stream failure");
}

Tensor read_tensor(std::istream& is) {
    size_t base = size_t(std::max<std::streamoff>(0, is.tellg()));
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SKTN", 4) != 0)
        throw ParseError("read_tensor: bad magic", base);
    uint32_t rank = 0;
    is.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    if (!is || rank > 8) throw ParseError("read_tensor: bad rank", base + 4);
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) {
        uint64_t d = 0;
        is.read(reinterpret_cast<char*>(&d), sizeof(d));
        if (!is || d == 0 || d > (uint64_t(1) << 32))
            throw ParseError("read_tensor: bad dim", base + 8 + 8 * i);
        shape[i] = int64_t(d);
    }
    if (shape.empty()) shape.push_back(1);
    std::vector<double> data(size_t(shape_numel(shape)));
    is.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * sizeof(double)));
    if (!is) throw ParseError("read_tensor: truncated payload", base + 8 + 8 * rank);
    return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_tensor: cannot open " + path);
    write_tensor(f, t);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_tensor: cannot open " + path);
    return read_tensor(f);
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("Checkpoint::save: cannot open " + path);
    f.write("SKCK", 4);
    uint32_t version = 1;
    f.write(reinterpret_cast<const char*>(&version), sizeof(version));
    uint64_t echo_len = config_echo.size();
    f.write(reinterpret_cast<const char*>(&echo_len), sizeof(echo_len));
    f.write(config_echo.data(), std::streamsize(echo_len));
    uint64_t count = tensors.size();
    f.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& [name, t] : tensors) {
        uint32_t len = uint32_t(name.size());
        f.write(reinterpret_cast<const char*>(&len), sizeof(len));
        f.write(name.data(), len);
        write_tensor(f, t);
    }
    uint64_t words = rng_state.size();
    f.write(reinterpret_cast<const char*>(&words), sizeof(words));
    f.write(reinterpret_cast<const char*>(rng_state.data()), std::streamsize(words * 8));
    if (!f) throw IoError("Checkpoint::save: stream failure writing " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("Checkpoint::load: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "SKCK", 4) != 0)
        throw ParseError("Checkpoint::load: bad magic in " + path, 0);
    uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!f || version != 1) throw ParseError("Checkpoint::load: unsupported version", 4);
    Checkpoint ck;
    uint64_t echo_len = 0;
    f.read(reinterpret_cast<char*>(&echo_len), sizeof(echo_len));
    if (!f || echo_len > (1 << 24)) throw ParseError("Checkpoint::load: bad echo length", 8);
    ck.config_echo.resize(echo_len);
    f.read(ck.config_echo.data(), std::streamsize(echo_len));
    uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!f || count > (1 << 20))
        throw ParseError("Checkpoint::load: bad entry count", size_t(f.tellg()));
    ck.tensors.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t len = 0;
        f.read(reinterpret_cast<char*>(&len), sizeof(len));
        if (!f || len > 4096)
            throw ParseError("Checkpoint::load: bad name length", size_t(f.tellg()));
        std::string name(len, '\0');
        f.read(name.data(), len);
        Tensor t = read_tensor(f);
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    uint64_t words = 0;
    f.read(reinterpret_cast<char*>(&words), sizeof(words));
    if (!f || words > (1 << 16))
        throw ParseError("Checkpoint::load: bad rng length", size_t(f.tellg()));
    ck.rng_state.resize(words);
    f.read(reinterpret_cast<char*>(ck.rng_state.data()), std::streamsize(words * 8));
    if (!f) throw ParseError("Checkpoint::load: truncated rng state", size_t(f.tellg()));
    return ck;
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

} // namespace semikan
