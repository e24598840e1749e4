#pragma once

#include "semikan/tensor.hpp"

#include <iosfwd>
#include <string>

namespace semikan {

// Tensor blob format (little-endian):
//   magic  "SKTN"   4 bytes
//   rank   u32
//   dims   u64 * rank
//   data   f64 * product(dims), row-major
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// Checkpoint container (little-endian):
//   magic   "SKCK"   4 bytes
//   version u32
//   echo    u64 length + bytes (the run configuration, key = value lines)
//   table   u64 count, then per entry: u32 name length, name, SKTN blob
//   rng     u64 word count + u64 words (trainer RNG and step counters)
struct Checkpoint {
    std::string config_echo;
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::vector<uint64_t> rng_state;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
    const Tensor* find(const std::string& name) const;
};

} // namespace semikan
