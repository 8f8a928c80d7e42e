#pragma once

#include <stdexcept>
#include <string>

#include "hydra/tensor.hpp"

namespace hydra {

// HYDT container: "HYDT" | u8 version=1 | u8 dtype=0 (f32) | u8 rank | rank x u32 LE dims | LE f32 payload
enum class HydtErrorKind { BadMagic, Truncated, UnsupportedVersion, UnsupportedDtype, BadRank, TrailingBytes, Io };

class HydtError : public std::runtime_error {
public:
    HydtError(HydtErrorKind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
    HydtErrorKind kind() const { return kind_; }
private:
    HydtErrorKind kind_;
};

std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::string& bytes, const std::string& where = "<memory>");

void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

}  // namespace hydra
