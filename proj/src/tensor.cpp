#include "hydra/tensor.hpp"

#include <cstring>

namespace hydra {

size_t Tensor::count(const std::vector<uint32_t>& d) {
    if (d.empty() || d.size() > 4)
        throw std::invalid_argument("tensor rank must be 1..4, got " + std::to_string(d.size()));
    size_t n = 1;
    for (auto v : d) n *= v;
    return n;
}

Tensor::Tensor(std::vector<uint32_t> d, float fill) : dims(std::move(d)), data(count(dims), fill) {}

Tensor::Tensor(std::vector<uint32_t> d, std::vector<float> values) : dims(std::move(d)), data(std::move(values)) {
    if (count(dims) != data.size())
        throw std::invalid_argument("tensor data length does not match dims " + dims_str(dims));
}

bool Tensor::operator==(const Tensor& o) const {
    if (dims != o.dims || data.size() != o.data.size()) return false;
    return data.empty() || std::memcmp(data.data(), o.data.data(), data.size() * sizeof(float)) == 0;
}

std::string dims_str(const std::vector<uint32_t>& d) {
    std::string s = "[";
    for (size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
    return s + "]";
}

}  // namespace hydra
