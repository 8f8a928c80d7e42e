#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydra {

// Dense row-major f32 array, rank 1..4. A zero extent is allowed (empty tensor).
struct Tensor {
    std::vector<uint32_t> dims;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<uint32_t> d, float fill = 0.0f);
    Tensor(std::vector<uint32_t> d, std::vector<float> values);

    size_t rank() const { return dims.size(); }
    size_t size() const { return data.size(); }
    static size_t count(const std::vector<uint32_t>& d);

    float& operator[](size_t i) { return data[i]; }
    float operator[](size_t i) const { return data[i]; }

    float& at(size_t i, size_t j) { return data[i * dims[1] + j]; }
    float at(size_t i, size_t j) const { return data[i * dims[1] + j]; }
    float& at(size_t i, size_t j, size_t k) { return data[(i * dims[1] + j) * dims[2] + k]; }
    float at(size_t i, size_t j, size_t k) const { return data[(i * dims[1] + j) * dims[2] + k]; }

    bool operator==(const Tensor& o) const;  // bitwise on payload
};

std::string dims_str(const std::vector<uint32_t>& d);

}  // namespace hydra
