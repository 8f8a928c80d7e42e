#pragma once

#include <array>
#include <vector>

#include "hydra/tensor.hpp"

namespace hydra {

struct PreprocessConfig {
    double cutoff_hz = 1.0;
    double fs = 2048.0;
    int filter_order = 4;
    double mu = 255.0;
    int window_len = 512;
    int skip = 256;
    void validate() const;
};

// Second-order sections, each {b0, b1, b2, a0=1, a1, a2}.
using Sos = std::vector<std::array<double, 6>>;

Sos butter_lowpass_sos(int order, double cutoff_hz, double fs);
std::vector<double> sosfilt(const Sos& sos, const std::vector<double>& x, std::vector<std::array<double, 2>>* zi = nullptr);
std::vector<std::array<double, 2>> sosfilt_zi(const Sos& sos);
// Zero-phase forward-backward filtering with odd extension of `padlen` samples.
std::vector<double> sosfiltfilt(const Sos& sos, const std::vector<double>& x, int padlen);

// Per channel: rectify, zero-phase low-pass, clamp at 0. x is [C, D].
Tensor envelope(const Tensor& x, const PreprocessConfig& cfg = {});
// Rescales by max |x| then applies sign(x) ln(1 + mu|x|) / ln(1 + mu).
Tensor mu_law_normalize(const Tensor& x, double mu = 255.0);
// [128, D] -> windows [window_len, 8, 16]
std::vector<Tensor> window(const Tensor& x, const PreprocessConfig& cfg = {});

// envelope -> mu-law over the whole repetition -> windows
std::vector<Tensor> preprocess_repetition(const Tensor& x, const PreprocessConfig& cfg = {});

}  // namespace hydra
