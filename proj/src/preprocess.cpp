#include "hydra/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hydra/signal_model.hpp"

namespace hydra {

void PreprocessConfig::validate() const {
    if (!(cutoff_hz > 0 && cutoff_hz < fs / 2)) throw std::invalid_argument("preprocess: cutoff must lie in (0, fs/2)");
    if (filter_order < 1) throw std::invalid_argument("preprocess: filter order must be >= 1");
    if (window_len <= 0 || skip <= 0 || skip > window_len) throw std::invalid_argument("preprocess: need 0 < skip <= window_len");
    if (mu <= 0) throw std::invalid_argument("preprocess: mu must be > 0");
}

// Digital Butterworth via bilinear transform with pre-warping; sections ordered
// with poles nearest the unit circle last and the overall gain in the first biquad.
Sos butter_lowpass_sos(int order, double cutoff_hz, double fs) {
    using cd = std::complex<double>;
    if (order < 1) throw std::invalid_argument("butter: order must be >= 1");
    double wn = cutoff_hz / (fs / 2);
    if (!(wn > 0 && wn < 1)) throw std::invalid_argument("butter: cutoff must lie strictly between 0 and Nyquist");
    const double fs2 = 2.0;  // normalized design rate
    double warped = 2 * fs2 * std::tan(std::numbers::pi * wn / fs2);
    std::vector<cd> zp;
    for (int k = 0; k < order; ++k) {
        double th = std::numbers::pi * (2 * k + 1 - order) / (2.0 * order);
        zp.push_back(warped * -std::exp(cd(0, th)));  // left half-plane poles
    }
    // bilinear
    cd den = 1;
    std::vector<cd> pd;
    for (auto p : zp) {
        pd.push_back((2 * fs2 + p) / (2 * fs2 - p));
        den *= (2 * fs2 - p);
    }
    double gain = std::real(std::pow(warped, order) / den);
    for (auto& p : pd)
        if (std::abs(p) >= 1.0) throw std::invalid_argument("butter: unstable design");

    // pair conjugates; a real pole (odd order) gets its own first-order section
    std::vector<cd> upper;
    std::vector<double> reals;
    for (auto p : pd) {
        if (std::abs(p.imag()) < 1e-12) reals.push_back(p.real());
        else if (p.imag() > 0) upper.push_back(p);
    }
    std::sort(upper.begin(), upper.end(), [](cd a, cd b) { return std::abs(a) < std::abs(b); });
    Sos sos;
    for (double r : reals) sos.push_back({1, 1, 0, 1, -r, 0});
    for (auto p : upper) sos.push_back({1, 2, 1, 1, -2 * p.real(), std::norm(p)});
    for (int k = 0; k < 3; ++k) sos[0][k] *= gain;
    for (auto& s : sos)
        for (double v : s)
            if (!std::isfinite(v)) throw std::invalid_argument("butter: non-finite coefficients");
    return sos;
}

std::vector<std::array<double, 2>> sosfilt_zi(const Sos& sos) {
    std::vector<std::array<double, 2>> zi(sos.size());
    double scale = 1.0;
    for (size_t s = 0; s < sos.size(); ++s) {
        const auto& c = sos[s];
        double b0 = c[0], b1 = c[1], b2 = c[2], a1 = c[4], a2 = c[5];
        // steady state of transposed direct form II under a unit step
        double y = (b0 + b1 + b2) / (1 + a1 + a2);
        double z1 = y - b0;
        double z2 = b2 - a2 * y;
        zi[s] = {scale * z1, scale * z2};
        scale *= y;
    }
    return zi;
}

std::vector<double> sosfilt(const Sos& sos, const std::vector<double>& x, std::vector<std::array<double, 2>>* zi) {
    std::vector<double> y = x;
    for (size_t s = 0; s < sos.size(); ++s) {
        const auto& c = sos[s];
        double z1 = zi ? (*zi)[s][0] : 0.0, z2 = zi ? (*zi)[s][1] : 0.0;
        for (auto& v : y) {
            double in = v;
            double out = c[0] * in + z1;
            z1 = c[1] * in - c[4] * out + z2;
            z2 = c[2] * in - c[5] * out;
            v = out;
        }
        if (zi) (*zi)[s] = {z1, z2};
    }
    return y;
}

std::vector<double> sosfiltfilt(const Sos& sos, const std::vector<double>& x, int padlen) {
    const int n = int(x.size());
    if (n <= padlen) throw std::invalid_argument("filtfilt: signal length " + std::to_string(n) + " must exceed padding " + std::to_string(padlen));
    std::vector<double> ext;
    ext.reserve(n + 2 * padlen);
    for (int i = padlen; i >= 1; --i) ext.push_back(2 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (int i = 1; i <= padlen; ++i) ext.push_back(2 * x[n - 1] - x[n - 1 - i]);

    auto zi0 = sosfilt_zi(sos);
    auto zi = zi0;
    for (auto& z : zi) z = {z[0] * ext.front(), z[1] * ext.front()};
    auto y = sosfilt(sos, ext, &zi);
    std::reverse(y.begin(), y.end());
    zi = zi0;
    for (auto& z : zi) z = {z[0] * y.front(), z[1] * y.front()};
    y = sosfilt(sos, y, &zi);
    std::reverse(y.begin(), y.end());
    return std::vector<double>(y.begin() + padlen, y.begin() + padlen + n);
}

Tensor envelope(const Tensor& x, const PreprocessConfig& cfg) {
    cfg.validate();
    if (x.rank() != 2) throw std::invalid_argument("envelope: expected [C, D], got " + dims_str(x.dims));
    const int C = int(x.dims[0]), D = int(x.dims[1]);
    const int pad = 3 * cfg.filter_order;
    if (D <= pad) throw std::invalid_argument("envelope: need more than " + std::to_string(pad) + " samples");
    Sos sos = butter_lowpass_sos(cfg.filter_order, cfg.cutoff_hz, cfg.fs);
    Tensor out(x.dims);
    std::vector<double> row(D);
    for (int c = 0; c < C; ++c) {
        for (int t = 0; t < D; ++t) row[t] = std::abs(double(x.at(c, t)));
        auto y = sosfiltfilt(sos, row, pad);
        for (int t = 0; t < D; ++t) out.at(c, t) = float(std::max(0.0, y[t]));
    }
    return out;
}

Tensor mu_law_normalize(const Tensor& x, double mu) {
    if (mu <= 0) throw std::invalid_argument("mu_law: mu must be > 0");
    float peak = 0;
    for (float v : x.data) peak = std::max(peak, std::abs(v));
    Tensor y(x.dims);
    if (peak == 0) return y;
    const double denom = std::log1p(mu);
    for (size_t i = 0; i < x.size(); ++i) {
        double v = double(x[i]) / peak;
        double m = std::log1p(mu * std::abs(v)) / denom;
        y[i] = float(v < 0 ? -m : m);
    }
    return y;
}

std::vector<Tensor> window(const Tensor& x, const PreprocessConfig& cfg) {
    cfg.validate();
    if (x.rank() != 2 || x.dims[0] != kChannels)
        throw std::invalid_argument("window: expected 128 channels laid out as 8x16, got " + dims_str(x.dims));
    const int D = int(x.dims[1]);
    if (D < cfg.window_len) throw std::invalid_argument("window: recording shorter than one window");
    std::vector<Tensor> out;
    for (int s = 0; s + cfg.window_len <= D; s += cfg.skip) {
        Tensor w({uint32_t(cfg.window_len), uint32_t(kGridRows), uint32_t(kGridCols)});
        for (int ch = 0; ch < kChannels; ++ch) {
            auto [r, c] = grid_pos(ch);
            for (int t = 0; t < cfg.window_len; ++t) w.at(t, r, c) = x.at(ch, s + t);
        }
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<Tensor> preprocess_repetition(const Tensor& x, const PreprocessConfig& cfg) {
    return window(mu_law_normalize(envelope(x, cfg), cfg.mu), cfg);
}

}  // namespace hydra
