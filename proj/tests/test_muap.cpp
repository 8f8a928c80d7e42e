#include <doctest.h>

#include <cmath>
#include <limits>

#include "hydra/muap.hpp"

using namespace hydra;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

SignalRecord one_mu(uint64_t seed, const SpikeTrain& spikes, double snr, MuapBank& bank) {
    SeededRng r(seed);
    bank = generate_muap_bank(1, 128, 20, r);
    SpikeTrainSet tr;
    tr.duration = 512;
    tr.trains = {spikes};
    return mix(bank, tr, snr, r);
}

double corr(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= a.size();
    mb /= b.size();
    double sab = 0, saa = 0, sbb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

MuapImage image_with(float value, int first_spike, int idx) {
    MuapImage im;
    im.p2p = Tensor({8, 16}, value);
    im.first_spike = first_spike;
    im.source_idx = idx;
    return im;
}

}  // namespace

TEST_CASE("one spike reproduces the planted waveform") {
    MuapBank bank;
    auto rec = one_mu(1, {100}, kInf, bank);
    auto m = sta_muap(rec.x, {100});
    CHECK_FALSE(m.empty);
    CHECK(m.first_spike == 100);
    for (int ch = 0; ch < 128; ++ch) {
        auto [r, c] = grid_pos(ch);
        for (int l = 0; l < 20; ++l) REQUIRE(m.waveforms.at(r, c, l) == bank.h.at(0, ch, l));
    }
}

TEST_CASE("one spike per sub-window sums to twice the waveform") {
    MuapBank bank;
    auto rec = one_mu(2, {100, 300}, kInf, bank);
    auto m = sta_muap(rec.x, {100, 300});
    for (int ch = 0; ch < 128; ++ch) {
        auto [r, c] = grid_pos(ch);
        for (int l = 0; l < 20; ++l) CHECK(m.waveforms.at(r, c, l) == doctest::Approx(2 * bank.h.at(0, ch, l)).epsilon(1e-6));
    }
}

TEST_CASE("segments past the window edge are dropped; no spikes gives an empty estimate") {
    MuapBank bank;
    auto rec = one_mu(3, {100}, kInf, bank);
    auto m = sta_muap(rec.x, {100, 500});
    auto ref = sta_muap(rec.x, {100});
    CHECK(m.waveforms == ref.waveforms);
    auto e = sta_muap(rec.x, {});
    CHECK(e.empty);
    CHECK(e.first_spike == -1);
    for (float v : e.waveforms.data) CHECK(v == 0.0f);
    for (float v : p2p_image(e).p2p.data) CHECK(v == 0.0f);
}

TEST_CASE("ten spikes at 20 dB: waveform fidelity and spatial center") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        SpikeTrain sp;
        for (int k = 0; k < 10; ++k) sp.push_back(10 + 48 * k);
        MuapBank bank;
        auto rec = one_mu(seed, sp, 20.0, bank);
        auto m = sta_muap(rec.x, sp);
        double peak = 0;
        std::vector<double> p2p(128);
        for (int ch = 0; ch < 128; ++ch) {
            float mn = 1e9f, mx = -1e9f;
            for (int l = 0; l < 20; ++l) mn = std::min(mn, bank.h.at(0, ch, l)), mx = std::max(mx, bank.h.at(0, ch, l));
            p2p[ch] = mx - mn;
            peak = std::max(peak, p2p[ch]);
        }
        for (int ch = 0; ch < 128; ++ch) {
            if (p2p[ch] < 0.25 * peak) continue;
            auto [r, c] = grid_pos(ch);
            std::vector<double> a, b;
            for (int l = 0; l < 20; ++l) a.push_back(m.waveforms.at(r, c, l)), b.push_back(bank.h.at(0, ch, l));
            CHECK(corr(a, b) >= 0.9);
        }
        auto im = p2p_image(m);
        int arg = 0;
        for (int i = 1; i < 128; ++i)
            if (im.p2p[i] > im.p2p[arg]) arg = i;
        auto [r, c] = grid_pos(bank.center[0]);
        CHECK(arg == r * 16 + c);
    }
}

TEST_CASE("peak-to-peak arithmetic") {
    MuapEstimate m;
    m.waveforms = Tensor({8, 16, 20}, 0.5f);
    auto flat = p2p_image(m);
    for (float v : flat.p2p.data) CHECK(v == 0.0f);
    m.waveforms.at(2, 3, 1) = 1.5f;
    m.waveforms.at(2, 3, 2) = -0.5f;
    auto im = p2p_image(m);
    CHECK(im.p2p.at(2, 3) == 2.0f);
    CHECK(im.p2p.at(0, 0) == 0.0f);
}

TEST_CASE("feature stack padding, ordering and permutation invariance") {
    auto empty = muap_feature_stack({});
    CHECK(empty.dims == std::vector<uint32_t>{7, 8, 16});
    for (float v : empty.data) CHECK(v == 0.0f);

    std::vector<MuapImage> three = {image_with(1, 40, 0), image_with(3, 10, 1), image_with(2, 5, 2)};
    auto s = muap_feature_stack(three);
    CHECK(s.at(0, 0, 0) == 3.0f);
    CHECK(s.at(1, 0, 0) == 2.0f);
    CHECK(s.at(2, 0, 0) == 1.0f);
    for (size_t i = 3 * 128; i < s.size(); ++i) CHECK(s[i] == 0.0f);

    std::vector<MuapImage> perm = {three[2], three[0], three[1]};
    CHECK(muap_feature_stack(perm) == s);

    // equal energy: earlier first spike first
    MuapImage a = image_with(1, 50, 0), b = image_with(1, 20, 1);
    b.p2p.at(0, 0) = 1.0f;
    auto t = muap_feature_stack({a, b});
    CHECK(muap_feature_stack({b, a}) == t);

    CHECK_THROWS(muap_feature_stack(std::vector<MuapImage>(8, image_with(1, 0, 0))));
}

TEST_CASE("p2p image argmax at the planted center for a noiseless bank") {
    SeededRng r(9);
    auto bank = generate_muap_bank(6, 128, 20, r);
    for (int j = 0; j < 6; ++j) {
        MuapEstimate m;
        m.waveforms = Tensor({8, 16, 20});
        for (int ch = 0; ch < 128; ++ch) {
            auto [rr, cc] = grid_pos(ch);
            for (int l = 0; l < 20; ++l) m.waveforms.at(rr, cc, l) = bank.h.at(j, ch, l);
        }
        auto im = p2p_image(m);
        int arg = 0;
        for (int i = 1; i < 128; ++i)
            if (im.p2p[i] > im.p2p[arg]) arg = i;
        auto [rr, cc] = grid_pos(bank.center[j]);
        CHECK(arg == rr * 16 + cc);
    }
}
