#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include "hydra/signal_model.hpp"

using namespace hydra;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("grid mapping round-trips and splits the two 8x8 arrays") {
    std::set<std::pair<int, int>> seen;
    for (int ch = 0; ch < kChannels; ++ch) {
        auto [r, c] = grid_pos(ch);
        CHECK(grid_channel(r, c) == ch);
        seen.insert({r, c});
    }
    CHECK(seen.size() == 128);
    CHECK(grid_pos(9) == std::pair{1, 1});
    CHECK(grid_pos(64) == std::pair{0, 8});
    CHECK(grid_pos(127) == std::pair{7, 15});
}

TEST_CASE("single-channel bank is zero-mean with unit peak") {
    SeededRng rng(0);
    auto b = generate_muap_bank(1, 1, 20, rng);
    REQUIRE(b.h.dims == std::vector<uint32_t>{1, 1, 20});
    double mean = 0, peak = 0;
    for (float v : b.h.data) mean += v, peak = std::max(peak, double(std::abs(v)));
    CHECK(std::abs(mean / 20) < 1e-6);
    CHECK(peak == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("bank shape, zero mean per waveform, determinism") {
    SeededRng a(11), b(11);
    auto x = generate_muap_bank(4, 128, 20, a);
    auto y = generate_muap_bank(4, 128, 20, b);
    CHECK(x.h.dims == std::vector<uint32_t>{4, 128, 20});
    CHECK(x.h == y.h);
    CHECK(x.center == y.center);
    for (int j = 0; j < 4; ++j) {
        double peak = 0;
        for (int i = 0; i < 128; ++i) {
            double m = 0;
            for (int l = 0; l < 20; ++l) m += x.h.at(j, i, l), peak = std::max(peak, double(std::abs(x.h.at(j, i, l))));
            CHECK(std::abs(m) < 1e-5);
        }
        CHECK(peak <= 1.0 + 1e-6);
        CHECK(x.center[j] >= 0);
        CHECK(x.center[j] < 128);
    }
}

TEST_CASE("spike counts over 1000 seeds") {
    int lo2048 = 1 << 30, hi2048 = 0, lo512 = 1 << 30, hi512 = 0;
    for (uint64_t s = 0; s < 1000; ++s) {
        SeededRng r(s);
        for (auto& t : generate_spike_trains(4, 2048, 15, r).trains) lo2048 = std::min(lo2048, int(t.size())), hi2048 = std::max(hi2048, int(t.size()));
        for (auto& t : generate_spike_trains(4, 512, 15, r).trains) lo512 = std::min(lo512, int(t.size())), hi512 = std::max(hi512, int(t.size()));
    }
    CHECK(lo2048 >= 12);
    CHECK(hi2048 <= 18);
    CHECK(lo512 >= 2);
    CHECK(hi512 <= 6);
}

TEST_CASE("trains are increasing, in range, refractory") {
    SeededRng r(3);
    auto set = generate_spike_trains(16, 4096, 40, r);
    for (auto& t : set.trains)
        for (size_t k = 0; k < t.size(); ++k) {
            CHECK(t[k] >= 0);
            CHECK(t[k] < 4096);
            if (k) CHECK(t[k] - t[k - 1] >= kRefractory);
        }
}

TEST_CASE("unsatisfiable refractory period is an error") {
    SeededRng r(0);
    CHECK_THROWS_AS(generate_spike_trains(1, 512, 60, r), std::invalid_argument);  // 34 samples < 41
}

TEST_CASE("single spike copies the waveform") {
    SeededRng r(1);
    auto bank = generate_muap_bank(1, 1, 20, r);
    SpikeTrainSet tr;
    tr.duration = 200;
    tr.trains = {{100}};
    auto rec = mix(bank, tr, kInf, r);
    for (int t = 0; t < 200; ++t) {
        float want = (t >= 100 && t < 120) ? bank.h.at(0, 0, t - 100) : 0.0f;
        CHECK(rec.x.at(0, t) == want);
    }
}

TEST_CASE("noise-free mix equals the clean convolution bit-exactly") {
    SeededRng r(2);
    auto bank = generate_muap_bank(3, 128, 20, r);
    auto tr = generate_spike_trains(3, 512, 15, r);
    auto rec = mix(bank, tr, kInf, r);
    auto clean = convolve_clean(bank, tr);
    for (size_t k = 0; k < clean.size(); ++k) REQUIRE(rec.x[k] == float(clean[k]));
}

TEST_CASE("overlapping discharges superpose (brute-force oracle)") {
    SeededRng r(4);
    auto bank = generate_muap_bank(2, 3, 20, r);
    SpikeTrainSet tr;
    tr.duration = 80;
    tr.trains = {{30}, {35}};
    auto rec = mix(bank, tr, kInf, r);
    for (int i = 0; i < 3; ++i)
        for (int t = 0; t < 80; ++t) {
            double want = 0;
            if (t >= 30 && t < 50) want += bank.h.at(0, i, t - 30);
            if (t >= 35 && t < 55) want += bank.h.at(1, i, t - 35);
            CHECK(rec.x.at(i, t) == doctest::Approx(want).epsilon(1e-6));
        }
}

TEST_CASE("linearity across disjoint MU sets") {
    SeededRng r(5);
    auto bank = generate_muap_bank(2, 16, 20, r);
    auto tr = generate_spike_trains(2, 512, 15, r);
    auto both = convolve_clean(bank, tr);
    auto only = [&](int j) {
        SpikeTrainSet s = tr;
        s.trains[1 - j].clear();
        return convolve_clean(bank, s);
    };
    auto a = only(0), b = only(1);
    for (size_t k = 0; k < both.size(); ++k) CHECK(both[k] == doctest::Approx(a[k] + b[k]).epsilon(1e-12));
}

TEST_CASE("empirical SNR and regenerated clean part") {
    SeededRng r(6);
    auto bank = generate_muap_bank(4, 128, 20, r);
    auto tr = generate_spike_trains(4, 512, 15, r);
    auto rec = mix(bank, tr, 20.0, r);
    REQUIRE(rec.truth);
    auto clean = convolve_clean(rec.truth->first, rec.truth->second);
    double ps = 0, pn = 0;
    for (size_t k = 0; k < clean.size(); ++k) {
        ps += clean[k] * clean[k];
        double n = rec.x[k] - clean[k];
        pn += n * n;
    }
    CHECK(std::abs(10 * std::log10(ps / pn) - 20.0) < 0.5);
}

TEST_CASE("gesture dataset counts, repetitions and disjoint classes") {
    GestureDatasetConfig cfg;
    cfg.windows_per_rep = 4;
    cfg.seed = 9;
    auto ds = generate_gesture_dataset(cfg);
    CHECK(ds.size() == 4 * 5 * 4);
    std::set<int> reps;
    for (auto& w : ds) {
        CHECK(w.window.dims == std::vector<uint32_t>{512, 8, 16});
        reps.insert(w.repetition);
    }
    CHECK(reps == std::set<int>{0, 1, 2, 3, 4});

    auto all = generate_repetitions(cfg);
    std::map<int, std::vector<int>> mus;
    for (auto& rep : all) {
        if (mus.count(rep.label)) CHECK(mus[rep.label] == rep.mus);
        mus[rep.label] = rep.mus;
    }
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b)
            for (int m : mus[a]) CHECK(std::find(mus[b].begin(), mus[b].end(), m) == mus[b].end());
}

TEST_CASE("too many classes for the pool is an error") {
    GestureDatasetConfig cfg;
    cfg.pool_size = 8;  // 4 classes x 4 MUs need 16
    CHECK_THROWS_AS(generate_gesture_dataset(cfg), std::invalid_argument);
}

TEST_CASE("grid conversion round trip") {
    SeededRng r(7);
    Tensor x({128, 30});
    for (auto& v : x.data) v = float(r.normal());
    auto g = to_grid(x);
    CHECK(g.dims == std::vector<uint32_t>{30, 8, 16});
    CHECK(g.at(5, 1, 9) == x.at(grid_channel(1, 9), 5));
    CHECK(from_grid(g) == x);
}
