#include "hydra/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hydra {

std::pair<int, int> grid_pos(int ch) {
    if (ch < 64) return {ch / 8, ch % 8};
    return {(ch - 64) / 8, 8 + (ch - 64) % 8};
}

int grid_channel(int row, int col) { return col < 8 ? row * 8 + col : 64 + row * 8 + (col - 8); }

MuapBank generate_muap_bank(int n_mus, int m_channels, int l, SeededRng& rng) {
    if (n_mus < 1 || m_channels < 1 || l < 4) throw std::invalid_argument("generate_muap_bank: need n_mus>=1, m>=1, l>=4");
    MuapBank bank;
    bank.h = Tensor({uint32_t(n_mus), uint32_t(m_channels), uint32_t(l)});
    bank.center.resize(n_mus);
    const double mid = 0.5 * (l - 1);
    std::vector<double> w(l);
    for (int j = 0; j < n_mus; ++j) {
        int c0 = int(rng.below(uint64_t(m_channels)));
        bank.center[j] = c0;
        auto [r0, k0] = grid_pos(c0);
        double width = rng.uniform(1.5, 3.0);
        double polarity = rng.uniform() < 0.5 ? -1.0 : 1.0;
        double sigma = rng.uniform(1.0, 2.5);
        for (int i = 0; i < m_channels; ++i) {
            auto [r, k] = grid_pos(i);
            double d2 = double((r - r0) * (r - r0) + (k - k0) * (k - k0));
            double dist = std::sqrt(d2);
            double atten = std::exp(-d2 / (2 * sigma * sigma));
            // conduction along the fibre direction (columns) delays the wave; spread widens it
            double shift = 0.4 * (k - k0);
            double wd = width * (1.0 + 0.1 * dist);
            double mean = 0;
            for (int s = 0; s < l; ++s) {
                double u = (s - mid - shift) / wd;
                w[s] = -u * std::exp(-0.5 * u * u);
                mean += w[s];
            }
            mean /= l;
            double peak = 0;
            for (auto& v : w) {
                v -= mean;
                peak = std::max(peak, std::abs(v));
            }
            for (int s = 0; s < l; ++s) bank.h.at(j, i, s) = float(polarity * atten * w[s] / peak);
        }
    }
    return bank;
}

SpikeTrainSet generate_spike_trains(int n_mus, int duration, double rate_hz, SeededRng& rng, int refractory) {
    if (duration < 1 || rate_hz <= 0) throw std::invalid_argument("generate_spike_trains: need duration>=1, rate>0");
    double period = kFs / rate_hz;
    if (period < refractory)
        throw std::invalid_argument("firing rate " + std::to_string(rate_hz) + " Hz violates the " +
                                    std::to_string(refractory) + "-sample refractory period");
    SpikeTrainSet set;
    set.duration = duration;
    set.trains.resize(n_mus);
    for (auto& tr : set.trains) {
        double t = rng.uniform(0.0, period);
        while (true) {
            int ti = int(std::floor(t));
            if (ti >= duration) break;
            if (tr.empty() || ti - tr.back() >= refractory) tr.push_back(ti);
            double isi = period * (1.0 + rng.uniform(-0.2, 0.2));
            t += std::max(isi, double(refractory));
        }
    }
    return set;
}

std::vector<double> convolve_clean(const MuapBank& bank, const SpikeTrainSet& trains) {
    if (size_t(bank.n()) != trains.trains.size()) throw std::invalid_argument("mix: bank and trains disagree on MU count");
    const int M = bank.m(), L = bank.l(), D = trains.duration;
    std::vector<double> x(size_t(M) * D, 0.0);
    for (int j = 0; j < bank.n(); ++j)
        for (int t0 : trains.trains[j])
            for (int i = 0; i < M; ++i)
                for (int l = 0; l < L && t0 + l < D; ++l) x[size_t(i) * D + t0 + l] += bank.h.at(j, i, l);
    return x;
}

SignalRecord mix(const MuapBank& bank, const SpikeTrainSet& trains, double snr_db, SeededRng& rng) {
    auto clean = convolve_clean(bank, trains);
    const int M = bank.m(), D = trains.duration;
    SignalRecord rec;
    rec.snr_db = snr_db;
    rec.x = Tensor({uint32_t(M), uint32_t(D)});
    double sd = 0;
    if (std::isfinite(snr_db)) {
        double p = 0;
        for (double v : clean) p += v * v;
        p /= double(clean.size());
        sd = std::sqrt(p / std::pow(10.0, snr_db / 10.0));
    }
    for (size_t k = 0; k < clean.size(); ++k) rec.x[k] = float(sd > 0 ? clean[k] + sd * rng.normal() : clean[k]);
    rec.truth = std::make_pair(bank, trains);
    return rec;
}

int repetition_length(const GestureDatasetConfig& cfg) { return cfg.window_len + (cfg.windows_per_rep - 1) * cfg.skip; }

MuapBank gesture_pool(const GestureDatasetConfig& cfg) {
    int pool = cfg.pool_size > 0 ? cfg.pool_size : cfg.num_classes * cfg.mus_per_class;
    if (cfg.num_classes < 1 || cfg.mus_per_class < 1) throw std::invalid_argument("dataset: need >=1 class and >=1 MU per class");
    if (cfg.num_classes * cfg.mus_per_class > pool)
        throw std::invalid_argument("dataset: " + std::to_string(cfg.num_classes) + " classes need " +
                                    std::to_string(cfg.num_classes * cfg.mus_per_class) + " disjoint MUs, pool has " +
                                    std::to_string(pool));
    SeededRng rng = SeededRng(cfg.seed).fork(0);
    return generate_muap_bank(pool, kChannels, 20, rng);
}

std::vector<Repetition> generate_repetitions(const GestureDatasetConfig& cfg) {
    if (cfg.reps_per_class < 1 || cfg.windows_per_rep < 1) throw std::invalid_argument("dataset: need >=1 rep and window");
    MuapBank pool = gesture_pool(cfg);
    // class c owns pool MUs [c*k, (c+1)*k) after a subject-specific shuffle
    std::vector<int> order(pool.n());
    std::iota(order.begin(), order.end(), 0);
    SeededRng prng = SeededRng(cfg.seed).fork(1);
    prng.shuffle(order);
    const int D = repetition_length(cfg);
    std::vector<Repetition> reps;
    for (int c = 0; c < cfg.num_classes; ++c) {
        std::vector<int> mus(order.begin() + c * cfg.mus_per_class, order.begin() + (c + 1) * cfg.mus_per_class);
        std::sort(mus.begin(), mus.end());
        MuapBank sub;
        sub.h = Tensor({uint32_t(mus.size()), uint32_t(kChannels), uint32_t(pool.l())});
        for (size_t a = 0; a < mus.size(); ++a) {
            sub.center.push_back(pool.center[mus[a]]);
            std::copy_n(pool.h.data.begin() + size_t(mus[a]) * kChannels * pool.l(), size_t(kChannels) * pool.l(),
                        sub.h.data.begin() + a * kChannels * pool.l());
        }
        for (int r = 0; r < cfg.reps_per_class; ++r) {
            SeededRng rng = SeededRng(cfg.seed).fork(1000 + uint64_t(c) * 1000 + uint64_t(r));
            double rate = cfg.firing_rate_hz * rng.uniform(0.9, 1.1);
            auto trains = generate_spike_trains(int(mus.size()), D, rate, rng);
            Repetition rep;
            rep.label = c;
            rep.repetition = r;
            rep.mus = mus;
            rep.record = mix(sub, trains, cfg.snr_db, rng);
            reps.push_back(std::move(rep));
        }
    }
    return reps;
}

Tensor to_grid(const Tensor& x) {
    if (x.rank() != 2 || x.dims[0] != kChannels) throw std::invalid_argument("to_grid: expected [128, D], got " + dims_str(x.dims));
    const uint32_t D = x.dims[1];
    Tensor g({D, uint32_t(kGridRows), uint32_t(kGridCols)});
    for (int ch = 0; ch < kChannels; ++ch) {
        auto [r, c] = grid_pos(ch);
        for (uint32_t t = 0; t < D; ++t) g.at(t, r, c) = x.at(ch, t);
    }
    return g;
}

Tensor from_grid(const Tensor& g) {
    if (g.rank() != 3 || g.dims[1] != kGridRows || g.dims[2] != kGridCols)
        throw std::invalid_argument("from_grid: expected [D, 8, 16], got " + dims_str(g.dims));
    const uint32_t D = g.dims[0];
    Tensor x({uint32_t(kChannels), D});
    for (int ch = 0; ch < kChannels; ++ch) {
        auto [r, c] = grid_pos(ch);
        for (uint32_t t = 0; t < D; ++t) x.at(ch, t) = g.at(t, r, c);
    }
    return x;
}

std::vector<LabeledWindow> generate_gesture_dataset(const GestureDatasetConfig& cfg) {
    std::vector<LabeledWindow> out;
    for (auto& rep : generate_repetitions(cfg)) {
        const Tensor& x = rep.record.x;
        for (int k = 0; k < cfg.windows_per_rep; ++k) {
            Tensor w({uint32_t(kChannels), uint32_t(cfg.window_len)});
            for (int ch = 0; ch < kChannels; ++ch)
                for (int t = 0; t < cfg.window_len; ++t) w.at(ch, t) = x.at(ch, k * cfg.skip + t);
            out.push_back({to_grid(w), rep.label, rep.repetition});
        }
    }
    return out;
}

}  // namespace hydra
