#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "hydra/rng.hpp"
#include "hydra/tensor.hpp"

namespace hydra {

constexpr double kFs = 2048.0;
constexpr int kGridRows = 8;
constexpr int kGridCols = 16;
constexpr int kChannels = 128;
constexpr int kRefractory = 41;

// Electrode layout: channels 0-63 form the extensor 8x8 grid (row-major), 64-127
// the flexor grid, placed side by side along the 16-column axis.
std::pair<int, int> grid_pos(int ch);
int grid_channel(int row, int col);

using SpikeTrain = std::vector<int>;

struct MuapBank {
    Tensor h;                  // [N, M, L]
    std::vector<int> center;   // spatial center channel per MU
    int n() const { return int(h.dims[0]); }
    int m() const { return int(h.dims[1]); }
    int l() const { return int(h.dims[2]); }
};

struct SpikeTrainSet {
    std::vector<SpikeTrain> trains;
    int duration = 0;
    double fs = kFs;
};

struct SignalRecord {
    Tensor x;  // [M, D]
    std::optional<std::pair<MuapBank, SpikeTrainSet>> truth;
    double snr_db = std::numeric_limits<double>::infinity();
};

MuapBank generate_muap_bank(int n_mus, int m_channels, int l, SeededRng& rng);
SpikeTrainSet generate_spike_trains(int n_mus, int duration, double rate_hz, SeededRng& rng,
                                    int refractory = kRefractory);

// Noise-free convolution of the trains with the bank, [M, D] in double precision.
std::vector<double> convolve_clean(const MuapBank& bank, const SpikeTrainSet& trains);

// snr_db = +inf disables noise.
SignalRecord mix(const MuapBank& bank, const SpikeTrainSet& trains, double snr_db, SeededRng& rng);

struct GestureDatasetConfig {
    int num_classes = 4;
    int reps_per_class = 5;
    int windows_per_rep = 10;
    int window_len = 512;
    int skip = 256;
    int mus_per_class = 4;
    int pool_size = 0;          // 0 -> num_classes * mus_per_class
    double firing_rate_hz = 15.0;
    double snr_db = 20.0;
    uint64_t seed = 0;          // subject seed: fixes the MU pool
};

struct Repetition {
    int label = 0;
    int repetition = 0;
    SignalRecord record;        // [128, rep_len]
    std::vector<int> mus;       // active pool indices
};

struct LabeledWindow {
    Tensor window;              // [window_len, 8, 16]
    int label = 0;
    int repetition = 0;
};

int repetition_length(const GestureDatasetConfig& cfg);
MuapBank gesture_pool(const GestureDatasetConfig& cfg);
std::vector<Repetition> generate_repetitions(const GestureDatasetConfig& cfg);
std::vector<LabeledWindow> generate_gesture_dataset(const GestureDatasetConfig& cfg);

// [128, D] <-> [D, 8, 16] layout conversions
Tensor to_grid(const Tensor& x_cd);
Tensor from_grid(const Tensor& w_dgg);

}  // namespace hydra
