#pragma once

#include <vector>

#include "hydra/signal_model.hpp"
#include "hydra/tensor.hpp"

namespace hydra {

constexpr int kMaxSources = 7;

struct MuapEstimate {
    Tensor waveforms;      // [8, 16, L]
    int source_idx = 0;
    int first_spike = -1;  // earliest discharge used, -1 if none
    bool empty = true;     // no spike contributed to any sub-window
};

struct MuapImage {
    Tensor p2p;            // [8, 16]
    int source_idx = 0;
    int first_spike = -1;
};

// x_win is [128, D]. Each sub-window averages the l-sample segments that start at its
// spikes; the sub-window averages are summed.
MuapEstimate sta_muap(const Tensor& x_win, const SpikeTrain& spikes, int l = 20, int sub_win = 256, int source_idx = 0);
MuapImage p2p_image(const MuapEstimate& m);
double p2p_energy(const MuapImage& im);
// Sorted by descending p2p energy (ties: earlier first spike), zero-padded to 7 slots.
Tensor muap_feature_stack(const std::vector<MuapImage>& images);

}  // namespace hydra
