#include "hydra/muap.hpp"

#include <algorithm>
#include <stdexcept>

namespace hydra {

MuapEstimate sta_muap(const Tensor& x, const SpikeTrain& spikes, int l, int sub_win, int source_idx) {
    if (x.rank() != 2 || x.dims[0] != kChannels) throw std::invalid_argument("sta_muap: expected [128, D], got " + dims_str(x.dims));
    if (l < 1 || sub_win < 1) throw std::invalid_argument("sta_muap: l and sub_win must be positive");
    const int D = int(x.dims[1]);
    MuapEstimate est;
    est.source_idx = source_idx;
    est.waveforms = Tensor({uint32_t(kGridRows), uint32_t(kGridCols), uint32_t(l)});
    const int nsub = (D + sub_win - 1) / sub_win;
    std::vector<double> acc(size_t(kChannels) * l);
    for (int k = 0; k < nsub; ++k) {
        const int lo = k * sub_win, hi = std::min(D, lo + sub_win);
        std::fill(acc.begin(), acc.end(), 0.0);
        int n = 0;
        for (int t : spikes) {
            if (t < lo || t >= hi || t + l > D) continue;
            for (int ch = 0; ch < kChannels; ++ch)
                for (int s = 0; s < l; ++s) acc[size_t(ch) * l + s] += x.at(ch, t + s);
            if (est.first_spike < 0 || t < est.first_spike) est.first_spike = t;
            ++n;
        }
        if (!n) continue;
        est.empty = false;
        for (int ch = 0; ch < kChannels; ++ch) {
            auto [r, c] = grid_pos(ch);
            for (int s = 0; s < l; ++s) est.waveforms.at(r, c, s) += float(acc[size_t(ch) * l + s] / n);
        }
    }
    return est;
}

MuapImage p2p_image(const MuapEstimate& m) {
    MuapImage im;
    im.source_idx = m.source_idx;
    im.first_spike = m.first_spike;
    const uint32_t R = m.waveforms.dims[0], C = m.waveforms.dims[1], L = m.waveforms.dims[2];
    im.p2p = Tensor({R, C});
    for (uint32_t r = 0; r < R; ++r)
        for (uint32_t c = 0; c < C; ++c) {
            if (L == 0) continue;
            float mn = m.waveforms.at(r, c, 0), mx = mn;
            for (uint32_t s = 1; s < L; ++s) {
                mn = std::min(mn, m.waveforms.at(r, c, s));
                mx = std::max(mx, m.waveforms.at(r, c, s));
            }
            im.p2p.at(r, c) = mx - mn;
        }
    return im;
}

double p2p_energy(const MuapImage& im) {
    double e = 0;
    for (float v : im.p2p.data) e += double(v) * v;
    return e;
}

Tensor muap_feature_stack(const std::vector<MuapImage>& images) {
    if (images.size() > size_t(kMaxSources)) throw std::invalid_argument("muap_feature_stack: more than 7 images");
    std::vector<const MuapImage*> order;
    for (auto& im : images) {
        if (im.p2p.dims != std::vector<uint32_t>{uint32_t(kGridRows), uint32_t(kGridCols)})
            throw std::invalid_argument("muap_feature_stack: images must be [8, 16]");
        order.push_back(&im);
    }
    std::stable_sort(order.begin(), order.end(), [](const MuapImage* a, const MuapImage* b) {
        double ea = p2p_energy(*a), eb = p2p_energy(*b);
        if (ea != eb) return ea > eb;
        // no spike (-1) sorts last among ties
        unsigned fa = unsigned(a->first_spike), fb = unsigned(b->first_spike);
        return fa < fb;
    });
    Tensor out({uint32_t(kMaxSources), uint32_t(kGridRows), uint32_t(kGridCols)});
    for (size_t k = 0; k < order.size(); ++k)
        std::copy(order[k]->p2p.data.begin(), order[k]->p2p.data.end(), out.data.begin() + k * kGridRows * kGridCols);
    return out;
}

}  // namespace hydra
