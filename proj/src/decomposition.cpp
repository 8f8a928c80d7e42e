#include "hydra/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <lapacke.h>

namespace hydra {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::MatrixXd to_matrix(const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("decomposition: expected [M, D], got " + dims_str(x.dims));
    MatrixXd m(x.dims[0], x.dims[1]);
    for (uint32_t i = 0; i < x.dims[0]; ++i)
        for (uint32_t t = 0; t < x.dims[1]; ++t) m(i, t) = x.at(i, t);
    return m;
}

MatrixXd extend(const MatrixXd& x, int T) {
    if (T < 1) throw std::invalid_argument("extend: extension factor must be >= 1");
    const Eigen::Index M = x.rows(), D = x.cols();
    MatrixXd out = MatrixXd::Zero(M * T, D);
    for (int r = 0; r < T && r < D; ++r) out.block(r * M, r, M, D - r) = x.leftCols(D - r);
    return out;
}

namespace {

// Eigenpairs of symmetric S above the floor / subspace cut, descending. The full spectrum is
// needed for the median, but only the retained eigenvectors are computed (LAPACK MRRR).
void retained_eigenpairs(const MatrixXd& S, double eig_floor, double subspace_factor, VectorXd& lam_out, MatrixXd& v_out) {
    const lapack_int n = lapack_int(S.rows());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw DecompositionError(DecompErrorKind::NumericalFailure, "whiten: eigensolver failed");
    VectorXd lam = es.eigenvalues().reverse();
    double cut = eig_floor * lam(0);
    if (subspace_factor > 0) {
        std::vector<double> nz;
        for (Eigen::Index i = 0; i < lam.size(); ++i)
            if (lam(i) > cut) nz.push_back(lam(i));
        if (!nz.empty()) {
            std::nth_element(nz.begin(), nz.begin() + nz.size() / 2, nz.end());
            double med = nz[nz.size() / 2];
            if (nz.size() % 2 == 0) {
                double lo = *std::max_element(nz.begin(), nz.begin() + nz.size() / 2);
                med = 0.5 * (med + lo);
            }
            cut = std::max(cut, subspace_factor * med);
        }
    }
    lapack_int r = 0;
    while (r < n && lam(r) > cut) ++r;
    lam_out.resize(r);
    v_out.resize(n, r);
    if (r == 0) return;

    MatrixXd a = S;  // column-major, overwritten
    VectorXd w(n);
    MatrixXd z(n, r);
    std::vector<lapack_int> isuppz(2 * size_t(r));
    lapack_int m = 0;
    lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, a.data(), n, 0.0, 0.0, n - r + 1, n, 0.0, &m, w.data(),
                                     z.data(), n, isuppz.data());
    if (info != 0 || m != r) throw DecompositionError(DecompErrorKind::NumericalFailure, "whiten: eigenvector solve failed");
    for (lapack_int i = 0; i < r; ++i) {  // ascending -> descending
        lam_out(i) = w(r - 1 - i);
        v_out.col(i) = z.col(r - 1 - i);
    }
}

ExtendedObservation whiten_impl(const MatrixXd& xe, double eig_floor, double subspace_factor, const MatrixXd* gram) {
    const Eigen::Index MT = xe.rows(), D = xe.cols();
    if (D < 2) throw DecompositionError(DecompErrorKind::DegenerateInput, "whiten: need at least 2 samples");
    if (!xe.allFinite()) throw DecompositionError(DecompErrorKind::NumericalFailure, "whiten: non-finite input");
    ExtendedObservation obs;
    obs.mean = xe.rowwise().mean();
    MatrixXd xc = xe.colwise() - obs.mean;
    if (xc.cwiseAbs().maxCoeff() == 0.0) throw DecompositionError(DecompErrorKind::DegenerateInput, "whiten: input has no variance");

    // Eigen-decompose whichever of covariance (MT x MT) or Gram (D x D) is smaller;
    // they share the non-zero spectrum.
    const bool use_gram = D < MT;
    MatrixXd S;
    if (use_gram && gram) {
        // centre the raw Gram: H G H with H = I - 11'/D
        VectorXd g = gram->rowwise().mean();
        double mu = g.mean();
        S = (*gram - g.replicate(1, D) - g.transpose().replicate(D, 1)).array() + mu;
        S /= double(D);
    } else {
        S = use_gram ? MatrixXd(xc.transpose() * xc / double(D)) : MatrixXd(xc * xc.transpose() / double(D));
    }
    VectorXd lam;
    MatrixXd Vk;
    retained_eigenpairs(S, eig_floor, subspace_factor, lam, Vk);
    const Eigen::Index r = lam.size();
    obs.eigenvalues = lam;
    if (r == 0) {
        obs.z = MatrixXd(0, D);
        obs.whitener = MatrixXd(0, MT);
        return obs;
    }
    VectorXd inv = lam.cwiseInverse();
    if (use_gram) {
        obs.z = std::sqrt(double(D)) * Vk.transpose();
        obs.whitener = inv.asDiagonal() * (Vk.transpose() * xc.transpose()) / std::sqrt(double(D));
    } else {
        obs.whitener = inv.cwiseSqrt().asDiagonal() * Vk.transpose();
        obs.z = obs.whitener * xc;
    }
    return obs;
}

}  // namespace

ExtendedObservation whiten(const MatrixXd& xe, double eig_floor, double subspace_factor) {
    return whiten_impl(xe, eig_floor, subspace_factor, nullptr);
}

ExtendedObservation whiten_extended(const MatrixXd& x, int T, double eig_floor, double subspace_factor) {
    MatrixXd xe = extend(x, T);
    if (x.cols() >= xe.rows()) return whiten_impl(xe, eig_floor, subspace_factor, nullptr);
    // Gram of the extended matrix from channel inner products along diagonals:
    // G(a, b) = sum_{k < T, k <= min(a, b)} C(a - k, b - k).
    const Eigen::Index D = x.cols();
    MatrixXd C = x.transpose() * x;
    MatrixXd G(D, D);
    for (Eigen::Index a = 0; a < D; ++a)
        for (Eigen::Index b = a; b < D; ++b) {
            double acc = 0;
            for (Eigen::Index k = 0; k < T && k <= a; ++k) acc += C(a - k, b - k);
            G(a, b) = G(b, a) = acc;
        }
    return whiten_impl(xe, eig_floor, subspace_factor, &G);
}

namespace {

std::vector<double> project(const ExtendedObservation& obs, const VectorXd& w) {
    VectorXd s = obs.z.transpose() * w;
    return std::vector<double>(s.data(), s.data() + s.size());
}

// local maxima of e, strongest first, kept only when >= refr from every stronger one
std::vector<int> refractory_peaks(const std::vector<double>& e, int refr, size_t limit = SIZE_MAX) {
    std::vector<int> cand;
    for (int i = 1; i + 1 < int(e.size()); ++i)
        if (e[i] >= e[i - 1] && e[i] > e[i + 1]) cand.push_back(i);
    std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) { return e[a] > e[b]; });
    std::vector<int> taken;
    for (int i : cand) {
        bool ok = true;
        for (int j : taken)
            if (std::abs(i - j) < refr) {
                ok = false;
                break;
            }
        if (ok) {
            taken.push_back(i);
            if (taken.size() >= limit) break;
        }
    }
    return taken;
}

VectorXd normalized(const VectorXd& v) {
    double n = v.norm();
    if (!(n > 0) || !std::isfinite(n)) throw DecompositionError(DecompErrorKind::NumericalFailure, "zero or non-finite vector");
    return v / n;
}

VectorXd pooled(const ExtendedObservation& obs, const std::vector<int>& idx) {
    VectorXd c = VectorXd::Zero(obs.rank());
    for (int t : idx) c += obs.z.col(t);
    return c / double(idx.size());
}

}  // namespace

SpikeDetection detect_spikes(const std::vector<double>& s_in, const DecompositionParams& p) {
    SpikeDetection out;
    for (double v : s_in)
        if (!std::isfinite(v)) throw DecompositionError(DecompErrorKind::NumericalFailure, "detect_spikes: non-finite source");
    if (s_in.empty()) return out;
    auto [mn, mx] = std::minmax_element(s_in.begin(), s_in.end());
    out.flipped = std::abs(*mn) > std::abs(*mx);
    std::vector<double> e(s_in.size());
    for (size_t i = 0; i < e.size(); ++i) e[i] = s_in[i] * s_in[i];
    auto peaks = refractory_peaks(e, p.refractory_samples);
    std::sort(peaks.begin(), peaks.end());
    if (peaks.size() < 2) return out;

    std::vector<double> h(peaks.size());
    for (size_t i = 0; i < peaks.size(); ++i) h[i] = e[peaks[i]];
    double lo = *std::min_element(h.begin(), h.end()), hi = *std::max_element(h.begin(), h.end());
    std::vector<char> low(h.size());
    for (int it = 0; it < 100; ++it) {
        double sl = 0, sh = 0;
        int nl = 0, nh = 0;
        for (size_t i = 0; i < h.size(); ++i) {
            low[i] = std::abs(h[i] - lo) <= std::abs(h[i] - hi);
            if (low[i]) sl += h[i], ++nl;
            else sh += h[i], ++nh;
        }
        double nlo = nl ? sl / nl : lo, nhi = nh ? sh / nh : hi;
        if (nlo == lo && nhi == hi) break;
        lo = nlo;
        hi = nhi;
    }
    double dw = 0;
    for (size_t i = 0; i < h.size(); ++i) dw += low[i] ? std::abs(h[i] - lo) : std::abs(h[i] - hi);
    dw /= double(h.size());
    double db = std::abs(hi - lo);
    double den = std::max(db, dw);
    out.sil = den > 0 ? (db - dw) / den : 0.0;
    for (size_t i = 0; i < h.size(); ++i)
        if (!low[i]) out.spikes.push_back(peaks[i]);
    return out;
}

VectorXd mmse_refine(const ExtendedObservation& obs, VectorXd w, const DecompositionParams& p) {
    auto det = detect_spikes(project(obs, w), p);
    for (int it = 0; it < p.pool_iters && !det.spikes.empty(); ++it) {
        VectorXd wn = normalized(pooled(obs, det.spikes));
        auto next = detect_spikes(project(obs, wn), p);
        w = wn;
        if (next.spikes == det.spikes) break;
        det = std::move(next);
    }
    return w;
}

VectorXd gckc_init_and_refine(const ExtendedObservation& obs, const std::set<int>& used, const DecompositionParams& p) {
    const Eigen::Index D = obs.z.cols();
    if (obs.rank() == 0) throw DecompositionError(DecompErrorKind::Exhausted, "gckc: empty whitened subspace");
    int t0 = -1;
    double best = -1;
    for (Eigen::Index t = 0; t < D; ++t) {
        if (used.count(int(t))) continue;
        double a = obs.z.col(t).squaredNorm();
        if (a > best) best = a, t0 = int(t);
    }
    if (t0 < 0) throw DecompositionError(DecompErrorKind::Exhausted, "gckc: every time index already used");
    VectorXd w = normalized(obs.z.col(t0));

    auto contrast = [&](const VectorXd& v) {
        VectorXd u = obs.z.transpose() * v;
        return u.array().pow(4).mean();
    };
    double J = contrast(w);
    for (int it = 0; it < p.gradient_iters; ++it) {
        VectorXd u = obs.z.transpose() * w;
        VectorXd g = 4.0 * obs.z * u.array().cube().matrix() / double(D);
        g -= g.dot(w) * w;  // tangent to the sphere
        if (g.norm() < 1e-14) break;
        g.normalize();
        double lr = p.gradient_lr;
        for (int bt = 0; bt < 30; ++bt, lr *= 0.5) {
            VectorXd cand = normalized(w + lr * g);
            double Jc = contrast(cand);
            if (Jc >= J) {
                w = cand;
                J = Jc;
                break;
            }
        }
    }
    return w;
}

VectorXd fastica_fixed_point(const ExtendedObservation& obs, const VectorXd& w0, const std::vector<VectorXd>& accepted,
                             const DecompositionParams& p, int* iters, bool* converged) {
    const double D = double(obs.z.cols());
    auto deflate = [&](VectorXd v) {
        for (const auto& b : accepted) v -= b.dot(v) * b;
        return normalized(v);
    };
    VectorXd w = deflate(w0);
    bool conv = false;
    int k = 0;
    while (k < p.fixed_point_max_iters) {
        ++k;
        VectorXd u = obs.z.transpose() * w;
        VectorXd wn = obs.z * u.array().cube().matrix() / D - 3.0 * u.array().square().mean() * w;
        if (!wn.allFinite() || wn.norm() == 0.0)
            throw DecompositionError(DecompErrorKind::NumericalFailure, "fastica: degenerate update");
        wn = deflate(wn);
        double c = std::abs(wn.dot(w));
        w = wn;
        if (c > 1.0 - p.fixed_point_tol) {
            conv = true;
            break;
        }
    }
    if (iters) *iters = k;
    if (converged) *converged = conv;
    return w;
}

namespace {

double roa_at(const std::vector<int>& est, const std::vector<int>& truth, int tol, int shift) {
    if (est.empty() && truth.empty()) return 0.0;
    std::vector<char> used(est.size(), 0);
    int m = 0;
    for (int t : truth)
        for (size_t k = 0; k < est.size(); ++k)
            if (!used[k] && std::abs(est[k] - shift - t) <= tol) {
                used[k] = 1;
                ++m;
                break;
            }
    return double(m) / double(est.size() + truth.size() - m);
}

}  // namespace

double rate_of_agreement(const std::vector<int>& est, const std::vector<int>& truth, int tol, int dmin, int dmax) {
    double best = 0;
    for (int d = dmin; d <= dmax; ++d) best = std::max(best, roa_at(est, truth, tol, d));
    return best;
}

namespace {

struct Candidate {
    VectorXd w;
    std::vector<int> firings;
    double sil = -1;
    int hits = 0;
};

// Spike-triggered mean of xp (zero-padded by `margin` on both sides) over [t+lo, t+hi).
VectorXd trigger_template(const MatrixXd& xp, int margin, const std::vector<int>& times, int lo, int hi) {
    VectorXd acc = VectorXd::Zero(xp.rows() * (hi - lo));
    int n = 0;
    for (int t : times) {
        int a = t + margin + lo;
        if (a < 0 || a + (hi - lo) > xp.cols()) continue;
        for (int k = 0; k < hi - lo; ++k) acc.segment(k * xp.rows(), xp.rows()) += xp.col(a + k);
        ++n;
    }
    if (n) acc /= double(n);
    return acc;
}

// Same motor unit: a constant delay makes enough discharges coincide AND the
// signal around the coinciding discharges has the same spatio-temporal shape.
bool same_unit(const MatrixXd& xp, int margin, const std::vector<int>& a, const std::vector<int>& b,
               const DecompositionParams& p) {
    const int span = p.max_delay();
    const int lo = -(span + 7), hi = 5;
    VectorXd tb;
    for (int d = -span; d <= span; ++d) {
        if (roa_at(a, b, p.dedup_tolerance_samples, -d) <= p.dedup_overlap_frac) continue;
        if (p.dedup_template_corr <= -1.0) return true;
        if (tb.size() == 0) tb = trigger_template(xp, margin, b, lo, hi);
        std::vector<int> as(a);
        for (auto& t : as) t += d;
        VectorXd ta = trigger_template(xp, margin, as, lo, hi);
        double na = ta.norm(), nb = tb.norm();
        if (na > 0 && nb > 0 && ta.dot(tb) / (na * nb) > p.dedup_template_corr) return true;
    }
    return false;
}

// Shift discharges so the spike-triggered MUAP window [t, t+L) captures the most energy.
std::vector<int> align_onsets(const MatrixXd& x, const std::vector<int>& firings, int L, int span) {
    double best = -1;
    int bd = 0;
    for (int d = -span; d <= 0; ++d) {
        MatrixXd acc = MatrixXd::Zero(x.rows(), L);
        int n = 0;
        for (int t : firings)
            if (t + d >= 0 && t + d + L <= x.cols()) {
                acc += x.middleCols(t + d, L);
                ++n;
            }
        if (!n) continue;
        double e = (acc / double(n)).squaredNorm();
        if (e > best) best = e, bd = d;
    }
    std::vector<int> out;
    for (int t : firings) out.push_back(t + bd);
    return out;
}

SourceEstimate finish(const ExtendedObservation& obs, const MatrixXd& xpad, int D, const VectorXd& w,
                      const DecompositionParams& p) {
    SourceEstimate s;
    s.w = w;
    s.s_hat = project(obs, w);
    auto det = detect_spikes(s.s_hat, p);
    if (det.flipped) {
        s.w = -s.w;
        for (auto& v : s.s_hat) v = -v;
    }
    s.firings = det.spikes;
    s.sil = det.sil;
    for (int t : align_onsets(xpad, s.firings, p.muap_len, p.muap_len + p.extension_factor))
        if (t >= 0 && t < D) s.spikes.push_back(t);
    return s;
}

std::vector<SourceEstimate> multistart(const ExtendedObservation& obs, const MatrixXd& xpad, int D,
                                       const DecompositionParams& p) {
    const int N = int(obs.z.cols());
    VectorXd act = obs.z.colwise().squaredNorm().transpose();
    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return act(a) > act(b); });
    std::vector<int> inits;
    for (int t : order) {
        bool ok = true;
        for (int c : inits)
            if (std::abs(t - c) < p.init_separation) {
                ok = false;
                break;
            }
        if (ok) inits.push_back(t);
        if (int(inits.size()) >= p.num_inits) break;
    }

    std::map<std::vector<int>, Candidate> pool;
    std::vector<double> e(N);
    for (int t0 : inits) {
        VectorXd w0 = normalized(obs.z.col(t0));
        auto s = project(obs, w0);
        for (int i = 0; i < N; ++i) e[i] = s[i] * s[i];
        auto pk = refractory_peaks(e, p.refractory_samples, size_t(p.seed_peaks));
        for (size_t k = 2; k <= pk.size(); ++k) {
            std::vector<int> head(pk.begin(), pk.begin() + k);
            VectorXd w = mmse_refine(obs, normalized(pooled(obs, head)), p);
            auto det = detect_spikes(project(obs, w), p);
            if (det.sil < p.sil_threshold || int(det.spikes.size()) < p.min_spikes) continue;
            auto [it, fresh] = pool.try_emplace(det.spikes);
            if (fresh) {
                it->second.w = w;
                it->second.firings = det.spikes;
                it->second.sil = det.sil;
            }
            it->second.hits++;
        }
    }
    std::vector<const Candidate*> ranked;
    for (auto& [k, c] : pool) ranked.push_back(&c);
    std::stable_sort(ranked.begin(), ranked.end(), [](const Candidate* a, const Candidate* b) {
        if (a->sil != b->sil) return a->sil > b->sil;
        return a->hits > b->hits;
    });

    const int margin = p.max_delay() + 8;
    MatrixXd xm = MatrixXd::Zero(xpad.rows(), xpad.cols() + 2 * margin);
    xm.middleCols(margin, xpad.cols()) = xpad;
    std::vector<SourceEstimate> out;
    for (const Candidate* c : ranked) {
        bool dup = false;
        for (const auto& a : out)
            if (same_unit(xm, margin, c->firings, a.firings, p)) {
                dup = true;
                break;
            }
        if (dup) continue;
        out.push_back(finish(obs, xpad, D, c->w, p));
        if (int(out.size()) >= p.max_sources) break;
    }
    return out;
}

bool coincident(const std::vector<int>& a, const std::vector<int>& b, const DecompositionParams& p) {
    return roa_at(a, b, p.dedup_tolerance_samples, 0) > p.dedup_overlap_frac;
}

std::vector<SourceEstimate> sequential(const ExtendedObservation& obs, const MatrixXd& xpad, int D,
                                       const DecompositionParams& p) {
    std::set<int> used;
    std::vector<VectorXd> accepted_w;
    std::vector<SourceEstimate> out;
    for (int it = 0; it < p.iterations && int(out.size()) < p.max_sources; ++it) {
        VectorXd w;
        try {
            w = gckc_init_and_refine(obs, used, p);
        } catch (const DecompositionError& e) {
            if (e.kind() == DecompErrorKind::Exhausted) break;
            throw;
        }
        // the initial instant is consumed even when the source is rejected
        int t0 = 0;
        double best = -1;
        for (Eigen::Index t = 0; t < obs.z.cols(); ++t)
            if (!used.count(int(t)) && obs.z.col(t).squaredNorm() > best) best = obs.z.col(t).squaredNorm(), t0 = int(t);
        used.insert(t0);
        w = fastica_fixed_point(obs, w, accepted_w, p);
        auto src = finish(obs, xpad, D, w, p);
        if (src.sil < p.sil_threshold || int(src.firings.size()) < p.min_spikes) continue;
        bool dup = false;
        for (const auto& a : out) dup = dup || coincident(src.firings, a.firings, p);
        if (dup) continue;
        for (int t : src.firings) used.insert(t);
        accepted_w.push_back(src.w);
        out.push_back(std::move(src));
    }
    return out;
}

}  // namespace

std::vector<SourceEstimate> decompose_window(const MatrixXd& x, const DecompositionParams& p, SeededRng&) {
    const int D = int(x.cols());
    if (D < p.muap_len + p.extension_factor)
        throw std::invalid_argument("decompose_window: window shorter than L + T samples");
    if (x.rows() * p.extension_factor <= p.max_sources * p.muap_len)
        throw std::invalid_argument("decompose_window: need M*T > max_sources*L for an overdetermined extension");
    if (x.cwiseAbs().maxCoeff() == 0.0) throw DecompositionError(DecompErrorKind::DegenerateInput, "decompose_window: all-zero window");
    MatrixXd xpad = MatrixXd::Zero(x.rows(), D + p.pad());
    xpad.leftCols(D) = x;
    auto obs = whiten_extended(xpad, p.extension_factor, p.eig_floor, p.subspace_factor);
    if (obs.rank() == 0) return {};
    return p.strategy == SearchStrategy::MultiStart ? multistart(obs, xpad, D, p) : sequential(obs, xpad, D, p);
}

std::vector<SourceEstimate> decompose_window(const Tensor& x, const DecompositionParams& p, SeededRng& rng) {
    return decompose_window(to_matrix(x), p, rng);
}

}  // namespace hydra
