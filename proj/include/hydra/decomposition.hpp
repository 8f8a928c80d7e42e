#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hydra/rng.hpp"
#include "hydra/signal_model.hpp"
#include "hydra/tensor.hpp"

namespace hydra {

enum class DecompErrorKind { DegenerateInput, NumericalFailure, Exhausted };

class DecompositionError : public std::runtime_error {
public:
    DecompositionError(DecompErrorKind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
    DecompErrorKind kind() const { return kind_; }
private:
    DecompErrorKind kind_;
};

enum class SearchStrategy {
    // Multi-start CKC search: every high-activity instant seeds an MMSE pooling
    // refinement; all candidates above the silhouette gate compete for the slots.
    MultiStart,
    // Sequential: activity init -> kurtosis gradient -> fastICA -> detect, 7 times.
    Sequential,
};

struct DecompositionParams {
    int extension_factor = 20;     // T
    int max_sources = 7;
    int muap_len = 20;             // L
    double sil_threshold = 0.92;
    int fixed_point_max_iters = 100;
    double fixed_point_tol = 1e-6;
    int gradient_iters = 30;
    double gradient_lr = 0.1;
    int dedup_tolerance_samples = 1;
    double dedup_overlap_frac = 0.3;
    int refractory_samples = kRefractory;
    double eig_floor = 1e-10;      // relative to the largest eigenvalue

    SearchStrategy strategy = SearchStrategy::MultiStart;
    // Signal subspace: keep eigenvalues above subspace_factor x median (0 disables).
    double subspace_factor = 5.0;
    int tail_pad = -1;             // zero samples appended before extension; -1 -> L+T-2
    int num_inits = 200;
    int init_separation = 3;
    int seed_peaks = 8;
    int pool_iters = 10;
    int min_spikes = 2;
    double dedup_template_corr = 0.9;
    int iterations = 7;            // sequential strategy only

    int pad() const { return tail_pad >= 0 ? tail_pad : muap_len + extension_factor - 2; }
    int max_delay() const { return muap_len + extension_factor - 2; }
};

struct ExtendedObservation {
    Eigen::MatrixXd z;         // [r, D'] whitened, rows have unit variance and zero correlation
    Eigen::MatrixXd whitener;  // [r, MT]
    Eigen::VectorXd mean;      // [MT]
    Eigen::VectorXd eigenvalues;  // retained, descending
    int rank() const { return int(z.rows()); }
};

struct SourceEstimate {
    Eigen::VectorXd w;             // unit separation vector in whitened coordinates
    std::vector<double> s_hat;     // w^T z
    std::vector<int> firings;      // spike instants of s_hat (source time, delayed by the extension)
    SpikeTrain spikes;             // discharge times aligned to MUAP onset, within [0, D)
    double sil = -1;
};

// [M, D] -> [M*T, D]; row block r holds x delayed by r samples (zeros on the left).
Eigen::MatrixXd extend(const Eigen::MatrixXd& x, int t_factor);
ExtendedObservation whiten(const Eigen::MatrixXd& x_ext, double eig_floor = 1e-10, double subspace_factor = 0.0);
// whiten(extend(x, T), ...) with the Gram matrix built from the shift structure
ExtendedObservation whiten_extended(const Eigen::MatrixXd& x, int t_factor, double eig_floor = 1e-10, double subspace_factor = 0.0);

Eigen::VectorXd gckc_init_and_refine(const ExtendedObservation& obs, const std::set<int>& used_times,
                                     const DecompositionParams& p);
// Returns w; `iters` receives the iteration count, `converged` whether the tolerance was met.
Eigen::VectorXd fastica_fixed_point(const ExtendedObservation& obs, const Eigen::VectorXd& w0,
                                    const std::vector<Eigen::VectorXd>& accepted, const DecompositionParams& p,
                                    int* iters = nullptr, bool* converged = nullptr);

struct SpikeDetection {
    std::vector<int> spikes;
    double sil = -1;
    bool flipped = false;
};
SpikeDetection detect_spikes(const std::vector<double>& s_hat, const DecompositionParams& p);

// Iterated MMSE estimate: w <- normalize(mean of z over the detected spikes) until the spike set is stable.
Eigen::VectorXd mmse_refine(const ExtendedObservation& obs, Eigen::VectorXd w, const DecompositionParams& p);

// matched / (matched + missed + false) with greedy matching within +-tol samples,
// maximized over constant delays est = true + d, d in [dmin, dmax].
double rate_of_agreement(const std::vector<int>& est, const std::vector<int>& truth, int tol = 1, int dmin = 0, int dmax = 0);

// x is [M, D] (channel-major); rng is accepted for interface stability, the search itself is deterministic.
std::vector<SourceEstimate> decompose_window(const Eigen::MatrixXd& x, const DecompositionParams& p, SeededRng& rng);
std::vector<SourceEstimate> decompose_window(const Tensor& x, const DecompositionParams& p, SeededRng& rng);

Eigen::MatrixXd to_matrix(const Tensor& x_md);

}  // namespace hydra
