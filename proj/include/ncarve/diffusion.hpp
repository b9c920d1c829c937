#pragma once

#include "ncarve/image.hpp"
#include "ncarve/rng.hpp"

namespace ncarve {

/// Beta/alpha tables of the forward noising process, 1-indexed by timestep
/// (beta(1) is the first noising step). alpha_bar is the running product of
/// (1 - beta) and decreases strictly toward ~0 at t = T.
struct VarianceSchedule {
    int total_steps = 0;
    std::vector<double> beta;       // size T
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // cumulative product

    double beta_at(int t) const { return beta.at(t - 1); }
    double alpha_at(int t) const { return alpha.at(t - 1); }
    double alpha_bar_at(int t) const { return alpha_bar.at(t - 1); }
};

/// Linearly interpolated betas. The defaults scale the common 1000-step
/// range (1e-4, 0.02) by 1000/T so alpha_bar(T) stays near zero.
VarianceSchedule linear_schedule(int total_steps, double beta_start, double beta_end);
VarianceSchedule default_schedule(int total_steps = 100);

/// Abstract noise predictor. cond == nullptr means the blank (unconditional)
/// embedding. Implementations must be deterministic and safe for concurrent
/// read-only use.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual Image predict(const Image& x_t, int t, const Image* cond) const = 0;
};

struct GuidanceParams {
    double lambda = 1.0;        // guidance strength
    double dropout_prob = 0.1;  // condition dropout during training
};

struct ResampleParams {
    double t0 = 0.02;  // fraction of T to perturb to
    int repeats = 2;   // K

    /// max(1, round(t0 * T)); throws when round(t0 * T) < 1 or repeats < 1.
    int perturb_step(int total_steps) const;
};

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
Image forward_sample(const Image& x0, int t, const Image& eps, const VarianceSchedule& sched);

/// One reverse step: x_{t-1} = mu(x_t, eps_hat) + sqrt(beta_t) * noise.
/// The caller draws the noise (and passes zeros at t = 1).
Image posterior_step(const Image& x_t, const Image& eps_hat, int t,
                     const VarianceSchedule& sched, const Image& noise);

/// lambda * eps_cond + (1 - lambda) * eps_uncond, elementwise
Image cfg_combine(const Image& eps_cond, const Image& eps_uncond, double lambda);

/// Full reverse chain from Gaussian noise. Skips the unconditional denoiser
/// call when lambda == 1.
Image sample(const Denoiser& denoiser, const Image* cond, const VarianceSchedule& sched,
             const GuidanceParams& guidance, int channels, int height, int width, Rng& rng);

/// SDEdit-style refinement: K rounds of perturb-to-t0 then denoise.
Image resample(const Image& x, const Denoiser& denoiser, const Image* cond,
               const ResampleParams& params, const VarianceSchedule& sched,
               const GuidanceParams& guidance, Rng& rng);

/// Channel-wise inpainting: the known front 4 channels are re-noised from
/// front_x0 at every step while the back channels follow the reverse chain;
/// at the end the front channels are replaced by front_x0 exactly.
std::pair<NormalMap, NormalMap> guided_dual_complete(const NormalMap& front_x0,
                                                     const Denoiser& denoiser, const Image* cond,
                                                     const VarianceSchedule& sched,
                                                     const GuidanceParams& guidance, Rng& rng);

/// Stabilizing decorator: clamps the clean sample implied by the inner
/// prediction into [lo, hi] and re-derives the noise. Keeps imperfect
/// predictors from compounding through the 1/sqrt(alpha) growth of the
/// reverse chain; the pipeline wraps the trained denoiser with it.
class ClampedDenoiser : public Denoiser {
public:
    ClampedDenoiser(const Denoiser& inner, const VarianceSchedule& sched, double lo = -1.0,
                    double hi = 1.0);
    Image predict(const Image& x_t, int t, const Image* cond) const override;

private:
    const Denoiser& inner_;
    const VarianceSchedule& sched_;
    double lo_, hi_;
};

/// Bayes-optimal predictor for x0 ~ N(mean, variance * I). Test oracle for
/// the sampler equations; ignores the condition.
class GaussianDenoiser : public Denoiser {
public:
    GaussianDenoiser(Image mean, double variance, const VarianceSchedule& sched);
    Image predict(const Image& x_t, int t, const Image* cond) const override;

private:
    Image mean_;
    double variance_;
    const VarianceSchedule& sched_;
};

/// Bayes-optimal predictor for 8-channel duals whose front channel c and
/// back channel c+4 are jointly Gaussian per pixel with the given marginal
/// variances and correlation. Oracle for the guided completion test.
class PairGaussianDenoiser : public Denoiser {
public:
    PairGaussianDenoiser(Image mean, double var_front, double var_back, double correlation,
                         const VarianceSchedule& sched);
    Image predict(const Image& x_t, int t, const Image* cond) const override;

private:
    Image mean_;
    double var_f_, var_b_, corr_;
    const VarianceSchedule& sched_;
};

}  // namespace ncarve
