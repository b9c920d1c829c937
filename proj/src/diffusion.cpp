#include "ncarve/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ncarve {

VarianceSchedule linear_schedule(int total_steps, double beta_start, double beta_end) {
    if (total_steps < 1) throw std::invalid_argument("linear_schedule: need at least one step");
    if (!(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0)) {
        throw std::invalid_argument("linear_schedule: need 0 < beta_start < beta_end < 1");
    }
    VarianceSchedule s;
    s.total_steps = total_steps;
    s.beta.resize(total_steps);
    s.alpha.resize(total_steps);
    s.alpha_bar.resize(total_steps);
    double prod = 1.0;
    for (int t = 0; t < total_steps; ++t) {
        const double frac = total_steps == 1 ? 0.0 : static_cast<double>(t) / (total_steps - 1);
        s.beta[t] = beta_start + frac * (beta_end - beta_start);
        s.alpha[t] = 1.0 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

VarianceSchedule default_schedule(int total_steps) {
    const double scale = 1000.0 / total_steps;
    return linear_schedule(total_steps, 1e-4 * scale, 0.02 * scale);
}

int ResampleParams::perturb_step(int total_steps) const {
    if (repeats < 1) throw std::invalid_argument("resample: repeat count must be >= 1");
    const int t = static_cast<int>(std::lround(t0 * total_steps));
    if (t < 1) {
        throw std::invalid_argument("resample: t0 * T rounds below 1");
    }
    return std::min(t, total_steps);
}

namespace {

void check_step(int t, const VarianceSchedule& sched) {
    if (t < 1 || t > sched.total_steps) {
        throw std::out_of_range("diffusion: timestep " + std::to_string(t) +
                                " outside [1, " + std::to_string(sched.total_steps) + "]");
    }
}

Image gaussian_image(int c, int h, int w, Rng& rng) {
    Image img(c, h, w);
    rng.fill_normal(img.data);
    return img;
}

Image predict_guided(const Denoiser& denoiser, const Image& x_t, int t, const Image* cond,
                     double lambda) {
    if (lambda == 1.0) return denoiser.predict(x_t, t, cond);
    const Image eps_cond = denoiser.predict(x_t, t, cond);
    const Image eps_uncond = denoiser.predict(x_t, t, nullptr);
    return cfg_combine(eps_cond, eps_uncond, lambda);
}

}  // namespace

Image forward_sample(const Image& x0, int t, const Image& eps, const VarianceSchedule& sched) {
    check_step(t, sched);
    if (!x0.same_shape(eps)) throw std::invalid_argument("forward_sample: shape mismatch");
    const double ab = sched.alpha_bar_at(t);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Image out = x0;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * x0.data[i] + b * eps.data[i];
    return out;
}

Image posterior_step(const Image& x_t, const Image& eps_hat, int t,
                     const VarianceSchedule& sched, const Image& noise) {
    check_step(t, sched);
    if (!x_t.same_shape(eps_hat) || !x_t.same_shape(noise)) {
        throw std::invalid_argument("posterior_step: shape mismatch");
    }
    const double alpha = sched.alpha_at(t);
    const double ab = sched.alpha_bar_at(t);
    const double mean_scale = 1.0 / std::sqrt(alpha);
    const double eps_scale = (1.0 - alpha) / std::sqrt(1.0 - ab);
    const double sigma = std::sqrt(sched.beta_at(t));
    Image out = x_t;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = mean_scale * (x_t.data[i] - eps_scale * eps_hat.data[i]) +
                      sigma * noise.data[i];
    }
    return out;
}

Image cfg_combine(const Image& eps_cond, const Image& eps_uncond, double lambda) {
    if (!eps_cond.same_shape(eps_uncond)) {
        throw std::invalid_argument("cfg_combine: shape mismatch");
    }
    Image out = eps_cond;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = lambda * eps_cond.data[i] + (1.0 - lambda) * eps_uncond.data[i];
    }
    return out;
}

Image sample(const Denoiser& denoiser, const Image* cond, const VarianceSchedule& sched,
             const GuidanceParams& guidance, int channels, int height, int width, Rng& rng) {
    Image x = gaussian_image(channels, height, width, rng);
    const Image zero(channels, height, width, 0.0);
    for (int t = sched.total_steps; t >= 1; --t) {
        const Image eps_hat = predict_guided(denoiser, x, t, cond, guidance.lambda);
        const Image noise = t > 1 ? gaussian_image(channels, height, width, rng) : zero;
        x = posterior_step(x, eps_hat, t, sched, noise);
    }
    return x;
}

Image resample(const Image& x, const Denoiser& denoiser, const Image* cond,
               const ResampleParams& params, const VarianceSchedule& sched,
               const GuidanceParams& guidance, Rng& rng) {
    const int t_start = params.perturb_step(sched.total_steps);
    Image current = x;
    const Image zero(x.channels, x.height, x.width, 0.0);
    for (int k = 0; k < params.repeats; ++k) {
        const Image eps = gaussian_image(x.channels, x.height, x.width, rng);
        Image x_t = forward_sample(current, t_start, eps, sched);
        for (int t = t_start; t >= 1; --t) {
            const Image eps_hat = predict_guided(denoiser, x_t, t, cond, guidance.lambda);
            const Image noise = t > 1 ? gaussian_image(x.channels, x.height, x.width, rng) : zero;
            x_t = posterior_step(x_t, eps_hat, t, sched, noise);
        }
        current = std::move(x_t);
    }
    return current;
}

std::pair<NormalMap, NormalMap> guided_dual_complete(const NormalMap& front_x0,
                                                     const Denoiser& denoiser, const Image* cond,
                                                     const VarianceSchedule& sched,
                                                     const GuidanceParams& guidance, Rng& rng) {
    if (front_x0.channels != 4) {
        throw std::invalid_argument("guided_dual_complete: front map must have 4 channels");
    }
    const int h = front_x0.height, w = front_x0.width;
    const size_t half = front_x0.size();
    Image x = gaussian_image(8, h, w, rng);
    const Image zero(8, h, w, 0.0);
    for (int t = sched.total_steps; t >= 1; --t) {
        // re-draw the known channels at the current noise level
        Image front_eps = gaussian_image(4, h, w, rng);
        const Image front_t = forward_sample(front_x0, t, front_eps, sched);
        std::copy(front_t.data.begin(), front_t.data.end(), x.data.begin());

        const Image eps_hat = predict_guided(denoiser, x, t, cond, guidance.lambda);
        const Image noise = t > 1 ? gaussian_image(8, h, w, rng) : zero;
        x = posterior_step(x, eps_hat, t, sched, noise);
    }
    // the known half is exact by construction
    std::copy(front_x0.data.begin(), front_x0.data.end(), x.data.begin());
    NormalMap back(4, h, w);
    std::copy(x.data.begin() + half, x.data.end(), back.data.begin());
    return {front_x0, back};
}

ClampedDenoiser::ClampedDenoiser(const Denoiser& inner, const VarianceSchedule& sched,
                                 double lo, double hi)
    : inner_(inner), sched_(sched), lo_(lo), hi_(hi) {
    if (!(lo < hi)) throw std::invalid_argument("ClampedDenoiser: lo must be below hi");
}

Image ClampedDenoiser::predict(const Image& x_t, int t, const Image* cond) const {
    Image eps = inner_.predict(x_t, t, cond);
    check_step(t, sched_);
    const double ab = sched_.alpha_bar_at(t);
    const double sa = std::sqrt(ab);
    const double sb = std::sqrt(1.0 - ab);
    for (size_t i = 0; i < eps.data.size(); ++i) {
        const double x0 = (x_t.data[i] - sb * eps.data[i]) / sa;
        const double clamped = std::clamp(x0, lo_, hi_);
        eps.data[i] = (x_t.data[i] - sa * clamped) / sb;
    }
    return eps;
}

GaussianDenoiser::GaussianDenoiser(Image mean, double variance, const VarianceSchedule& sched)
    : mean_(std::move(mean)), variance_(variance), sched_(sched) {
    if (variance_ <= 0.0) throw std::invalid_argument("GaussianDenoiser: variance must be > 0");
}

Image GaussianDenoiser::predict(const Image& x_t, int t, const Image* /*cond*/) const {
    check_step(t, sched_);
    if (!x_t.same_shape(mean_)) throw std::invalid_argument("GaussianDenoiser: shape mismatch");
    const double ab = sched_.alpha_bar_at(t);
    const double sqrt_ab = std::sqrt(ab);
    const double sqrt_1m = std::sqrt(1.0 - ab);
    // E[x0 | x_t] = mu + sqrt(ab) s2 / (ab s2 + 1 - ab) (x_t - sqrt(ab) mu)
    const double gain = sqrt_ab * variance_ / (ab * variance_ + 1.0 - ab);
    Image out = x_t;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double post_mean =
                mean_.data[i] + gain * (x_t.data[i] - sqrt_ab * mean_.data[i]);
        out.data[i] = (x_t.data[i] - sqrt_ab * post_mean) / sqrt_1m;
    }
    return out;
}

PairGaussianDenoiser::PairGaussianDenoiser(Image mean, double var_front, double var_back,
                                           double correlation, const VarianceSchedule& sched)
    : mean_(std::move(mean)), var_f_(var_front), var_b_(var_back), corr_(correlation),
      sched_(sched) {
    if (mean_.channels != 8) {
        throw std::invalid_argument("PairGaussianDenoiser: mean must have 8 channels");
    }
    if (var_f_ <= 0.0 || var_b_ <= 0.0 || std::abs(corr_) >= 1.0) {
        throw std::invalid_argument("PairGaussianDenoiser: invalid covariance");
    }
}

Image PairGaussianDenoiser::predict(const Image& x_t, int t, const Image* /*cond*/) const {
    check_step(t, sched_);
    if (!x_t.same_shape(mean_)) {
        throw std::invalid_argument("PairGaussianDenoiser: shape mismatch");
    }
    const double ab = sched_.alpha_bar_at(t);
    const double sqrt_ab = std::sqrt(ab);
    const double sqrt_1m = std::sqrt(1.0 - ab);
    const double cov = corr_ * std::sqrt(var_f_ * var_b_);

    // per coordinate pair: posterior mean = mu + ab^(1/2) S (ab S + (1-ab) I)^-1 (x - ab^(1/2) mu)
    const double m00 = ab * var_f_ + 1.0 - ab, m01 = ab * cov;
    const double m10 = ab * cov, m11 = ab * var_b_ + 1.0 - ab;
    const double det = m00 * m11 - m01 * m10;
    // sqrt(ab) * S * M^-1
    const double g00 = sqrt_ab * (var_f_ * m11 - cov * m10) / det;
    const double g01 = sqrt_ab * (-var_f_ * m01 + cov * m00) / det;
    const double g10 = sqrt_ab * (cov * m11 - var_b_ * m10) / det;
    const double g11 = sqrt_ab * (-cov * m01 + var_b_ * m00) / det;

    Image out = x_t;
    const size_t half = static_cast<size_t>(4) * x_t.height * x_t.width;
    for (size_t i = 0; i < half; ++i) {
        const double rf = x_t.data[i] - sqrt_ab * mean_.data[i];
        const double rb = x_t.data[half + i] - sqrt_ab * mean_.data[half + i];
        const double post_f = mean_.data[i] + g00 * rf + g01 * rb;
        const double post_b = mean_.data[half + i] + g10 * rf + g11 * rb;
        out.data[i] = (x_t.data[i] - sqrt_ab * post_f) / sqrt_1m;
        out.data[half + i] = (x_t.data[half + i] - sqrt_ab * post_b) / sqrt_1m;
    }
    return out;
}

}  // namespace ncarve
