#pragma once

#include "ncarve/diffusion.hpp"
#include "ncarve/image.hpp"
#include "ncarve/rng.hpp"

#include <string>
#include <vector>

namespace ncarve {

/// One training pair: clothed front/back maps plus the undisplaced proxy
/// front map used as the condition.
struct TrainExample {
    NormalMap front;
    NormalMap back;
    NormalMap cond;
};

/// Small convolutional noise predictor. Input is the 8-channel noisy dual
/// concatenated with the 4-channel condition (zeros for the blank
/// embedding); hidden layers get a sinusoidal timestep embedding projected
/// to per-channel biases.
struct DenoiserArch {
    int in_channels = 12;
    int out_channels = 8;
    std::vector<int> hidden = {24, 24};
    int kernel = 3;
    int temb_dim = 16;

    void check() const;
    std::string describe() const;
    size_t param_count() const;
    bool operator==(const DenoiserArch& o) const = default;
};

class ToyDenoiser : public Denoiser {
public:
    /// Random (He) initialization.
    ToyDenoiser(DenoiserArch arch, Rng& rng);
    ToyDenoiser(DenoiserArch arch, std::vector<double> params);

    Image predict(const Image& x_t, int t, const Image* cond) const override;

    const DenoiserArch& arch() const { return arch_; }
    const std::vector<double>& params() const { return params_; }
    std::vector<double>& params() { return params_; }

private:
    DenoiserArch arch_;
    std::vector<double> params_;

    friend struct NetTape;
};

struct TrainStepResult {
    double loss = 0.0;
    std::vector<double> grad;   // d loss / d params
    int blank_conditioned = 0;  // examples that saw the blank embedding
};

/// One objective evaluation over a batch: perturb the 8-channel duals to the
/// given timesteps with the given noise, drop each condition with probability
/// dropout_prob, and return the mean squared error against the noise plus its
/// backpropagated parameter gradient.
TrainStepResult train_step(const ToyDenoiser& net, const std::vector<TrainExample>& batch,
                           const std::vector<int>& timesteps, const std::vector<Image>& noise,
                           double dropout_prob, const VarianceSchedule& sched, Rng& rng);

struct TrainConfig {
    int epochs = 700;
    int batch_size = 4;
    double learning_rate = 1e-3;
    double dropout_prob = 0.1;
};

struct TrainResult {
    std::vector<double> loss_curve;  // mean loss per epoch
};

/// Adam training loop; throws on NaN naming the epoch.
TrainResult train(ToyDenoiser& net, const std::vector<TrainExample>& dataset,
                  const TrainConfig& config, const VarianceSchedule& sched, Rng& rng);

/// Checkpoint: magic + format version + architecture descriptor + float64
/// parameter blob. Load verifies the header and, when expected is given,
/// the architecture (the error names both).
void save_checkpoint(const ToyDenoiser& net, const std::string& path);
ToyDenoiser load_checkpoint(const std::string& path, const DenoiserArch* expected = nullptr);

}  // namespace ncarve
