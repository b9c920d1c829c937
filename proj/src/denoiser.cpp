#include "ncarve/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ncarve {

void DenoiserArch::check() const {
    if (in_channels < 1 || out_channels < 1) throw std::invalid_argument("arch: bad channels");
    if (hidden.empty()) throw std::invalid_argument("arch: need at least one hidden layer");
    for (int h : hidden)
        if (h < 1) throw std::invalid_argument("arch: bad hidden width");
    if (kernel % 2 != 1 || kernel < 1) throw std::invalid_argument("arch: kernel must be odd");
    if (temb_dim < 2 || temb_dim % 2 != 0) throw std::invalid_argument("arch: temb_dim must be even");
}

std::string DenoiserArch::describe() const {
    std::ostringstream os;
    os << in_channels << "->[";
    for (size_t i = 0; i < hidden.size(); ++i) os << (i ? "," : "") << hidden[i];
    os << "]->" << out_channels << " k" << kernel << " temb" << temb_dim;
    return os.str();
}

namespace {

struct LayerDims {
    int in, out;
    bool has_temb;
    size_t w_off, b_off, t_off;
};

std::vector<LayerDims> layout(const DenoiserArch& a) {
    std::vector<LayerDims> layers;
    const int k2 = a.kernel * a.kernel;
    size_t off = 0;
    int prev = a.in_channels;
    for (size_t i = 0; i <= a.hidden.size(); ++i) {
        const bool last = i == a.hidden.size();
        LayerDims d;
        d.in = prev;
        d.out = last ? a.out_channels : a.hidden[i];
        d.has_temb = !last;
        d.w_off = off;
        off += static_cast<size_t>(d.out) * d.in * k2;
        d.b_off = off;
        off += d.out;
        d.t_off = off;
        if (d.has_temb) off += static_cast<size_t>(d.out) * a.temb_dim;
        layers.push_back(d);
        prev = d.out;
    }
    return layers;
}

std::vector<double> timestep_embedding(int t, int dim) {
    std::vector<double> e(dim);
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / half);
        e[2 * k] = std::sin(t * freq);
        e[2 * k + 1] = std::cos(t * freq);
    }
    return e;
}

inline double lrelu(double x) { return x > 0.0 ? x : 0.1 * x; }
inline double lrelu_grad(double x) { return x > 0.0 ? 1.0 : 0.1; }

// the chain runs in [-1,1] signal space; the [0,1] condition map joins the
// input in the same range (blank = all-zero planes)
Image assemble_input(const DenoiserArch& arch, const Image& x_t, const Image* cond) {
    Image input(arch.in_channels, x_t.height, x_t.width, 0.0);
    std::copy(x_t.data.begin(), x_t.data.end(), input.data.begin());
    if (cond) {
        double* dst = input.data.data() + x_t.size();
        for (size_t i = 0; i < cond->data.size(); ++i) dst[i] = 2.0 * cond->data[i] - 1.0;
    }
    return input;
}

void conv_forward(const double* w, const double* b, const Image& in, Image& out, int kernel) {
    const int h = in.height, wd = in.width, pad = kernel / 2;
    const int k2 = kernel * kernel;
    for (int oc = 0; oc < out.channels; ++oc) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < wd; ++x) {
                double acc = b[oc];
                for (int ic = 0; ic < in.channels; ++ic) {
                    const double* wrow = w + (static_cast<size_t>(oc) * in.channels + ic) * k2;
                    for (int ky = 0; ky < kernel; ++ky) {
                        const int yy = y + ky - pad;
                        if (yy < 0 || yy >= h) continue;
                        for (int kx = 0; kx < kernel; ++kx) {
                            const int xx = x + kx - pad;
                            if (xx < 0 || xx >= wd) continue;
                            acc += wrow[ky * kernel + kx] * in.at(ic, yy, xx);
                        }
                    }
                }
                out.at(oc, y, x) = acc;
            }
        }
    }
}

void conv_backward(const double* w, const Image& in, const Image& d_out, double* d_w,
                   double* d_b, Image* d_in, int kernel) {
    const int h = in.height, wd = in.width, pad = kernel / 2;
    const int k2 = kernel * kernel;
    for (int oc = 0; oc < d_out.channels; ++oc) {
        double db = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < wd; ++x) db += d_out.at(oc, y, x);
        d_b[oc] += db;
    }
    for (int oc = 0; oc < d_out.channels; ++oc) {
        for (int ic = 0; ic < in.channels; ++ic) {
            double* dwrow = d_w + (static_cast<size_t>(oc) * in.channels + ic) * k2;
            const double* wrow = w + (static_cast<size_t>(oc) * in.channels + ic) * k2;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < wd; ++x) {
                    const double g = d_out.at(oc, y, x);
                    if (g == 0.0) continue;
                    for (int ky = 0; ky < kernel; ++ky) {
                        const int yy = y + ky - pad;
                        if (yy < 0 || yy >= h) continue;
                        for (int kx = 0; kx < kernel; ++kx) {
                            const int xx = x + kx - pad;
                            if (xx < 0 || xx >= wd) continue;
                            dwrow[ky * kernel + kx] += g * in.at(ic, yy, xx);
                            if (d_in) d_in->at(ic, yy, xx) += g * wrow[ky * kernel + kx];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

// forward pass with optional activation capture for backprop
struct NetTape {
    const ToyDenoiser& net;
    std::vector<LayerDims> layers;
    std::vector<Image> pre;   // pre-activation per layer
    std::vector<Image> act;   // input to each layer (act[0] = network input)
    std::vector<double> temb;

    explicit NetTape(const ToyDenoiser& n) : net(n), layers(layout(n.arch_)) {}

    Image forward(const Image& input, int t, bool keep) {
        temb = timestep_embedding(t, net.arch_.temb_dim);
        if (keep) {
            act.clear();
            pre.clear();
            act.push_back(input);
        }
        Image cur = input;
        for (size_t li = 0; li < layers.size(); ++li) {
            const auto& L = layers[li];
            Image out(L.out, cur.height, cur.width, 0.0);
            conv_forward(net.params_.data() + L.w_off, net.params_.data() + L.b_off, cur, out,
                         net.arch_.kernel);
            if (L.has_temb) {
                for (int oc = 0; oc < L.out; ++oc) {
                    double tb = 0.0;
                    for (int d = 0; d < net.arch_.temb_dim; ++d) {
                        tb += net.params_[L.t_off + static_cast<size_t>(oc) * net.arch_.temb_dim + d] *
                              temb[d];
                    }
                    for (int y = 0; y < out.height; ++y)
                        for (int x = 0; x < out.width; ++x) out.at(oc, y, x) += tb;
                }
            }
            if (keep) pre.push_back(out);
            const bool last = li + 1 == layers.size();
            if (!last) {
                for (auto& v : out.data) v = lrelu(v);
            }
            if (keep && !last) act.push_back(out);
            cur = std::move(out);
        }
        return cur;
    }

    void backward(const Image& d_output, std::vector<double>& d_params) {
        Image d_cur = d_output;
        for (size_t li = layers.size(); li-- > 0;) {
            const auto& L = layers[li];
            const bool last = li + 1 == layers.size();
            if (!last) {
                for (size_t i = 0; i < d_cur.data.size(); ++i) {
                    d_cur.data[i] *= lrelu_grad(pre[li].data[i]);
                }
            }
            if (L.has_temb) {
                for (int oc = 0; oc < L.out; ++oc) {
                    double g = 0.0;
                    for (int y = 0; y < d_cur.height; ++y)
                        for (int x = 0; x < d_cur.width; ++x) g += d_cur.at(oc, y, x);
                    for (int d = 0; d < net.arch_.temb_dim; ++d) {
                        d_params[L.t_off + static_cast<size_t>(oc) * net.arch_.temb_dim + d] +=
                                g * temb[d];
                    }
                }
            }
            Image d_in(L.in, d_cur.height, d_cur.width, 0.0);
            conv_backward(net.params_.data() + L.w_off, act[li], d_cur,
                          d_params.data() + L.w_off, d_params.data() + L.b_off,
                          li > 0 ? &d_in : nullptr, net.arch_.kernel);
            d_cur = std::move(d_in);
        }
    }
};

size_t DenoiserArch::param_count() const {
    const auto layers = layout(*this);
    const auto& last = layers.back();
    return last.t_off + (last.has_temb ? static_cast<size_t>(last.out) * temb_dim : 0);
}

ToyDenoiser::ToyDenoiser(DenoiserArch arch, Rng& rng) : arch_(std::move(arch)) {
    arch_.check();
    params_.resize(arch_.param_count());
    const auto layers = layout(arch_);
    const int k2 = arch_.kernel * arch_.kernel;
    for (const auto& L : layers) {
        const double stddev = std::sqrt(2.0 / (static_cast<double>(L.in) * k2));
        for (size_t i = 0; i < static_cast<size_t>(L.out) * L.in * k2; ++i) {
            params_[L.w_off + i] = stddev * rng.normal();
        }
        for (int i = 0; i < L.out; ++i) params_[L.b_off + i] = 0.0;
        if (L.has_temb) {
            for (size_t i = 0; i < static_cast<size_t>(L.out) * arch_.temb_dim; ++i) {
                params_[L.t_off + i] = 0.01 * rng.normal();
            }
        }
    }
}

ToyDenoiser::ToyDenoiser(DenoiserArch arch, std::vector<double> params)
    : arch_(std::move(arch)), params_(std::move(params)) {
    arch_.check();
    if (params_.size() != arch_.param_count()) {
        throw std::invalid_argument("ToyDenoiser: parameter blob size does not match " +
                                    arch_.describe());
    }
}

Image ToyDenoiser::predict(const Image& x_t, int t, const Image* cond) const {
    if (x_t.channels + 4 != arch_.in_channels) {
        throw std::invalid_argument("ToyDenoiser: sample channels do not match architecture");
    }
    if (cond && (cond->channels != 4 || cond->height != x_t.height || cond->width != x_t.width)) {
        throw std::invalid_argument("ToyDenoiser: condition shape mismatch");
    }
    NetTape tape(*this);
    return tape.forward(assemble_input(arch_, x_t, cond), t, /*keep=*/false);
}

TrainStepResult train_step(const ToyDenoiser& net, const std::vector<TrainExample>& batch,
                           const std::vector<int>& timesteps, const std::vector<Image>& noise,
                           double dropout_prob, const VarianceSchedule& sched, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    if (timesteps.size() != batch.size() || noise.size() != batch.size()) {
        throw std::invalid_argument("train_step: batch arrays must have equal length");
    }
    TrainStepResult result;
    result.grad.assign(net.params().size(), 0.0);

    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        const Image dual = to_signal(concat_dual(batch[i].front, batch[i].back));
        if (!dual.same_shape(noise[i])) throw std::invalid_argument("train_step: noise shape");
        const Image x_t = forward_sample(dual, timesteps[i], noise[i], sched);

        const bool blank = rng.uniform() < dropout_prob;
        result.blank_conditioned += blank ? 1 : 0;

        NetTape tape(net);
        const Image eps_hat = tape.forward(
                assemble_input(net.arch(), x_t, blank ? nullptr : &batch[i].cond),
                timesteps[i], /*keep=*/true);

        const double inv_n = 1.0 / static_cast<double>(eps_hat.size());
        Image d_out = eps_hat;
        double loss_i = 0.0;
        for (size_t j = 0; j < eps_hat.data.size(); ++j) {
            const double r = eps_hat.data[j] - noise[i].data[j];
            loss_i += r * r * inv_n;
            d_out.data[j] = 2.0 * r * inv_n * inv_batch;
        }
        result.loss += loss_i * inv_batch;
        tape.backward(d_out, result.grad);
    }
    return result;
}

TrainResult train(ToyDenoiser& net, const std::vector<TrainExample>& dataset,
                  const TrainConfig& config, const VarianceSchedule& sched, Rng& rng) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    TrainResult result;

    std::vector<double> m(net.params().size(), 0.0), v(net.params().size(), 0.0);
    long step_count = 0;

    std::vector<size_t> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        int steps = 0;
        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            std::vector<TrainExample> batch;
            std::vector<int> ts;
            std::vector<Image> eps;
            for (size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
                const auto& ex = dataset[order[i]];
                batch.push_back(ex);
                ts.push_back(1 + static_cast<int>(rng.uniform_index(sched.total_steps)));
                Image e(8, ex.front.height, ex.front.width);
                rng.fill_normal(e.data);
                eps.push_back(std::move(e));
            }
            const TrainStepResult sr =
                    train_step(net, batch, ts, eps, config.dropout_prob, sched, rng);
            if (!std::isfinite(sr.loss)) {
                throw std::runtime_error("train: loss diverged (NaN) at epoch " +
                                         std::to_string(epoch));
            }
            // Adam
            ++step_count;
            const double c1 = 1.0 - std::pow(0.9, static_cast<double>(step_count));
            const double c2 = 1.0 - std::pow(0.999, static_cast<double>(step_count));
            auto& p = net.params();
            for (size_t i = 0; i < p.size(); ++i) {
                m[i] = 0.9 * m[i] + 0.1 * sr.grad[i];
                v[i] = 0.999 * v[i] + 0.001 * sr.grad[i] * sr.grad[i];
                p[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
            }
            epoch_loss += sr.loss;
            ++steps;
        }
        result.loss_curve.push_back(epoch_loss / std::max(1, steps));
    }
    return result;
}

namespace {

constexpr char kCheckpointMagic[4] = {'N', 'C', 'K', 'P'};
constexpr uint32_t kCheckpointVersion = 1;

void write_u32(std::ofstream& f, uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace

void save_checkpoint(const ToyDenoiser& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f.write(kCheckpointMagic, 4);
    write_u32(f, kCheckpointVersion);
    const auto& a = net.arch();
    write_u32(f, static_cast<uint32_t>(a.in_channels));
    write_u32(f, static_cast<uint32_t>(a.out_channels));
    write_u32(f, static_cast<uint32_t>(a.kernel));
    write_u32(f, static_cast<uint32_t>(a.temb_dim));
    write_u32(f, static_cast<uint32_t>(a.hidden.size()));
    for (int h : a.hidden) write_u32(f, static_cast<uint32_t>(h));
    const uint64_t n = net.params().size();
    f.write(reinterpret_cast<const char*>(&n), sizeof(n));
    f.write(reinterpret_cast<const char*>(net.params().data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ToyDenoiser load_checkpoint(const std::string& path, const DenoiserArch* expected) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    }
    const uint32_t version = read_u32(f);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("load_checkpoint: unsupported format version " +
                                 std::to_string(version));
    }
    DenoiserArch a;
    a.in_channels = static_cast<int>(read_u32(f));
    a.out_channels = static_cast<int>(read_u32(f));
    a.kernel = static_cast<int>(read_u32(f));
    a.temb_dim = static_cast<int>(read_u32(f));
    const uint32_t nh = read_u32(f);
    if (!f || nh > 64) throw std::runtime_error("load_checkpoint: corrupt header in " + path);
    a.hidden.resize(nh);
    for (auto& h : a.hidden) h = static_cast<int>(read_u32(f));
    uint64_t n = 0;
    f.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!f) throw std::runtime_error("load_checkpoint: corrupt header in " + path);
    a.check();
    if (n != a.param_count()) {
        throw std::runtime_error("load_checkpoint: parameter count does not match architecture");
    }
    if (expected && !(*expected == a)) {
        throw std::runtime_error("load_checkpoint: architecture mismatch: file has " +
                                 a.describe() + ", expected " + expected->describe());
    }
    std::vector<double> params(n);
    f.read(reinterpret_cast<char*>(params.data()),
           static_cast<std::streamsize>(n * sizeof(double)));
    if (!f || f.gcount() != static_cast<std::streamsize>(n * sizeof(double))) {
        throw std::runtime_error("load_checkpoint: truncated file " + path);
    }
    return ToyDenoiser(a, std::move(params));
}

}  // namespace ncarve
