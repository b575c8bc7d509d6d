#include "fegan/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fegan::nn {

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(const Tensor& other)
    : rows_(other.rows_), cols_(other.cols_), values_(other.values_) {
    if (other.grad_) grad_ = std::make_unique<Tensor>(*other.grad_);
}

Tensor& Tensor::operator=(const Tensor& other) {
    if (this == &other) return *this;
    rows_ = other.rows_;
    cols_ = other.cols_;
    values_ = other.values_;
    grad_ = other.grad_ ? std::make_unique<Tensor>(*other.grad_) : nullptr;
    return *this;
}

Tensor& Tensor::grad() {
    if (!grad_) grad_ = std::make_unique<Tensor>(rows_, cols_);
    return *grad_;
}

const Tensor& Tensor::grad() const {
    if (!grad_) throw Error("gradient not allocated");
    return *grad_;
}

void Tensor::zero_grad() {
    Tensor& g = grad();
    std::fill(g.values().begin(), g.values().end(), 0.0);
}

void Tensor::check_finite(const char* where) const {
    for (double v : values_)
        if (!std::isfinite(v)) throw NonFiniteActivation(where);
}

// ---------------------------------------------------------------------------
// Linear

LinearLayer::LinearLayer(std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : weight(out_dim, in_dim), bias(1, out_dim) {
    // Kaiming-style scaled uniform for ReLU stacks.
    const double limit = std::sqrt(6.0 / static_cast<double>(in_dim));
    for (double& w : weight.values()) w = rng.uniform(-limit, limit);
}

Tensor LinearLayer::forward(const Tensor& x, bool cache) {
    if (x.cols() != in_dim())
        throw ShapeMismatch(x.rows(), x.cols(), out_dim(), in_dim());
    const std::size_t b = x.rows(), in = in_dim(), out = out_dim();
    Tensor y(b, out);
    for (std::size_t i = 0; i < b; ++i) {
        const double* xi = x.row(i);
        double* yi = y.row(i);
        for (std::size_t o = 0; o < out; ++o) {
            const double* wo = weight.row(o);
            double acc = bias(0, o);
            for (std::size_t k = 0; k < in; ++k) acc += xi[k] * wo[k];
            yi[o] = acc;
        }
    }
    if (cache) {
        input_cache = x;
        input_cache.drop_grad();
        cached = true;
    }
    return y;
}

Tensor LinearLayer::backward(const Tensor& dy, bool accumulate) {
    if (!cached) throw NoCachedForward();
    const Tensor& x = input_cache;
    if (dy.rows() != x.rows() || dy.cols() != out_dim())
        throw ShapeMismatch(dy.rows(), dy.cols(), x.rows(), out_dim());
    const std::size_t b = x.rows(), in = in_dim(), out = out_dim();

    Tensor& wg = weight.grad();
    Tensor& bg = bias.grad();
    if (!accumulate) {
        std::fill(wg.values().begin(), wg.values().end(), 0.0);
        std::fill(bg.values().begin(), bg.values().end(), 0.0);
    }
    Tensor dx(b, in);
    for (std::size_t i = 0; i < b; ++i) {
        const double* dyi = dy.row(i);
        const double* xi = x.row(i);
        double* dxi = dx.row(i);
        for (std::size_t o = 0; o < out; ++o) {
            const double g = dyi[o];
            bg(0, o) += g;
            const double* wo = weight.row(o);
            double* wgo = wg.row(o);
            for (std::size_t k = 0; k < in; ++k) {
                wgo[k] += g * xi[k];
                dxi[k] += g * wo[k];
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNormLayer::BatchNormLayer(std::size_t features)
    : gamma(1, features, 1.0),
      beta(1, features, 0.0),
      running_mean(1, features, 0.0),
      running_var(1, features, 1.0) {}

Tensor BatchNormLayer::forward(const Tensor& x, Mode mode, bool cache) {
    const std::size_t b = x.rows(), f = x.cols();
    if (f != gamma.cols()) throw ShapeMismatch(x.rows(), x.cols(), 1, gamma.cols());
    Tensor y(b, f);

    if (mode == Mode::Eval) {
        for (std::size_t j = 0; j < f; ++j) {
            const double inv = 1.0 / std::sqrt(running_var(0, j) + epsilon);
            const double g = gamma(0, j) * inv;
            const double shift = beta(0, j) - g * running_mean(0, j);
            for (std::size_t i = 0; i < b; ++i) y(i, j) = g * x(i, j) + shift;
        }
        return y;
    }

    if (cache) {
        xhat_cache = Tensor(b, f);
        inv_std_cache.assign(f, 0.0);
    }
    for (std::size_t j = 0; j < f; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < b; ++i) mean += x(i, j);
        mean /= static_cast<double>(b);
        double var = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const double d = x(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(b);

        const double inv = 1.0 / std::sqrt(var + epsilon);
        for (std::size_t i = 0; i < b; ++i) {
            const double xh = (x(i, j) - mean) * inv;
            if (cache) xhat_cache(i, j) = xh;
            y(i, j) = gamma(0, j) * xh + beta(0, j);
        }
        if (cache) inv_std_cache[j] = inv;

        running_mean(0, j) = (1.0 - momentum) * running_mean(0, j) + momentum * mean;
        running_var(0, j) = (1.0 - momentum) * running_var(0, j) + momentum * var;
    }
    if (cache) cached = true;
    return y;
}

Tensor BatchNormLayer::backward(const Tensor& dy, bool accumulate) {
    if (!cached) throw NoCachedForward();
    const std::size_t b = dy.rows(), f = dy.cols();
    if (b != xhat_cache.rows() || f != xhat_cache.cols())
        throw ShapeMismatch(dy.rows(), dy.cols(), xhat_cache.rows(), xhat_cache.cols());

    Tensor& gg = gamma.grad();
    Tensor& bg = beta.grad();
    if (!accumulate) {
        std::fill(gg.values().begin(), gg.values().end(), 0.0);
        std::fill(bg.values().begin(), bg.values().end(), 0.0);
    }

    Tensor dx(b, f);
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t j = 0; j < f; ++j) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const double d = dy(i, j);
            sum_dy += d;
            sum_dy_xhat += d * xhat_cache(i, j);
        }
        gg(0, j) += sum_dy_xhat;
        bg(0, j) += sum_dy;

        const double g_inv = gamma(0, j) * inv_std_cache[j];
        for (std::size_t i = 0; i < b; ++i) {
            // Standard batch-statistics chain rule through mean and variance.
            dx(i, j) = g_inv * inv_b *
                       (static_cast<double>(b) * dy(i, j) - sum_dy -
                        xhat_cache(i, j) * sum_dy_xhat);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden_widths,
         std::size_t out_dim, bool batch_norm, Rng& rng) {
    if (in_dim == 0 || out_dim == 0) throw Error("Mlp: zero-width layer");
    std::size_t prev = in_dim;
    for (std::size_t width : hidden_widths) {
        if (width == 0) throw Error("Mlp: zero-width layer");
        Block block;
        block.linear = LinearLayer(prev, width, rng);
        if (batch_norm) block.bn.emplace(width);
        block.relu = true;
        blocks_.push_back(std::move(block));
        prev = width;
    }
    Block head;
    head.linear = LinearLayer(prev, out_dim, rng);
    blocks_.push_back(std::move(head));
}

std::size_t Mlp::in_dim() const { return blocks_.front().linear.in_dim(); }
std::size_t Mlp::out_dim() const { return blocks_.back().linear.out_dim(); }

Tensor Mlp::forward(const Tensor& input, Mode mode) {
    const bool cache = mode == Mode::Train;
    Tensor x = input;
    for (Block& block : blocks_) {
        x = block.linear.forward(x, cache);
        if (block.bn) x = block.bn->forward(x, mode, cache);
        if (block.relu)
            for (double& v : x.values())
                if (v < 0.0) v = 0.0;
        x.check_finite("mlp forward");
        if (cache && block.relu) {
            block.out_cache = x;
            block.out_cache.drop_grad();
            block.cached = true;
        }
    }
    return x;
}

Tensor Mlp::forward_frozen(const Tensor& input) {
    Tensor x = input;
    for (Block& block : blocks_) {
        x = block.linear.forward(x, false);
        if (block.bn) x = block.bn->forward(x, Mode::Train, false);
        if (block.relu) {
            if (!block.cached) throw NoCachedForward();
            for (std::size_t i = 0; i < x.size(); ++i)
                if (block.out_cache.values()[i] <= 0.0) x.values()[i] = 0.0;
        }
    }
    return x;
}

Tensor Mlp::backward(const Tensor& output_grad, bool accumulate) {
    Tensor g = output_grad;
    for (std::size_t idx = blocks_.size(); idx-- > 0;) {
        Block& block = blocks_[idx];
        if (block.relu) {
            if (!block.cached) throw NoCachedForward();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (block.out_cache.values()[i] <= 0.0) g.values()[i] = 0.0;
        }
        if (block.bn) g = block.bn->backward(g, accumulate);
        g = block.linear.backward(g, accumulate);
        g.check_finite("mlp backward");
    }
    return g;
}

std::vector<Tensor*> Mlp::parameters() {
    std::vector<Tensor*> out;
    for (Block& block : blocks_) {
        out.push_back(&block.linear.weight);
        out.push_back(&block.linear.bias);
        if (block.bn) {
            out.push_back(&block.bn->gamma);
            out.push_back(&block.bn->beta);
        }
    }
    return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
    std::vector<const Tensor*> out;
    for (const Block& block : blocks_) {
        out.push_back(&block.linear.weight);
        out.push_back(&block.linear.bias);
        if (block.bn) {
            out.push_back(&block.bn->gamma);
            out.push_back(&block.bn->beta);
        }
    }
    return out;
}

void Mlp::zero_grad() {
    for (Tensor* p : parameters()) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Serialization: little-endian flat layout
//   magic "FEGANMLP" | u32 version | u32 block count
//   per block: u32 in, u32 out, u8 has_bn, u8 relu
//   per block payload: weight, bias, then gamma, beta, running_mean,
//   running_var when has_bn; all row-major f64.

namespace {

constexpr char kMagic[8] = {'F', 'E', 'G', 'A', 'N', 'M', 'L', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw Error("truncated network checkpoint");
    return v;
}

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
}

void read_tensor(std::istream& in, Tensor& t) {
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw Error("truncated network checkpoint");
}

} // namespace

void Mlp::save(std::ostream& out) const {
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::uint32_t>(blocks_.size()));
    for (const Block& block : blocks_) {
        write_pod(out, static_cast<std::uint32_t>(block.linear.in_dim()));
        write_pod(out, static_cast<std::uint32_t>(block.linear.out_dim()));
        write_pod(out, static_cast<std::uint8_t>(block.bn ? 1 : 0));
        write_pod(out, static_cast<std::uint8_t>(block.relu ? 1 : 0));
    }
    for (const Block& block : blocks_) {
        write_tensor(out, block.linear.weight);
        write_tensor(out, block.linear.bias);
        if (block.bn) {
            write_tensor(out, block.bn->gamma);
            write_tensor(out, block.bn->beta);
            write_tensor(out, block.bn->running_mean);
            write_tensor(out, block.bn->running_var);
        }
    }
    if (!out) throw Error("failed to write network checkpoint");
}

Mlp Mlp::load(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw Error("not a network checkpoint");
    if (read_pod<std::uint32_t>(in) != kVersion)
        throw Error("unsupported checkpoint version");
    const auto count = read_pod<std::uint32_t>(in);
    if (count == 0) throw Error("empty checkpoint");

    Mlp net;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto in_dim = read_pod<std::uint32_t>(in);
        const auto out_dim = read_pod<std::uint32_t>(in);
        const bool has_bn = read_pod<std::uint8_t>(in) != 0;
        const bool relu = read_pod<std::uint8_t>(in) != 0;
        Block block;
        block.linear.weight = Tensor(out_dim, in_dim);
        block.linear.bias = Tensor(1, out_dim);
        if (has_bn) block.bn.emplace(out_dim);
        block.relu = relu;
        net.blocks_.push_back(std::move(block));
    }
    for (Block& block : net.blocks_) {
        read_tensor(in, block.linear.weight);
        read_tensor(in, block.linear.bias);
        if (block.bn) {
            read_tensor(in, block.bn->gamma);
            read_tensor(in, block.bn->beta);
            read_tensor(in, block.bn->running_mean);
            read_tensor(in, block.bn->running_var);
        }
    }
    return net;
}

void Mlp::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    save(out);
}

Mlp Mlp::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return load(in);
}

// ---------------------------------------------------------------------------
// Optimizer

void Optimizer::step(const std::vector<Tensor*>& params) {
    if (acc1_.empty()) {
        acc1_.resize(params.size());
        acc2_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            acc1_[i].assign(params[i]->size(), 0.0);
            acc2_[i].assign(params[i]->size(), 0.0);
        }
    }
    if (acc1_.size() != params.size()) throw Error("optimizer: parameter list changed");
    ++step_count_;

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = p.grad();
        if (g.size() != p.size() || acc1_[i].size() != p.size())
            throw ShapeMismatch(g.rows(), g.cols(), p.rows(), p.cols());

        double* pv = p.data();
        const double* gv = g.data();
        if (config_.kind == OptKind::RmsProp) {
            double* acc = acc1_[i].data();
            for (std::size_t k = 0; k < p.size(); ++k) {
                acc[k] = config_.rho * acc[k] + (1.0 - config_.rho) * gv[k] * gv[k];
                pv[k] -= config_.lr * gv[k] / std::sqrt(acc[k] + config_.epsilon);
            }
        } else {
            double* m = acc1_[i].data();
            double* v = acc2_[i].data();
            const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
            const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
            for (std::size_t k = 0; k < p.size(); ++k) {
                m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gv[k];
                v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gv[k] * gv[k];
                const double mhat = m[k] / c1;
                const double vhat = v[k] / c2;
                pv[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
            }
        }
    }
}

void clip_weights(Mlp& net, double c) {
    if (!(c > 0.0)) throw Error("clip constant must be positive");
    for (Tensor* p : net.parameters())
        for (double& v : p->values()) v = std::clamp(v, -c, c);
}

// ---------------------------------------------------------------------------
// Gradient checking

double grad_check(Mlp& net, const Tensor& input, const LossProbe& loss) {
    Tensor in = input;
    Tensor out = net.forward(in, Mode::Train);
    const Tensor dloss = loss.grad(out);
    const Tensor din = net.backward(dloss, false);

    std::vector<Tensor*> params = net.parameters();
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Tensor* p : params) analytic.push_back(p->grad());

    const double h = 1e-5;
    double worst = 0.0;
    auto probe = [&](double a, double* slot) {
        const double keep = *slot;
        *slot = keep + h;
        const double up = loss.value(net.forward_frozen(in));
        *slot = keep - h;
        const double down = loss.value(net.forward_frozen(in));
        *slot = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double rel =
            std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, rel);
    };

    for (std::size_t pi = 0; pi < params.size(); ++pi)
        for (std::size_t k = 0; k < params[pi]->size(); ++k)
            probe(analytic[pi].values()[k], &params[pi]->values()[k]);
    for (std::size_t k = 0; k < in.size(); ++k)
        probe(din.values()[k], &in.values()[k]);
    return worst;
}

} // namespace fegan::nn
