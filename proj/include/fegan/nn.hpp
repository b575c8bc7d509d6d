#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fegan/common.hpp"

namespace fegan::nn {

class ShapeMismatch : public Error {
public:
    ShapeMismatch(std::size_t ar, std::size_t ac, std::size_t br, std::size_t bc)
        : Error("shape mismatch: " + std::to_string(ar) + "x" + std::to_string(ac) +
                " vs " + std::to_string(br) + "x" + std::to_string(bc)) {}
};

class NonFiniteActivation : public Error {
public:
    explicit NonFiniteActivation(const std::string& where)
        : Error("non-finite activation in " + where) {}
};

class NoCachedForward : public Error {
public:
    NoCachedForward() : Error("backward called without a cached train-mode forward") {}
};

// Row-major 2-D tensor of 64-bit reals with an optional same-shape gradient.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

    Tensor(const Tensor& other);
    Tensor& operator=(const Tensor& other);
    Tensor(Tensor&&) noexcept = default;
    Tensor& operator=(Tensor&&) noexcept = default;

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    double* row(std::size_t r) { return values_.data() + r * cols_; }
    const double* row(std::size_t r) const { return values_.data() + r * cols_; }

    bool has_grad() const { return grad_ != nullptr; }
    Tensor& grad();              // allocates zeroed storage on first use
    const Tensor& grad() const;  // throws if absent
    void zero_grad();
    void drop_grad() { grad_.reset(); }

    void check_finite(const char* where) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
    std::unique_ptr<Tensor> grad_;
};

enum class Mode { Train, Eval };

// y = x * W^T + b with the input cached for backward.
struct LinearLayer {
    Tensor weight; // out x in
    Tensor bias;   // 1 x out

    LinearLayer() = default;
    LinearLayer(std::size_t in_dim, std::size_t out_dim, Rng& rng);

    Tensor forward(const Tensor& x, bool cache);
    Tensor backward(const Tensor& dy, bool accumulate);

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }

    Tensor input_cache;
    bool cached = false;
};

// Per-feature batch normalization over the batch dimension. Train mode uses
// batch statistics (biased variance) and updates the running estimates; eval
// mode uses the running estimates only.
struct BatchNormLayer {
    Tensor gamma, beta;              // 1 x F
    Tensor running_mean, running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;

    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t features);

    Tensor forward(const Tensor& x, Mode mode, bool cache);
    Tensor backward(const Tensor& dy, bool accumulate);

    Tensor xhat_cache;
    std::vector<double> inv_std_cache;
    bool cached = false;
};

// One linear / batch-norm / ReLU block; the trailing block of an Mlp is a
// plain affine map.
struct Block {
    LinearLayer linear;
    std::optional<BatchNormLayer> bn;
    bool relu = false;

    Tensor out_cache; // post-activation, for the ReLU mask
    bool cached = false;
};

// Dense feed-forward network: hidden blocks (linear -> BN -> ReLU) and a
// final linear projection with no normalization or activation, so outputs
// can take any real value.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden_widths,
        std::size_t out_dim, bool batch_norm, Rng& rng);

    Tensor forward(const Tensor& input, Mode mode);
    // Returns the input gradient; parameter gradients are written (or added,
    // with accumulate) to each parameter's grad tensor.
    Tensor backward(const Tensor& output_grad, bool accumulate = false);

    // Train-mode forward that reuses the ReLU masks cached by the last
    // regular train forward instead of re-deciding them. Evaluating on the
    // frozen piecewise-linear branch is what makes finite differences agree
    // with the analytic gradient at that point; caches are left untouched.
    Tensor forward_frozen(const Tensor& input);

    std::vector<Tensor*> parameters();             // trainable only
    std::vector<const Tensor*> parameters() const;
    void zero_grad();

    std::size_t in_dim() const;
    std::size_t out_dim() const;
    const std::vector<Block>& blocks() const { return blocks_; }
    std::vector<Block>& blocks() { return blocks_; }

    void save(std::ostream& out) const;
    static Mlp load(std::istream& in);
    void save_file(const std::string& path) const;
    static Mlp load_file(const std::string& path);

private:
    std::vector<Block> blocks_;
};

// ---------------------------------------------------------------------------
// Optimization

enum class OptKind { RmsProp, Adam };

struct OptimizerConfig {
    OptKind kind = OptKind::RmsProp;
    double lr = 5e-5;
    double rho = 0.9;     // rmsprop decay
    double beta1 = 0.9;   // adam moments
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Per-parameter accumulator state keyed by registration order; the parameter
// list must be stable across steps.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config) : config_(config) {
        if (!(config.lr > 0.0)) throw Error("learning rate must be positive");
    }

    void step(const std::vector<Tensor*>& params);
    const OptimizerConfig& config() const { return config_; }
    std::size_t steps_taken() const { return step_count_; }

private:
    OptimizerConfig config_;
    std::size_t step_count_ = 0;
    std::vector<std::vector<double>> acc1_; // rmsprop acc / adam first moment
    std::vector<std::vector<double>> acc2_; // adam second moment
};

// Clamp every parameter of the network into [-c, c].
void clip_weights(Mlp& net, double c);

// ---------------------------------------------------------------------------
// Verification

struct LossProbe {
    std::function<double(const Tensor&)> value;
    std::function<Tensor(const Tensor&)> grad;
};

// Worst relative error between analytic gradients and central finite
// differences (h = 1e-5) over every parameter and every input entry, using
// |a - n| / max(|a|, |n|, 1e-8).
double grad_check(Mlp& net, const Tensor& input, const LossProbe& loss);

} // namespace fegan::nn
