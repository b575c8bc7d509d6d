#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fegan/common.hpp"
#include "fegan/data.hpp"
#include "fegan/nn.hpp"
#include "fegan/risk.hpp"
#include "fegan/tsmodels.hpp"

namespace fegan::gan {

class ArityMismatch : public Error {
public:
    ArityMismatch(std::size_t have, std::size_t need)
        : Error("critic output arity " + std::to_string(have) + ", expected " +
                std::to_string(need)) {}
};

enum class LossKind { Wasserstein, TailScore };
enum class LipschitzMode { Clip, Penalty };

// Batch-norm placement inside the critic. Any batch-normalized critic layer
// removes per-batch statistics, leaving the critic blind to the level of the
// distribution it scores (real and fake batches are standardized separately),
// so the default critic carries no batch norm; the generator keeps the full
// linear/BN/ReLU recipe.
enum class CriticBn { None, SkipFirst, All };

const char* to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);
const char* to_string(CriticBn b);
CriticBn critic_bn_from_string(const std::string& s);

struct FeGanConfig {
    std::size_t batch = 100;   // training batch B
    std::size_t window = 250;  // generated/target length T
    std::size_t context = 250; // preceding data length C
    std::size_t noise_dim = 100;
    std::size_t feature_embed_dim = 100;
    std::size_t gen_layers = 10; // hidden blocks
    std::size_t gen_width = 1000;
    std::size_t critic_layers = 5;
    std::size_t critic_width = 100;
    CriticBn critic_bn = CriticBn::None;
    ts::FeatureMethod feature_method = ts::FeatureMethod::None;
    LossKind loss_kind = LossKind::Wasserstein;
    std::vector<double> alphas = {0.05};
    std::size_t n_critic = 5;
    LipschitzMode lipschitz = LipschitzMode::Clip;
    double clip_c = 0.01;
    double penalty_lambda = 10.0;
    nn::OptKind optimizer = nn::OptKind::RmsProp;
    double lr = 5e-5;
    std::size_t steps = 2000;
    std::uint64_t seed = 1;
    std::size_t eval_batch = 100; // generated sequences pooled per evaluation
    std::size_t eval_every = 0;   // 0: evaluate at the end only
    ts::ArmaSpec arma_spec{2, 1};
    std::size_t period = 20;

    void validate() const;
    // Canonical key=value serialization; its FNV-1a hash identifies a config.
    std::string canonical_string() const;
    std::uint64_t hash() const { return fnv1a(canonical_string()); }
};

// Feature-conditioned generator: an optional two-layer preprocess maps the
// feature sequence (length T) to an embedding which is concatenated with the
// noise vector, in that order, and fed to the trunk.
struct Generator {
    std::optional<nn::Mlp> preprocess;
    nn::Mlp trunk;
    std::size_t noise_dim = 0;
    std::size_t feature_len = 0; // 0 when unconditioned

    void save_file(const std::string& path) const;
    static Generator load_file(const std::string& path);
};

// Sequence-to-score network: one output under the Wasserstein loss, a
// (v, e) pair per alpha under the tail score.
struct Critic {
    nn::Mlp net;
    LossKind kind = LossKind::Wasserstein;
    std::vector<double> alphas;
};

Generator build_generator(const FeGanConfig& config, Rng& rng);
Critic build_critic(const FeGanConfig& config, Rng& rng);

// Forward pass of the full generator; features must be B x T (ignored and
// optional when the generator is unconditioned), noise B x noise_dim.
data::WindowBatch generate(Generator& gen, const data::WindowBatch* features,
                           const nn::Tensor& noise, nn::Mode mode);

struct LossPair {
    double critic_loss = 0.0;
    double gen_loss = 0.0;
};

// Loss values only (no updates): critic_loss = E[D(fake)] - E[D(real)],
// gen_loss = -E[D(fake)].
LossPair wgan_losses(Critic& critic, const data::WindowBatch& real,
                     const data::WindowBatch& fake,
                     nn::Mode mode = nn::Mode::Eval);

// Tail-score losses: with s(row) = sum over alphas of the mean FZ score of
// the row under the critic's (v, e) outputs, critic_loss = E_real[s] -
// E_fake[s] and gen_loss = E_fake[s].
LossPair tail_losses(Critic& critic, const data::WindowBatch& real,
                     const data::WindowBatch& fake,
                     nn::Mode mode = nn::Mode::Eval);

enum class RunStatus { Ok, Aborted };

struct CheckpointEval {
    std::size_t step = 0; // steps completed when evaluated
    std::vector<risk::DiffReport> diffs;
};

struct RunResult {
    std::string run_id;
    std::uint64_t config_hash = 0;
    RunStatus status = RunStatus::Ok;
    std::size_t aborted_step = 0; // valid when status == Aborted
    std::string error;
    std::size_t steps_executed = 0;
    std::vector<risk::DiffReport> diffs; // final evaluation, per alpha
    std::vector<CheckpointEval> checkpoints;
    std::vector<double> critic_loss_trace;
    std::vector<double> gen_loss_trace;
    double wall_seconds = 0.0; // timing only; excluded from determinism checks
};

struct TrainOutput {
    Generator generator;
    Critic critic;
    RunResult result;
};

// Adversarial training: per step, sample B (context, target) pairs from the
// series with the final T values held out, build one feature batch, run
// n_critic critic updates followed by one generator update. Aborts with the
// step index recorded if any loss or activation goes non-finite.
TrainOutput train(const FeGanConfig& config, const data::CleanSeries& series);

// Per-alpha |risk(real) - risk(generated)| where real is the final T values
// of the series and generated pools eval_batch sequences conditioned on the
// context immediately preceding them.
std::vector<risk::DiffReport> evaluate(Generator& gen,
                                       const data::CleanSeries& series,
                                       const FeGanConfig& config);

// Update internals exposed so the hand-derived gradients can be checked
// against finite differences.
namespace detail {

// One evaluation of the critic objective (train-mode forwards), including the
// gradient penalty when configured; deterministic in the rng argument.
double critic_loss_value(Critic& critic, const nn::Tensor& real,
                         const nn::Tensor& fake, const FeGanConfig& config, Rng rng);

// Same passes, additionally writing parameter gradients (no update applied).
double critic_loss_and_grads(Critic& critic, const nn::Tensor& real,
                             const nn::Tensor& fake, const FeGanConfig& config,
                             Rng rng);

// Tail generator objective and its total gradient with respect to the fake
// batch (the critic path plus the direct score dependence).
double tail_gen_loss(Critic& critic, const nn::Tensor& fake);
nn::Tensor tail_fake_gradient(Critic& critic, const nn::Tensor& fake);

} // namespace detail
} // namespace fegan::gan
