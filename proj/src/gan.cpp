#include "fegan/gan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace fegan::gan {

namespace {

constexpr std::size_t kFinalEvalSalt = std::numeric_limits<std::size_t>::max();

nn::Tensor to_tensor(const data::WindowBatch& batch) {
    nn::Tensor t(batch.batch(), batch.len());
    t.values() = batch.values();
    return t;
}

data::WindowBatch to_batch(const nn::Tensor& t) {
    data::WindowBatch b(t.rows(), t.cols());
    b.values() = t.values();
    return b;
}

nn::Tensor make_noise(std::size_t rows, std::size_t cols, Rng& rng) {
    nn::Tensor t(rows, cols);
    for (double& v : t.values()) v = rng.normal();
    return t;
}

double mean_of(const nn::Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v;
    return s / static_cast<double>(t.size());
}

ts::FeatureConfig feature_config(const FeGanConfig& cfg) {
    ts::FeatureConfig fc;
    fc.feature_len = cfg.window;
    fc.arma_spec = cfg.arma_spec;
    fc.period = cfg.period;
    return fc;
}

} // namespace

const char* to_string(LossKind k) {
    return k == LossKind::Wasserstein ? "wasserstein" : "tail_score";
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "wasserstein") return LossKind::Wasserstein;
    if (s == "tail_score") return LossKind::TailScore;
    throw Error("unknown loss kind: " + s);
}

const char* to_string(CriticBn b) {
    switch (b) {
        case CriticBn::None: return "none";
        case CriticBn::SkipFirst: return "skip_first";
        case CriticBn::All: return "all";
    }
    return "skip_first";
}

CriticBn critic_bn_from_string(const std::string& s) {
    if (s == "none") return CriticBn::None;
    if (s == "skip_first") return CriticBn::SkipFirst;
    if (s == "all") return CriticBn::All;
    throw Error("unknown critic_bn mode: " + s);
}

void FeGanConfig::validate() const {
    if (batch < 1 || window < 1 || context < 1 || noise_dim < 1 ||
        feature_embed_dim < 1 || gen_width < 1 || critic_width < 1 ||
        gen_layers < 1 || critic_layers < 1 || eval_batch < 1)
        throw Error("config: every dimension must be >= 1");
    if (alphas.empty()) throw Error("config: at least one alpha level");
    for (double a : alphas)
        if (!(a > 0.0) || !(a < 1.0)) throw Error("config: alphas must lie in (0,1)");
    if (n_critic < 1) throw Error("config: n_critic must be >= 1");
    if (!(lr > 0.0)) throw Error("config: learning rate must be positive");
    if (!(clip_c > 0.0)) throw Error("config: clip constant must be positive");
    if (!(penalty_lambda > 0.0)) throw Error("config: penalty coefficient must be positive");
    if (feature_method == ts::FeatureMethod::Historical && context < window)
        throw Error("config: historical features need context >= window");
    if (lipschitz == LipschitzMode::Penalty && loss_kind == LossKind::TailScore)
        throw Error("config: the gradient-penalty mode is implemented for the "
                    "wasserstein loss only");
}

std::string FeGanConfig::canonical_string() const {
    std::ostringstream out;
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "batch=" << batch << ";window=" << window << ";context=" << context
        << ";noise_dim=" << noise_dim << ";embed_dim=" << feature_embed_dim
        << ";gen=" << gen_layers << "x" << gen_width << ";critic=" << critic_layers
        << "x" << critic_width << ";critic_bn=" << to_string(critic_bn)
        << ";feature=" << ts::to_string(feature_method)
        << ";loss=" << to_string(loss_kind) << ";alphas=";
    for (std::size_t i = 0; i < alphas.size(); ++i)
        out << (i ? "," : "") << num(alphas[i]);
    out << ";n_critic=" << n_critic
        << ";lipschitz=" << (lipschitz == LipschitzMode::Clip ? "clip" : "penalty")
        << ";clip_c=" << num(clip_c) << ";lambda=" << num(penalty_lambda)
        << ";opt=" << (optimizer == nn::OptKind::RmsProp ? "rmsprop" : "adam")
        << ";lr=" << num(lr) << ";steps=" << steps << ";seed=" << seed
        << ";eval_batch=" << eval_batch << ";eval_every=" << eval_every
        << ";arma=" << arma_spec.name() << ";period=" << period;
    return out.str();
}

Generator build_generator(const FeGanConfig& cfg, Rng& rng) {
    Generator gen;
    gen.noise_dim = cfg.noise_dim;
    const bool conditioned = cfg.feature_method != ts::FeatureMethod::None;
    std::size_t trunk_in = cfg.noise_dim;
    if (conditioned) {
        gen.feature_len = cfg.window;
        // Two preprocessing layers: one hidden block plus a linear head.
        gen.preprocess.emplace(cfg.window,
                               std::vector<std::size_t>{cfg.feature_embed_dim},
                               cfg.feature_embed_dim, true, rng);
        trunk_in += cfg.feature_embed_dim;
    }
    std::vector<std::size_t> hidden(cfg.gen_layers, cfg.gen_width);
    gen.trunk = nn::Mlp(trunk_in, hidden, cfg.window, true, rng);
    return gen;
}

Critic build_critic(const FeGanConfig& cfg, Rng& rng) {
    Critic critic;
    critic.kind = cfg.loss_kind;
    critic.alphas = cfg.alphas;
    const std::size_t out_dim =
        cfg.loss_kind == LossKind::TailScore ? 2 * cfg.alphas.size() : 1;
    std::vector<std::size_t> hidden(cfg.critic_layers, cfg.critic_width);
    // Per-sample gradient penalties are incompatible with batch coupling, so
    // the penalty-mode critic always drops batch normalization.
    const bool bn =
        cfg.lipschitz == LipschitzMode::Clip && cfg.critic_bn != CriticBn::None;
    critic.net = nn::Mlp(cfg.window, hidden, out_dim, bn, rng);
    if (bn && cfg.critic_bn == CriticBn::SkipFirst && !critic.net.blocks().empty())
        critic.net.blocks().front().bn.reset();
    return critic;
}

namespace {

constexpr char kGenMagic[8] = {'F', 'E', 'G', 'A', 'N', 'G', 'E', 'N'};

} // namespace

void Generator::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out.write(kGenMagic, sizeof(kGenMagic));
    const std::uint32_t flags = preprocess ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&flags), sizeof(flags));
    const auto nd = static_cast<std::uint32_t>(noise_dim);
    const auto fl = static_cast<std::uint32_t>(feature_len);
    out.write(reinterpret_cast<const char*>(&nd), sizeof(nd));
    out.write(reinterpret_cast<const char*>(&fl), sizeof(fl));
    if (preprocess) preprocess->save(out);
    trunk.save(out);
}

Generator Generator::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kGenMagic, sizeof(magic)) != 0)
        throw Error("not a generator checkpoint");
    std::uint32_t flags = 0, nd = 0, fl = 0;
    in.read(reinterpret_cast<char*>(&flags), sizeof(flags));
    in.read(reinterpret_cast<char*>(&nd), sizeof(nd));
    in.read(reinterpret_cast<char*>(&fl), sizeof(fl));
    if (!in) throw Error("truncated generator checkpoint");
    Generator gen;
    gen.noise_dim = nd;
    gen.feature_len = fl;
    if (flags & 1) gen.preprocess = nn::Mlp::load(in);
    gen.trunk = nn::Mlp::load(in);
    return gen;
}

namespace {

// Forward the full generator keeping train-mode caches for backprop.
nn::Tensor generator_forward(Generator& gen, const nn::Tensor* features,
                             const nn::Tensor& noise, nn::Mode mode) {
    if (noise.cols() != gen.noise_dim)
        throw nn::ShapeMismatch(noise.rows(), noise.cols(), noise.rows(), gen.noise_dim);
    if (!gen.preprocess) return gen.trunk.forward(noise, mode);

    if (!features)
        throw Error("conditioned generator called without features");
    if (features->rows() != noise.rows() || features->cols() != gen.feature_len)
        throw nn::ShapeMismatch(features->rows(), features->cols(), noise.rows(),
                                gen.feature_len);
    const nn::Tensor embed = gen.preprocess->forward(*features, mode);
    nn::Tensor input(noise.rows(), embed.cols() + noise.cols());
    for (std::size_t i = 0; i < input.rows(); ++i) {
        double* row = input.row(i);
        std::copy_n(embed.row(i), embed.cols(), row);
        std::copy_n(noise.row(i), noise.cols(), row + embed.cols());
    }
    return gen.trunk.forward(input, mode);
}

void generator_backward(Generator& gen, const nn::Tensor& dfake) {
    nn::Tensor dinput = gen.trunk.backward(dfake, false);
    if (!gen.preprocess) return;
    const std::size_t embed_dim = dinput.cols() - gen.noise_dim;
    nn::Tensor dembed(dinput.rows(), embed_dim);
    for (std::size_t i = 0; i < dinput.rows(); ++i)
        std::copy_n(dinput.row(i), embed_dim, dembed.row(i));
    gen.preprocess->backward(dembed, false);
}

std::vector<nn::Tensor*> generator_parameters(Generator& gen) {
    std::vector<nn::Tensor*> params = gen.trunk.parameters();
    if (gen.preprocess) {
        auto pre = gen.preprocess->parameters();
        params.insert(params.end(), pre.begin(), pre.end());
    }
    return params;
}

void check_arity(const Critic& critic) {
    const std::size_t need =
        critic.kind == LossKind::TailScore ? 2 * critic.alphas.size() : 1;
    if (critic.net.out_dim() != need) throw ArityMismatch(critic.net.out_dim(), need);
}

// Sum over alphas of the mean FZ score of one row under the critic outputs.
double row_score(const double* out, std::span<const double> row,
                 std::span<const double> alphas) {
    double s = 0.0;
    for (std::size_t a = 0; a < alphas.size(); ++a)
        s += risk::batch_score(out[2 * a], out[2 * a + 1], row,
                               risk::RiskLevel(alphas[a]));
    return s;
}

// Critic-output gradients of the mean row score, scaled by `scale`.
void row_score_grad(const double* out, std::span<const double> row,
                    std::span<const double> alphas, double scale, double* dout) {
    for (std::size_t a = 0; a < alphas.size(); ++a) {
        const risk::ScoreGrad g = risk::batch_score_grad(
            out[2 * a], out[2 * a + 1], row, risk::RiskLevel(alphas[a]));
        dout[2 * a] = scale * g.dv;
        dout[2 * a + 1] = scale * g.de;
    }
}

// Finite-difference directional gradient of the WGAN-GP penalty
// lambda * E[(||grad_x D(xhat)|| - 1)^2]; returns the penalty value and adds
// its parameter gradient on top of whatever is accumulated.
double add_gradient_penalty(Critic& critic, const nn::Tensor& real,
                            const nn::Tensor& fake, double lambda, Rng& rng) {
    const std::size_t b = real.rows(), t = real.cols();
    nn::Tensor xhat(b, t);
    for (std::size_t i = 0; i < b; ++i) {
        const double u = rng.uniform();
        for (std::size_t j = 0; j < t; ++j)
            xhat(i, j) = u * real(i, j) + (1.0 - u) * fake(i, j);
    }

    auto params = critic.net.parameters();
    std::vector<nn::Tensor> snapshot;
    snapshot.reserve(params.size());
    for (nn::Tensor* p : params) snapshot.push_back(p->grad());

    critic.net.forward(xhat, nn::Mode::Train);
    nn::Tensor ones(b, 1, 1.0);
    const nn::Tensor g = critic.net.backward(ones, false);

    std::vector<double> norms(b, 0.0);
    double penalty = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < t; ++j) ss += g(i, j) * g(i, j);
        norms[i] = std::sqrt(ss);
        const double d = norms[i] - 1.0;
        penalty += d * d;
    }
    penalty = lambda * penalty / static_cast<double>(b);

    const double eps = 1e-4;
    nn::Tensor xp(b, t), xm(b, t);
    for (std::size_t i = 0; i < b; ++i) {
        const double inv = norms[i] > 1e-12 ? 1.0 / norms[i] : 0.0;
        for (std::size_t j = 0; j < t; ++j) {
            const double dir = g(i, j) * inv;
            xp(i, j) = xhat(i, j) + eps * dir;
            xm(i, j) = xhat(i, j) - eps * dir;
        }
    }
    nn::Tensor coef(b, 1);
    for (std::size_t i = 0; i < b; ++i)
        coef(i, 0) = 2.0 * lambda * (norms[i] - 1.0) /
                     (2.0 * eps * static_cast<double>(b));

    critic.net.forward(xp, nn::Mode::Train);
    critic.net.backward(coef, false);
    critic.net.forward(xm, nn::Mode::Train);
    for (double& v : coef.values()) v = -v;
    critic.net.backward(coef, true);

    for (std::size_t i = 0; i < params.size(); ++i) {
        double* dst = params[i]->grad().data();
        const double* src = snapshot[i].data();
        for (std::size_t k = 0; k < snapshot[i].size(); ++k) dst[k] += src[k];
    }
    return penalty;
}

// Penalty value only: interpolates and the per-row input-gradient norms.
double gradient_penalty_value(Critic& critic, const nn::Tensor& real,
                              const nn::Tensor& fake, double lambda, Rng& rng) {
    const std::size_t b = real.rows(), t = real.cols();
    nn::Tensor xhat(b, t);
    for (std::size_t i = 0; i < b; ++i) {
        const double u = rng.uniform();
        for (std::size_t j = 0; j < t; ++j)
            xhat(i, j) = u * real(i, j) + (1.0 - u) * fake(i, j);
    }
    critic.net.forward(xhat, nn::Mode::Train);
    const nn::Tensor g = critic.net.backward(nn::Tensor(b, 1, 1.0), false);
    double penalty = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < t; ++j) ss += g(i, j) * g(i, j);
        const double d = std::sqrt(ss) - 1.0;
        penalty += d * d;
    }
    return lambda * penalty / static_cast<double>(b);
}

double critic_objective(Critic& critic, const nn::Tensor& real,
                        const nn::Tensor& fake, const FeGanConfig& cfg, Rng& rng,
                        bool with_grads) {
    check_arity(critic);
    const std::size_t b = real.rows();
    const double inv_b = 1.0 / static_cast<double>(b);
    double loss = 0.0;

    if (critic.kind == LossKind::Wasserstein) {
        const nn::Tensor s_real = critic.net.forward(real, nn::Mode::Train);
        if (with_grads) critic.net.backward(nn::Tensor(b, 1, -inv_b), false);
        const nn::Tensor s_fake = critic.net.forward(fake, nn::Mode::Train);
        if (with_grads) critic.net.backward(nn::Tensor(b, 1, inv_b), true);
        loss = mean_of(s_fake) - mean_of(s_real);
        if (cfg.lipschitz == LipschitzMode::Penalty) {
            loss += with_grads
                        ? add_gradient_penalty(critic, real, fake, cfg.penalty_lambda, rng)
                        : gradient_penalty_value(critic, real, fake, cfg.penalty_lambda,
                                                 rng);
        }
    } else {
        const std::span<const double> alphas{critic.alphas};
        const nn::Tensor out_real = critic.net.forward(real, nn::Mode::Train);
        nn::Tensor dout(b, out_real.cols());
        double score_real = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const std::span<const double> row{real.row(i), real.cols()};
            score_real += row_score(out_real.row(i), row, alphas);
            if (with_grads)
                row_score_grad(out_real.row(i), row, alphas, inv_b, dout.row(i));
        }
        if (with_grads) critic.net.backward(dout, false);

        const nn::Tensor out_fake = critic.net.forward(fake, nn::Mode::Train);
        double score_fake = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const std::span<const double> row{fake.row(i), fake.cols()};
            score_fake += row_score(out_fake.row(i), row, alphas);
            if (with_grads)
                row_score_grad(out_fake.row(i), row, alphas, -inv_b, dout.row(i));
        }
        if (with_grads) critic.net.backward(dout, true);
        loss = (score_real - score_fake) * inv_b;
    }
    return loss;
}

double critic_update(Critic& critic, nn::Optimizer& opt, const nn::Tensor& real,
                     const nn::Tensor& fake, const FeGanConfig& cfg, Rng& rng) {
    const double loss = critic_objective(critic, real, fake, cfg, rng, true);
    opt.step(critic.net.parameters());
    if (cfg.lipschitz == LipschitzMode::Clip) nn::clip_weights(critic.net, cfg.clip_c);
    return loss;
}

// Tail generator loss over the fake batch plus its total fake gradient.
double tail_fake_grad_and_loss(Critic& critic, const nn::Tensor& fake,
                               nn::Tensor& dfake) {
    check_arity(critic);
    const std::size_t b = fake.rows();
    const double inv_b = 1.0 / static_cast<double>(b);
    const std::span<const double> alphas{critic.alphas};

    const nn::Tensor out = critic.net.forward(fake, nn::Mode::Train);
    nn::Tensor dout(b, out.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const std::span<const double> row{fake.row(i), fake.cols()};
        loss += row_score(out.row(i), row, alphas);
        row_score_grad(out.row(i), row, alphas, inv_b, dout.row(i));
    }
    loss *= inv_b;
    dfake = critic.net.backward(dout, false);
    const double inv_t = 1.0 / static_cast<double>(fake.cols());
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < fake.cols(); ++j) {
            double d = 0.0;
            for (std::size_t a = 0; a < alphas.size(); ++a)
                d += risk::fz_score_dx(out(i, 2 * a), out(i, 2 * a + 1), fake(i, j),
                                       risk::RiskLevel(alphas[a]));
            dfake(i, j) += inv_b * inv_t * d;
        }
    }
    return loss;
}

double generator_update(Generator& gen, Critic& critic, nn::Optimizer& opt,
                        const nn::Tensor* features, const nn::Tensor& noise) {
    check_arity(critic);
    const std::size_t b = noise.rows();
    const double inv_b = 1.0 / static_cast<double>(b);
    const nn::Tensor fake = generator_forward(gen, features, noise, nn::Mode::Train);
    double loss = 0.0;
    nn::Tensor dfake;

    if (critic.kind == LossKind::Wasserstein) {
        const nn::Tensor s = critic.net.forward(fake, nn::Mode::Train);
        dfake = critic.net.backward(nn::Tensor(b, 1, -inv_b), false);
        loss = -mean_of(s);
    } else {
        loss = tail_fake_grad_and_loss(critic, fake, dfake);
    }

    generator_backward(gen, dfake);
    opt.step(generator_parameters(gen));
    return loss;
}

std::vector<risk::DiffReport> evaluate_at(Generator& gen,
                                          const data::CleanSeries& series,
                                          const FeGanConfig& cfg,
                                          std::size_t salt_step) {
    const std::size_t n = series.size();
    const std::size_t need = cfg.context + cfg.window;
    if (n < need) throw data::SeriesTooShort(n, need);

    const std::span<const double> target{series.values.data() + (n - cfg.window),
                                         cfg.window};
    const std::span<const double> context{
        series.values.data() + (n - cfg.window - cfg.context), cfg.context};

    Rng rng = Rng(cfg.seed).split(0xEBA1C0DEull ^ (salt_step + 1));
    const ts::FeatureConfig fc = feature_config(cfg);

    nn::Tensor features;
    const bool conditioned = cfg.feature_method != ts::FeatureMethod::None;
    if (conditioned) {
        features = nn::Tensor(cfg.eval_batch, cfg.window);
        for (std::size_t i = 0; i < cfg.eval_batch; ++i) {
            const auto feat = ts::generate_feature(cfg.feature_method, context, fc, rng);
            std::copy(feat.begin(), feat.end(), features.row(i));
        }
    }
    const nn::Tensor noise = make_noise(cfg.eval_batch, cfg.noise_dim, rng);
    const nn::Tensor fake =
        generator_forward(gen, conditioned ? &features : nullptr, noise, nn::Mode::Eval);

    std::vector<risk::DiffReport> out;
    out.reserve(cfg.alphas.size());
    for (double a : cfg.alphas) {
        const risk::RiskLevel level(a);
        out.push_back(risk::diff(risk::var_es(target, level),
                                 risk::var_es(fake.values(), level)));
    }
    return out;
}

} // namespace

namespace detail {

double critic_loss_value(Critic& critic, const nn::Tensor& real,
                         const nn::Tensor& fake, const FeGanConfig& cfg, Rng rng) {
    return critic_objective(critic, real, fake, cfg, rng, false);
}

double critic_loss_and_grads(Critic& critic, const nn::Tensor& real,
                             const nn::Tensor& fake, const FeGanConfig& cfg, Rng rng) {
    return critic_objective(critic, real, fake, cfg, rng, true);
}

double tail_gen_loss(Critic& critic, const nn::Tensor& fake) {
    nn::Tensor unused;
    return tail_fake_grad_and_loss(critic, fake, unused);
}

nn::Tensor tail_fake_gradient(Critic& critic, const nn::Tensor& fake) {
    nn::Tensor dfake;
    tail_fake_grad_and_loss(critic, fake, dfake);
    return dfake;
}

} // namespace detail

data::WindowBatch generate(Generator& gen, const data::WindowBatch* features,
                           const nn::Tensor& noise, nn::Mode mode) {
    nn::Tensor feat;
    const nn::Tensor* fp = nullptr;
    if (gen.preprocess) {
        if (!features) throw Error("conditioned generator called without features");
        feat = to_tensor(*features);
        fp = &feat;
    }
    return to_batch(generator_forward(gen, fp, noise, mode));
}

LossPair wgan_losses(Critic& critic, const data::WindowBatch& real,
                     const data::WindowBatch& fake, nn::Mode mode) {
    check_arity(critic);
    if (critic.kind != LossKind::Wasserstein)
        throw Error("wgan_losses needs a wasserstein critic");
    if (real.len() != fake.len())
        throw nn::ShapeMismatch(real.batch(), real.len(), fake.batch(), fake.len());
    const nn::Tensor s_real = critic.net.forward(to_tensor(real), mode);
    const nn::Tensor s_fake = critic.net.forward(to_tensor(fake), mode);
    LossPair lp;
    lp.critic_loss = mean_of(s_fake) - mean_of(s_real);
    lp.gen_loss = -mean_of(s_fake);
    return lp;
}

LossPair tail_losses(Critic& critic, const data::WindowBatch& real,
                     const data::WindowBatch& fake, nn::Mode mode) {
    check_arity(critic);
    if (critic.kind != LossKind::TailScore)
        throw Error("tail_losses needs a tail-score critic");
    if (real.len() != fake.len())
        throw nn::ShapeMismatch(real.batch(), real.len(), fake.batch(), fake.len());
    const std::span<const double> alphas{critic.alphas};

    const nn::Tensor out_real = critic.net.forward(to_tensor(real), mode);
    double score_real = 0.0;
    for (std::size_t i = 0; i < real.batch(); ++i)
        score_real += row_score(out_real.row(i), real.row_span(i), alphas);
    score_real /= static_cast<double>(real.batch());

    const nn::Tensor out_fake = critic.net.forward(to_tensor(fake), mode);
    double score_fake = 0.0;
    for (std::size_t i = 0; i < fake.batch(); ++i)
        score_fake += row_score(out_fake.row(i), fake.row_span(i), alphas);
    score_fake /= static_cast<double>(fake.batch());

    LossPair lp;
    lp.critic_loss = score_real - score_fake;
    lp.gen_loss = score_fake;
    return lp;
}

TrainOutput train(const FeGanConfig& cfg, const data::CleanSeries& series) {
    cfg.validate();
    const std::size_t need = cfg.context + 2 * cfg.window;
    if (series.size() < need) throw data::SeriesTooShort(series.size(), need);

    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(cfg.seed);
    TrainOutput out{build_generator(cfg, rng), build_critic(cfg, rng), {}};
    Generator& gen = out.generator;
    Critic& critic = out.critic;
    RunResult& result = out.result;
    result.config_hash = cfg.hash();
    result.critic_loss_trace.reserve(cfg.steps);
    result.gen_loss_trace.reserve(cfg.steps);

    const nn::OptimizerConfig oc{cfg.optimizer, cfg.lr, 0.9, 0.9, 0.999, 1e-8};
    nn::Optimizer opt_critic(oc), opt_gen(oc);

    // The final window is held out for evaluation; training pairs are drawn
    // from the prefix only.
    data::CleanSeries prefix;
    prefix.transform = series.transform;
    prefix.origin = series.origin;
    prefix.values.assign(series.values.begin(),
                         series.values.end() - static_cast<std::ptrdiff_t>(cfg.window));

    const ts::FeatureConfig fc = feature_config(cfg);
    const bool conditioned = cfg.feature_method != ts::FeatureMethod::None;

    try {
        for (std::size_t step = 0; step < cfg.steps; ++step) {
            const auto pairs = data::context_target_pairs(prefix, cfg.context,
                                                          cfg.window, cfg.batch, rng);
            nn::Tensor real(cfg.batch, cfg.window);
            for (std::size_t i = 0; i < cfg.batch; ++i)
                std::copy(pairs[i].target.begin(), pairs[i].target.end(), real.row(i));

            nn::Tensor features;
            if (conditioned) {
                features = nn::Tensor(cfg.batch, cfg.window);
                for (std::size_t i = 0; i < cfg.batch; ++i) {
                    const auto feat = ts::generate_feature(cfg.feature_method,
                                                           pairs[i].context, fc, rng);
                    std::copy(feat.begin(), feat.end(), features.row(i));
                }
            }
            const nn::Tensor* fp = conditioned ? &features : nullptr;

            double critic_loss = 0.0;
            for (std::size_t k = 0; k < cfg.n_critic; ++k) {
                const nn::Tensor noise = make_noise(cfg.batch, cfg.noise_dim, rng);
                const nn::Tensor fake = generator_forward(gen, fp, noise, nn::Mode::Train);
                critic_loss = critic_update(critic, opt_critic, real, fake, cfg, rng);
            }
            const nn::Tensor noise = make_noise(cfg.batch, cfg.noise_dim, rng);
            const double gen_loss = generator_update(gen, critic, opt_gen, fp, noise);

            if (!std::isfinite(critic_loss) || !std::isfinite(gen_loss))
                throw nn::NonFiniteActivation("training loss");
            result.critic_loss_trace.push_back(critic_loss);
            result.gen_loss_trace.push_back(gen_loss);
            result.steps_executed = step + 1;

            if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 &&
                step + 1 < cfg.steps) {
                CheckpointEval ce;
                ce.step = step + 1;
                ce.diffs = evaluate_at(gen, series, cfg, step + 1);
                result.checkpoints.push_back(std::move(ce));
            }
        }
        result.diffs = evaluate_at(gen, series, cfg, kFinalEvalSalt);
        result.status = RunStatus::Ok;
    } catch (const nn::NonFiniteActivation& e) {
        result.status = RunStatus::Aborted;
        result.aborted_step = result.steps_executed;
        result.error = e.what();
    }

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

std::vector<risk::DiffReport> evaluate(Generator& gen,
                                       const data::CleanSeries& series,
                                       const FeGanConfig& cfg) {
    return evaluate_at(gen, series, cfg, kFinalEvalSalt);
}

} // namespace fegan::gan
