#include "geoprog/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geoprog/classifier.hpp"
#include "geoprog/encoder.hpp"
#include "geoprog/error.hpp"
#include "geoprog/generator.hpp"

namespace geoprog {

double tf_prob(int epoch, const TfSchedule& schedule) {
    if (epoch < 0) throw Error(Errc::InvalidConfig, "epoch must be >= 0");
    if (schedule.table.empty()) return 1.0;
    for (const auto& [threshold, p] : schedule.table) {
        if (epoch < threshold) return p;
    }
    return schedule.table.back().second;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
    if (!(lr > 0)) fail("lr must be positive");
    if (epochs < 0) fail("epochs must be >= 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (model.hidden < 2 || model.hidden % 2 != 0) fail("hidden must be even and >= 2");
    if (model.layers < 1) fail("layers must be >= 1");
    if (model.patch_dim < 1) fail("patch_dim must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(adam_eps > 0)) {
        fail("adam hyperparameters out of range");
    }
    if (!(clip_norm > 0)) fail("clip_norm must be positive");
    if (beam.beam_size < 1) fail("beam size must be >= 1");
    int last = 0;
    for (const auto& [threshold, p] : schedule.table) {
        if (threshold <= last) fail("schedule thresholds must be positive and increasing");
        if (!(p >= 0.0 && p <= 1.0)) fail("schedule probabilities must lie in [0,1]");
        last = threshold;
    }
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json sched = nlohmann::json::array();
    for (const auto& [threshold, p] : schedule.table) sched.push_back({threshold, p});
    return {{"hidden", model.hidden},
            {"layers", model.layers},
            {"patch_dim", model.patch_dim},
            {"cache_strategy", std::string(to_string(model.cache_strategy))},
            {"lr", lr},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"seed", seed},
            {"tf_schedule", sched},
            {"beta1", beta1},
            {"beta2", beta2},
            {"adam_eps", adam_eps},
            {"clip_norm", clip_norm},
            {"beam", beam.beam_size},
            {"score_rule", beam.score_rule == ScoreRule::SumLogProb ? "sum_log_prob" : "sum_prob"}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.model = ModelConfig::from_json(j);
        c.lr = j.value("lr", c.lr);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        if (j.contains("tf_schedule")) {
            c.schedule.table.clear();
            for (const auto& e : j.at("tf_schedule")) {
                c.schedule.table.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
            }
        }
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        c.beam.beam_size = j.value("beam", c.beam.beam_size);
        const std::string rule = j.value("score_rule", std::string("sum_log_prob"));
        if (rule == "sum_log_prob") {
            c.beam.score_rule = ScoreRule::SumLogProb;
        } else if (rule == "sum_prob") {
            c.beam.score_rule = ScoreRule::SumProb;
        } else {
            throw Error(Errc::InvalidConfig, "unknown score_rule '" + rule + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidConfig, e.what());
    }
    c.validate();
    return c;
}

namespace {

nn::Var sum_scalars(nn::Tape& tape, const std::vector<nn::Var>& xs) {
    return tape.sum_all(tape.concat_rows(xs));
}

}  // namespace

nn::Var example_loss(nn::Tape& tape, const ModelState& state, const PreprocessedProblem& problem, double tf,
                     std::mt19937_64& rng, LossParts* parts, Grad grad) {
    if (!problem.problem_type || !problem.gold) {
        throw Error(Errc::InvalidProgram, "training example '" + problem.id + "' lacks gold type or program");
    }
    const auto& reg = state.registry();
    const TypeId gold_type = *problem.problem_type;
    const SolutionProgram& gold = *problem.gold;

    JointRepresentation rep = encode(tape, state, problem, grad);
    const std::vector<std::uint8_t> all_types(reg.type_count(), 1);
    nn::Var type_lp =
        tape.log_softmax_pick(classifier_logits(tape, state, rep, grad), all_types, static_cast<std::size_t>(gold_type));

    DecodeContext ctx = make_context(tape, state, problem, rep, gold_type, grad);
    DecoderState st = initial_state(ctx);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    std::vector<nn::Var> op_lps;
    std::vector<nn::Var> sub_means;
    auto step = [&](SymbolId target) {
        const StepOutput out = query_step(ctx, st);
        nn::Var lp = tape.log_softmax_pick(out.logits, out.mask.allowed, static_cast<std::size_t>(target));
        SymbolId fed = target;
        if (!(coin(rng) < tf)) fed = static_cast<SymbolId>(nn::argmax(step_probs(ctx, out)));
        advance(ctx, st, out, target, fed);
        return lp;
    };

    for (const SubProgram& sub : gold.subs) {
        if (st.phase != Phase::Operator) {
            throw Error(Errc::InvalidProgram, "gold program of '" + problem.id + "' exceeds decoding limits");
        }
        op_lps.push_back(step(sub.op));
        std::vector<nn::Var> oe_lps;
        for (SymbolId a : sub.args) oe_lps.push_back(step(a));
        if (st.phase == Phase::Operand) oe_lps.push_back(step(reg.eos_operand()));
        sub_means.push_back(tape.scale(sum_scalars(tape, oe_lps), 1.0 / static_cast<double>(oe_lps.size())));
    }
    if (st.phase == Phase::Operator) op_lps.push_back(step(reg.eop()));

    const double inv_prog = 1.0 / static_cast<double>(op_lps.size());
    nn::Var op_term = tape.scale(sum_scalars(tape, op_lps), inv_prog);
    nn::Var oe_term = sub_means.empty() ? tape.constant(1, 1, 0.0) : tape.scale(sum_scalars(tape, sub_means), inv_prog);
    nn::Var total = tape.scale(tape.add(tape.add(type_lp, op_term), oe_term), -1.0);
    if (parts != nullptr) {
        parts->type_loss = -tape.scalar(type_lp);
        parts->op_loss = -tape.scalar(op_term);
        parts->oe_loss = -tape.scalar(oe_term);
        parts->total = tape.scalar(total);
    }
    return total;
}

LossParts loss(ModelState& state, std::span<const PreprocessedProblem* const> batch, double tf, std::mt19937_64& rng,
               bool accumulate_grad) {
    LossParts sum;
    if (batch.empty()) return sum;
    const double inv = 1.0 / static_cast<double>(batch.size());
    nn::Tape tape;
    for (const PreprocessedProblem* p : batch) {
        tape.clear();
        LossParts parts;
        nn::Var root = example_loss(tape, state, *p, tf, rng, &parts, accumulate_grad ? Grad::On : Grad::Off);
        if (accumulate_grad) tape.backward(root, inv);
        sum.total += parts.total * inv;
        sum.type_loss += parts.type_loss * inv;
        sum.op_loss += parts.op_loss * inv;
        sum.oe_loss += parts.oe_loss * inv;
    }
    return sum;
}

Adam::Adam(const nn::ParameterSet& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, p] : params) {
        m_[name].assign(p.size(), 0.0);
        v_[name].assign(p.size(), 0.0);
    }
}

double Adam::step(nn::ParameterSet& params, double clip_norm) {
    double sq = 0.0;
    for (const auto& [_, p] : params) {
        for (double g : p.grad) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    const double factor = norm > clip_norm ? clip_norm / norm : 1.0;
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : params) {
        auto& m = m_.at(name);
        auto& v = v_.at(name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = p.grad[i] * factor;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
    return norm;
}

void train_state(ModelState& state, const TrainConfig& cfg, const std::vector<PreprocessedProblem>& data,
                 const std::function<void(const EpochLog&)>& on_epoch) {
    cfg.validate();
    if (data.empty()) throw Error(Errc::InvalidConfig, "training set is empty");
    Adam adam(state.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    std::mt19937_64 shuffle_rng(cfg.seed);
    std::mt19937_64 feed_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<const PreprocessedProblem*> order;
    for (const auto& p : data) order.push_back(&p);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const double tf = tf_prob(epoch, cfg.schedule);
        EpochLog log{epoch, {}};
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::span<const PreprocessedProblem* const> batch(order.data() + start, end - start);
            state.params().zero_grad();
            const LossParts parts = loss(state, batch, tf, feed_rng, true);
            if (!std::isfinite(parts.total)) {
                throw Error(Errc::NonFiniteLoss, "epoch " + std::to_string(epoch) + ", batch starting at " +
                                                     std::to_string(start) + ": loss is " +
                                                     std::to_string(parts.total));
            }
            adam.step(state.params(), cfg.clip_norm);
            state.round_to_storage();
            const double w = static_cast<double>(batch.size()) / static_cast<double>(order.size());
            log.mean.total += parts.total * w;
            log.mean.type_loss += parts.type_loss * w;
            log.mean.op_loss += parts.op_loss * w;
            log.mean.oe_loss += parts.oe_loss * w;
        }
        if (on_epoch) on_epoch(log);
    }
    state.params().zero_grad();
}

ModelState train(const TrainConfig& cfg, const DslRegistry& registry, const std::vector<PreprocessedProblem>& data,
                 const std::function<void(const EpochLog&)>& on_epoch) {
    cfg.validate();
    ModelState state = ModelState::create(registry, TextVocab::build(data), cfg.model, cfg.seed);
    train_state(state, cfg, data, on_epoch);
    return state;
}

std::optional<ErrorKind> first_divergence(const SurfaceProgram& predicted, const SurfaceProgram& gold) {
    const std::size_t n = std::max(predicted.size(), gold.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (i >= predicted.size() || i >= gold.size()) return ErrorKind::WrongOperator;
        const SurfaceSub& p = predicted[i];
        const SurfaceSub& g = gold[i];
        if (canonical_surface(p.op) != canonical_surface(g.op)) return ErrorKind::WrongOperator;
        const std::size_t m = std::min(p.args.size(), g.args.size());
        for (std::size_t j = 0; j < m; ++j) {
            if (canonical_surface(p.args[j]) != canonical_surface(g.args[j])) return ErrorKind::WrongOperand;
        }
        // One operand list ends early: the divergence is at an eos_operand, an operand position.
        if (p.args.size() != g.args.size()) return ErrorKind::WrongOperand;
    }
    return std::nullopt;
}

nlohmann::json TopKReport::to_json() const {
    nlohmann::json types = nlohmann::json::object();
    for (const auto& [name, t] : per_type) types[name] = {{"count", t.count}, {"top1", t.top1}, {"topk", t.topk}};
    nlohmann::json ranks = nlohmann::json::object();
    for (const auto& [r, c] : rank_histogram) ranks[r < 0 ? "missing" : std::to_string(r)] = c;
    return {{"total", total},
            {"k", k},
            {"top1", top1},
            {"topk", topk},
            {"type_accuracy", type_accuracy},
            {"per_type", types},
            {"rank_histogram", ranks},
            {"attribution", {{"wrong_operator", wrong_operator}, {"wrong_operand", wrong_operand}}}};
}

TopKReport evaluate(const ModelState& state, const std::vector<PreprocessedProblem>& data, std::size_t k,
                    const BeamConfig& beam) {
    if (k < 1 || k > beam.beam_size) throw Error(Errc::InvalidConfig, "k must lie in [1, beam size]");
    const auto& reg = state.registry();
    TopKReport r;
    r.total = data.size();
    r.k = k;
    BeamConfig cfg = beam;
    cfg.type_override.reset();
    std::size_t top1 = 0, topk = 0, type_ok = 0;
    for (const auto& p : data) {
        if (!p.problem_type || !p.gold) {
            throw Error(Errc::InvalidProgram, "evaluation example '" + p.id + "' lacks gold type or program");
        }
        const auto cands = hbeam_decode(state, p, cfg);
        int rank = -1;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            if (canonical_equal(cands[i].program, *p.gold)) {
                rank = static_cast<int>(i);
                break;
            }
        }
        ++r.rank_histogram[rank];
        auto& t = r.per_type[reg.type(*p.problem_type).name];
        ++t.count;
        if (rank == 0) {
            ++top1;
            t.top1 += 1;
        } else {
            const auto vocab = p.vocabulary(reg);
            const SurfaceProgram pred = cands.empty() ? SurfaceProgram{} : to_surface(cands[0].program, vocab);
            const auto kind = first_divergence(pred, to_surface(*p.gold, vocab));
            // Identical sub-programs under a different type still count against the operator decision.
            if (kind == ErrorKind::WrongOperand) {
                ++r.wrong_operand;
            } else {
                ++r.wrong_operator;
            }
        }
        if (rank >= 0 && static_cast<std::size_t>(rank) < k) {
            ++topk;
            t.topk += 1;
        }
        nn::Tape tape;
        const JointRepresentation rep = encode(tape, state, p, Grad::Off);
        if (classify(tape, state, rep).argmax() == *p.problem_type) ++type_ok;
    }
    if (!data.empty()) {
        const double n = static_cast<double>(data.size());
        r.top1 = static_cast<double>(top1) / n;
        r.topk = static_cast<double>(topk) / n;
        r.type_accuracy = static_cast<double>(type_ok) / n;
    }
    for (auto& [_, t] : r.per_type) {
        t.top1 /= static_cast<double>(t.count);
        t.topk /= static_cast<double>(t.count);
    }
    return r;
}

}  // namespace geoprog
