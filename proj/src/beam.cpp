#include "geoprog/beam.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "geoprog/error.hpp"

namespace geoprog {

namespace {

double contribution(ScoreRule rule, double p) { return rule == ScoreRule::SumLogProb ? std::log(p) : p; }

// Allowed ids by probability descending, ties to the lower id; at most k.
std::vector<SymbolId> top_k(const std::vector<double>& probs, const SymbolMask& mask, std::size_t k) {
    std::vector<SymbolId> ids;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (mask[i]) ids.push_back(static_cast<SymbolId>(i));
    }
    std::stable_sort(ids.begin(), ids.end(), [&](SymbolId a, SymbolId b) {
        return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
    });
    if (ids.size() > k) ids.resize(k);
    return ids;
}

template <class T>
void rank(std::vector<T>& v, std::size_t keep) {
    std::stable_sort(v.begin(), v.end(), [](const T& a, const T& b) { return a.score > b.score; });
    if (v.size() > keep) v.resize(keep);
}

struct OperandSeq {
    DecoderState st;
    double score = 0.0;
    std::vector<SymbolId> args;
};

struct Hyp {
    DecoderState st;
    double score = 0.0;
    std::vector<SubProgram> subs;
};

std::vector<OperandSeq> operand_beam(const DecodeContext& ctx, const DecoderState& start, const BeamConfig& cfg) {
    const SymbolId eos = ctx.state->registry().eos_operand();
    std::vector<OperandSeq> active{{start, 0.0, {}}};
    std::vector<OperandSeq> finished;
    while (!active.empty()) {
        std::vector<OperandSeq> next;
        for (const auto& seq : active) {
            const StepOutput out = query_step(ctx, seq.st);
            const std::vector<double> probs = step_probs(ctx, out);
            for (SymbolId id : top_k(probs, out.mask, cfg.beam_size)) {
                OperandSeq n{seq.st, seq.score + contribution(cfg.score_rule, probs[static_cast<std::size_t>(id)]),
                             seq.args};
                advance(ctx, n.st, out, id);
                if (id != eos) n.args.push_back(id);
                (n.st.phase == Phase::Operand ? next : finished).push_back(std::move(n));
            }
        }
        rank(next, cfg.beam_size);
        active = std::move(next);
    }
    rank(finished, cfg.beam_size);
    return finished;
}

std::vector<ScoredProgram> to_programs(std::vector<Hyp>& hyps, TypeId type) {
    std::vector<ScoredProgram> out;
    out.reserve(hyps.size());
    for (auto& h : hyps) out.push_back({SolutionProgram{std::move(h.subs), type}, h.score});
    return out;
}

}  // namespace

std::vector<ScoredProgram> hbeam_decode(const ModelState& state, const PreprocessedProblem& problem,
                                        const BeamConfig& cfg) {
    if (cfg.beam_size < 1) throw Error(Errc::InvalidConfig, "beam size must be >= 1");
    nn::Tape tape;
    DecodeContext ctx = open_context(tape, state, problem, cfg.type_override);
    restrict_limits(ctx, cfg.max_op, cfg.max_oe);
    const SymbolId eop = state.registry().eop();

    std::vector<Hyp> active{{initial_state(ctx), 0.0, {}}};
    std::vector<Hyp> finished;
    while (!active.empty()) {
        std::vector<Hyp> next;
        for (const auto& h : active) {
            const StepOutput out = query_step(ctx, h.st);
            const std::vector<double> probs = step_probs(ctx, out);
            for (SymbolId op : top_k(probs, out.mask, cfg.beam_size)) {
                const double s = h.score + contribution(cfg.score_rule, probs[static_cast<std::size_t>(op)]);
                if (op == eop) {
                    finished.push_back({h.st, s, h.subs});
                    continue;
                }
                DecoderState st = h.st;
                advance(ctx, st, out, op);
                for (auto& seq : operand_beam(ctx, st, cfg)) {
                    Hyp n{std::move(seq.st), s + seq.score, h.subs};
                    n.subs.push_back({op, std::move(seq.args)});
                    (n.st.phase == Phase::Done ? finished : next).push_back(std::move(n));
                }
            }
        }
        rank(next, cfg.beam_size);
        active = std::move(next);
    }
    rank(finished, cfg.beam_size);
    return to_programs(finished, ctx.type);
}

std::vector<ScoredProgram> exhaustive_oracle(const ModelState& state, const PreprocessedProblem& problem,
                                             const BeamConfig& cfg, double max_space) {
    nn::Tape tape;
    DecodeContext ctx = open_context(tape, state, problem, cfg.type_override);
    restrict_limits(ctx, cfg.max_op, cfg.max_oe);
    const auto& reg = state.registry();

    const auto ops = static_cast<double>(std::count(ctx.operator_base.begin(), ctx.operator_base.end(), 1));
    const auto oes = static_cast<double>(std::count(ctx.operand_base.begin(), ctx.operand_base.end(), 1));
    const double space = std::pow(ops, ctx.max_op) * std::pow(oes, ctx.max_op * ctx.max_oe);
    if (space > max_space) {
        throw Error(Errc::SpaceTooLarge, "search space bound " + std::to_string(space) + " exceeds " +
                                             std::to_string(max_space));
    }

    std::vector<Hyp> results;
    std::function<void(const DecoderState&, double, const std::vector<SubProgram>&)> dfs =
        [&](const DecoderState& st, double score, const std::vector<SubProgram>& subs) {
            if (st.phase == Phase::Done) {
                results.push_back({st, score, subs});
                return;
            }
            const StepOutput out = query_step(ctx, st);
            const std::vector<double> probs = step_probs(ctx, out);
            for (std::size_t i = 0; i < probs.size(); ++i) {
                if (!out.mask[i]) continue;
                const auto id = static_cast<SymbolId>(i);
                DecoderState next = st;
                advance(ctx, next, out, id);
                std::vector<SubProgram> s2 = subs;
                if (out.phase == Phase::Operator && id != reg.eop()) s2.push_back({id, {}});
                if (out.phase == Phase::Operand && id != reg.eos_operand()) s2.back().args.push_back(id);
                dfs(next, score + contribution(cfg.score_rule, probs[i]), s2);
            }
        };
    dfs(initial_state(ctx), 0.0, {});
    rank(results, results.size());
    return to_programs(results, ctx.type);
}

}  // namespace geoprog
