#include "geoprog/generator.hpp"

#include <algorithm>
#include <cmath>

#include "geoprog/classifier.hpp"
#include "geoprog/error.hpp"

namespace geoprog {

nn::Var build_values(nn::Tape& tape, const ModelState& state, const JointRepresentation& rep,
                     const PreprocessedProblem& problem, Grad grad) {
    nn::Var wv = state.bind(tape, "gen.wv", grad);
    nn::Var statics = tape.matmul_nt(state.bind(tape, "gen.sym_emb", grad), wv);
    nn::Var dyn = element_value_vectors(tape, rep, problem);
    if (!dyn.valid()) return statics;
    const nn::Var parts[] = {statics, tape.matmul_nt(dyn, wv)};
    return tape.concat_rows(parts);
}

DecodeContext make_context(nn::Tape& tape, const ModelState& state, const PreprocessedProblem& problem,
                           const JointRepresentation& rep, TypeId type, Grad grad) {
    const auto& reg = state.registry();
    DecodeContext ctx{
        .tape = &tape,
        .state = &state,
        .problem = &problem,
        .vocab = problem.vocabulary(reg),
        .rep = rep,
        .grad = grad,
        .type = type,
        .type_mask = type_mask(reg, type, problem),
        .strategy = state.config().cache_strategy,
        .max_op = reg.max_op(),
        .max_oe = reg.max_oe(),
    };
    ctx.w2 = state.bind(tape, "gen.w2", grad);
    ctx.w3 = state.bind(tape, "gen.w3", grad);
    ctx.w5 = state.bind(tape, "gen.w5", grad);
    ctx.wv = state.bind(tape, "gen.wv", grad);
    ctx.sym_emb = state.bind(tape, "gen.sym_emb", grad);
    ctx.op_cell = state.bind(tape, state.operator_cell(), grad);
    ctx.oe_cell = state.bind(tape, state.operand_cell(), grad);
    ctx.HK = tape.matmul_nt(rep.H, state.bind(tape, "gen.w4", grad));
    ctx.V0 = build_values(tape, state, rep, problem, grad);
    ctx.K0 = tape.matmul_nt(ctx.V0, ctx.w5);

    const std::size_t n = ctx.vocab.size();
    ctx.operator_base.assign(n, 0);
    ctx.operand_base.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!ctx.type_mask[i]) continue;
        const auto id = static_cast<SymbolId>(i);
        const SymbolKind kind = ctx.vocab.kind(id);
        if (kind == SymbolKind::Operator || id == reg.eop()) ctx.operator_base[i] = 1;
        if (is_operand_kind(kind) || id == reg.eos_operand()) ctx.operand_base[i] = 1;
    }
    return ctx;
}

void restrict_limits(DecodeContext& ctx, std::optional<int> max_op, std::optional<int> max_oe) {
    const auto& reg = ctx.state->registry();
    if ((max_op && *max_op < 1) || (max_oe && *max_oe < 1)) {
        throw Error(Errc::InvalidConfig, "decoding limits must be >= 1");
    }
    ctx.max_op = std::min(max_op.value_or(reg.max_op()), reg.max_op());
    ctx.max_oe = std::min(max_oe.value_or(reg.max_oe()), reg.max_oe());
}

DecodeContext open_context(nn::Tape& tape, const ModelState& state, const PreprocessedProblem& problem,
                           std::optional<TypeId> type_override, Grad grad) {
    JointRepresentation rep = encode(tape, state, problem, grad);
    const TypeId type = decide_type(tape, state, rep, type_override);
    return make_context(tape, state, problem, rep, type, grad);
}

AttentionOutput attention_pool(const DecodeContext& ctx, nn::Var prev_value) {
    nn::Tape& tape = *ctx.tape;
    nn::Var u = tape.matmul(prev_value, ctx.w3);
    nn::Var scores = tape.matmul_nt(u, ctx.HK);
    nn::Var a = tape.softmax_row(scores);
    return {tape.matmul(a, ctx.rep.H), a};
}

DecoderState initial_state(const DecodeContext& ctx) {
    nn::Tape& tape = *ctx.tape;
    const auto& reg = ctx.state->registry();
    const std::size_t h = ctx.state->config().hidden;
    DecoderState st;
    st.h_op = tape.constant(1, h, 0.0);
    st.h_oe = tape.constant(1, h, 0.0);
    st.last = reg.sos();
    st.prev_value = tape.row(ctx.V0, static_cast<std::size_t>(reg.sos()));
    st.cache.assign(static_cast<std::size_t>(reg.max_op()), std::nullopt);
    return st;
}

SymbolMask step_mask(const DecodeContext& ctx, const DecoderState& st) {
    const auto& reg = ctx.state->registry();
    SymbolMask m;
    switch (st.phase) {
        case Phase::Operator:
            m.allowed = ctx.operator_base;
            if (st.sub_index == 0) m.allowed[static_cast<std::size_t>(reg.eop())] = 0;
            break;
        case Phase::Operand:
            m.allowed = ctx.operand_base;
            for (int j = 0; j < reg.max_op(); ++j) {
                if (j >= st.sub_index) m.allowed[static_cast<std::size_t>(reg.cache_token(j))] = 0;
            }
            if (st.operand_index == 0) m.allowed[static_cast<std::size_t>(reg.eos_operand())] = 0;
            break;
        case Phase::Done:
            throw Error(Errc::InvalidProgram, "decoding already finished");
    }
    return m;
}

StepOutput query_step(const DecodeContext& ctx, const DecoderState& st) {
    nn::Tape& tape = *ctx.tape;
    StepOutput out;
    out.phase = st.phase;
    out.mask = step_mask(ctx, st);
    const AttentionOutput att = attention_pool(ctx, st.prev_value);
    nn::Var x = tape.relu(tape.matmul_nt(tape.concat_cols(att.pooled, st.prev_value), ctx.w2));
    const bool op_mode = st.phase == Phase::Operator;
    out.query = nn::gru_step(tape, op_mode ? ctx.op_cell : ctx.oe_cell, x, op_mode ? st.h_op : st.h_oe);

    nn::Var logits = tape.matmul_nt(out.query, ctx.K0);
    std::vector<nn::Var> keys;
    std::vector<int> cols;
    const auto& reg = ctx.state->registry();
    for (std::size_t j = 0; j < st.cache.size(); ++j) {
        if (!st.cache[j]) continue;
        keys.push_back(st.cache[j]->key);
        cols.push_back(reg.cache_token(static_cast<int>(j)));
    }
    if (!keys.empty()) {
        nn::Var cache_logits = tape.matmul_nt(out.query, tape.concat_rows(keys));
        logits = tape.replace_cols(logits, cache_logits, cols);
    }
    out.logits = logits;
    return out;
}

std::vector<double> step_probs(const DecodeContext& ctx, const StepOutput& out, nn::SoftmaxMode mode) {
    return nn::masked_softmax(ctx.tape->value(out.logits), out.mask.allowed, mode);
}

nn::Var value_of(const DecodeContext& ctx, const DecoderState& st, SymbolId id) {
    if (auto j = ctx.state->registry().cache_index(id); j && st.cache[static_cast<std::size_t>(*j)]) {
        return st.cache[static_cast<std::size_t>(*j)]->value;
    }
    return ctx.tape->row(ctx.V0, static_cast<std::size_t>(id));
}

void update_cache(const DecodeContext& ctx, DecoderState& st, int t) {
    const auto& reg = ctx.state->registry();
    if (t < 0 || t >= reg.max_op()) {
        throw Error(Errc::CacheIndexOutOfRange, "sub-program " + std::to_string(t) + " with max_op " +
                                                    std::to_string(reg.max_op()));
    }
    nn::Tape& tape = *ctx.tape;
    nn::Var source;
    switch (ctx.strategy) {
        case CacheStrategy::LastOperandQuery:
            source = st.q_oe_last;
            break;
        case CacheStrategy::OperatorQuery:
            source = st.q_op0;
            break;
        case CacheStrategy::OperatorEmbedding:
            source = tape.row(ctx.sym_emb, static_cast<std::size_t>(st.fed_op));
            break;
    }
    if (!source.valid()) {
        throw Error(Errc::InvalidProgram, "sub-program " + std::to_string(t) + " closed without artifacts");
    }
    CacheSlot slot;
    slot.value = tape.matmul_nt(source, ctx.wv);
    slot.key = tape.matmul_nt(slot.value, ctx.w5);
    st.cache[static_cast<std::size_t>(t)] = slot;
}

namespace {

void close_sub(const DecodeContext& ctx, DecoderState& st) {
    update_cache(ctx, st, st.sub_index);
    ++st.sub_index;
    st.operand_index = 0;
    st.current_op = -1;
    st.phase = st.sub_index == ctx.max_op ? Phase::Done : Phase::Operator;
}

}  // namespace

void advance(const DecodeContext& ctx, DecoderState& st, const StepOutput& out, SymbolId structural, SymbolId fed) {
    const auto& reg = ctx.state->registry();
    st.prev_value = value_of(ctx, st, fed);
    st.last = fed;
    switch (st.phase) {
        case Phase::Operator:
            st.h_op = out.query;
            if (structural == reg.eop()) {
                st.phase = Phase::Done;
                return;
            }
            st.current_op = structural;
            st.fed_op = fed;
            st.q_op0 = out.query;
            st.q_oe_last = {};
            st.operand_index = 0;
            st.phase = Phase::Operand;
            return;
        case Phase::Operand:
            st.h_oe = out.query;
            if (structural == reg.eos_operand()) {
                close_sub(ctx, st);
                return;
            }
            st.q_oe_last = out.query;
            ++st.operand_index;
            if (st.operand_index == ctx.max_oe) close_sub(ctx, st);
            return;
        case Phase::Done:
            throw Error(Errc::InvalidProgram, "advance after decoding finished");
    }
}

DecodeResult greedy_decode(const ModelState& state, const PreprocessedProblem& problem, const DecodeOptions& options) {
    nn::Tape tape;
    DecodeContext ctx = open_context(tape, state, problem, options.type_override);
    restrict_limits(ctx, options.max_op, options.max_oe);
    const auto& reg = state.registry();
    DecodeResult result;
    result.program.problem_type = ctx.type;
    DecoderState st = initial_state(ctx);
    while (st.phase != Phase::Done) {
        const StepOutput out = query_step(ctx, st);
        std::vector<double> probs = step_probs(ctx, out, options.mode);
        const auto chosen = static_cast<SymbolId>(nn::argmax(probs));
        if (options.mode == nn::SoftmaxMode::Normalized) {
            result.log_prob += std::log(probs[static_cast<std::size_t>(chosen)]);
        } else {
            result.log_prob += std::log(step_probs(ctx, out)[static_cast<std::size_t>(chosen)]);
        }
        if (out.phase == Phase::Operator && chosen != reg.eop()) {
            result.program.subs.push_back({chosen, {}});
        } else if (out.phase == Phase::Operand && chosen != reg.eos_operand()) {
            result.program.subs.back().args.push_back(chosen);
        }
        if (options.record_trace) {
            result.trace.push_back({out.phase, chosen, std::move(probs)});
        }
        advance(ctx, st, out, chosen);
    }
    return result;
}

}  // namespace geoprog
