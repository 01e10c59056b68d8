#pragma once

// Decoupled operator/operand program generator.
//
// Every decodable symbol owns a value vector (V): static symbols use
// W_v·e_s, numbers and elements use W_v applied to their encoder rows. Each
// step builds a query from attention over H and the value of the previously
// emitted symbol, advances the operator or operand recurrent cell, and scores
// all symbols by q·(W5·v_s) under the active mask. After sub-program t
// completes, cache token #t receives a fresh value vector.

#include <optional>
#include <string>
#include <vector>

#include "geoprog/encoder.hpp"
#include "geoprog/model.hpp"
#include "geoprog/numerics.hpp"
#include "geoprog/problem.hpp"
#include "geoprog/program.hpp"

namespace geoprog {

enum class Phase { Operator, Operand, Done };

// Everything about one problem that does not change while decoding it.
struct DecodeContext {
    nn::Tape* tape = nullptr;
    const ModelState* state = nullptr;
    const PreprocessedProblem* problem = nullptr;
    DecodeVocabulary vocab;
    JointRepresentation rep;
    Grad grad = Grad::Off;
    TypeId type = 0;
    SymbolMask type_mask;
    CacheStrategy strategy = CacheStrategy::LastOperandQuery;
    // Decoding limits, at most the registry's.
    int max_op = 1;
    int max_oe = 1;

    nn::Var HK;  // rows W4·H_i
    nn::Var V0;  // value table before any cache write
    nn::Var K0;  // rows W5·v_s
    nn::Var w2, w3, w5, wv, sym_emb;
    nn::GruVars op_cell, oe_cell;

    // Kind / type masks per phase, before positional and cache rules.
    std::vector<std::uint8_t> operator_base;
    std::vector<std::uint8_t> operand_base;
};

struct CacheSlot {
    nn::Var value;  // 1×h row of V
    nn::Var key;    // W5·value
};

struct DecoderState {
    Phase phase = Phase::Operator;
    nn::Var h_op;
    nn::Var h_oe;
    nn::Var prev_value;
    SymbolId last = 0;
    int sub_index = 0;
    int operand_index = 0;
    SymbolId current_op = -1;
    SymbolId fed_op = -1;
    nn::Var q_op0;
    nn::Var q_oe_last;
    std::vector<std::optional<CacheSlot>> cache;
};

struct StepOutput {
    Phase phase = Phase::Operator;
    nn::Var query;
    nn::Var logits;
    SymbolMask mask;
};

DecodeContext make_context(nn::Tape& tape, const ModelState& state, const PreprocessedProblem& problem,
                           const JointRepresentation& rep, TypeId type, Grad grad);
// Lowers the decoding limits; values above the registry's limits are clamped.
void restrict_limits(DecodeContext& ctx, std::optional<int> max_op, std::optional<int> max_oe);
// Encodes the problem and fixes the type (override, else classifier argmax).
DecodeContext open_context(nn::Tape& tape, const ModelState& state, const PreprocessedProblem& problem,
                           std::optional<TypeId> type_override, Grad grad = Grad::Off);

// Static rows W_v·e_s followed by W_v·element_value_vectors rows.
nn::Var build_values(nn::Tape& tape, const ModelState& state, const JointRepresentation& rep,
                     const PreprocessedProblem& problem, Grad grad);

struct AttentionOutput {
    nn::Var pooled;   // Σ a_i H_i
    nn::Var weights;  // a, 1×(i+n)
};

// score_i = (vᵀ·W3)·(W4·H_i), a = softmax(score).
AttentionOutput attention_pool(const DecodeContext& ctx, nn::Var prev_value);

DecoderState initial_state(const DecodeContext& ctx);

// Mask for the next step: type and phase restrictions; #j only when j < t;
// eop not before the first sub-program; eos_operand not before the first operand.
SymbolMask step_mask(const DecodeContext& ctx, const DecoderState& st);

// x = relu(W2·[P_aware ; v_prev]); (q, h') = cell(x, h). Does not modify st.
StepOutput query_step(const DecodeContext& ctx, const DecoderState& st);

std::vector<double> step_probs(const DecodeContext& ctx, const StepOutput& out,
                               nn::SoftmaxMode mode = nn::SoftmaxMode::Normalized);

// Value row of a symbol under the current cache contents.
nn::Var value_of(const DecodeContext& ctx, const DecoderState& st, SymbolId id);

// Commits a step. `structural` drives the phase machine; `fed` is the symbol
// whose value is fed into the next step (they differ only when training feeds
// the model's own prediction against a gold structure).
void advance(const DecodeContext& ctx, DecoderState& st, const StepOutput& out, SymbolId structural, SymbolId fed);
inline void advance(const DecodeContext& ctx, DecoderState& st, const StepOutput& out, SymbolId chosen) {
    advance(ctx, st, out, chosen, chosen);
}

// Writes the value of cache token #t from the artifacts of sub-program t.
void update_cache(const DecodeContext& ctx, DecoderState& st, int t);

struct TraceStep {
    Phase phase = Phase::Operator;
    SymbolId chosen = 0;
    std::vector<double> probs;
};

struct DecodeResult {
    SolutionProgram program;
    double log_prob = 0.0;
    std::vector<TraceStep> trace;
};

struct DecodeOptions {
    std::optional<TypeId> type_override;
    nn::SoftmaxMode mode = nn::SoftmaxMode::Normalized;
    bool record_trace = false;
    std::optional<int> max_op;
    std::optional<int> max_oe;
};

DecodeResult greedy_decode(const ModelState& state, const PreprocessedProblem& problem,
                           const DecodeOptions& options = {});

}  // namespace geoprog
