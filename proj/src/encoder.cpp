#include "geoprog/encoder.hpp"

#include <vector>

#include "geoprog/error.hpp"

namespace geoprog {

nn::Var embed_inputs(nn::Tape& tape, const ModelState& state, const PreprocessedProblem& problem, Grad grad) {
    if (problem.tokens.empty()) {
        throw Error(Errc::ShapeMismatch, "problem '" + problem.id + "' has no tokens");
    }
    const auto& vocab = state.vocab();
    const int num = vocab.index(std::string(TextVocab::kNum));
    std::vector<int> ids;
    ids.reserve(problem.tokens.size());
    std::size_t next_number = 0;
    for (std::size_t i = 0; i < problem.tokens.size(); ++i) {
        if (next_number < problem.numbers.size() && problem.numbers[next_number].token == i) {
            ids.push_back(num);
            ++next_number;
        } else {
            ids.push_back(vocab.index(problem.tokens[i]));
        }
    }
    nn::Var text = tape.gather_rows(state.bind(tape, "enc.tok_emb", grad), ids);
    if (problem.patches.empty()) {
        return text;
    }
    const std::size_t p = state.config().patch_dim;
    std::vector<double> flat;
    flat.reserve(problem.patches.size() * p);
    for (const auto& patch : problem.patches) {
        if (patch.size() != p) {
            throw Error(Errc::PatchDimensionMismatch, "problem '" + problem.id + "' has patches of dimension " +
                                                          std::to_string(patch.size()) + ", model expects " +
                                                          std::to_string(p));
        }
        flat.insert(flat.end(), patch.begin(), patch.end());
    }
    nn::Var patches = tape.constant(problem.patches.size(), p, flat);
    nn::Var projected = tape.add_bias(tape.matmul_nt(patches, state.bind(tape, "enc.patch_proj", grad)),
                                      state.bind(tape, "enc.patch_bias", grad));
    const nn::Var parts[] = {text, projected};
    return tape.concat_rows(parts);
}

namespace {

nn::Var run_direction(nn::Tape& tape, const nn::GruVars& cell, nn::Var xs, bool reverse) {
    const std::size_t steps = tape.rows(xs);
    nn::Var gx = nn::gru_project_inputs(tape, cell, xs);
    std::vector<nn::Var> outs(steps);
    nn::Var h = tape.constant(1, cell.hidden, 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
        const std::size_t t = reverse ? steps - 1 - k : k;
        h = nn::gru_step_projected(tape, cell, tape.row(gx, t), h);
        outs[t] = h;
    }
    return tape.concat_rows(outs);
}

}  // namespace

JointRepresentation encode(nn::Tape& tape, const ModelState& state, const PreprocessedProblem& problem, Grad grad) {
    JointRepresentation rep;
    rep.text_len = problem.tokens.size();
    rep.patch_len = problem.patches.size();
    nn::Var x = embed_inputs(tape, state, problem, grad);
    const auto cells = state.encoder_cells();
    for (std::size_t l = 0; l < state.config().layers; ++l) {
        nn::Var fw = run_direction(tape, state.bind(tape, cells[2 * l], grad), x, false);
        nn::Var bw = run_direction(tape, state.bind(tape, cells[2 * l + 1], grad), x, true);
        x = tape.concat_cols(fw, bw);
    }
    rep.H = x;
    return rep;
}

nn::Var element_value_vectors(nn::Tape& tape, const JointRepresentation& rep, const PreprocessedProblem& problem) {
    std::vector<nn::Var> rows;
    for (const auto& n : problem.numbers) {
        if (n.token >= rep.text_len) {
            throw Error(Errc::SpanOutOfRange, "number token " + std::to_string(n.token));
        }
        rows.push_back(tape.row(rep.H, n.token));
    }
    for (const auto& e : problem.elements) {
        if (e.start >= e.end || e.end > rep.text_len) {
            throw Error(Errc::SpanOutOfRange,
                        "element span [" + std::to_string(e.start) + ", " + std::to_string(e.end) + ")");
        }
        rows.push_back(tape.sum_rows(rep.H, e.start, e.end, true));
    }
    if (rows.empty()) return {};
    return tape.concat_rows(rows);
}

}  // namespace geoprog
