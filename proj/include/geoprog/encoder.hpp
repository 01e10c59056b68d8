#pragma once

// Joint text + diagram encoder. Token embeddings and projected patch features
// are concatenated along the sequence axis and contextualized by stacked
// bidirectional gated-recurrent layers; each direction contributes h/2 columns.

#include <cstddef>

#include "geoprog/model.hpp"
#include "geoprog/problem.hpp"
#include "geoprog/tensor.hpp"

namespace geoprog {

struct JointRepresentation {
    // (text_len + patch_len) × h; rows [0, text_len) are text positions.
    nn::Var H;
    std::size_t text_len = 0;
    std::size_t patch_len = 0;
};

// Encoder input rows before contextualization: token embeddings then patch projections.
nn::Var embed_inputs(nn::Tape& tape, const ModelState& state, const PreprocessedProblem& problem, Grad grad);

JointRepresentation encode(nn::Tape& tape, const ModelState& state, const PreprocessedProblem& problem, Grad grad);

// One row per dynamic symbol: the H row of each number token, then the mean
// of H over each appended element span. Invalid Var when the problem has none.
nn::Var element_value_vectors(nn::Tape& tape, const JointRepresentation& rep, const PreprocessedProblem& problem);

}  // namespace geoprog
