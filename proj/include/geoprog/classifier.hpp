#pragma once

// Problem-type classifier: softmax(W1 · Σ text rows of H). Patch rows are not pooled.

#include <optional>
#include <vector>

#include "geoprog/encoder.hpp"
#include "geoprog/model.hpp"
#include "geoprog/registry.hpp"

namespace geoprog {

struct TypeDistribution {
    std::vector<double> probs;

    // Lowest type id among exact ties.
    TypeId argmax() const;
};

// 1×c logits on the tape.
nn::Var classifier_logits(nn::Tape& tape, const ModelState& state, const JointRepresentation& rep, Grad grad);

TypeDistribution classify(nn::Tape& tape, const ModelState& state, const JointRepresentation& rep);

// Gold override when present (training), classifier argmax otherwise (inference).
TypeId decide_type(nn::Tape& tape, const ModelState& state, const JointRepresentation& rep,
                   std::optional<TypeId> override_type);

SymbolMask predict_mask(nn::Tape& tape, const ModelState& state, const JointRepresentation& rep,
                        const PreprocessedProblem& problem, std::optional<TypeId> override_type);

}  // namespace geoprog
