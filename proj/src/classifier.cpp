#include "geoprog/classifier.hpp"

#include "geoprog/error.hpp"
#include "geoprog/numerics.hpp"

namespace geoprog {

TypeId TypeDistribution::argmax() const { return static_cast<TypeId>(nn::argmax(probs)); }

nn::Var classifier_logits(nn::Tape& tape, const ModelState& state, const JointRepresentation& rep, Grad grad) {
    if (rep.text_len == 0) {
        throw Error(Errc::ShapeMismatch, "classifier needs at least one text row");
    }
    nn::Var pooled = tape.sum_rows(rep.H, 0, rep.text_len);
    return tape.matmul_nt(pooled, state.bind(tape, "cls.w1", grad));
}

TypeDistribution classify(nn::Tape& tape, const ModelState& state, const JointRepresentation& rep) {
    nn::Var probs = tape.softmax_row(classifier_logits(tape, state, rep, Grad::Off));
    return {tape.to_vector(probs)};
}

TypeId decide_type(nn::Tape& tape, const ModelState& state, const JointRepresentation& rep,
                   std::optional<TypeId> override_type) {
    if (override_type) {
        state.registry().type(*override_type);
        return *override_type;
    }
    return classify(tape, state, rep).argmax();
}

SymbolMask predict_mask(nn::Tape& tape, const ModelState& state, const JointRepresentation& rep,
                        const PreprocessedProblem& problem, std::optional<TypeId> override_type) {
    return type_mask(state.registry(), decide_type(tape, state, rep, override_type), problem);
}

}  // namespace geoprog
