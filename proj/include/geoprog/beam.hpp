#pragma once

// Hierarchical beam search: an outer beam over operators and, per operator
// candidate, an inner beam over operand sequences. Each surviving hypothesis
// carries its own decoder snapshot (hidden states and cache rows).

#include <cstddef>
#include <optional>
#include <vector>

#include "geoprog/generator.hpp"
#include "geoprog/model.hpp"
#include "geoprog/problem.hpp"
#include "geoprog/program.hpp"

namespace geoprog {

enum class ScoreRule {
    // Σ log p over every decode step.
    SumLogProb,
    // Σ p over every decode step (literal probability merge).
    SumProb,
};

struct BeamConfig {
    std::size_t beam_size = 10;
    // Decoding limits; nullopt uses the registry's limits. Values above the
    // registry's limits are clamped to them.
    std::optional<int> max_op;
    std::optional<int> max_oe;
    ScoreRule score_rule = ScoreRule::SumLogProb;
    std::optional<TypeId> type_override;
};

struct ScoredProgram {
    SolutionProgram program;
    double score = 0.0;
};

// Ranked by score descending; ties keep emission order. Length ≤ beam_size.
std::vector<ScoredProgram> hbeam_decode(const ModelState& state, const PreprocessedProblem& problem,
                                        const BeamConfig& cfg);

// Enumerates every program reachable under the decode masks and ranks it with
// the same scoring as hbeam_decode. Throws Errc::SpaceTooLarge when
// |operators|^max_op · |operands|^(max_op·max_oe) exceeds max_space.
std::vector<ScoredProgram> exhaustive_oracle(const ModelState& state, const PreprocessedProblem& problem,
                                             const BeamConfig& cfg, double max_space = 1e6);

}  // namespace geoprog
