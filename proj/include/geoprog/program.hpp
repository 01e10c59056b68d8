#pragma once

// Solution programs: an ordered list of sub-programs, each one operator and
// its operand list. A cache token #j stands for the result of sub-program j
// and may only be used by later sub-programs.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "geoprog/registry.hpp"
#include "json.hpp"

namespace geoprog {

struct SubProgram {
    SymbolId op = 0;
    std::vector<SymbolId> args;

    bool operator==(const SubProgram&) const = default;
};

struct SolutionProgram {
    std::vector<SubProgram> subs;
    TypeId problem_type = 0;
};

// Program in surface form, independent of any registry. Used by tooling that
// only compares files (analyze).
struct SurfaceSub {
    std::string op;
    std::vector<std::string> args;

    bool operator==(const SurfaceSub&) const = default;
};
using SurfaceProgram = std::vector<SurfaceSub>;

enum class ParseMode {
    // Every sub-program closed by eos_operand; program closed by eop.
    Strict,
    // Also accepts sequences without eos_operand (a new operator closes the
    // current sub-program) and without a final eop.
    Tolerant,
};

// op, args..., eos_operand per sub-program, then eop.
std::vector<std::string> to_flat(const SolutionProgram& p, const DecodeVocabulary& vocab);
SolutionProgram from_flat(std::span<const std::string> tokens, const DecodeVocabulary& vocab, TypeId type,
                          ParseMode mode = ParseMode::Strict);

// Nested encoding: [{"op": surface, "args": [surface, ...]}, ...]
nlohmann::json to_nested(const SolutionProgram& p, const DecodeVocabulary& vocab);
SolutionProgram from_nested(const nlohmann::json& nested, const DecodeVocabulary& vocab, TypeId type);
// Either encoding: an array of objects is nested, an array of strings is flat (tolerant).
SolutionProgram parse_program(const nlohmann::json& program, const DecodeVocabulary& vocab, TypeId type);

// Throws Errc::InvalidProgram / CacheTokenForwardReference / OperatorInArgPosition
// when p breaks a structural invariant or uses a symbol outside its type's DSL.
void validate(const SolutionProgram& p, const DecodeVocabulary& vocab);

// Sub-program lists identical (aliases are already resolved to ids). No
// commutativity or algebraic rewriting.
bool canonical_equal(const SolutionProgram& a, const SolutionProgram& b);

SurfaceProgram to_surface(const SolutionProgram& p, const DecodeVocabulary& vocab);
SurfaceProgram surface_from_json(const nlohmann::json& program);
nlohmann::json surface_to_json(const SurfaceProgram& p);
// Equality after V_i → #i normalization.
bool canonical_equal(const SurfaceProgram& a, const SurfaceProgram& b);

// Evaluates a CAL program; number_values[i] binds N_i. Each sub-program's
// result is stored as #t; the last result is returned.
double execute_cal(const SolutionProgram& p, const DecodeVocabulary& vocab,
                   std::span<const double> number_values);

// Operand count → number of operator occurrences with that many operands.
std::map<std::size_t, std::size_t> operand_count_histogram(std::span<const SolutionProgram> corpus);
std::map<std::size_t, std::size_t> operand_count_histogram(std::span<const SurfaceProgram> corpus);

}  // namespace geoprog
