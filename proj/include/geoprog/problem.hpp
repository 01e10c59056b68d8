#pragma once

// Problem preprocessing: glyph rewriting, tokenization, number extraction and
// geometry element enhancement (each element phrase is appended once after a
// "<sep>" token so that it owns a clean span of its own).

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geoprog/program.hpp"
#include "geoprog/registry.hpp"

namespace geoprog {

inline constexpr std::string_view kSepToken = "<sep>";

struct NumberSpan {
    std::size_t token = 0;
    double value = 0.0;
};

// Half-open token range [start, end) inside the appended suffix.
struct ElementSpan {
    std::size_t start = 0;
    std::size_t end = 0;
};

struct DynamicSymbol {
    std::string surface;
    SymbolKind kind = SymbolKind::DynamicNumber;
    // Parsed number, or nullopt for elements.
    std::optional<double> value;
};

struct PreprocessedProblem {
    std::string id;
    std::vector<std::string> tokens;
    // Tokens before the separator (the rewritten problem text).
    std::size_t main_len = 0;
    std::vector<NumberSpan> numbers;
    std::vector<ElementSpan> elements;
    // n patch vectors of a common dimension; may be empty.
    std::vector<std::vector<double>> patches;
    std::optional<TypeId> problem_type;
    std::optional<SolutionProgram> gold;

    DecodeVocabulary vocabulary(const DslRegistry& registry) const {
        return {registry, numbers.size(), elements.size()};
    }
    std::vector<double> number_values() const;
};

// Terminology words recognized as element heads.
bool is_terminology_word(std::string_view word);

PreprocessedProblem preprocess(std::string_view raw_text, std::vector<std::vector<double>> raw_patches);

// N_0.. in number order, then E_0.. in element order.
std::vector<DynamicSymbol> dynamic_symbols(const PreprocessedProblem& problem);

SymbolMask type_mask(const DslRegistry& registry, TypeId t, const PreprocessedProblem& problem);

}  // namespace geoprog
