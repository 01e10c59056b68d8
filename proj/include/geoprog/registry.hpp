#pragma once

// Static decoding vocabulary: operators, constants, cache tokens and control
// tokens, each tagged with the problem types it belongs to. Per-problem
// numbers (N_x) and geometry elements (E_x) are appended after the static
// table by DecodeVocabulary.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace geoprog {

using SymbolId = std::int32_t;
using TypeId = std::int32_t;

enum class SymbolKind : std::uint8_t {
    Operator,
    Constant,
    CacheToken,
    Control,
    DynamicNumber,
    DynamicElement,
};

std::string_view kind_name(SymbolKind kind);
bool is_operand_kind(SymbolKind kind);

struct SymbolEntry {
    std::string surface;
    SymbolKind kind = SymbolKind::Operator;
    // Bit t set ⇔ the symbol belongs to problem type t.
    std::uint64_t types = 0;
    std::optional<double> constant_value;
    // Operators only.
    int min_args = 0;
    int max_args = 0;
    // Name of the arithmetic kernel, empty when the operator has no machine semantics.
    std::string exec;

    bool in_type(TypeId t) const { return (types >> t) & 1U; }
};

struct ProblemType {
    std::string name;
    TypeId id = 0;
};

class DslRegistry {
   public:
    static constexpr std::string_view kSos = "sos";
    static constexpr std::string_view kEosOperand = "eos_operand";
    static constexpr std::string_view kEop = "eop";

    // Document sections: types, operators, constants, limits. See docs/formats.md.
    static DslRegistry from_json(const nlohmann::json& doc);
    static DslRegistry from_file(const std::filesystem::path& path);

    const nlohmann::json& document() const { return doc_; }

    std::size_t type_count() const { return types_.size(); }
    const ProblemType& type(TypeId t) const;
    std::optional<TypeId> find_type(std::string_view name) const;
    // Throws Errc::UnknownProblemType.
    TypeId type_id(std::string_view name) const;

    std::size_t static_size() const { return table_.size(); }
    const SymbolEntry& entry(SymbolId id) const;
    // Accepts the V_i alias for cache token #i.
    std::optional<SymbolId> lookup(std::string_view surface) const;

    const std::vector<SymbolId>& operators() const { return operators_; }
    std::vector<SymbolId> operators_of(TypeId t) const;
    std::size_t constant_count() const { return constant_count_; }

    int max_op() const { return max_op_; }
    int max_oe() const { return max_oe_; }

    SymbolId sos() const { return sos_; }
    SymbolId eos_operand() const { return eos_operand_; }
    SymbolId eop() const { return eop_; }
    SymbolId cache_token(int j) const;
    // Index j of cache token #j, or nullopt for any other symbol.
    std::optional<int> cache_index(SymbolId id) const;

   private:
    SymbolId add(SymbolEntry e);

    nlohmann::json doc_;
    std::vector<ProblemType> types_;
    std::vector<SymbolEntry> table_;
    std::unordered_map<std::string, SymbolId> by_surface_;
    std::vector<SymbolId> operators_;
    std::size_t constant_count_ = 0;
    SymbolId first_cache_ = 0;
    SymbolId sos_ = 0;
    SymbolId eos_operand_ = 0;
    SymbolId eop_ = 0;
    int max_op_ = 0;
    int max_oe_ = 0;
};

// Canonical surface for the V_i cache alias; other surfaces pass through.
std::string canonical_surface(std::string_view surface);

// Static table plus the dynamic symbols of one problem: ids
// [static_size, static_size+numbers) are N_0.., the rest E_0...
class DecodeVocabulary {
   public:
    DecodeVocabulary(const DslRegistry& registry, std::size_t numbers, std::size_t elements)
        : registry_(&registry), numbers_(numbers), elements_(elements) {}

    const DslRegistry& registry() const { return *registry_; }
    std::size_t size() const { return registry_->static_size() + numbers_ + elements_; }
    std::size_t numbers() const { return numbers_; }
    std::size_t elements() const { return elements_; }

    SymbolKind kind(SymbolId id) const;
    std::string surface(SymbolId id) const;
    std::optional<SymbolId> lookup(std::string_view surface) const;
    SymbolId number(std::size_t i) const;
    SymbolId element(std::size_t i) const;
    bool is_dynamic(SymbolId id) const { return id >= static_cast<SymbolId>(registry_->static_size()); }

   private:
    const DslRegistry* registry_;
    std::size_t numbers_;
    std::size_t elements_;
};

struct SymbolMask {
    std::vector<std::uint8_t> allowed;

    std::size_t size() const { return allowed.size(); }
    bool operator[](std::size_t i) const { return allowed[i] != 0; }
    std::size_t count() const;
};

// allowed = 1 exactly for symbols of type t, control tokens, cache tokens and
// every dynamic symbol of the vocabulary.
SymbolMask type_mask(const DslRegistry& registry, TypeId t, const DecodeVocabulary& vocab);

}  // namespace geoprog
