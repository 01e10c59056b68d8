#include "geoprog/registry.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "geoprog/error.hpp"

namespace geoprog {

namespace {

constexpr std::size_t kMaxTypes = 64;

// N_<digits> / E_<digits> / #<digits> / V_<digits> are reserved for generated symbols.
std::optional<int> indexed(std::string_view surface, std::string_view prefix) {
    if (surface.size() <= prefix.size() || surface.substr(0, prefix.size()) != prefix) {
        return std::nullopt;
    }
    const std::string_view digits = surface.substr(prefix.size());
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        return std::nullopt;
    }
    int value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) {
        return std::nullopt;
    }
    return value;
}

bool reserved_surface(std::string_view s) {
    return indexed(s, "N_") || indexed(s, "E_") || indexed(s, "#") || indexed(s, "V_");
}

}  // namespace

std::string_view kind_name(SymbolKind kind) {
    switch (kind) {
        case SymbolKind::Operator: return "operator";
        case SymbolKind::Constant: return "constant";
        case SymbolKind::CacheToken: return "cache_token";
        case SymbolKind::Control: return "control";
        case SymbolKind::DynamicNumber: return "dynamic_number";
        case SymbolKind::DynamicElement: return "dynamic_element";
    }
    return "unknown";
}

bool is_operand_kind(SymbolKind kind) {
    return kind == SymbolKind::Constant || kind == SymbolKind::CacheToken ||
           kind == SymbolKind::DynamicNumber || kind == SymbolKind::DynamicElement;
}

std::string canonical_surface(std::string_view surface) {
    if (auto j = indexed(surface, "V_")) {
        return "#" + std::to_string(*j);
    }
    return std::string(surface);
}

SymbolId DslRegistry::add(SymbolEntry e) {
    if (reserved_surface(e.surface) && e.kind != SymbolKind::CacheToken) {
        throw Error(Errc::DuplicateSymbol, "surface '" + e.surface + "' collides with a generated symbol name");
    }
    const auto id = static_cast<SymbolId>(table_.size());
    auto [it, inserted] = by_surface_.emplace(e.surface, id);
    if (!inserted) {
        throw Error(Errc::DuplicateSymbol, "surface '" + e.surface + "' defined twice");
    }
    table_.push_back(std::move(e));
    return id;
}

DslRegistry DslRegistry::from_json(const nlohmann::json& doc) {
    DslRegistry reg;
    reg.doc_ = doc;
    try {
        const auto& types = doc.at("types");
        if (!types.is_array() || types.empty()) {
            throw Error(Errc::InvalidRegistry, "'types' must be a non-empty array");
        }
        if (types.size() > kMaxTypes) {
            throw Error(Errc::InvalidRegistry, "at most 64 problem types are supported");
        }
        for (const auto& t : types) {
            const auto name = t.get<std::string>();
            if (reg.find_type(name)) {
                throw Error(Errc::DuplicateSymbol, "problem type '" + name + "' defined twice");
            }
            reg.types_.push_back({name, static_cast<TypeId>(reg.types_.size())});
        }
        const std::uint64_t all_types =
            reg.types_.size() == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << reg.types_.size()) - 1);

        auto parse_types = [&](const nlohmann::json& j, const std::string& owner) {
            std::uint64_t bits = 0;
            for (const auto& t : j) {
                bits |= std::uint64_t{1} << reg.type_id(t.get<std::string>());
            }
            if (bits == 0) {
                throw Error(Errc::EmptyTypeSet, "'" + owner + "' belongs to no problem type");
            }
            return bits;
        };

        const auto& limits = doc.at("limits");
        reg.max_op_ = limits.at("max_op").get<int>();
        reg.max_oe_ = limits.at("max_oe").get<int>();
        if (reg.max_op_ < 1 || reg.max_oe_ < 1) {
            throw Error(Errc::InvalidRegistry, "limits.max_op and limits.max_oe must be >= 1");
        }

        for (const auto& op : doc.at("operators")) {
            SymbolEntry e;
            e.surface = op.at("surface").get<std::string>();
            e.kind = SymbolKind::Operator;
            e.types = parse_types(op.at("types"), e.surface);
            e.min_args = op.value("min_args", 1);
            e.max_args = op.value("max_args", e.min_args);
            if (e.min_args < 1 || e.max_args < e.min_args) {
                throw Error(Errc::InvalidArity, "operator '" + e.surface + "' has arity bounds [" +
                                                    std::to_string(e.min_args) + ", " +
                                                    std::to_string(e.max_args) + "]");
            }
            e.exec = op.value("exec", std::string{});
            reg.operators_.push_back(reg.add(std::move(e)));
        }
        if (reg.operators_.empty()) {
            throw Error(Errc::InvalidRegistry, "registry defines no operators");
        }
        if (doc.contains("constants")) {
            for (const auto& c : doc.at("constants")) {
                SymbolEntry e;
                e.surface = c.at("surface").get<std::string>();
                e.kind = SymbolKind::Constant;
                e.types = c.contains("types") ? parse_types(c.at("types"), e.surface) : all_types;
                e.constant_value = c.at("value").get<double>();
                reg.add(std::move(e));
                ++reg.constant_count_;
            }
        }
        reg.first_cache_ = static_cast<SymbolId>(reg.table_.size());
        for (int j = 0; j < reg.max_op_; ++j) {
            SymbolEntry e;
            e.surface = "#" + std::to_string(j);
            e.kind = SymbolKind::CacheToken;
            e.types = all_types;
            reg.add(std::move(e));
        }
        auto control = [&](std::string_view s) {
            SymbolEntry e;
            e.surface = std::string(s);
            e.kind = SymbolKind::Control;
            e.types = all_types;
            return reg.add(std::move(e));
        };
        reg.sos_ = control(kSos);
        reg.eos_operand_ = control(kEosOperand);
        reg.eop_ = control(kEop);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidRegistry, e.what());
    }
    return reg;
}

DslRegistry DslRegistry::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Io, "cannot open registry " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidRegistry, path.string() + ": " + e.what());
    }
    return from_json(doc);
}

const ProblemType& DslRegistry::type(TypeId t) const {
    if (t < 0 || static_cast<std::size_t>(t) >= types_.size()) {
        throw Error(Errc::UnknownProblemType, "type id " + std::to_string(t));
    }
    return types_[static_cast<std::size_t>(t)];
}

std::optional<TypeId> DslRegistry::find_type(std::string_view name) const {
    for (const auto& t : types_) {
        if (t.name == name) return t.id;
    }
    return std::nullopt;
}

TypeId DslRegistry::type_id(std::string_view name) const {
    if (auto t = find_type(name)) return *t;
    throw Error(Errc::UnknownProblemType, "'" + std::string(name) + "'");
}

const SymbolEntry& DslRegistry::entry(SymbolId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= table_.size()) {
        throw Error(Errc::UnknownSymbol, "static symbol id " + std::to_string(id));
    }
    return table_[static_cast<std::size_t>(id)];
}

std::optional<SymbolId> DslRegistry::lookup(std::string_view surface) const {
    auto it = by_surface_.find(canonical_surface(surface));
    if (it == by_surface_.end()) return std::nullopt;
    return it->second;
}

std::vector<SymbolId> DslRegistry::operators_of(TypeId t) const {
    std::vector<SymbolId> out;
    for (SymbolId id : operators_) {
        if (table_[static_cast<std::size_t>(id)].in_type(t)) out.push_back(id);
    }
    return out;
}

SymbolId DslRegistry::cache_token(int j) const {
    if (j < 0 || j >= max_op_) {
        throw Error(Errc::CacheIndexOutOfRange, "#" + std::to_string(j) + " with max_op " + std::to_string(max_op_));
    }
    return first_cache_ + j;
}

std::optional<int> DslRegistry::cache_index(SymbolId id) const {
    if (id >= first_cache_ && id < first_cache_ + max_op_) return id - first_cache_;
    return std::nullopt;
}

SymbolKind DecodeVocabulary::kind(SymbolId id) const {
    const auto s = static_cast<SymbolId>(registry_->static_size());
    if (id < s) return registry_->entry(id).kind;
    if (static_cast<std::size_t>(id - s) < numbers_) return SymbolKind::DynamicNumber;
    if (static_cast<std::size_t>(id - s) < numbers_ + elements_) return SymbolKind::DynamicElement;
    throw Error(Errc::UnknownSymbol, "symbol id " + std::to_string(id) + " outside decode vocabulary");
}

std::string DecodeVocabulary::surface(SymbolId id) const {
    const auto s = static_cast<SymbolId>(registry_->static_size());
    if (id < s) return registry_->entry(id).surface;
    const auto k = static_cast<std::size_t>(id - s);
    if (k < numbers_) return "N_" + std::to_string(k);
    if (k < numbers_ + elements_) return "E_" + std::to_string(k - numbers_);
    throw Error(Errc::UnknownSymbol, "symbol id " + std::to_string(id) + " outside decode vocabulary");
}

std::optional<SymbolId> DecodeVocabulary::lookup(std::string_view surface) const {
    if (auto n = indexed(surface, "N_")) {
        if (static_cast<std::size_t>(*n) < numbers_) return number(static_cast<std::size_t>(*n));
        return std::nullopt;
    }
    if (auto e = indexed(surface, "E_")) {
        if (static_cast<std::size_t>(*e) < elements_) return element(static_cast<std::size_t>(*e));
        return std::nullopt;
    }
    return registry_->lookup(surface);
}

SymbolId DecodeVocabulary::number(std::size_t i) const {
    return static_cast<SymbolId>(registry_->static_size() + i);
}

SymbolId DecodeVocabulary::element(std::size_t i) const {
    return static_cast<SymbolId>(registry_->static_size() + numbers_ + i);
}

std::size_t SymbolMask::count() const {
    return static_cast<std::size_t>(std::count_if(allowed.begin(), allowed.end(), [](auto a) { return a != 0; }));
}

SymbolMask type_mask(const DslRegistry& registry, TypeId t, const DecodeVocabulary& vocab) {
    registry.type(t);
    SymbolMask m;
    m.allowed.assign(vocab.size(), 0);
    for (std::size_t i = 0; i < registry.static_size(); ++i) {
        const auto& e = registry.entry(static_cast<SymbolId>(i));
        const bool always = e.kind == SymbolKind::Control || e.kind == SymbolKind::CacheToken;
        m.allowed[i] = (always || e.in_type(t)) ? 1 : 0;
    }
    for (std::size_t i = registry.static_size(); i < vocab.size(); ++i) m.allowed[i] = 1;
    return m;
}

}  // namespace geoprog
