#include "geoprog/program.hpp"

#include <cmath>
#include <numbers>

#include "geoprog/error.hpp"

namespace geoprog {

namespace {

SymbolId resolve(const DecodeVocabulary& vocab, const std::string& surface) {
    auto id = vocab.lookup(surface);
    if (!id) {
        throw Error(Errc::UnknownSymbol, "'" + surface + "'");
    }
    return *id;
}

}  // namespace

std::vector<std::string> to_flat(const SolutionProgram& p, const DecodeVocabulary& vocab) {
    const auto& reg = vocab.registry();
    std::vector<std::string> out;
    for (const auto& sub : p.subs) {
        out.push_back(vocab.surface(sub.op));
        for (SymbolId a : sub.args) out.push_back(vocab.surface(a));
        out.emplace_back(reg.entry(reg.eos_operand()).surface);
    }
    out.emplace_back(reg.entry(reg.eop()).surface);
    return out;
}

SolutionProgram from_flat(std::span<const std::string> tokens, const DecodeVocabulary& vocab, TypeId type,
                          ParseMode mode) {
    const auto& reg = vocab.registry();
    reg.type(type);
    if (tokens.empty()) {
        throw Error(Errc::Truncated, "empty token sequence");
    }
    SolutionProgram p;
    p.problem_type = type;
    bool in_sub = false;
    bool ended = false;

    auto close_sub = [&]() {
        if (p.subs.back().args.empty()) {
            throw Error(Errc::InvalidProgram, "sub-program " + std::to_string(p.subs.size() - 1) + " has no operands");
        }
        in_sub = false;
    };

    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string& tok = tokens[i];
        if (ended) {
            throw Error(Errc::InvalidProgram, "token '" + tok + "' after eop at position " + std::to_string(i));
        }
        const SymbolId id = resolve(vocab, tok);
        const SymbolKind kind = vocab.kind(id);
        if (id == reg.sos()) {
            throw Error(Errc::InvalidProgram, "sos is not part of a program (position " + std::to_string(i) + ")");
        }
        if (id == reg.eop()) {
            if (in_sub) {
                if (mode == ParseMode::Strict) {
                    throw Error(Errc::Truncated, "eop before eos_operand at position " + std::to_string(i));
                }
                close_sub();
            }
            ended = true;
            continue;
        }
        if (id == reg.eos_operand()) {
            if (!in_sub) {
                throw Error(Errc::InvalidProgram, "eos_operand outside a sub-program at position " + std::to_string(i));
            }
            close_sub();
            continue;
        }
        if (kind == SymbolKind::Operator) {
            if (in_sub) {
                if (mode == ParseMode::Strict) {
                    throw Error(Errc::OperatorInArgPosition,
                                "'" + tok + "' at position " + std::to_string(i));
                }
                close_sub();
            }
            p.subs.push_back({id, {}});
            in_sub = true;
            continue;
        }
        // operand
        if (!in_sub) {
            throw Error(Errc::InvalidProgram, "operand '" + tok + "' without an operator at position " + std::to_string(i));
        }
        if (auto j = reg.cache_index(id); j && static_cast<std::size_t>(*j) >= p.subs.size() - 1) {
            throw Error(Errc::CacheTokenForwardReference,
                        "'" + tok + "' used in sub-program " + std::to_string(p.subs.size() - 1));
        }
        p.subs.back().args.push_back(id);
    }
    if (!ended) {
        if (mode == ParseMode::Strict) {
            throw Error(Errc::Truncated, "no eop");
        }
        if (in_sub) close_sub();
    }
    validate(p, vocab);
    return p;
}

nlohmann::json to_nested(const SolutionProgram& p, const DecodeVocabulary& vocab) {
    return surface_to_json(to_surface(p, vocab));
}

SolutionProgram from_nested(const nlohmann::json& nested, const DecodeVocabulary& vocab, TypeId type) {
    std::vector<std::string> flat;
    const auto& reg = vocab.registry();
    for (const auto& sub : surface_from_json(nested)) {
        if (auto id = vocab.lookup(sub.op); id && vocab.kind(*id) != SymbolKind::Operator) {
            throw Error(Errc::InvalidProgram, "'" + sub.op + "' is not an operator");
        }
        flat.push_back(sub.op);
        for (const auto& a : sub.args) flat.push_back(a);
        flat.emplace_back(reg.entry(reg.eos_operand()).surface);
    }
    flat.emplace_back(reg.entry(reg.eop()).surface);
    return from_flat(flat, vocab, type, ParseMode::Strict);
}

SolutionProgram parse_program(const nlohmann::json& program, const DecodeVocabulary& vocab, TypeId type) {
    if (!program.is_array() || program.empty()) {
        throw Error(Errc::InvalidProgram, "program must be a non-empty array");
    }
    if (program.front().is_object()) {
        return from_nested(program, vocab, type);
    }
    std::vector<std::string> tokens;
    for (const auto& t : program) {
        if (!t.is_string()) {
            throw Error(Errc::InvalidProgram, "flat program entries must be strings");
        }
        tokens.push_back(t.get<std::string>());
    }
    return from_flat(tokens, vocab, type, ParseMode::Tolerant);
}

void validate(const SolutionProgram& p, const DecodeVocabulary& vocab) {
    const auto& reg = vocab.registry();
    const SymbolMask mask = type_mask(reg, p.problem_type, vocab);
    if (p.subs.empty() || p.subs.size() > static_cast<std::size_t>(reg.max_op())) {
        throw Error(Errc::InvalidProgram, std::to_string(p.subs.size()) + " sub-programs, limit " +
                                              std::to_string(reg.max_op()));
    }
    for (std::size_t t = 0; t < p.subs.size(); ++t) {
        const auto& sub = p.subs[t];
        if (vocab.kind(sub.op) != SymbolKind::Operator) {
            throw Error(Errc::InvalidProgram, "sub-program " + std::to_string(t) + " starts with non-operator '" +
                                                  vocab.surface(sub.op) + "'");
        }
        if (sub.args.empty() || sub.args.size() > static_cast<std::size_t>(reg.max_oe())) {
            throw Error(Errc::InvalidProgram, "sub-program " + std::to_string(t) + " has " +
                                                  std::to_string(sub.args.size()) + " operands, limit " +
                                                  std::to_string(reg.max_oe()));
        }
        if (!mask[static_cast<std::size_t>(sub.op)]) {
            throw Error(Errc::InvalidProgram, "'" + vocab.surface(sub.op) + "' is outside the DSL of type '" +
                                                  reg.type(p.problem_type).name + "'");
        }
        for (SymbolId a : sub.args) {
            const SymbolKind k = vocab.kind(a);
            if (k == SymbolKind::Operator) {
                throw Error(Errc::OperatorInArgPosition, "'" + vocab.surface(a) + "' in sub-program " + std::to_string(t));
            }
            if (!is_operand_kind(k)) {
                throw Error(Errc::InvalidProgram, "control token '" + vocab.surface(a) + "' used as operand");
            }
            if (auto j = reg.cache_index(a); j && static_cast<std::size_t>(*j) >= t) {
                throw Error(Errc::CacheTokenForwardReference,
                            "'" + vocab.surface(a) + "' used in sub-program " + std::to_string(t));
            }
            if (!mask[static_cast<std::size_t>(a)]) {
                throw Error(Errc::InvalidProgram, "'" + vocab.surface(a) + "' is outside the DSL of type '" +
                                                      reg.type(p.problem_type).name + "'");
            }
        }
    }
}

bool canonical_equal(const SolutionProgram& a, const SolutionProgram& b) { return a.subs == b.subs; }

SurfaceProgram to_surface(const SolutionProgram& p, const DecodeVocabulary& vocab) {
    SurfaceProgram out;
    for (const auto& sub : p.subs) {
        SurfaceSub s;
        s.op = vocab.surface(sub.op);
        for (SymbolId a : sub.args) s.args.push_back(vocab.surface(a));
        out.push_back(std::move(s));
    }
    return out;
}

SurfaceProgram surface_from_json(const nlohmann::json& program) {
    SurfaceProgram out;
    if (!program.is_array()) {
        throw Error(Errc::InvalidProgram, "program must be an array");
    }
    if (!program.empty() && program.front().is_string()) {
        // flat form; a sub-program starts after each eos_operand and at the start
        SurfaceSub cur;
        bool open = false;
        for (const auto& t : program) {
            const auto tok = t.get<std::string>();
            if (tok == DslRegistry::kEop) break;
            if (tok == DslRegistry::kEosOperand) {
                if (open) out.push_back(std::move(cur));
                cur = {};
                open = false;
                continue;
            }
            if (!open) {
                cur.op = tok;
                open = true;
            } else {
                cur.args.push_back(tok);
            }
        }
        if (open) out.push_back(std::move(cur));
        return out;
    }
    try {
        for (const auto& sub : program) {
            SurfaceSub s;
            s.op = sub.at("op").get<std::string>();
            for (const auto& a : sub.at("args")) s.args.push_back(a.get<std::string>());
            out.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidProgram, e.what());
    }
    return out;
}

nlohmann::json surface_to_json(const SurfaceProgram& p) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& sub : p) {
        out.push_back({{"op", sub.op}, {"args", sub.args}});
    }
    return out;
}

bool canonical_equal(const SurfaceProgram& a, const SurfaceProgram& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (canonical_surface(a[i].op) != canonical_surface(b[i].op)) return false;
        if (a[i].args.size() != b[i].args.size()) return false;
        for (std::size_t j = 0; j < a[i].args.size(); ++j) {
            if (canonical_surface(a[i].args[j]) != canonical_surface(b[i].args[j])) return false;
        }
    }
    return true;
}

namespace {

double kernel(const std::string& exec, const std::string& surface, std::span<const double> x, double pi) {
    auto need = [&](std::size_t n) {
        if (x.size() != n) {
            throw Error(Errc::InvalidProgram, "'" + surface + "' expects " + std::to_string(n) + " operands, got " +
                                                  std::to_string(x.size()));
        }
    };
    constexpr double kDeg = std::numbers::pi / 180.0;
    if (exec == "add") {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    if (exec == "mul") {
        double s = 1.0;
        for (double v : x) s *= v;
        return s;
    }
    if (exec == "sub") {
        if (x.size() == 1) return -x[0];
        double s = x[0];
        for (std::size_t i = 1; i < x.size(); ++i) s -= x[i];
        return s;
    }
    if (exec == "div") {
        if (x.size() == 1) {
            if (x[0] == 0.0) throw Error(Errc::DivisionByZero, "'" + surface + "'");
            return 1.0 / x[0];
        }
        double s = x[0];
        for (std::size_t i = 1; i < x.size(); ++i) {
            if (x[i] == 0.0) throw Error(Errc::DivisionByZero, "'" + surface + "'");
            s /= x[i];
        }
        return s;
    }
    if (exec == "pow") {
        need(2);
        return std::pow(x[0], x[1]);
    }
    if (exec == "sqrt") {
        need(1);
        return std::sqrt(x[0]);
    }
    if (exec == "circle_area") {
        need(1);
        return pi * x[0] * x[0];
    }
    if (exec == "sin_deg") {
        need(1);
        return std::sin(x[0] * kDeg);
    }
    if (exec == "cos_deg") {
        need(1);
        return std::cos(x[0] * kDeg);
    }
    if (exec == "tan_deg") {
        need(1);
        return std::tan(x[0] * kDeg);
    }
    throw Error(Errc::NonExecutableOperator, "'" + surface + "' names unknown kernel '" + exec + "'");
}

}  // namespace

double execute_cal(const SolutionProgram& p, const DecodeVocabulary& vocab, std::span<const double> number_values) {
    const auto& reg = vocab.registry();
    // circle_area uses the registry's own pi constant when it declares one.
    double pi = std::numbers::pi;
    if (auto id = reg.lookup("C_pi"); id && reg.entry(*id).constant_value) {
        pi = *reg.entry(*id).constant_value;
    }
    std::vector<double> results;
    for (const auto& sub : p.subs) {
        const auto& op = reg.entry(sub.op);
        if (op.exec.empty()) {
            throw Error(Errc::NonExecutableOperator, "'" + op.surface + "' has no arithmetic semantics");
        }
        std::vector<double> args;
        for (SymbolId a : sub.args) {
            switch (vocab.kind(a)) {
                case SymbolKind::Constant:
                    args.push_back(*reg.entry(a).constant_value);
                    break;
                case SymbolKind::CacheToken: {
                    const auto j = static_cast<std::size_t>(*reg.cache_index(a));
                    if (j >= results.size()) {
                        throw Error(Errc::CacheTokenForwardReference, vocab.surface(a));
                    }
                    args.push_back(results[j]);
                    break;
                }
                case SymbolKind::DynamicNumber: {
                    const auto n = static_cast<std::size_t>(a) - reg.static_size();
                    if (n >= number_values.size()) {
                        throw Error(Errc::UnboundNumber, vocab.surface(a));
                    }
                    args.push_back(number_values[n]);
                    break;
                }
                default:
                    throw Error(Errc::UnboundNumber, "'" + vocab.surface(a) + "' has no numeric value");
            }
        }
        const double v = kernel(op.exec, op.surface, args, pi);
        if (!std::isfinite(v)) {
            throw Error(Errc::InvalidProgram, "'" + op.surface + "' produced a non-finite value");
        }
        results.push_back(v);
    }
    if (results.empty()) {
        throw Error(Errc::InvalidProgram, "empty program");
    }
    return results.back();
}

std::map<std::size_t, std::size_t> operand_count_histogram(std::span<const SolutionProgram> corpus) {
    std::map<std::size_t, std::size_t> h;
    for (const auto& p : corpus) {
        for (const auto& sub : p.subs) ++h[sub.args.size()];
    }
    return h;
}

std::map<std::size_t, std::size_t> operand_count_histogram(std::span<const SurfaceProgram> corpus) {
    std::map<std::size_t, std::size_t> h;
    for (const auto& p : corpus) {
        for (const auto& sub : p) ++h[sub.args.size()];
    }
    return h;
}

}  // namespace geoprog
