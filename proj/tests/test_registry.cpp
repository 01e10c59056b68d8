#include <random>
#include <set>

#include "doctest.h"
#include "geoprog/error.hpp"
#include "geoprog/problem.hpp"
#include "geoprog/registry.hpp"
#include "helpers.hpp"

using namespace geoprog;
using testing::json;

TEST_CASE("registry counts by construction") {
    const DslRegistry reg = testing::small_registry();
    CHECK(reg.type_count() == 2);
    CHECK(reg.operators().size() == 3);
    CHECK(reg.constant_count() == 1);
    std::size_t caches = 0, controls = 0;
    for (std::size_t i = 0; i < reg.static_size(); ++i) {
        const auto kind = reg.entry(static_cast<SymbolId>(i)).kind;
        caches += kind == SymbolKind::CacheToken;
        controls += kind == SymbolKind::Control;
    }
    CHECK(caches == 4);
    CHECK(controls == 3);
    CHECK(reg.entry(reg.sos()).surface == "sos");
    CHECK(reg.entry(reg.eos_operand()).surface == "eos_operand");
    CHECK(reg.entry(reg.eop()).surface == "eop");
}

TEST_CASE("registry document errors") {
    json dup = testing::small_registry_doc();
    dup["operators"].push_back({{"surface", "add"}, {"types", {"cal"}}});
    CHECK_THROWS_WITH_AS(DslRegistry::from_json(dup), doctest::Contains("DuplicateSymbol"), Error);

    json empty = testing::small_registry_doc();
    empty["operators"][0]["types"] = json::array();
    CHECK_THROWS_WITH_AS(DslRegistry::from_json(empty), doctest::Contains("EmptyTypeSet"), Error);

    json arity = testing::small_registry_doc();
    arity["operators"][0]["min_args"] = 0;
    CHECK_THROWS_WITH_AS(DslRegistry::from_json(arity), doctest::Contains("InvalidArity"), Error);

    json unknown = testing::small_registry_doc();
    unknown["operators"][0]["types"] = {"geo"};
    CHECK_THROWS_WITH_AS(DslRegistry::from_json(unknown), doctest::Contains("UnknownProblemType"), Error);

    json reserved = testing::small_registry_doc();
    reserved["constants"].push_back({{"surface", "N_3"}, {"value", 1.0}});
    CHECK_THROWS_AS(DslRegistry::from_json(reserved), Error);
}

TEST_CASE("lookup is a bijection on statics and accepts the V_i alias") {
    // Naming in the style R_x / C_x / N_x / E_x / cache.
    const DslRegistry reg = DslRegistry::from_json(json::parse(R"({
      "types": ["cal", "prv"],
      "operators": [{"surface": "R_4", "types": ["prv"]}, {"surface": "R_15", "types": ["prv"]},
                    {"surface": "Get_Area", "types": ["cal"], "min_args": 1, "max_args": 2}],
      "constants": [{"surface": "C_0", "value": 0.5}, {"surface": "C_3", "value": 90}],
      "limits": {"max_op": 3, "max_oe": 2}
    })"));
    for (std::size_t i = 0; i < reg.static_size(); ++i) {
        const auto id = static_cast<SymbolId>(i);
        CHECK(reg.lookup(reg.entry(id).surface) == id);
    }
    CHECK(reg.lookup("V_1") == reg.cache_token(1));
    CHECK(reg.lookup("#1") == reg.cache_token(1));
    CHECK(reg.cache_index(reg.cache_token(2)) == 2);
    CHECK_FALSE(reg.lookup("V_3").has_value());
    CHECK(canonical_surface("V_2") == "#2");
    CHECK_THROWS_WITH_AS(reg.cache_token(3), doctest::Contains("CacheIndexOutOfRange"), Error);

    const DecodeVocabulary vocab(reg, 2, 1);
    CHECK(vocab.size() == reg.static_size() + 3);
    CHECK(vocab.surface(vocab.number(1)) == "N_1");
    CHECK(vocab.lookup("E_0") == vocab.element(0));
    CHECK_FALSE(vocab.lookup("E_1").has_value());
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        const auto id = static_cast<SymbolId>(i);
        CHECK(vocab.lookup(vocab.surface(id)) == id);
    }
}

TEST_CASE("type masks") {
    const DslRegistry reg = testing::small_registry();
    std::mt19937_64 rng(1);
    const PreprocessedProblem two_numbers = testing::problem_from("the radius is 5 and the arc is 30", rng);
    const TypeId cal = reg.type_id("cal"), prv = reg.type_id("prv");
    const SymbolMask m = type_mask(reg, cal, two_numbers);
    const DecodeVocabulary vocab = two_numbers.vocabulary(reg);
    CHECK(m.size() == reg.static_size() + 2);

    std::vector<std::string> allowed;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) allowed.push_back(vocab.surface(static_cast<SymbolId>(i)));
    const std::vector<std::string> want = {"add", "mul", "C_pi", "#0", "#1", "#2", "#3",
                                           "sos", "eos_operand", "eop", "N_0", "N_1"};
    CHECK(allowed == want);

    const SymbolMask p = type_mask(reg, prv, two_numbers);
    CHECK(p[static_cast<std::size_t>(*reg.lookup("congruent"))]);
    CHECK_FALSE(p[static_cast<std::size_t>(*reg.lookup("add"))]);
    CHECK_FALSE(p[static_cast<std::size_t>(*reg.lookup("mul"))]);
    CHECK_FALSE(m[static_cast<std::size_t>(*reg.lookup("congruent"))]);
    CHECK_THROWS_WITH_AS(type_mask(reg, 7, two_numbers), doctest::Contains("UnknownProblemType"), Error);
}

TEST_CASE("mask properties over the shipped registry") {
    const DslRegistry reg = testing::shipped_registry();
    std::mt19937_64 rng(4);
    std::set<SymbolId> union_ops;
    for (const auto& text : testing::sample_texts()) {
        const auto prob = testing::problem_from(text, rng);
        for (TypeId t = 0; t < static_cast<TypeId>(reg.type_count()); ++t) {
            const SymbolMask m = type_mask(reg, t, prob);
            CHECK(m.size() == reg.static_size() + dynamic_symbols(prob).size());
            for (SymbolId op : reg.operators()) {
                CHECK(m[static_cast<std::size_t>(op)] == reg.entry(op).in_type(t));
                if (m[static_cast<std::size_t>(op)]) union_ops.insert(op);
            }
            for (SymbolId c : {reg.sos(), reg.eos_operand(), reg.eop()}) CHECK(m[static_cast<std::size_t>(c)]);
            for (std::size_t i = reg.static_size(); i < m.size(); ++i) CHECK(m[i]);
        }
    }
    CHECK(union_ops.size() == reg.operators().size());
}
