#pragma once

#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "geoprog/data_io.hpp"
#include "geoprog/model.hpp"
#include "geoprog/problem.hpp"
#include "geoprog/program.hpp"
#include "geoprog/registry.hpp"
#include "json.hpp"

namespace testing {

using nlohmann::json;

// ops {add, mul ∈ cal; congruent ∈ prv}, C_pi, max_op 4, max_oe 3.
inline json small_registry_doc() {
    return json::parse(R"({
      "types": ["cal", "prv"],
      "operators": [
        {"surface": "add", "types": ["cal"], "min_args": 2, "max_args": 3, "exec": "add"},
        {"surface": "mul", "types": ["cal"], "min_args": 2, "max_args": 2, "exec": "mul"},
        {"surface": "congruent", "types": ["prv"], "min_args": 1, "max_args": 2}
      ],
      "constants": [{"surface": "C_pi", "value": 3.141593, "types": ["cal"]}],
      "limits": {"max_op": 4, "max_oe": 3}
    })");
}

inline geoprog::DslRegistry small_registry() { return geoprog::DslRegistry::from_json(small_registry_doc()); }

inline geoprog::DslRegistry shipped_registry() {
    return geoprog::DslRegistry::from_file(std::string(GEOPROG_SOURCE_DIR) + "/data/default_registry.json");
}

// Two operators + eop, operands {C_1, N_0, #0} + eos_operand, max_op 2, max_oe 2.
inline geoprog::DslRegistry tiny_registry() {
    return geoprog::DslRegistry::from_json(json::parse(R"({
      "types": ["cal"],
      "operators": [
        {"surface": "f", "types": ["cal"], "min_args": 1, "max_args": 2},
        {"surface": "g", "types": ["cal"], "min_args": 1, "max_args": 2}
      ],
      "constants": [{"surface": "C_1", "value": 1}],
      "limits": {"max_op": 2, "max_oe": 2}
    })"));
}

inline std::vector<std::vector<double>> random_patches(std::mt19937_64& rng, std::size_t n, std::size_t p) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<std::vector<double>> out(n, std::vector<double>(p));
    for (auto& v : out)
        for (auto& x : v) x = d(rng);
    return out;
}

inline geoprog::PreprocessedProblem problem_from(const std::string& text, std::mt19937_64& rng,
                                                 std::size_t patches = 2, std::size_t p = 4) {
    auto prob = geoprog::preprocess(text, random_patches(rng, patches, p));
    prob.id = "t";
    return prob;
}

// Model over a vocabulary built from `corpus`, hidden h, patch dim p.
inline geoprog::ModelState random_model(const geoprog::DslRegistry& reg,
                                        const std::vector<geoprog::PreprocessedProblem>& corpus, std::size_t h,
                                        std::uint64_t seed, std::size_t p = 4, std::size_t layers = 1,
                                        double scale = 1.0) {
    geoprog::ModelConfig cfg;
    cfg.hidden = h;
    cfg.layers = layers;
    cfg.patch_dim = p;
    auto m = geoprog::ModelState::create(reg, geoprog::TextVocab::build(corpus), cfg, seed);
    if (scale != 1.0) {
        for (auto& [_, prm] : m.params())
            for (auto& v : prm.value) v *= scale;
    }
    // Non-zero biases so that every gradient path is exercised.
    std::mt19937_64 rng(seed + 17);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (auto& [name, prm] : m.params()) {
        if (name.ends_with(".b") || name.ends_with("_bias"))
            for (auto& v : prm.value) v = u(rng);
    }
    return m;
}

inline const std::vector<std::string>& sample_texts() {
    static const std::vector<std::string> t = {
        "find the area of a rectangle with length 3 and width 5.",
        "In △SUW, ∠SUW = 30. find the sum of 4 and 7.",
        "given △ABC and ∠ABD. prove the claim using the sum rule on △ABC.",
        "the radius is 5 and the arc is 30",
        "given ⊙O and ∠PQR, ∠QRS. prove the claim using the base rule on ∠QRS.",
    };
    return t;
}

// Random program that satisfies every structural and type invariant.
inline geoprog::SolutionProgram random_program(const geoprog::DecodeVocabulary& vocab, geoprog::TypeId type,
                                               std::mt19937_64& rng) {
    using namespace geoprog;
    const auto& reg = vocab.registry();
    std::vector<SymbolId> ops;
    for (SymbolId op : reg.operators())
        if (reg.entry(op).in_type(type)) ops.push_back(op);
    std::vector<SymbolId> fixed;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        const auto id = static_cast<SymbolId>(i);
        const auto kind = vocab.kind(id);
        if (kind == SymbolKind::CacheToken || !is_operand_kind(kind)) continue;
        if (!vocab.is_dynamic(id) && !reg.entry(id).in_type(type)) continue;
        fixed.push_back(id);
    }
    SolutionProgram p;
    p.problem_type = type;
    const int n = std::uniform_int_distribution<int>(1, reg.max_op())(rng);
    for (int t = 0; t < n; ++t) {
        std::vector<SymbolId> pool = fixed;
        for (int j = 0; j < t; ++j) pool.push_back(reg.cache_token(j));
        SubProgram sub;
        sub.op = ops[std::uniform_int_distribution<std::size_t>(0, ops.size() - 1)(rng)];
        const int k = std::uniform_int_distribution<int>(1, reg.max_oe())(rng);
        for (int j = 0; j < k; ++j)
            sub.args.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
        p.subs.push_back(sub);
    }
    return p;
}

}  // namespace testing
