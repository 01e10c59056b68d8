#pragma once

// Model state: registry, text vocabulary, configuration echo and every named
// parameter tensor of the encoder, classifier and program generator.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geoprog/numerics.hpp"
#include "geoprog/problem.hpp"
#include "geoprog/registry.hpp"
#include "geoprog/tensor.hpp"
#include "json.hpp"

namespace geoprog {

// Vector written into cache token #t once sub-program t completes.
enum class CacheStrategy {
    // query of the last operand step of the sub-program
    LastOperandQuery,
    // query of the operator step of the sub-program
    OperatorQuery,
    // embedding of the emitted operator
    OperatorEmbedding,
};

std::string_view to_string(CacheStrategy s);
CacheStrategy parse_cache_strategy(std::string_view s);

struct ModelConfig {
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t patch_dim = 16;
    CacheStrategy cache_strategy = CacheStrategy::LastOperandQuery;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

class TextVocab {
   public:
    static constexpr std::string_view kUnk = "<unk>";
    static constexpr std::string_view kNum = "<num>";

    TextVocab();
    // Every token seen at least once; numbers share the <num> entry.
    static TextVocab build(const std::vector<PreprocessedProblem>& corpus);
    static TextVocab from_words(std::vector<std::string> words);

    int index(const std::string& token) const;
    std::size_t size() const { return words_.size(); }
    const std::vector<std::string>& words() const { return words_; }

   private:
    void add(const std::string& w);

    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

enum class Grad { Off, On };

class ModelState {
   public:
    ModelState(DslRegistry registry, TextVocab vocab, ModelConfig config);

    // Fresh parameters: uniform(±1/sqrt(fan_in)) weights, zero biases, rounded
    // to 32-bit precision so that checkpoints round-trip exactly.
    static ModelState create(DslRegistry registry, TextVocab vocab, ModelConfig config, std::uint64_t seed);

    const DslRegistry& registry() const { return registry_; }
    const TextVocab& vocab() const { return vocab_; }
    const ModelConfig& config() const { return config_; }
    ModelConfig& config() { return config_; }
    nn::ParameterSet& params() { return params_; }
    const nn::ParameterSet& params() const { return params_; }

    std::vector<nn::GruCell> encoder_cells() const;
    nn::GruCell operator_cell() const;
    nn::GruCell operand_cell() const;

    // Puts a parameter on the tape; with Grad::Off no gradient flows into it.
    nn::Var bind(nn::Tape& tape, const std::string& name, Grad grad) const;
    nn::GruVars bind(nn::Tape& tape, const nn::GruCell& cell, Grad grad) const;

    // Rounds every parameter to the nearest 32-bit float.
    void round_to_storage();

   private:
    void declare();

    DslRegistry registry_;
    TextVocab vocab_;
    ModelConfig config_;
    nn::ParameterSet params_;
};

}  // namespace geoprog
